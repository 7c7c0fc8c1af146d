//! Dense linear-algebra helpers on top of `nalgebra`.

use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::{Error, Result};

pub type Vector = nalgebra::DVector<f64>;
pub type Matrix = nalgebra::DMatrix<f64>;

/// Numerically stable softmax of a slice.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&x| (x - max).exp()).collect();
    let total: f64 = out.iter().sum();
    for p in &mut out {
        *p /= total;
    }
    out
}

/// `log softmax(logits)`, computed via log-sum-exp.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|&x| (x - max).exp()).sum::<f64>().ln();
    logits.iter().map(|&x| x - lse).collect()
}

/// Solves `a x = b` by LU with partial pivoting.
pub fn solve(a: &Matrix, b: &Matrix, what: &'static str) -> Result<Matrix> {
    if a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch {
            what,
            expected: a.nrows(),
            found: a.ncols(),
        });
    }
    if b.nrows() != a.nrows() {
        return Err(Error::DimensionMismatch {
            what,
            expected: a.nrows(),
            found: b.nrows(),
        });
    }
    let lu = a.clone().lu();
    match lu.solve(b) {
        Some(x) if x.iter().all(|v| v.is_finite()) => Ok(x),
        _ => Err(Error::Singular {
            what,
            smallest_singular_value: smallest_singular_value(a),
            regularization: 0.0,
        }),
    }
}

/// Solves `a x = b` for a vector right-hand side.
pub fn solve_vec(a: &Matrix, b: &Vector, what: &'static str) -> Result<Vector> {
    let x = solve(
        a,
        &Matrix::from_column_slice(b.len(), 1, b.as_slice()),
        what,
    )?;
    Ok(Vector::from_column_slice(x.as_slice()))
}

pub fn smallest_singular_value(a: &Matrix) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.clone()
        .singular_values()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// `‖analytic − numeric‖_F / max(‖numeric‖_F, 1e-12)`.
pub fn relative_error(analytic: &Matrix, numeric: &Matrix) -> f64 {
    let diff = (analytic - numeric).norm();
    diff / numeric.norm().max(1e-12)
}

pub fn outer(u: &Vector, v: &Vector) -> Matrix {
    u * v.transpose()
}
