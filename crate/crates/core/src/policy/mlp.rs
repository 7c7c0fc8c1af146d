use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::{Error, Result, Vector};

/// Scalar-to-scalar network with one `tanh` hidden layer.
///
/// `y(x) = c · (b₂ + Σ_h w₂[h] · tanh(w₁[h] · z + b₁[h]))` with the fixed input
/// standardisation `z = (x − shift) / scale` and fixed output scale `c`.
/// Parameter layout: `[w₁ (H), b₁ (H), w₂ (H), b₂]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    hidden: usize,
    params: Vec<f64>,
    input_shift: f64,
    input_scale: f64,
    output_scale: f64,
}

impl Mlp {
    pub fn new(
        hidden: usize,
        params: Vec<f64>,
        input_shift: f64,
        input_scale: f64,
        output_scale: f64,
    ) -> Result<Self> {
        if hidden == 0 {
            return Err(Error::invalid("hidden", "must be at least 1"));
        }
        if params.len() != 3 * hidden + 1 {
            return Err(Error::DimensionMismatch {
                what: "mlp params",
                expected: 3 * hidden + 1,
                found: params.len(),
            });
        }
        if !(input_scale > 0.0) || !(output_scale > 0.0) {
            return Err(Error::invalid(
                "scale",
                "input/output scales must be positive",
            ));
        }
        Ok(Mlp {
            hidden,
            params,
            input_shift,
            input_scale,
            output_scale,
        })
    }

    /// Small random first layer, zero output layer (so the net starts at 0).
    pub fn random<R: Rng + ?Sized>(
        hidden: usize,
        input_shift: f64,
        input_scale: f64,
        output_scale: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let mut params = Vec::with_capacity(3 * hidden + 1);
        for _ in 0..hidden {
            let z: f64 = StandardNormal.sample(rng);
            params.push(z);
        }
        for _ in 0..hidden {
            let z: f64 = StandardNormal.sample(rng);
            params.push(0.5 * z);
        }
        params.extend(core::iter::repeat_n(0.0, hidden + 1));
        Self::new(hidden, params, input_shift, input_scale, output_scale)
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn with_params(&self, params: &[f64]) -> Result<Self> {
        Self::new(
            self.hidden,
            params.to_vec(),
            self.input_shift,
            self.input_scale,
            self.output_scale,
        )
    }

    fn standardize(&self, x: f64) -> f64 {
        (x - self.input_shift) / self.input_scale
    }

    pub fn eval(&self, x: f64) -> f64 {
        let h = self.hidden;
        let z = self.standardize(x);
        let (w1, rest) = self.params.split_at(h);
        let (b1, rest) = rest.split_at(h);
        let (w2, b2) = rest.split_at(h);
        let mut y = b2[0];
        for k in 0..h {
            y += w2[k] * (w1[k] * z + b1[k]).tanh();
        }
        self.output_scale * y
    }

    /// Value and `∂y/∂params`.
    pub fn eval_with_grad(&self, x: f64) -> (f64, Vector) {
        let h = self.hidden;
        let z = self.standardize(x);
        let c = self.output_scale;
        let mut g = Vector::zeros(self.params.len());
        let mut y = self.params[3 * h];
        for k in 0..h {
            let (w1, b1, w2) = (self.params[k], self.params[h + k], self.params[2 * h + k]);
            let t = (w1 * z + b1).tanh();
            let dt = 1.0 - t * t;
            y += w2 * t;
            g[k] = c * w2 * dt * z;
            g[h + k] = c * w2 * dt;
            g[2 * h + k] = c * t;
        }
        g[3 * h] = c;
        (c * y, g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = stream_rng(4, Stream::Fit, 0);
        let mut net = Mlp::random(6, 0.2, 1.5, 2.0, &mut rng).unwrap();
        let mut p = net.params().to_vec();
        for (i, v) in p.iter_mut().enumerate().skip(12) {
            *v = 0.1 * i as f64 - 1.0;
        }
        net = net.with_params(&p).unwrap();
        let x = 0.7;
        let (_, g) = net.eval_with_grad(x);
        for i in 0..net.num_params() {
            let mut up = p.clone();
            let mut dn = p.clone();
            up[i] += 1e-6;
            dn[i] -= 1e-6;
            let fd = (net.with_params(&up).unwrap().eval(x)
                - net.with_params(&dn).unwrap().eval(x))
                / 2e-6;
            assert!(
                (fd - g[i]).abs() < 1e-7,
                "param {i}: fd {fd} analytic {}",
                g[i]
            );
        }
    }

    #[test]
    fn random_init_outputs_zero() {
        let mut rng = stream_rng(4, Stream::Fit, 1);
        let net = Mlp::random(4, 0.0, 1.0, 1.0, &mut rng).unwrap();
        assert_eq!(net.eval(1.3), 0.0);
    }
}
