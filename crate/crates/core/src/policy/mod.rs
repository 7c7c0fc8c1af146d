//! Parametric stochastic policies with analytic scores.
//!
//! Parameter vectors use a fixed flat ordering so that oracles can perturb
//! them: row-major `(s, a)` logits for [`TabularSoftmaxPolicy`], `[gain]` or
//! the MLP layout of [`Mlp`] for [`GaussianPolicy`].

mod gaussian;
mod mlp;
mod tabular;

use rand::Rng;

pub use gaussian::{GaussianPolicy, MeanFn, MIN_ACTION_STD};
pub use mlp::Mlp;
pub use tabular::TabularSoftmaxPolicy;

use crate::{Matrix, Result, Vector};

pub trait StochasticPolicy {
    type State: Copy;
    type Action: Copy;

    fn num_params(&self) -> usize;
    fn params(&self) -> Vector;
    /// A copy of this policy with its parameters replaced.
    fn with_params(&self, params: &Vector) -> Result<Self>
    where
        Self: Sized;

    fn log_prob(&self, s: Self::State, a: Self::Action) -> f64;
    /// `∇_φ log π_φ(a|s)`.
    fn grad_log_prob(&self, s: Self::State, a: Self::Action) -> Vector;
    /// `∇²_φ log π_φ(a|s)`.
    fn hess_log_prob(&self, s: Self::State, a: Self::Action) -> Matrix;
    fn sample_action<R: Rng + ?Sized>(&self, s: Self::State, rng: &mut R) -> Self::Action;
}

/// Score and Hessian of `log π` at one `(s, a)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyGradLog {
    pub grad: Vector,
    pub hessian: Matrix,
}

pub fn grad_and_hess<P: StochasticPolicy>(policy: &P, s: P::State, a: P::Action) -> PolicyGradLog {
    PolicyGradLog {
        grad: policy.grad_log_prob(s, a),
        hessian: policy.hess_log_prob(s, a),
    }
}
