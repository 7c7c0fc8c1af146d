//! Real and simulated environment families.
//!
//! Both families are parameterised by a flat simulator vector `theta`
//! holding transition-model and reward parameters; see
//! [`DiscreteMdpParams::theta`] and [`LinearGaussianParams::theta`] for the
//! ordering.

mod discrete;
mod linear;
mod rollout;

use core::fmt::Debug;

use rand::Rng;

pub use discrete::{DiscreteMdpParams, PolicyTable};
pub use linear::LinearGaussianParams;
pub use rollout::{rollout, EnvTag, Trajectory, Transition};

use crate::Vector;

/// A parameterised MDP that can be sampled and differentiated in `theta`.
pub trait Environment {
    type State: Copy + PartialEq + Debug;
    type Action: Copy + PartialEq + Debug;

    /// Dimension of `theta`.
    fn num_params(&self) -> usize;
    /// The flat simulator parameter vector.
    fn theta(&self) -> Vector;
    fn discount(&self) -> f64;

    fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> Self::State;
    fn reward(&self, s: Self::State, a: Self::Action) -> f64;
    fn sample_next<R: Rng + ?Sized>(
        &self,
        s: Self::State,
        a: Self::Action,
        rng: &mut R,
    ) -> Self::State;

    /// One simulator step from `(s, a)`.
    fn sample_step<R: Rng + ?Sized>(
        &self,
        s: Self::State,
        a: Self::Action,
        rng: &mut R,
    ) -> Transition<Self::State, Self::Action> {
        let reward = self.reward(s, a);
        let next_state = self.sample_next(s, a, rng);
        Transition {
            state: s,
            action: a,
            reward,
            next_state,
        }
    }

    /// `∇_θ R_θ(s, a)`.
    fn grad_reward(&self, s: Self::State, a: Self::Action) -> Vector;
    /// `∇_θ log f_θ(next | s, a)`.
    fn grad_log_transition(&self, s: Self::State, a: Self::Action, next: Self::State) -> Vector;
}

/// Number of steps after which `γ^N < 1e-8`, the truncation used for
/// Monte-Carlo discounted returns.
pub fn truncation_horizon(discount: f64) -> usize {
    #[allow(unused_imports)]
    use num_traits::Float;
    if discount <= 0.0 {
        return 1;
    }
    let n = (1e-8f64.ln() / discount.ln()).floor() as usize + 1;
    n.max(1)
}
