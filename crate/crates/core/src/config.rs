//! Numerical settings of a bi-level run.

use alloc::vec::Vec;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvKind {
    Discrete,
    Continuous,
}

/// How expectations under the simulated occupancy are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pathway {
    /// Exact tabular sums (discrete only).
    Exact,
    /// Averages over sampled trajectories.
    Sampled,
}

/// Per-step weight of sampled occupancy averages.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepWeighting {
    /// `γ^k / n`: unbiased for the discounted occupancy.
    Discounted,
    /// `1 / (nN)`: uniform average over all visited steps.
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThetaInit {
    /// Uniform in `[0, 5]` (discrete) or `[0, 1]` (continuous).
    Random,
    /// The real environment's parameters.
    TrueParams,
    /// The vector in [`BilevelConfig::theta_explicit`].
    Explicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyMean {
    Linear,
    Mlp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BilevelConfig {
    pub env_kind: EnvKind,
    pub discount: f64,
    /// Softmax temperature of the discrete distillation.
    pub temperature: f64,
    /// Process noise `σ` of the linear system.
    pub noise_std: f64,
    /// Reward scale `λ` of the linear system.
    pub reward_scale: f64,
    pub initial_state_std: f64,
    /// Policy action standard deviation `σ_π` (continuous).
    pub action_std: f64,
    pub policy_mean: PolicyMean,
    pub policy_hidden: usize,
    /// Convergence threshold of value iteration in the inner solve.
    pub vi_tol: f64,
    /// Convergence threshold of the tabular critic-sensitivity recursions.
    pub critic_tol: f64,
    pub dare_tol: f64,
    pub sim_trajectories: usize,
    pub sim_horizon: usize,
    pub real_trajectories: usize,
    pub real_horizon: usize,
    pub learning_rate: f64,
    pub max_outer_iters: usize,
    /// Gradient-norm clip; non-positive disables clipping.
    pub clip_norm: f64,
    /// Stop when the (unclipped) outer gradient norm drops below this.
    pub grad_tol: f64,
    /// Tikhonov shift used in the implicit-function solve; `None` selects
    /// `1e-8 · Σ|diag|`.
    pub jacobian_reg: Option<f64>,
    pub pathway: Pathway,
    pub weighting: StepWeighting,
    /// Subtract a state-value baseline from the simulator critic in sampled
    /// sensitivity estimates: `V̂^π(s)` with its sensitivities (discrete) or
    /// the closed-form value of the Riccati gain (continuous). Leaves every
    /// expectation unchanged.
    pub advantage_baseline: bool,
    pub theta_init: ThetaInit,
    pub theta_explicit: Option<Vec<f64>>,
    pub freeze_model: bool,
    pub freeze_reward: bool,
    /// Lower bound applied to `θ_q, θ_r` after each continuous update.
    pub cost_weight_floor: f64,
}

impl BilevelConfig {
    /// Discrete-MDP experiment defaults.
    pub fn discrete() -> Self {
        BilevelConfig {
            env_kind: EnvKind::Discrete,
            discount: 0.95,
            temperature: 2.0,
            noise_std: 0.1,
            reward_scale: 0.1,
            initial_state_std: 1.0,
            action_std: 0.1,
            policy_mean: PolicyMean::Linear,
            policy_hidden: 6,
            vi_tol: 1e-2,
            critic_tol: 1e-8,
            dare_tol: 1e-12,
            sim_trajectories: 1,
            sim_horizon: 1000,
            real_trajectories: 1,
            real_horizon: 1000,
            learning_rate: 0.1,
            max_outer_iters: 200,
            clip_norm: 10.0,
            grad_tol: 0.0,
            jacobian_reg: None,
            pathway: Pathway::Sampled,
            weighting: StepWeighting::Discounted,
            advantage_baseline: true,
            theta_init: ThetaInit::Random,
            theta_explicit: None,
            freeze_model: false,
            freeze_reward: false,
            cost_weight_floor: 1e-3,
        }
    }

    /// Linear-Gaussian experiment defaults.
    pub fn continuous() -> Self {
        BilevelConfig {
            env_kind: EnvKind::Continuous,
            sim_trajectories: 50,
            sim_horizon: 400,
            real_trajectories: 20,
            real_horizon: 200,
            max_outer_iters: 300,
            ..Self::discrete()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("temperature", self.temperature),
            ("noise_std", self.noise_std),
            ("reward_scale", self.reward_scale),
            ("initial_state_std", self.initial_state_std),
            ("action_std", self.action_std),
            ("vi_tol", self.vi_tol),
            ("critic_tol", self.critic_tol),
            ("dare_tol", self.dare_tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invalid(name, "must be positive and finite"));
            }
        }
        if !(0.0..1.0).contains(&self.discount) {
            return Err(Error::invalid("discount", "must lie in [0, 1)"));
        }
        if !(self.learning_rate >= 0.0) {
            return Err(Error::invalid("learning_rate", "must be nonnegative"));
        }
        if !(self.grad_tol >= 0.0) {
            return Err(Error::invalid("grad_tol", "must be nonnegative"));
        }
        for (name, v) in [
            ("sim_trajectories", self.sim_trajectories),
            ("sim_horizon", self.sim_horizon),
            ("real_trajectories", self.real_trajectories),
            ("real_horizon", self.real_horizon),
            ("policy_hidden", self.policy_hidden),
        ] {
            if v == 0 {
                return Err(Error::invalid(name, "must be at least 1"));
            }
        }
        if let Some(r) = self.jacobian_reg {
            if !(r >= 0.0) {
                return Err(Error::invalid("jacobian_reg", "must be nonnegative"));
            }
        }
        if self.env_kind == EnvKind::Continuous && self.pathway == Pathway::Exact {
            return Err(Error::invalid(
                "pathway",
                "the exact pathway is discrete-only",
            ));
        }
        if self.theta_init == ThetaInit::Explicit && self.theta_explicit.is_none() {
            return Err(Error::invalid(
                "theta_explicit",
                "required for explicit initialisation",
            ));
        }
        Ok(())
    }
}
