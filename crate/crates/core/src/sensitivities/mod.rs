//! Sensitivities of the in-simulator policy gradient.
//!
//! The inner gradient is `φ̂(φ, θ) = E_ρ̂[∇_φ log π_φ(a|s) Q̂^π_θ(s, a)]`.
//! Its total derivatives combine the critic sensitivities (how `Q̂` moves)
//! with the Markov-chain sensitivities (how the simulated state-action
//! distribution moves). The implicit-function solve then turns them into
//! `∇_θ φ`.
//!
//! Every quantity exists in an exact tabular form (discrete environment)
//! and a trajectory-average form; the sampled estimators converge to the
//! exact ones as the number of trajectories grows.

mod critic;
mod exact;
mod jacobian;
mod markov;


pub use critic::{
    critic_sens_phi, critic_sens_theta, critic_sensitivities, sampled_step_critics,
    tabular_step_critics, CriticSensitivities, SensitivityTable, StepBaseline, StepCritics,
};
pub use exact::{
    exact_expectation_sensitivity, exact_inner_pg, exact_mc_sens, exact_occupancy, occupancy,
    occupancy_derivatives, Occupancy, Wrt,
};
pub use jacobian::{
    assemble_policy_jacobian, default_regularization, discrete_exact_sensitivity,
    discrete_sampled_sensitivity, exact_inner_pg_sensitivities, per_sample_sensitivity,
    sampled_inner_pg_sensitivities, InnerPgSensitivities, PolicyJacobian, PolicySensitivity,
};
pub use markov::{
    generic_expectation_sensitivity, mc_sens_phi, mc_sens_theta, sampled_inner_pg, step_weights,
    GenericExpectationSensitivity, WAccumulators,
};

use alloc::vec::Vec;

use crate::config::StepWeighting;
use crate::env::{DiscreteMdpParams, Trajectory};
use crate::policy::TabularSoftmaxPolicy;
use crate::solvers::TabularValues;
use crate::{Result, Vector};

/// How [`estimate_inner_pg`] evaluates the occupancy expectation.
#[derive(Debug, Clone, Copy)]
pub enum PgMode<'a> {
    Exact(Occupancy),
    Sampled(&'a [Trajectory<usize, usize>], StepWeighting),
}

/// `φ̂ = E_ρ̂[∇_φ log π · Q̂]` on the discrete simulator, with `Q̂` read
/// from `values`.
pub fn estimate_inner_pg(
    mdp: &DiscreteMdpParams,
    policy: &TabularSoftmaxPolicy,
    values: &TabularValues,
    mode: PgMode<'_>,
) -> Result<Vector> {
    use crate::env::Environment;
    match mode {
        PgMode::Exact(kind) => exact_inner_pg(mdp, policy, values, kind),
        PgMode::Sampled(trajectories, weighting) => {
            let q: Vec<Vec<f64>> = trajectories
                .iter()
                .map(|t| {
                    t.transitions
                        .iter()
                        .map(|x| values.q(x.state, x.action))
                        .collect()
                })
                .collect();
            sampled_inner_pg(policy, trajectories, &q, weighting, mdp.discount())
        }
    }
}
