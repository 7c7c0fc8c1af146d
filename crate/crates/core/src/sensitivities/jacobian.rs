use crate::config::StepWeighting;
use crate::env::{DiscreteMdpParams, Environment, Trajectory};
use crate::linalg::{smallest_singular_value, solve};
use crate::policy::{StochasticPolicy, TabularSoftmaxPolicy};
use crate::solvers::{evaluate_policy, TabularValues};
use crate::{Error, Matrix, Result, Vector};

use super::critic::{
    critic_sensitivities, sampled_step_critics, tabular_step_critics, CriticSensitivities,
    StepBaseline, StepCritics,
};
use super::exact::{exact_inner_pg, exact_mc_sens, occupancy, Occupancy, Wrt};
use super::markov::{mc_sens_phi, mc_sens_theta, sampled_inner_pg, step_weights};

/// Total derivatives of the inner gradient `φ̂(φ, θ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerPgSensitivities {
    /// `∇_φ φ̂`, `dim(φ) × dim(φ)`.
    pub dpg_dphi: Matrix,
    /// `∇_θ φ̂`, `dim(φ) × dim(θ)`.
    pub dpg_dtheta: Matrix,
}

/// `∇_θ φ` from the implicit-function solve.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyJacobian {
    pub dphi_dtheta: Matrix,
    /// Smallest singular value of the regularised `∇_φ φ̂ − reg·I`.
    pub smallest_singular_value: f64,
    pub regularization: f64,
}

impl PolicyJacobian {
    /// `‖(∇_φ φ̂ − reg·I) ∇_θ φ + ∇_θ φ̂‖_F`.
    pub fn ift_residual(&self, pg: &InnerPgSensitivities) -> f64 {
        let n = pg.dpg_dphi.nrows();
        let a = &pg.dpg_dphi - Matrix::identity(n, n) * self.regularization;
        (a * &self.dphi_dtheta + &pg.dpg_dtheta).norm()
    }
}

/// Default Tikhonov shift `1e-8 · Σ_i |A_ii|`.
pub fn default_regularization(dpg_dphi: &Matrix) -> f64 {
    1e-8 * dpg_dphi.diagonal().iter().map(|x| x.abs()).sum::<f64>()
}

/// Solves `(∇_φ φ̂ − reg·I) ∇_θ φ = −∇_θ φ̂`.
///
/// `reg = None` selects [`default_regularization`].
pub fn assemble_policy_jacobian(
    pg: &InnerPgSensitivities,
    reg: Option<f64>,
) -> Result<PolicyJacobian> {
    let a = &pg.dpg_dphi;
    let n = a.nrows();
    if a.ncols() != n || pg.dpg_dtheta.nrows() != n {
        return Err(Error::DimensionMismatch {
            what: "inner-gradient sensitivities",
            expected: n,
            found: if a.ncols() != n {
                a.ncols()
            } else {
                pg.dpg_dtheta.nrows()
            },
        });
    }
    if a.iter().chain(pg.dpg_dtheta.iter()).any(|x| !x.is_finite()) {
        return Err(Error::invalid("pg_sens", "entries must be finite"));
    }
    let reg = reg.unwrap_or_else(|| default_regularization(a));
    if !(reg >= 0.0) {
        return Err(Error::invalid("reg", "must be non-negative"));
    }
    let shifted = a - Matrix::identity(n, n) * reg;
    let sigma = smallest_singular_value(&shifted);
    let x =
        solve(&shifted, &(-&pg.dpg_dtheta), "policy jacobian").map_err(|_| Error::Singular {
            what: "policy jacobian",
            smallest_singular_value: sigma,
            regularization: reg,
        })?;
    Ok(PolicyJacobian {
        dphi_dtheta: x,
        smallest_singular_value: sigma,
        regularization: reg,
    })
}

/// Implicit-function blocks with exact tabular expectations:
/// `∇_φ φ̂ = E[∇²log π Q̂ + ∇log π ⊗ ∇_φ Q̂] + exact_mc_sens(φ)`,
/// `∇_θ φ̂ = E[∇log π ⊗ ∇_θ Q̂] + exact_mc_sens(θ)`.
pub fn exact_inner_pg_sensitivities(
    mdp: &DiscreteMdpParams,
    policy: &TabularSoftmaxPolicy,
    values: &TabularValues,
    critic: &CriticSensitivities,
    kind: Occupancy,
) -> Result<InnerPgSensitivities> {
    let rho = occupancy(mdp, policy, kind)?;
    let na = mdp.n_actions();
    let mut dphi = exact_mc_sens(mdp, policy, values, Wrt::Phi, kind)?;
    let mut dtheta = exact_mc_sens(mdp, policy, values, Wrt::Theta, kind)?;
    for s in 0..mdp.n_states() {
        for (a, p) in policy.probs(s).into_iter().enumerate() {
            let w = rho[s] * p;
            let row = s * na + a;
            let score = policy.grad_log_prob(s, a);
            dphi += policy.hess_log_prob(s, a) * (w * values.q(s, a));
            dphi.ger(w, &score, &critic.dq_dphi.row(row).transpose(), 1.0);
            dtheta.ger(w, &score, &critic.dq_dtheta.row(row).transpose(), 1.0);
        }
    }
    Ok(InnerPgSensitivities {
        dpg_dphi: dphi,
        dpg_dtheta: dtheta,
    })
}

/// Implicit-function blocks from trajectory averages, with per-step critic values
/// and sensitivities supplied by `critics`.
pub fn sampled_inner_pg_sensitivities<E, P>(
    env: &E,
    policy: &P,
    trajectories: &[Trajectory<E::State, E::Action>],
    critics: &StepCritics,
    weighting: StepWeighting,
) -> Result<InnerPgSensitivities>
where
    E: Environment,
    P: StochasticPolicy<State = E::State, Action = E::Action>,
{
    let weights = step_weights(trajectories, weighting, env.discount())?;
    let mut dphi = mc_sens_phi(env, policy, trajectories, &critics.q, weighting)?;
    let mut dtheta = mc_sens_theta(env, policy, trajectories, &critics.q, weighting)?;
    for (j, traj) in trajectories.iter().enumerate() {
        for (k, t) in traj.transitions.iter().enumerate() {
            let w = weights[j][k];
            let score = policy.grad_log_prob(t.state, t.action);
            dphi += policy.hess_log_prob(t.state, t.action) * (w * critics.q[j][k]);
            dphi.ger(w, &score, &critics.dq_dphi[j][k], 1.0);
            dtheta.ger(w, &score, &critics.dq_dtheta[j][k], 1.0);
        }
    }
    Ok(InnerPgSensitivities {
        dpg_dphi: dphi,
        dpg_dtheta: dtheta,
    })
}

/// Everything the outer step needs from the simulator side.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicySensitivity {
    /// The inner gradient `φ̂` at the current `(φ, θ)`; its norm measures
    /// how far `φ` is from inner stationarity.
    pub phi_hat: Vector,
    pub pg: InnerPgSensitivities,
    pub jacobian: PolicyJacobian,
}

/// Discrete pipeline with exact occupancy and exact critic tables.
pub fn discrete_exact_sensitivity(
    mdp: &DiscreteMdpParams,
    policy: &TabularSoftmaxPolicy,
    critic_tol: f64,
    reg: Option<f64>,
    kind: Occupancy,
) -> Result<PolicySensitivity> {
    let values = evaluate_policy(mdp, &policy.table())?;
    let critic = critic_sensitivities(mdp, policy, &values, critic_tol)?;
    let pg = exact_inner_pg_sensitivities(mdp, policy, &values, &critic, kind)?;
    let jacobian = assemble_policy_jacobian(&pg, reg)?;
    Ok(PolicySensitivity {
        phi_hat: exact_inner_pg(mdp, policy, &values, kind)?,
        pg,
        jacobian,
    })
}

/// Discrete pipeline averaging over simulator trajectories; critic values
/// and sensitivities come from the exact tables.
///
/// With `advantage_baseline` the estimators see `Q̂ − V̂` and its
/// sensitivities. Since `Σ_a π(a|s) ∇_φ log π(a|s) = 0` for every `φ`, the
/// inner gradient and both of its total derivatives keep their expected
/// values while the large mutually cancelling `Q̂`-weighted terms vanish.
pub fn discrete_sampled_sensitivity(
    mdp: &DiscreteMdpParams,
    policy: &TabularSoftmaxPolicy,
    trajectories: &[Trajectory<usize, usize>],
    weighting: StepWeighting,
    critic_tol: f64,
    reg: Option<f64>,
    advantage_baseline: bool,
) -> Result<PolicySensitivity> {
    let mut values = evaluate_policy(mdp, &policy.table())?;
    let mut critic = critic_sensitivities(mdp, policy, &values, critic_tol)?;
    if advantage_baseline {
        critic = critic.advantages(mdp.n_actions());
        values = values.advantages();
    }
    let critics = tabular_step_critics(trajectories, &values, &critic);
    sampled_sensitivity(mdp, policy, trajectories, &critics, weighting, reg)
}

/// Sampled pipeline with per-sample critic recursions (continuous case).
///
/// An optional baseline is passed to
/// [`sampled_step_critics`](super::sampled_step_critics).
pub fn per_sample_sensitivity<E, P>(
    env: &E,
    policy: &P,
    trajectories: &[Trajectory<E::State, E::Action>],
    weighting: StepWeighting,
    reg: Option<f64>,
    baseline: Option<&StepBaseline<'_, E::State, E::Action>>,
) -> Result<PolicySensitivity>
where
    E: Environment,
    P: StochasticPolicy<State = E::State, Action = E::Action>,
{
    let critics = sampled_step_critics(env, policy, trajectories, baseline);
    sampled_sensitivity(env, policy, trajectories, &critics, weighting, reg)
}

fn sampled_sensitivity<E, P>(
    env: &E,
    policy: &P,
    trajectories: &[Trajectory<E::State, E::Action>],
    critics: &StepCritics,
    weighting: StepWeighting,
    reg: Option<f64>,
) -> Result<PolicySensitivity>
where
    E: Environment,
    P: StochasticPolicy<State = E::State, Action = E::Action>,
{
    let pg = sampled_inner_pg_sensitivities(env, policy, trajectories, critics, weighting)?;
    let jacobian = assemble_policy_jacobian(&pg, reg)?;
    Ok(PolicySensitivity {
        phi_hat: sampled_inner_pg(policy, trajectories, &critics.q, weighting, env.discount())?,
        pg,
        jacobian,
    })
}
