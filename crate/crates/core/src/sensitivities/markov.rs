use alloc::vec::Vec;

use crate::config::StepWeighting;
use crate::env::{Environment, Trajectory};
use crate::policy::StochasticPolicy;
use crate::{Error, Matrix, Result, Vector};

/// Per-step weights of a trajectory average: `γ^k / n` or `1 / (n N_j)`.
pub fn step_weights<S, A>(
    trajectories: &[Trajectory<S, A>],
    weighting: StepWeighting,
    discount: f64,
) -> Result<Vec<Vec<f64>>> {
    if trajectories.is_empty() || trajectories.iter().any(|t| t.transitions.is_empty()) {
        return Err(Error::invalid(
            "trajectories",
            "need at least one non-empty trajectory",
        ));
    }
    let n = trajectories.len() as f64;
    Ok(trajectories
        .iter()
        .map(|t| {
            let len = t.transitions.len();
            match weighting {
                StepWeighting::Discounted => {
                    let mut w = 1.0 / n;
                    (0..len)
                        .map(|_| {
                            let out = w;
                            w *= discount;
                            out
                        })
                        .collect()
                }
                StepWeighting::Uniform => alloc::vec![1.0 / (n * len as f64); len],
            }
        })
        .collect())
}

/// Running score sums along each trajectory.
///
/// `w_phi[j][k] = Σ_{i<k} ∇_φ log π(a_i|s_i)` and
/// `w_theta[j][k] = Σ_{1≤i≤k} ∇_θ log f(s_i|s_{i−1},a_{i−1})`, both zero at
/// `k = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct WAccumulators {
    pub w_phi: Vec<Vec<Vector>>,
    pub w_theta: Vec<Vec<Vector>>,
    /// `∇_φ log π(a_k|s_k)` at every step, kept for the additive score term.
    pub scores: Vec<Vec<Vector>>,
}

impl WAccumulators {
    pub fn build<E, P>(
        env: &E,
        policy: &P,
        trajectories: &[Trajectory<E::State, E::Action>],
    ) -> Self
    where
        E: Environment,
        P: StochasticPolicy<State = E::State, Action = E::Action>,
    {
        let (dp, dt) = (policy.num_params(), env.num_params());
        let mut out = WAccumulators {
            w_phi: Vec::with_capacity(trajectories.len()),
            w_theta: Vec::with_capacity(trajectories.len()),
            scores: Vec::with_capacity(trajectories.len()),
        };
        for traj in trajectories {
            let n = traj.len();
            let mut w_phi = Vec::with_capacity(n);
            let mut w_theta = Vec::with_capacity(n);
            let mut scores = Vec::with_capacity(n);
            let mut acc_phi = Vector::zeros(dp);
            let mut acc_theta = Vector::zeros(dt);
            for (k, t) in traj.transitions.iter().enumerate() {
                if k > 0 {
                    let prev = &traj.transitions[k - 1];
                    acc_phi += &scores[k - 1];
                    acc_theta += env.grad_log_transition(prev.state, prev.action, t.state);
                }
                w_phi.push(acc_phi.clone());
                w_theta.push(acc_theta.clone());
                scores.push(policy.grad_log_prob(t.state, t.action));
            }
            out.w_phi.push(w_phi);
            out.w_theta.push(w_theta);
            out.scores.push(scores);
        }
        out
    }
}

fn check_shape(q_hat: &[Vec<f64>], w: &WAccumulators) -> Result<()> {
    let ok = q_hat.len() == w.scores.len()
        && q_hat.iter().zip(&w.scores).all(|(q, s)| q.len() == s.len());
    if ok {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            what: "critic estimates vs trajectories",
            expected: w.scores.iter().map(Vec::len).sum(),
            found: q_hat.iter().map(Vec::len).sum(),
        })
    }
}

/// Sampled `∂_φ E_ρ̂[∇_φ log π · Q̂]` through the state-action distribution
/// only: `Σ_j Σ_k w_k ∇_φ log π_k Q̂_k ⊗ (W_{φ,k} + ∇_φ log π_k)`.
///
/// `q_hat[j][k]` is the critic at step `k` of trajectory `j`.
pub fn mc_sens_phi<E, P>(
    env: &E,
    policy: &P,
    trajectories: &[Trajectory<E::State, E::Action>],
    q_hat: &[Vec<f64>],
    weighting: StepWeighting,
) -> Result<Matrix>
where
    E: Environment,
    P: StochasticPolicy<State = E::State, Action = E::Action>,
{
    let weights = step_weights(trajectories, weighting, env.discount())?;
    let w = WAccumulators::build(env, policy, trajectories);
    check_shape(q_hat, &w)?;
    let dp = policy.num_params();
    let mut out = Matrix::zeros(dp, dp);
    for j in 0..trajectories.len() {
        for k in 0..weights[j].len() {
            let score = &w.scores[j][k];
            let weight = &w.w_phi[j][k] + score;
            out.ger(weights[j][k] * q_hat[j][k], score, &weight, 1.0);
        }
    }
    Ok(out)
}

/// Sampled `∂_θ E_ρ̂[∇_φ log π · Q̂]` through the simulated state
/// distribution: `Σ_j Σ_k w_k ∇_φ log π_k Q̂_k ⊗ W_{θ,k}`.
pub fn mc_sens_theta<E, P>(
    env: &E,
    policy: &P,
    trajectories: &[Trajectory<E::State, E::Action>],
    q_hat: &[Vec<f64>],
    weighting: StepWeighting,
) -> Result<Matrix>
where
    E: Environment,
    P: StochasticPolicy<State = E::State, Action = E::Action>,
{
    let weights = step_weights(trajectories, weighting, env.discount())?;
    let w = WAccumulators::build(env, policy, trajectories);
    check_shape(q_hat, &w)?;
    let mut out = Matrix::zeros(policy.num_params(), env.num_params());
    for j in 0..trajectories.len() {
        for k in 0..weights[j].len() {
            out.ger(
                weights[j][k] * q_hat[j][k],
                &w.scores[j][k],
                &w.w_theta[j][k],
                1.0,
            );
        }
    }
    Ok(out)
}

/// A scalar expectation under the simulated occupancy together with its
/// derivatives through the sampling distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct GenericExpectationSensitivity {
    pub value: f64,
    pub dphi: Vector,
    pub dtheta: Vector,
}

/// `E[η]`, `∂_φ E[η] = E[η (W_φ + ∇_φ log π)]` and
/// `∂_θ E[η] = E[η W_θ]` for a caller-supplied `η(s, a, k)` that does not
/// itself depend on the parameters. The `∇_θ` counterpart of the additive
/// policy score is identically zero and therefore absent.
pub fn generic_expectation_sensitivity<E, P, F>(
    env: &E,
    policy: &P,
    trajectories: &[Trajectory<E::State, E::Action>],
    weighting: StepWeighting,
    eta: F,
) -> Result<GenericExpectationSensitivity>
where
    E: Environment,
    P: StochasticPolicy<State = E::State, Action = E::Action>,
    F: Fn(E::State, E::Action, usize) -> f64,
{
    let weights = step_weights(trajectories, weighting, env.discount())?;
    let w = WAccumulators::build(env, policy, trajectories);
    let mut out = GenericExpectationSensitivity {
        value: 0.0,
        dphi: Vector::zeros(policy.num_params()),
        dtheta: Vector::zeros(env.num_params()),
    };
    for (j, traj) in trajectories.iter().enumerate() {
        for (k, t) in traj.transitions.iter().enumerate() {
            let e = weights[j][k] * eta(t.state, t.action, k);
            out.value += e;
            out.dphi.axpy(e, &(&w.w_phi[j][k] + &w.scores[j][k]), 1.0);
            out.dtheta.axpy(e, &w.w_theta[j][k], 1.0);
        }
    }
    Ok(out)
}

/// Sampled `φ̂ = E_ρ̂[∇_φ log π · Q̂]`.
pub fn sampled_inner_pg<S, A, P>(
    policy: &P,
    trajectories: &[Trajectory<S, A>],
    q_hat: &[Vec<f64>],
    weighting: StepWeighting,
    discount: f64,
) -> Result<Vector>
where
    S: Copy,
    A: Copy,
    P: StochasticPolicy<State = S, Action = A>,
{
    let weights = step_weights(trajectories, weighting, discount)?;
    let mut out = Vector::zeros(policy.num_params());
    for (j, traj) in trajectories.iter().enumerate() {
        if q_hat.get(j).map(Vec::len) != Some(traj.transitions.len()) {
            return Err(Error::invalid("q_hat", "must match the trajectory shape"));
        }
        for (k, t) in traj.transitions.iter().enumerate() {
            out.axpy(
                weights[j][k] * q_hat[j][k],
                &policy.grad_log_prob(t.state, t.action),
                1.0,
            );
        }
    }
    Ok(out)
}
