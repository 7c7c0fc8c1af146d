use alloc::vec::Vec;

use crate::env::{rollout, EnvTag, Environment, Trajectory};
use crate::policy::StochasticPolicy;
use crate::rng::{derive_seed, Stream};
use crate::{Error, Result, Vector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpgConfig {
    pub batch_trajectories: usize,
    pub horizon: usize,
    pub step_size: f64,
    /// Stop once the sampled gradient norm falls below this.
    pub tol: f64,
    pub max_iters: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpgOutcome<P> {
    /// Iterate with the smallest observed gradient norm.
    pub policy: P,
    pub grad_norm: f64,
    /// Number of parameter updates performed.
    pub updates: usize,
    pub converged: bool,
}

/// `(1/n) Σ_j Σ_k γ^k ∇_φ log π(a_k|s_k) G_k`, with `G_k` the discounted
/// reward-to-go of trajectory `j` from step `k`.
pub(crate) fn reinforce_gradient<S, A, P>(
    trajectories: &[Trajectory<S, A>],
    policy: &P,
    discount: f64,
) -> Vector
where
    S: Copy + PartialEq,
    A: Copy,
    P: StochasticPolicy<State = S, Action = A>,
{
    let mut grad = Vector::zeros(policy.num_params());
    for traj in trajectories {
        let mut to_go = 0.0;
        let mut g: Vec<f64> = Vec::with_capacity(traj.len());
        for t in traj.transitions.iter().rev() {
            to_go = t.reward + discount * to_go;
            g.push(to_go);
        }
        g.reverse();
        let mut weight = 1.0;
        for (t, q) in traj.transitions.iter().zip(g) {
            grad.axpy(weight * q, &policy.grad_log_prob(t.state, t.action), 1.0);
            weight *= discount;
        }
    }
    grad / trajectories.len() as f64
}

/// Plain stochastic policy-gradient ascent in the simulator until the
/// sampled gradient norm drops below `config.tol`.
///
/// Non-convergence is not an error: the best iterate is returned with
/// `converged = false`.
pub fn inner_spg_train<E, P>(env: &E, initial: &P, config: &SpgConfig) -> Result<SpgOutcome<P>>
where
    E: Environment,
    P: StochasticPolicy<State = E::State, Action = E::Action> + Clone,
{
    if config.batch_trajectories == 0 || config.horizon == 0 {
        return Err(Error::invalid(
            "config",
            "batch size and horizon must be positive",
        ));
    }
    if !(config.tol > 0.0) || !(config.step_size > 0.0) {
        return Err(Error::invalid(
            "config",
            "tolerance and step size must be positive",
        ));
    }
    let mut policy = initial.clone();
    let mut best: Option<(P, f64)> = None;
    for it in 0..=config.max_iters {
        let seed = derive_seed(config.seed, Stream::SimRollout, it as u64);
        let trajs = rollout(
            env,
            &policy,
            config.horizon,
            config.batch_trajectories,
            seed,
            EnvTag::Sim,
        )?;
        let grad = reinforce_gradient(&trajs, &policy, env.discount());
        let norm = grad.norm();
        if best.as_ref().is_none_or(|(_, b)| norm < *b) {
            best = Some((policy.clone(), norm));
        }
        if norm < config.tol {
            return Ok(SpgOutcome {
                policy,
                grad_norm: norm,
                updates: it,
                converged: true,
            });
        }
        if it == config.max_iters {
            break;
        }
        let next = policy.params() + grad * config.step_size;
        policy = policy.with_params(&next)?;
    }
    let (policy, grad_norm) = best.expect("at least one iterate");
    Ok(SpgOutcome {
        policy,
        grad_norm,
        updates: config.max_iters,
        converged: false,
    })
}
