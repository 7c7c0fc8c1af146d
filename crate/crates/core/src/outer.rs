//! The outer, real-world policy gradient and the bi-level training loop.
//!
//! Each outer iteration solves the simulator at the current `θ`, obtains
//! `∇_θ φ` from the sensitivities, rolls the policy out on the real system
//! and ascends `∇_θ J = E_real[γ^k (∇_θ φ ∇_φ log π) Q]`.

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;

use crate::config::{BilevelConfig, EnvKind, Pathway, PolicyMean, StepWeighting, ThetaInit};
use crate::env::{
    rollout, DiscreteMdpParams, EnvTag, Environment, LinearGaussianParams, PolicyTable, Trajectory,
};
use crate::policy::{GaussianPolicy, StochasticPolicy, TabularSoftmaxPolicy};
use crate::rng::{derive_seed, stream_rng, Stream};
use crate::sensitivities::{
    discrete_exact_sensitivity, discrete_sampled_sensitivity, occupancy, per_sample_sensitivity,
    step_weights, Occupancy, PolicyJacobian, PolicySensitivity, StepBaseline,
};
use crate::solvers::{
    distill, evaluate_policy, fit_mlp_policy, lqr_policy, soft_value_iteration, solve_dare,
    FitOptions,
};
use crate::{Error, Result, Vector};

/// Tolerance of the value iterations used for diagnostics and baselines.
const DIAGNOSTIC_VI_TOL: f64 = 1e-10;

/// Discounted Monte-Carlo reward-to-go `Q_k = Σ_{i≥k} γ^{i−k} r_i` at every
/// visited step.
pub fn real_q_estimates<S, A>(trajectories: &[Trajectory<S, A>], discount: f64) -> Vec<Vec<f64>> {
    trajectories
        .iter()
        .map(|t| {
            let mut to_go = 0.0;
            let mut q: Vec<f64> = t
                .transitions
                .iter()
                .rev()
                .map(|x| {
                    to_go = x.reward + discount * to_go;
                    to_go
                })
                .collect();
            q.reverse();
            q
        })
        .collect()
}

/// The outer gradient and its diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct OuterGradient {
    pub grad_theta: Vector,
    /// Estimated real return of the current policy.
    pub real_return: f64,
    pub grad_norm: f64,
    /// Conditioning of the implicit-function solve that produced `∇_θ φ`.
    pub smallest_singular_value: f64,
}

fn check_jacobian(policy_dim: usize, jac: &PolicyJacobian) -> Result<()> {
    if jac.dphi_dtheta.nrows() != policy_dim {
        return Err(Error::DimensionMismatch {
            what: "policy jacobian rows",
            expected: policy_dim,
            found: jac.dphi_dtheta.nrows(),
        });
    }
    Ok(())
}

/// `Σ_j Σ_k w_k (∇_θ φ)ᵀ ∇_φ log π(a_k|s_k) (Q_k − b(s_k))` over real
/// trajectories, with `Q_k` from [`real_q_estimates`], weights `γ^k/n` or
/// `1/(nN)`, and an optional fixed state baseline `b` (zero if absent).
/// The baseline does not change the expectation.
pub fn outer_gradient<S, A, P>(
    trajectories: &[Trajectory<S, A>],
    policy: &P,
    jac: &PolicyJacobian,
    discount: f64,
    weighting: StepWeighting,
    baseline: Option<&dyn Fn(S) -> f64>,
) -> Result<OuterGradient>
where
    S: Copy,
    A: Copy,
    P: StochasticPolicy<State = S, Action = A>,
{
    check_jacobian(policy.num_params(), jac)?;
    let weights = step_weights(trajectories, weighting, discount)?;
    let q = real_q_estimates(trajectories, discount);
    let mut score_sum = Vector::zeros(policy.num_params());
    for (j, t) in trajectories.iter().enumerate() {
        for (k, x) in t.transitions.iter().enumerate() {
            let advantage = q[j][k] - baseline.map_or(0.0, |b| b(x.state));
            score_sum.axpy(
                weights[j][k] * advantage,
                &policy.grad_log_prob(x.state, x.action),
                1.0,
            );
        }
    }
    let grad = jac.dphi_dtheta.transpose() * score_sum;
    let real_return = q.iter().map(|qj| qj[0]).sum::<f64>() / q.len() as f64;
    Ok(OuterGradient {
        grad_norm: grad.norm(),
        grad_theta: grad,
        real_return,
        smallest_singular_value: jac.smallest_singular_value,
    })
}

/// Exact counterpart of [`outer_gradient`] on a tabular real MDP:
/// `(∇_θ φ)ᵀ Σ_s ρ(s) Σ_a π(a|s) ∇_φ log π(a|s) Q^π(s, a)`.
pub fn exact_outer_gradient(
    real: &DiscreteMdpParams,
    policy: &TabularSoftmaxPolicy,
    jac: &PolicyJacobian,
    kind: Occupancy,
) -> Result<OuterGradient> {
    check_jacobian(policy.num_params(), jac)?;
    let values = evaluate_policy(real, &policy.table())?;
    let rho = occupancy(real, policy, kind)?;
    let mut score_sum = Vector::zeros(policy.num_params());
    for s in 0..real.n_states() {
        for (a, p) in policy.probs(s).into_iter().enumerate() {
            score_sum.axpy(
                rho[s] * p * values.q(s, a),
                &policy.grad_log_prob(s, a),
                1.0,
            );
        }
    }
    let grad = jac.dphi_dtheta.transpose() * score_sum;
    let real_return = real.exact_return(&policy.table())?;
    Ok(OuterGradient {
        grad_norm: grad.norm(),
        grad_theta: grad,
        real_return,
        smallest_singular_value: jac.smallest_singular_value,
    })
}

/// Per-state agreement of simulator and real greedy actions.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimalityGap {
    pub sim_greedy: Vec<usize>,
    pub real_greedy: Vec<usize>,
    pub matches: usize,
    /// `J(π_φ) / J*` of the distilled simulator policy on the real MDP.
    pub normalized_return: f64,
}

/// Compares `argmax_a Q*_θ` on the simulator with `argmax_a Q*` on the real
/// MDP and reports the real return of the distilled policy relative to the
/// real optimum.
pub fn optimality_gap_report(
    sim: &DiscreteMdpParams,
    real: &DiscreteMdpParams,
    temperature: f64,
) -> Result<OptimalityGap> {
    let sim_greedy = soft_value_iteration(sim, DIAGNOSTIC_VI_TOL)?.greedy_actions();
    let real_greedy = soft_value_iteration(real, DIAGNOSTIC_VI_TOL)?.greedy_actions();
    let matches = sim_greedy
        .iter()
        .zip(&real_greedy)
        .filter(|(a, b)| a == b)
        .count();
    let (_, pol) = distill(sim, DIAGNOSTIC_VI_TOL, temperature)?;
    let j = real.exact_return(&pol.table())?;
    Ok(OptimalityGap {
        matches,
        normalized_return: j / discrete_optimal_return(real)?,
        sim_greedy,
        real_greedy,
    })
}

/// Real return of the optimal deterministic policy (greedy from converged
/// value iteration).
pub fn discrete_optimal_return(real: &DiscreteMdpParams) -> Result<f64> {
    let greedy = soft_value_iteration(real, DIAGNOSTIC_VI_TOL)?.greedy_actions();
    real.exact_return(&PolicyTable::deterministic(real.n_actions(), &greedy))
}

/// Real return of the linear-feedback policy obtained from the Riccati
/// solution on the true system.
pub fn continuous_optimal_return(
    real: &LinearGaussianParams,
    action_std: f64,
    dare_tol: f64,
) -> Result<f64> {
    let sol = solve_dare(real, dare_tol)?;
    Ok(real.linear_policy_return(sol.k, action_std))
}

/// One recorded outer iteration. `theta` and `phi` are the values used in
/// this iteration, before the update.
#[derive(Debug, Clone, PartialEq)]
pub struct BilevelRunState {
    pub iteration: usize,
    pub theta: Vector,
    pub phi: Vector,
    pub real_return: f64,
    pub normalized_return: f64,
    /// Norm of the outer gradient before clipping and freezing.
    pub grad_norm: f64,
    /// Sim/real greedy-action agreement (discrete only).
    pub argmax_matches: Option<usize>,
    /// `‖φ̂‖` at the inner solution: distance from inner stationarity.
    pub inner_grad_norm: f64,
    pub smallest_singular_value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunHistory {
    pub seed: u64,
    /// Normalisation baseline `J*`, fixed for the run.
    pub j_star: f64,
    pub states: Vec<BilevelRunState>,
    /// Final `θ` after the last update.
    pub final_theta: Vector,
    /// Failure that stopped the run early, if any.
    pub halted: Option<Error>,
}

/// The real discrete MDP described by `config`.
pub fn discrete_real(config: &BilevelConfig) -> Result<DiscreteMdpParams> {
    DiscreteMdpParams::real(config.discount)
}

/// The real linear-Gaussian system described by `config`.
pub fn continuous_real(config: &BilevelConfig) -> Result<LinearGaussianParams> {
    LinearGaussianParams {
        noise_std: config.noise_std,
        reward_scale: config.reward_scale,
        discount: config.discount,
        initial_state_std: config.initial_state_std,
        ..Default::default()
    }
    .validate()
}

/// `θ₀` per the configured initialisation: uniform in `[0, 5]` (discrete)
/// or `[0, 1]` (continuous), the true parameters, or an explicit vector.
pub fn initial_theta(config: &BilevelConfig, seed: u64) -> Result<Vector> {
    let (truth, high) = match config.env_kind {
        EnvKind::Discrete => (discrete_real(config)?.theta(), 5.0),
        EnvKind::Continuous => (continuous_real(config)?.theta(), 1.0),
    };
    match config.theta_init {
        ThetaInit::TrueParams => Ok(truth),
        ThetaInit::Random => {
            let mut rng = stream_rng(seed, Stream::Init, 0);
            Ok(Vector::from_fn(truth.len(), |_, _| {
                high * rng.random::<f64>()
            }))
        }
        ThetaInit::Explicit => {
            let v = config.theta_explicit.as_ref().ok_or_else(|| {
                Error::invalid("theta_explicit", "required for explicit initialisation")
            })?;
            if v.len() != truth.len() {
                return Err(Error::DimensionMismatch {
                    what: "theta_explicit",
                    expected: truth.len(),
                    found: v.len(),
                });
            }
            Ok(Vector::from_column_slice(v))
        }
    }
}

/// Zeroes frozen blocks and rescales to `clip_norm` if exceeded.
fn prepare_step(mut grad: Vector, config: &BilevelConfig, model_params: usize) -> Vector {
    if config.freeze_model {
        grad.rows_mut(0, model_params).fill(0.0);
    }
    if config.freeze_reward {
        let n = grad.len() - model_params;
        grad.rows_mut(model_params, n).fill(0.0);
    }
    let norm = grad.norm();
    if config.clip_norm > 0.0 && norm > config.clip_norm {
        grad *= config.clip_norm / norm;
    }
    grad
}

/// Everything one outer iteration computes before the `θ` update.
#[derive(Debug, Clone, PartialEq)]
pub struct OuterStep {
    pub phi: Vector,
    pub real_return: f64,
    pub argmax_matches: Option<usize>,
    pub sens: PolicySensitivity,
    pub grad: OuterGradient,
}

fn discrete_step(
    config: &BilevelConfig,
    real: &DiscreteMdpParams,
    theta: &Vector,
    seed: u64,
    iteration: usize,
) -> Result<OuterStep> {
    let sim = real.with_theta(theta)?;
    let (_, policy) = distill(&sim, config.vi_tol, config.temperature)?;
    let kind = Occupancy::from_weighting(config.weighting, config.sim_horizon);
    let sens = match config.pathway {
        Pathway::Exact => {
            discrete_exact_sensitivity(&sim, &policy, config.critic_tol, config.jacobian_reg, kind)?
        }
        Pathway::Sampled => {
            let sim_seed = derive_seed(seed, Stream::SimRollout, iteration as u64);
            let trajs = rollout(
                &sim,
                &policy,
                config.sim_horizon,
                config.sim_trajectories,
                sim_seed,
                EnvTag::Sim,
            )?;
            discrete_sampled_sensitivity(
                &sim,
                &policy,
                &trajs,
                config.weighting,
                config.critic_tol,
                config.jacobian_reg,
                config.advantage_baseline,
            )?
        }
    };
    let grad = match config.pathway {
        Pathway::Exact => exact_outer_gradient(
            real,
            &policy,
            &sens.jacobian,
            Occupancy::from_weighting(config.weighting, config.real_horizon),
        )?,
        Pathway::Sampled => {
            let real_seed = derive_seed(seed, Stream::RealRollout, iteration as u64);
            let trajs = rollout(
                real,
                &policy,
                config.real_horizon,
                config.real_trajectories,
                real_seed,
                EnvTag::Real,
            )?;
            outer_gradient(
                &trajs,
                &policy,
                &sens.jacobian,
                real.discount(),
                config.weighting,
                None,
            )?
        }
    };
    let sim_greedy = soft_value_iteration(&sim, DIAGNOSTIC_VI_TOL)?.greedy_actions();
    let real_greedy = soft_value_iteration(real, DIAGNOSTIC_VI_TOL)?.greedy_actions();
    let matches = sim_greedy
        .iter()
        .zip(&real_greedy)
        .filter(|(a, b)| a == b)
        .count();
    Ok(OuterStep {
        phi: policy.params(),
        real_return: real.exact_return(&policy.table())?,
        argmax_matches: Some(matches),
        sens,
        grad,
    })
}

/// The simulator policy at `theta`: Riccati gain wrapped as a Gaussian,
/// optionally distilled into an MLP mean.
pub fn continuous_inner_policy(
    config: &BilevelConfig,
    sim: &LinearGaussianParams,
    seed: u64,
    iteration: usize,
) -> Result<GaussianPolicy> {
    let sol = solve_dare(sim, config.dare_tol)?;
    match config.policy_mean {
        PolicyMean::Linear => lqr_policy(&sol, config.action_std),
        PolicyMean::Mlp => {
            let mut rng = stream_rng(seed, Stream::Fit, iteration as u64);
            fit_mlp_policy(
                sol.k,
                config.policy_hidden,
                config.action_std,
                &FitOptions::default(),
                &mut rng,
            )
        }
    }
}

/// `s ↦ V^π(s)` of a linear-feedback policy, tabulated in `|s|` and
/// linearly interpolated; exact beyond the last node. Only used as a
/// variance-reduction baseline, where any fixed function is admissible.
struct ValueTable<'a> {
    sim: &'a LinearGaussianParams,
    gain: f64,
    action_std: f64,
    spacing: f64,
    values: Vec<f64>,
}

impl<'a> ValueTable<'a> {
    const NODES: usize = 512;

    fn new(sim: &'a LinearGaussianParams, gain: f64, action_std: f64) -> Self {
        let c = sim.theta_s - sim.theta_a * gain;
        let drive =
            sim.theta_a * sim.theta_a * action_std * action_std + sim.noise_std * sim.noise_std;
        let stationary = if c.abs() < 1.0 {
            (drive / (1.0 - c * c)).sqrt()
        } else {
            0.0
        };
        let reach = 8.0 * stationary.max(sim.initial_state_std);
        let spacing = reach / (Self::NODES - 1) as f64;
        let values = (0..Self::NODES)
            .map(|i| sim.linear_policy_value(i as f64 * spacing, gain, action_std))
            .collect();
        ValueTable {
            sim,
            gain,
            action_std,
            spacing,
            values,
        }
    }

    fn eval(&self, s: f64) -> f64 {
        let x = s.abs() / self.spacing;
        let i = x.floor();
        if !(i < (Self::NODES - 1) as f64) {
            return self.sim.linear_policy_value(s, self.gain, self.action_std);
        }
        let (i, t) = (i as usize, x - i);
        self.values[i] * (1.0 - t) + self.values[i + 1] * t
    }
}

fn continuous_step(
    config: &BilevelConfig,
    real: &LinearGaussianParams,
    theta: &Vector,
    seed: u64,
    iteration: usize,
) -> Result<OuterStep> {
    let sim = real.with_theta(theta)?;
    let policy = continuous_inner_policy(config, &sim, seed, iteration)?;
    let sim_seed = derive_seed(seed, Stream::SimRollout, iteration as u64);
    let trajs = rollout(
        &sim,
        &policy,
        config.sim_horizon,
        config.sim_trajectories,
        sim_seed,
        EnvTag::Sim,
    )?;
    let gain = solve_dare(&sim, config.dare_tol)?.k;
    let table = ValueTable::new(&sim, gain, config.action_std);
    let value = |s: f64| table.eval(s);
    let next_value = |s: f64, a: f64| table.eval(sim.theta_s * s + sim.theta_a * a);
    let baseline = StepBaseline {
        state: &value,
        transition: &next_value,
    };
    let sens = per_sample_sensitivity(
        &sim,
        &policy,
        &trajs,
        config.weighting,
        config.jacobian_reg,
        config.advantage_baseline.then_some(&baseline),
    )?;
    let real_seed = derive_seed(seed, Stream::RealRollout, iteration as u64);
    let real_trajs = rollout(
        real,
        &policy,
        config.real_horizon,
        config.real_trajectories,
        real_seed,
        EnvTag::Real,
    )?;
    let real_baseline: Option<&dyn Fn(f64) -> f64> = if config.advantage_baseline {
        Some(&value)
    } else {
        None
    };
    let grad = outer_gradient(
        &real_trajs,
        &policy,
        &sens.jacobian,
        real.discount,
        config.weighting,
        real_baseline,
    )?;
    let real_return = match policy.mean_fn() {
        crate::policy::MeanFn::Linear { gain } => {
            real.linear_policy_return(*gain, config.action_std)
        }
        crate::policy::MeanFn::Mlp(_) => grad.real_return,
    };
    Ok(OuterStep {
        phi: policy.params(),
        real_return,
        argmax_matches: None,
        sens,
        grad,
    })
}

/// Inner solve, sensitivities and outer gradient at `theta` for iteration
/// `iteration` of the run seeded with `seed`.
pub fn outer_step(
    config: &BilevelConfig,
    theta: &Vector,
    seed: u64,
    iteration: usize,
) -> Result<OuterStep> {
    match config.env_kind {
        EnvKind::Discrete => discrete_step(config, &discrete_real(config)?, theta, seed, iteration),
        EnvKind::Continuous => {
            continuous_step(config, &continuous_real(config)?, theta, seed, iteration)
        }
    }
}

/// Runs the bi-level loop for one seed.
pub fn run_bilevel(config: &BilevelConfig, seed: u64) -> Result<RunHistory> {
    run_bilevel_with(config, seed, |_| {})
}

/// As [`run_bilevel`], calling `observe` after every recorded iteration.
///
/// Numerical failures inside an iteration stop the run and are stored in
/// [`RunHistory::halted`]; only configuration errors are returned as `Err`.
pub fn run_bilevel_with<F: FnMut(&BilevelRunState)>(
    config: &BilevelConfig,
    seed: u64,
    mut observe: F,
) -> Result<RunHistory> {
    config.validate()?;
    let mut theta = initial_theta(config, seed)?;
    let discrete = match config.env_kind {
        EnvKind::Discrete => Some(discrete_real(config)?),
        EnvKind::Continuous => None,
    };
    let continuous = continuous_real(config)?;
    let (j_star, model_params) = match &discrete {
        Some(real) => (discrete_optimal_return(real)?, real.num_logit_params()),
        None => (
            continuous_optimal_return(&continuous, config.action_std, config.dare_tol)?,
            2,
        ),
    };
    let mut history = RunHistory {
        seed,
        j_star,
        states: Vec::with_capacity(config.max_outer_iters),
        final_theta: theta.clone(),
        halted: None,
    };
    for iteration in 0..config.max_outer_iters {
        let step = match &discrete {
            Some(real) => discrete_step(config, real, &theta, seed, iteration),
            None => continuous_step(config, &continuous, &theta, seed, iteration),
        };
        let step = match step {
            Ok(s) => s,
            Err(e) => {
                history.halted = Some(e);
                break;
            }
        };
        let state = BilevelRunState {
            iteration,
            theta: theta.clone(),
            phi: step.phi,
            real_return: step.real_return,
            normalized_return: step.real_return / j_star,
            grad_norm: step.grad.grad_norm,
            argmax_matches: step.argmax_matches,
            inner_grad_norm: step.sens.phi_hat.norm(),
            smallest_singular_value: step.grad.smallest_singular_value,
        };
        observe(&state);
        history.states.push(state);
        if !step.grad.grad_theta.iter().all(|x| x.is_finite()) {
            history.halted = Some(Error::NotConverged {
                what: "outer gradient",
                iterations: iteration,
                residual: f64::NAN,
            });
            break;
        }
        if step.grad.grad_norm < config.grad_tol {
            break;
        }
        let update = prepare_step(step.grad.grad_theta, config, model_params);
        theta.axpy(config.learning_rate, &update, 1.0);
        if discrete.is_none() {
            for i in 2..4 {
                theta[i] = theta[i].max(config.cost_weight_floor);
            }
        }
        history.final_theta = theta.clone();
    }
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::{fd_objective_gradient, MeanSe, OBJECTIVE_EPS};
    use crate::sensitivities::PolicyJacobian;
    use crate::Matrix;
    use alloc::vec;

    #[test]
    fn zero_discount_q_is_reward() {
        let real = DiscreteMdpParams::real(0.0).unwrap();
        let pol = TabularSoftmaxPolicy::uniform(3, 2);
        let trajs = rollout(&real, &pol, 20, 2, 1, EnvTag::Real).unwrap();
        let q = real_q_estimates(&trajs, 0.0);
        for (t, qj) in trajs.iter().zip(&q) {
            for (x, qk) in t.transitions.iter().zip(qj) {
                assert_eq!(x.reward, *qk);
            }
        }
    }

    #[test]
    fn constant_reward_q_approaches_geometric_sum() {
        let real = DiscreteMdpParams::new(1, 1, vec![0.0], vec![2.0], 0.9, vec![1.0]).unwrap();
        let pol = TabularSoftmaxPolicy::uniform(1, 1);
        let horizon = crate::env::truncation_horizon(0.9);
        let trajs = rollout(&real, &pol, horizon, 1, 1, EnvTag::Real).unwrap();
        let q = real_q_estimates(&trajs, 0.9);
        assert!((q[0][0] - 20.0).abs() <= 20.0 * 1e-8 + 1e-12);
    }

    #[test]
    fn real_q_averages_match_policy_evaluation() {
        let real = DiscreteMdpParams::real(0.9).unwrap();
        let pol =
            TabularSoftmaxPolicy::new(3, 2, alloc::vec![0.3, -0.2, 0.1, 0.5, -0.4, 0.0]).unwrap();
        let exact = evaluate_policy(&real, &pol.table()).unwrap();
        let trajs = rollout(&real, &pol, 400, 300, 5, EnvTag::Real).unwrap();
        let q = real_q_estimates(&trajs, 0.9);
        // Only steps early enough for the truncation bias to be negligible.
        let mut per: Vec<Vec<f64>> = alloc::vec![Vec::new(); 6];
        for (t, qj) in trajs.iter().zip(&q) {
            for (k, x) in t.transitions.iter().enumerate().take(150) {
                if k % 25 == 0 {
                    per[x.state * 2 + x.action].push(qj[k]);
                }
            }
        }
        for (i, xs) in per.iter().enumerate() {
            let m = MeanSe::of(xs);
            assert!(
                m.within(exact.q[i], 3.0),
                "(s,a)={i}: z={}",
                m.z_score(exact.q[i])
            );
        }
    }

    fn jac(rows: usize, cols: usize, m: Matrix) -> PolicyJacobian {
        assert_eq!(m.shape(), (rows, cols));
        PolicyJacobian {
            dphi_dtheta: m,
            smallest_singular_value: 1.0,
            regularization: 0.0,
        }
    }

    #[test]
    fn zero_jacobian_gives_zero_gradient() {
        let real = DiscreteMdpParams::real(0.95).unwrap();
        let pol = TabularSoftmaxPolicy::uniform(3, 2);
        let trajs = rollout(&real, &pol, 100, 1, 1, EnvTag::Real).unwrap();
        let g = outer_gradient(
            &trajs,
            &pol,
            &jac(6, 24, Matrix::zeros(6, 24)),
            0.95,
            StepWeighting::Discounted,
            None,
        )
        .unwrap();
        assert_eq!(g.grad_theta.amax(), 0.0);
        assert!(outer_gradient(
            &trajs,
            &pol,
            &jac(5, 24, Matrix::zeros(5, 24)),
            0.95,
            StepWeighting::Discounted,
            None
        )
        .is_err());
    }

    #[test]
    fn identity_jacobian_is_plain_policy_gradient() {
        let real = DiscreteMdpParams::real(0.95).unwrap();
        let pol =
            TabularSoftmaxPolicy::new(3, 2, alloc::vec![0.3, -0.2, 0.1, 0.5, -0.4, 0.0]).unwrap();
        let trajs = rollout(&real, &pol, 300, 2, 3, EnvTag::Real).unwrap();
        let g = outer_gradient(
            &trajs,
            &pol,
            &jac(6, 6, Matrix::identity(6, 6)),
            0.95,
            StepWeighting::Discounted,
            None,
        )
        .unwrap();
        let mut pg = Vector::zeros(6);
        for t in &trajs {
            for (k, x) in t.transitions.iter().enumerate() {
                let q: f64 = t.transitions[k..]
                    .iter()
                    .enumerate()
                    .map(|(i, y)| 0.95f64.powi(i as i32) * y.reward)
                    .sum();
                pg += pol.grad_log_prob(x.state, x.action) * (0.95f64.powi(k as i32) * q / 2.0);
            }
        }
        assert!((g.grad_theta - pg).amax() < 1e-12);
    }

    #[test]
    fn exact_outer_gradient_with_fd_jacobian_matches_objective_fd() {
        // The chain rule itself, isolated from the implicit-function step.
        let real = DiscreteMdpParams::real(0.95).unwrap();
        let mut rng = stream_rng(3, Stream::Init, 0);
        let theta = Vector::from_fn(24, |_, _| 5.0 * rng.random::<f64>());
        let fd_jac = crate::oracles::fd_policy_jacobian(&real, &theta, 2.0, 1e-5).unwrap();
        let sim = real.with_theta(&theta).unwrap();
        let (_, pol) = distill(&sim, 1e-10, 2.0).unwrap();
        let g =
            exact_outer_gradient(&real, &pol, &jac(6, 24, fd_jac), Occupancy::Discounted).unwrap();
        let dirs: Vec<Vector> = (0..3)
            .map(|i| Vector::from_fn(24, |j, _| ((i * 7 + j * 3) % 5) as f64 - 2.0))
            .collect();
        let fd = fd_objective_gradient(&real, &real, &theta, 2.0, OBJECTIVE_EPS, &dirs).unwrap();
        for (d, f) in dirs.iter().zip(fd) {
            let a = g.grad_theta.dot(&(d / d.norm()));
            assert!((a - f).abs() <= 0.02 * f.abs().max(1e-8), "{a} vs {f}");
        }
    }

    #[test]
    fn true_parameters_report_full_agreement() {
        let real = DiscreteMdpParams::real(0.95).unwrap();
        let gap = optimality_gap_report(&real, &real, 2.0).unwrap();
        assert_eq!(gap.matches, 3);
        assert!(gap.normalized_return > 0.0 && gap.normalized_return <= 1.0);
    }

    #[test]
    fn inverted_rewards_are_reported() {
        let real = DiscreteMdpParams::real(0.95).unwrap();
        let mut theta = real.theta();
        let n = real.num_logit_params();
        for s in 0..3 {
            theta.swap_rows(n + 2 * s, n + 2 * s + 1);
        }
        let gap = optimality_gap_report(&real.with_theta(&theta).unwrap(), &real, 2.0).unwrap();
        assert!(gap.matches <= 3);
        assert_eq!(gap.sim_greedy.len(), 3);
    }

    fn short(mut c: BilevelConfig, iters: usize) -> BilevelConfig {
        c.max_outer_iters = iters;
        c
    }

    #[test]
    fn zero_learning_rate_freezes_theta() {
        let mut c = short(BilevelConfig::discrete(), 5);
        c.learning_rate = 0.0;
        let a = run_bilevel(&c, 7).unwrap();
        let b = run_bilevel(&c, 7).unwrap();
        assert_eq!(a, b);
        assert!(a.states.windows(2).all(|w| w[0].theta == w[1].theta));
        assert!(a
            .states
            .windows(2)
            .all(|w| w[0].real_return.to_bits() == w[1].real_return.to_bits()));
    }

    #[test]
    fn normalised_return_uses_fixed_baseline() {
        let c = short(BilevelConfig::discrete(), 4);
        let h = run_bilevel(&c, 1).unwrap();
        assert_eq!(h.states.len(), 4);
        for s in &h.states {
            assert_eq!(s.normalized_return, s.real_return / h.j_star);
        }
    }

    #[test]
    fn freezing_both_blocks_keeps_theta() {
        let mut c = short(BilevelConfig::discrete(), 3);
        c.freeze_model = true;
        c.freeze_reward = true;
        let h = run_bilevel(&c, 2).unwrap();
        assert_eq!(h.final_theta, h.states[0].theta);
    }

    #[test]
    fn freezing_model_only_moves_rewards() {
        let mut c = short(BilevelConfig::discrete(), 3);
        c.freeze_model = true;
        let h = run_bilevel(&c, 2).unwrap();
        let d = &h.final_theta - &h.states[0].theta;
        assert_eq!(d.rows(0, 18).amax(), 0.0);
        assert!(d.rows(18, 6).amax() > 0.0);
    }

    #[test]
    fn true_parameter_start_keeps_its_return() {
        let mut c = short(BilevelConfig::discrete(), 50);
        c.theta_init = ThetaInit::TrueParams;
        let h = run_bilevel(&c, 0).unwrap();
        assert!(h.halted.is_none());
        let start = h.states[0].normalized_return;
        // The tau = 2 softmax of the true Q* scores below the deterministic
        // optimum; the loop must not lose ground from there.
        assert!(start > 0.75 && start < 0.8, "{start}");
        assert!(h.states.iter().all(|s| s.normalized_return >= start - 0.05));
    }

    #[test]
    fn continuous_run_is_finite() {
        let mut c = short(BilevelConfig::continuous(), 3);
        c.policy_mean = PolicyMean::Linear;
        let h = run_bilevel(&c, 3).unwrap();
        assert!(h.halted.is_none(), "{:?}", h.halted);
        assert_eq!(h.states.len(), 3);
        assert!(h.states.iter().all(|s| s.normalized_return.is_finite()));
        assert!(h.final_theta[2] >= c.cost_weight_floor && h.final_theta[3] >= c.cost_weight_floor);
    }

    #[test]
    fn explicit_theta_length_is_checked() {
        let mut c = BilevelConfig::discrete();
        c.theta_init = ThetaInit::Explicit;
        c.theta_explicit = Some(alloc::vec![1.0; 3]);
        assert!(run_bilevel(&c, 0).is_err());
    }

    #[test]
    fn value_table_tracks_closed_form() {
        let sim = LinearGaussianParams {
            theta_s: 0.9,
            theta_a: 0.4,
            ..Default::default()
        };
        let table = ValueTable::new(&sim, 0.7, 0.1);
        for i in 0..200 {
            let s = -12.0 + 0.123 * i as f64;
            let exact = sim.linear_policy_value(s, 0.7, 0.1);
            assert!(
                (table.eval(s) - exact).abs() < 1e-3 * exact.max(1e-3),
                "s {s}"
            );
        }
        assert_eq!(table.eval(40.0), sim.linear_policy_value(40.0, 0.7, 0.1));
    }
}
