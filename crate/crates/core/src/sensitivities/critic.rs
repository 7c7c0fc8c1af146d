use alloc::vec::Vec;

use crate::env::{DiscreteMdpParams, Environment, Trajectory};
use crate::policy::{StochasticPolicy, TabularSoftmaxPolicy};
use crate::solvers::TabularValues;
use crate::{Error, Matrix, Result, Vector};

const MAX_SWEEPS: usize = 1_000_000;

/// Converged derivative tables of a fixed-policy critic with respect to one
/// parameter block. Row `s * n_actions + a` of `dq` holds `∇Q̂(s, a)`, row
/// `s` of `dv` holds `∇V̂(s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityTable {
    pub dq: Matrix,
    pub dv: Matrix,
    /// Sup-norm change of `dv` at every sweep.
    pub deltas: Vec<f64>,
}

/// `∇_θ` and `∇_φ` of `Q̂^π_θ` and `V̂^π_θ` on the tabulated points.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticSensitivities {
    pub dq_dtheta: Matrix,
    pub dv_dtheta: Matrix,
    pub dq_dphi: Matrix,
    pub dv_dphi: Matrix,
}

impl CriticSensitivities {
    pub fn from_tables(theta: SensitivityTable, phi: SensitivityTable) -> Self {
        CriticSensitivities {
            dq_dtheta: theta.dq,
            dv_dtheta: theta.dv,
            dq_dphi: phi.dq,
            dv_dphi: phi.dv,
        }
    }

    /// Tables of `∇(Q̂ − V̂)`: every `dq` row minus the `dv` row of its
    /// state.
    pub fn advantages(&self, n_actions: usize) -> Self {
        let mut out = self.clone();
        for r in 0..self.dq_dtheta.nrows() {
            let s = r / n_actions;
            let mut row = out.dq_dtheta.row_mut(r);
            row -= self.dv_dtheta.row(s);
            let mut row = out.dq_dphi.row_mut(r);
            row -= self.dv_dphi.row(s);
        }
        out
    }
}

fn check_inputs(
    mdp: &DiscreteMdpParams,
    policy: &TabularSoftmaxPolicy,
    values: &TabularValues,
    tol: f64,
) -> Result<()> {
    policy.check_against(mdp)?;
    if values.n_states != mdp.n_states() || values.n_actions != mdp.n_actions() {
        return Err(Error::DimensionMismatch {
            what: "critic values",
            expected: mdp.n_states() * mdp.n_actions(),
            found: values.n_states * values.n_actions,
        });
    }
    if !(tol > 0.0) {
        return Err(Error::invalid("tol", "must be positive"));
    }
    Ok(())
}

/// Fixed-point sweeps of `dQ(s,a) = c(s,a) + γ Σ_s' f(s'|s,a) dV(s')`,
/// `dV(s) = Σ_a π(a|s) (dQ(s,a) + e(s,a))` from zero.
fn iterate_tables(
    mdp: &DiscreteMdpParams,
    probs: &[f64],
    constant: &[Vector],
    extra: &[Vector],
    dim: usize,
    tol: f64,
    what: &'static str,
) -> Result<SensitivityTable> {
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let gamma = mdp.discount();
    let mut dq = Matrix::zeros(ns * na, dim);
    let mut dv = Matrix::zeros(ns, dim);
    let mut deltas = Vec::new();
    loop {
        for s in 0..ns {
            for a in 0..na {
                let row = s * na + a;
                let mut acc = constant[row].clone();
                for (next, p) in mdp.probs_unchecked(s, a).iter().enumerate() {
                    acc.axpy(gamma * p, &dv.row(next).transpose(), 1.0);
                }
                dq.set_row(row, &acc.transpose());
            }
        }
        let mut delta = 0.0f64;
        for s in 0..ns {
            let mut acc = Vector::zeros(dim);
            for a in 0..na {
                let row = s * na + a;
                acc.axpy(probs[row], &dq.row(row).transpose(), 1.0);
                acc.axpy(probs[row], &extra[row], 1.0);
            }
            let old = dv.row(s).transpose();
            delta = delta.max((&acc - old).amax());
            dv.set_row(s, &acc.transpose());
        }
        deltas.push(delta);
        if delta < tol {
            return Ok(SensitivityTable { dq, dv, deltas });
        }
        if deltas.len() >= MAX_SWEEPS || !delta.is_finite() {
            return Err(Error::NotConverged {
                what,
                iterations: deltas.len(),
                residual: delta,
            });
        }
    }
}

fn policy_probs(mdp: &DiscreteMdpParams, policy: &TabularSoftmaxPolicy) -> Vec<f64> {
    (0..mdp.n_states()).flat_map(|s| policy.probs(s)).collect()
}

/// `∇_θ Q̂(s,a) = ∇_θ R + γ E_{s'}[∇_θ V̂(s') + V̂(s') ∇_θ log f(s'|s,a)]`,
/// `∇_θ V̂(s) = E_{a~π}[∇_θ Q̂(s,a)]`, with exact expectations over next
/// states and actions, iterated until the sup-norm change is below `tol`.
pub fn critic_sens_theta(
    mdp: &DiscreteMdpParams,
    policy: &TabularSoftmaxPolicy,
    values: &TabularValues,
    tol: f64,
) -> Result<SensitivityTable> {
    check_inputs(mdp, policy, values, tol)?;
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let dim = mdp.num_params();
    let gamma = mdp.discount();
    let mut constant = Vec::with_capacity(ns * na);
    for s in 0..ns {
        for a in 0..na {
            let mut c = mdp.grad_reward(s, a);
            for (next, p) in mdp.probs_unchecked(s, a).iter().enumerate() {
                c.axpy(
                    gamma * p * values.v[next],
                    &mdp.grad_log_transition(s, a, next),
                    1.0,
                );
            }
            constant.push(c);
        }
    }
    let extra = alloc::vec![Vector::zeros(dim); ns * na];
    iterate_tables(
        mdp,
        &policy_probs(mdp, policy),
        &constant,
        &extra,
        dim,
        tol,
        "critic sensitivity (theta)",
    )
}

/// `∇_φ Q̂(s,a) = γ E_{s'}[∇_φ V̂(s')]`,
/// `∇_φ V̂(s) = E_{a~π}[∇_φ Q̂(s,a) + Q̂(s,a) ∇_φ log π(a|s)]`.
pub fn critic_sens_phi(
    mdp: &DiscreteMdpParams,
    policy: &TabularSoftmaxPolicy,
    values: &TabularValues,
    tol: f64,
) -> Result<SensitivityTable> {
    check_inputs(mdp, policy, values, tol)?;
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let dim = policy.num_params();
    let constant = alloc::vec![Vector::zeros(dim); ns * na];
    let mut extra = Vec::with_capacity(ns * na);
    for s in 0..ns {
        for a in 0..na {
            extra.push(policy.grad_log_prob(s, a) * values.q(s, a));
        }
    }
    iterate_tables(
        mdp,
        &policy_probs(mdp, policy),
        &constant,
        &extra,
        dim,
        tol,
        "critic sensitivity (phi)",
    )
}

/// Both critic sensitivities on the tabulated points.
pub fn critic_sensitivities(
    mdp: &DiscreteMdpParams,
    policy: &TabularSoftmaxPolicy,
    values: &TabularValues,
    tol: f64,
) -> Result<CriticSensitivities> {
    Ok(CriticSensitivities::from_tables(
        critic_sens_theta(mdp, policy, values, tol)?,
        critic_sens_phi(mdp, policy, values, tol)?,
    ))
}

/// Per-visited-step critic quantities: `Q̂`, `∇_θ Q̂` and `∇_φ Q̂` at
/// `(s_k, a_k)` of every trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct StepCritics {
    pub q: Vec<Vec<f64>>,
    pub dq_dtheta: Vec<Vec<Vector>>,
    pub dq_dphi: Vec<Vec<Vector>>,
}

/// Parameter-independent baselines for the per-sample critic: `state` is
/// compared with `Q̂` where a policy score multiplies it, `transition` where
/// a model score `∇_θ log f(·|s, a)` does.
pub struct StepBaseline<'a, S, A> {
    pub state: &'a dyn Fn(S) -> f64,
    pub transition: &'a dyn Fn(S, A) -> f64,
}

impl StepCritics {
    /// Replaces every `Q̂_k` by `Q̂_k − b(s_k)` for a baseline `b` that does
    /// not depend on the parameters; the sensitivities are unchanged.
    pub fn subtract_baseline<S: Copy, A, F: Fn(S) -> f64>(
        &mut self,
        trajectories: &[Trajectory<S, A>],
        baseline: F,
    ) {
        for (q, traj) in self.q.iter_mut().zip(trajectories) {
            for (qk, t) in q.iter_mut().zip(&traj.transitions) {
                *qk -= baseline(t.state);
            }
        }
    }
}

/// Looks up tabulated critic quantities along sampled trajectories.
pub fn tabular_step_critics(
    trajectories: &[Trajectory<usize, usize>],
    values: &TabularValues,
    sens: &CriticSensitivities,
) -> StepCritics {
    let na = values.n_actions;
    let mut out = StepCritics {
        q: Vec::with_capacity(trajectories.len()),
        dq_dtheta: Vec::with_capacity(trajectories.len()),
        dq_dphi: Vec::with_capacity(trajectories.len()),
    };
    for traj in trajectories {
        let rows: Vec<usize> = traj
            .transitions
            .iter()
            .map(|t| t.state * na + t.action)
            .collect();
        out.q.push(rows.iter().map(|&r| values.q[r]).collect());
        out.dq_dtheta.push(
            rows.iter()
                .map(|&r| sens.dq_dtheta.row(r).transpose())
                .collect(),
        );
        out.dq_dphi.push(
            rows.iter()
                .map(|&r| sens.dq_dphi.row(r).transpose())
                .collect(),
        );
    }
    out
}

/// Per-sample critic sensitivities along simulator trajectories.
///
/// `Q̂_k` is the discounted reward-to-go inside the trajectory, and the two
/// recursions are run backwards with one-sample expectations:
/// `∇_θ Q̂_k = ∇_θ R_k + γ (∇_θ Q̂_{k+1} + Q̂_{k+1} ∇_θ log f(s_{k+1}|s_k,a_k))`,
/// `∇_φ Q̂_k = γ (∇_φ Q̂_{k+1} + Q̂_{k+1} ∇_φ log π(a_{k+1}|s_{k+1}))`.
/// The last step of each trajectory has no successor term.
///
/// With a [`StepBaseline`], the returned critic is `Q̂_k − b(s_k)`, the
/// policy-score term of the `φ` recursion uses `Q̂_{k+1} − b(s_{k+1})` and
/// the model-score term of the `θ` recursion uses `Q̂_{k+1} − c(s_k, a_k)`.
/// The expectations are unchanged because both scores have zero mean given
/// what the baseline depends on.
pub fn sampled_step_critics<E, P>(
    env: &E,
    policy: &P,
    trajectories: &[Trajectory<E::State, E::Action>],
    baseline: Option<&StepBaseline<'_, E::State, E::Action>>,
) -> StepCritics
where
    E: Environment,
    P: StochasticPolicy<State = E::State, Action = E::Action>,
{
    let gamma = env.discount();
    let (dt, dp) = (env.num_params(), policy.num_params());
    let mut out = StepCritics {
        q: Vec::with_capacity(trajectories.len()),
        dq_dtheta: Vec::with_capacity(trajectories.len()),
        dq_dphi: Vec::with_capacity(trajectories.len()),
    };
    for traj in trajectories {
        let n = traj.len();
        let mut q = alloc::vec![0.0; n];
        let mut dq_t = alloc::vec![Vector::zeros(dt); n];
        let mut dq_p = alloc::vec![Vector::zeros(dp); n];
        for k in (0..n).rev() {
            let t = &traj.transitions[k];
            let mut gt = env.grad_reward(t.state, t.action);
            if k + 1 < n {
                let next = &traj.transitions[k + 1];
                q[k] = t.reward + gamma * q[k + 1];
                let model = env.grad_log_transition(t.state, t.action, next.state);
                let model_weight =
                    q[k + 1] - baseline.map_or(0.0, |b| (b.transition)(t.state, t.action));
                gt.axpy(gamma, &(&dq_t[k + 1] + model * model_weight), 1.0);
                let advantage = q[k + 1] - baseline.map_or(0.0, |b| (b.state)(next.state));
                let score = policy.grad_log_prob(next.state, next.action);
                dq_p[k] = (&dq_p[k + 1] + score * advantage) * gamma;
            } else {
                q[k] = t.reward;
            }
            dq_t[k] = gt;
        }
        out.q.push(q);
        out.dq_dtheta.push(dq_t);
        out.dq_dphi.push(dq_p);
    }
    if let Some(b) = baseline {
        out.subtract_baseline(trajectories, b.state);
    }
    out
}
