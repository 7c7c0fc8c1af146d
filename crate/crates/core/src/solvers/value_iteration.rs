use alloc::vec;
use alloc::vec::Vec;

use crate::env::{DiscreteMdpParams, PolicyTable};
use crate::linalg::{log_softmax, solve_vec};
use crate::policy::TabularSoftmaxPolicy;
use crate::{Error, Matrix, Result};

/// Tabular `Q(s, a)` and `V(s)`, row-major `(s, a)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularValues {
    pub n_states: usize,
    pub n_actions: usize,
    pub q: Vec<f64>,
    pub v: Vec<f64>,
}

impl TabularValues {
    pub fn q(&self, s: usize, a: usize) -> f64 {
        self.q[s * self.n_actions + a]
    }

    /// `Q̂(s, a) − V̂(s)` in place of `Q̂`; `v` is kept.
    pub fn advantages(&self) -> Self {
        let mut out = self.clone();
        for (r, q) in out.q.iter_mut().enumerate() {
            *q -= self.v[r / self.n_actions];
        }
        out
    }

    pub fn q_row(&self, s: usize) -> &[f64] {
        &self.q[s * self.n_actions..(s + 1) * self.n_actions]
    }

    /// `argmax_a Q(s, a)` per state; ties resolve to the lowest action.
    pub fn greedy_actions(&self) -> Vec<usize> {
        (0..self.n_states)
            .map(|s| {
                let row = self.q_row(s);
                let mut best = 0;
                for a in 1..row.len() {
                    if row[a] > row[best] {
                        best = a;
                    }
                }
                best
            })
            .collect()
    }

    /// `‖Q − (R + γ P V)‖_∞` under `mdp`.
    pub fn bellman_residual(&self, mdp: &DiscreteMdpParams) -> f64 {
        let mut worst = 0.0f64;
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                let p = mdp.probs_unchecked(s, a);
                let backup = mdp.reward_at(s, a)
                    + mdp_discount(mdp) * p.iter().zip(&self.v).map(|(p, v)| p * v).sum::<f64>();
                worst = worst.max((self.q(s, a) - backup).abs());
            }
        }
        worst
    }
}

fn mdp_discount(mdp: &DiscreteMdpParams) -> f64 {
    use crate::env::Environment;
    mdp.discount()
}

/// Value iteration `Q ← R + γ P V`, `V = max_a Q`, from `V = 0` until the
/// sup-norm change of `V` drops below `tol`.
pub fn soft_value_iteration(mdp: &DiscreteMdpParams, tol: f64) -> Result<TabularValues> {
    soft_value_iteration_with_trace(mdp, tol).map(|(v, _)| v)
}

/// As [`soft_value_iteration`], also returning the per-sweep sup-norm changes.
pub fn soft_value_iteration_with_trace(
    mdp: &DiscreteMdpParams,
    tol: f64,
) -> Result<(TabularValues, Vec<f64>)> {
    if !(tol > 0.0) {
        return Err(Error::invalid("tol", "must be positive"));
    }
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let gamma = mdp_discount(mdp);
    let probs: Vec<Vec<f64>> = (0..ns)
        .flat_map(|s| (0..na).map(move |a| (s, a)))
        .map(|(s, a)| mdp.probs_unchecked(s, a))
        .collect();
    let mut v = vec![0.0; ns];
    let mut q = vec![0.0; ns * na];
    let mut deltas = Vec::new();
    loop {
        for s in 0..ns {
            for a in 0..na {
                let ev: f64 = probs[s * na + a].iter().zip(&v).map(|(p, v)| p * v).sum();
                q[s * na + a] = mdp.reward_at(s, a) + gamma * ev;
            }
        }
        let mut delta = 0.0f64;
        for s in 0..ns {
            let best = q[s * na..(s + 1) * na]
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max);
            delta = delta.max((best - v[s]).abs());
            v[s] = best;
        }
        deltas.push(delta);
        if delta < tol {
            break;
        }
        if deltas.len() > 10_000_000 {
            return Err(Error::NotConverged {
                what: "value iteration",
                iterations: deltas.len(),
                residual: delta,
            });
        }
    }
    Ok((
        TabularValues {
            n_states: ns,
            n_actions: na,
            q,
            v,
        },
        deltas,
    ))
}

/// Exact evaluation of a fixed policy: `V = (I − γ P_π)⁻¹ r_π`,
/// `Q = R + γ P V`.
pub fn evaluate_policy(mdp: &DiscreteMdpParams, policy: &PolicyTable) -> Result<TabularValues> {
    mdp.check_policy(policy)?;
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let gamma = mdp_discount(mdp);
    let (p, r) = mdp.induced_chain(policy);
    let v = solve_vec(
        &(Matrix::identity(ns, ns) - p * gamma),
        &r,
        "policy evaluation",
    )?;
    let mut q = vec![0.0; ns * na];
    for s in 0..ns {
        for a in 0..na {
            let ev: f64 = mdp
                .probs_unchecked(s, a)
                .iter()
                .zip(v.iter())
                .map(|(p, v)| p * v)
                .sum();
            q[s * na + a] = mdp.reward_at(s, a) + gamma * ev;
        }
    }
    Ok(TabularValues {
        n_states: ns,
        n_actions: na,
        q,
        v: v.iter().copied().collect(),
    })
}

/// `π(·|s) = softmax(Q(s, ·)/τ)` with logits stored as `log π`.
pub fn soft_policy_from_q(
    values: &TabularValues,
    temperature: f64,
) -> Result<TabularSoftmaxPolicy> {
    if !(temperature > 0.0) {
        return Err(Error::invalid("temperature", "must be positive"));
    }
    let mut logits = Vec::with_capacity(values.q.len());
    for s in 0..values.n_states {
        let scaled: Vec<f64> = values.q_row(s).iter().map(|q| q / temperature).collect();
        logits.extend(log_softmax(&scaled));
    }
    TabularSoftmaxPolicy::new(values.n_states, values.n_actions, logits)
}

/// The distillation map `θ ↦ log softmax(Q*_θ / τ)`.
pub fn distill(
    mdp: &DiscreteMdpParams,
    vi_tol: f64,
    temperature: f64,
) -> Result<(TabularValues, TabularSoftmaxPolicy)> {
    let values = soft_value_iteration(mdp, vi_tol)?;
    let policy = soft_policy_from_q(&values, temperature)?;
    Ok((values, policy))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::Environment;
    use crate::policy::StochasticPolicy;

    fn mdp_with(rewards: Vec<f64>, gamma: f64) -> DiscreteMdpParams {
        let real = DiscreteMdpParams::real(gamma).unwrap();
        DiscreteMdpParams::new(
            3,
            2,
            real.transition_logits().to_vec(),
            rewards,
            gamma,
            vec![1.0 / 3.0; 3],
        )
        .unwrap()
    }

    #[test]
    fn zero_discount_gives_q_equal_r() {
        let mdp = DiscreteMdpParams::real(0.0).unwrap();
        let vals = soft_value_iteration(&mdp, 1e-12).unwrap();
        assert_eq!(vals.q, mdp.reward_table().to_vec());
    }

    #[test]
    fn constant_reward_fixed_point() {
        let mdp = mdp_with(vec![2.0; 6], 0.9);
        let vals = soft_value_iteration(&mdp, 1e-12).unwrap();
        for v in &vals.v {
            assert!((v - 2.0 / 0.1).abs() < 1e-9);
        }
    }

    #[test]
    fn sweeps_contract_monotonically() {
        let mdp = DiscreteMdpParams::real(0.95).unwrap();
        let (_, deltas) = soft_value_iteration_with_trace(&mdp, 1e-10).unwrap();
        for w in deltas.windows(2) {
            assert!(w[1] <= w[0] * 0.95 + 1e-12, "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn greedy_from_real_mdp_attains_enumerated_maximum() {
        // Oracle: exact return of all 8 deterministic policies.
        let mdp = DiscreteMdpParams::real(0.95).unwrap();
        let vals = soft_value_iteration(&mdp, 1e-2).unwrap();
        let greedy = vals.greedy_actions();
        let mut best = f64::NEG_INFINITY;
        for m in 0..8usize {
            let acts: Vec<usize> = (0..3).map(|s| (m >> s) & 1).collect();
            best = best.max(
                mdp.exact_return(&PolicyTable::deterministic(2, &acts))
                    .unwrap(),
            );
        }
        let greedy_ret = mdp
            .exact_return(&PolicyTable::deterministic(2, &greedy))
            .unwrap();
        assert!((greedy_ret - best).abs() < 1e-12);
    }

    #[test]
    fn policy_evaluation_satisfies_bellman() {
        let mdp = DiscreteMdpParams::real(0.95).unwrap();
        let pi = PolicyTable::uniform(3, 2);
        let vals = evaluate_policy(&mdp, &pi).unwrap();
        assert!(vals.bellman_residual(&mdp) < 1e-12);
        for s in 0..3 {
            let vs: f64 = (0..2).map(|a| 0.5 * vals.q(s, a)).sum();
            assert!((vs - vals.v[s]).abs() < 1e-12);
        }
        let j: f64 = vals.v.iter().sum::<f64>() / 3.0;
        assert!((j - mdp.exact_return(&pi).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn soft_policy_limits() {
        let vals = TabularValues {
            n_states: 2,
            n_actions: 2,
            q: vec![1.0, 1.0, 5.0, -3.0],
            v: vec![1.0, 5.0],
        };
        let tie = soft_policy_from_q(&vals, 2.0).unwrap();
        assert!((tie.probs(0)[0] - 0.5).abs() < 1e-15);
        let hot = soft_policy_from_q(&vals, 1e6).unwrap();
        for s in 0..2 {
            for p in hot.probs(s) {
                assert!((p - 0.5).abs() < 1e-5);
            }
        }
        // logits are exactly log π
        for s in 0..2 {
            for a in 0..2 {
                assert!((hot.logits()[s * 2 + a] - hot.log_prob(s, a)).abs() < 1e-15);
            }
        }
        assert!(soft_policy_from_q(&vals, 0.0).is_err());
    }

    #[test]
    fn distilled_real_policy_is_tau_softmax_of_q() {
        let mdp = DiscreteMdpParams::real(0.95).unwrap();
        let (vals, pol) = distill(&mdp, 1e-2, 2.0).unwrap();
        for s in 0..3 {
            let (q0, q1) = (vals.q(s, 0) / 2.0, vals.q(s, 1) / 2.0);
            let p0 = q0.exp() / (q0.exp() + q1.exp());
            assert!((pol.probs(s)[0] - p0).abs() < 1e-14);
        }
        assert_eq!(mdp.num_params(), 24);
    }
}
