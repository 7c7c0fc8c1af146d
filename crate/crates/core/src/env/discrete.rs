use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::Environment;
use crate::linalg::{softmax, solve_vec};
use crate::{Error, Matrix, Result, Vector};

/// Transition logits of the reference "real" MDP, indexed `[s][a][s']`.
const REAL_LOGITS: [[[f64; 3]; 2]; 3] = [
    [[0.5, 2.0, 0.5], [1.0, 1.5, 0.5]],
    [[1.0, 1.0, 1.0], [1.5, 1.0, 0.5]],
    [[0.5, 1.0, 0.1], [1.0, 0.5, 1.0]],
];

/// Reward table of the reference "real" MDP, indexed `[s][a]`.
const REAL_REWARDS: [[f64; 2]; 3] = [[1.0, 0.5], [0.0, 3.0], [0.01, 2.0]];

/// A finite MDP with softmax-parameterised transitions and a tabular reward.
///
/// `theta` layout: all transition logits in row-major `(s, a, s')` order,
/// followed by the reward table in row-major `(s, a)` order.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMdpParams {
    n_states: usize,
    n_actions: usize,
    transition_logits: Vec<f64>,
    reward: Vec<f64>,
    discount: f64,
    initial_distribution: Vec<f64>,
}

/// Action probabilities `π(a|s)` stored row-major `(s, a)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyTable {
    pub n_states: usize,
    pub n_actions: usize,
    pub probs: Vec<f64>,
}

impl PolicyTable {
    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s * self.n_actions + a]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.n_actions..(s + 1) * self.n_actions]
    }

    /// Deterministic policy picking `actions[s]` in state `s`.
    pub fn deterministic(n_actions: usize, actions: &[usize]) -> Self {
        let mut probs = vec![0.0; actions.len() * n_actions];
        for (s, &a) in actions.iter().enumerate() {
            probs[s * n_actions + a] = 1.0;
        }
        PolicyTable {
            n_states: actions.len(),
            n_actions,
            probs,
        }
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        PolicyTable {
            n_states,
            n_actions,
            probs: vec![1.0 / n_actions as f64; n_states * n_actions],
        }
    }
}

impl DiscreteMdpParams {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transition_logits: Vec<f64>,
        reward: Vec<f64>,
        discount: f64,
        initial_distribution: Vec<f64>,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::invalid("n_states/n_actions", "must be positive"));
        }
        if transition_logits.len() != n_states * n_actions * n_states {
            return Err(Error::DimensionMismatch {
                what: "transition_logits",
                expected: n_states * n_actions * n_states,
                found: transition_logits.len(),
            });
        }
        if reward.len() != n_states * n_actions {
            return Err(Error::DimensionMismatch {
                what: "reward",
                expected: n_states * n_actions,
                found: reward.len(),
            });
        }
        if initial_distribution.len() != n_states {
            return Err(Error::DimensionMismatch {
                what: "initial_distribution",
                expected: n_states,
                found: initial_distribution.len(),
            });
        }
        if !(0.0..1.0).contains(&discount) {
            return Err(Error::invalid("discount", "must lie in [0, 1)"));
        }
        if transition_logits
            .iter()
            .chain(&reward)
            .any(|x| !x.is_finite())
        {
            return Err(Error::invalid("theta", "entries must be finite"));
        }
        if initial_distribution.iter().any(|&p| !(p >= 0.0))
            || (initial_distribution.iter().sum::<f64>() - 1.0).abs() > 1e-12
        {
            return Err(Error::invalid(
                "initial_distribution",
                "must be nonnegative and sum to 1",
            ));
        }
        Ok(DiscreteMdpParams {
            n_states,
            n_actions,
            transition_logits,
            reward,
            discount,
            initial_distribution,
        })
    }

    /// The 3-state, 2-action reference MDP with a uniform initial distribution.
    pub fn real(discount: f64) -> Result<Self> {
        let logits = REAL_LOGITS.iter().flatten().flatten().copied().collect();
        let reward = REAL_REWARDS.iter().flatten().copied().collect();
        Self::new(3, 2, logits, reward, discount, vec![1.0 / 3.0; 3])
    }

    /// Same structure as `self` with parameters replaced by `theta`.
    pub fn with_theta(&self, theta: &Vector) -> Result<Self> {
        let n_logits = self.transition_logits.len();
        if theta.len() != self.num_params() {
            return Err(Error::DimensionMismatch {
                what: "theta",
                expected: self.num_params(),
                found: theta.len(),
            });
        }
        Self::new(
            self.n_states,
            self.n_actions,
            theta.as_slice()[..n_logits].to_vec(),
            theta.as_slice()[n_logits..].to_vec(),
            self.discount,
            self.initial_distribution.clone(),
        )
    }

    pub fn with_discount(&self, discount: f64) -> Result<Self> {
        let mut out = self.clone();
        if !(0.0..1.0).contains(&discount) {
            return Err(Error::invalid("discount", "must lie in [0, 1)"));
        }
        out.discount = discount;
        Ok(out)
    }

    pub fn with_initial_distribution(&self, rho0: Vec<f64>) -> Result<Self> {
        Self::new(
            self.n_states,
            self.n_actions,
            self.transition_logits.clone(),
            self.reward.clone(),
            self.discount,
            rho0,
        )
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn initial_distribution(&self) -> &[f64] {
        &self.initial_distribution
    }

    pub fn transition_logits(&self) -> &[f64] {
        &self.transition_logits
    }

    pub fn reward_table(&self) -> &[f64] {
        &self.reward
    }

    /// Number of transition-logit entries; reward entries follow in `theta`.
    pub fn num_logit_params(&self) -> usize {
        self.transition_logits.len()
    }

    pub fn logit_index(&self, s: usize, a: usize, next: usize) -> usize {
        (s * self.n_actions + a) * self.n_states + next
    }

    pub fn reward_index(&self, s: usize, a: usize) -> usize {
        self.num_logit_params() + s * self.n_actions + a
    }

    fn check_sa(&self, s: usize, a: usize) -> Result<()> {
        if s >= self.n_states {
            return Err(Error::invalid("state", "index out of range"));
        }
        if a >= self.n_actions {
            return Err(Error::invalid("action", "index out of range"));
        }
        Ok(())
    }

    /// `f_θ(· | s, a) = softmax(logits[s][a])`.
    pub fn transition_probs(&self, s: usize, a: usize) -> Result<Vec<f64>> {
        self.check_sa(s, a)?;
        Ok(self.probs_unchecked(s, a))
    }

    pub(crate) fn probs_unchecked(&self, s: usize, a: usize) -> Vec<f64> {
        let start = self.logit_index(s, a, 0);
        softmax(&self.transition_logits[start..start + self.n_states])
    }

    pub fn reward_at(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.n_actions + a]
    }

    /// Policy-induced chain `P_π(s, s')` and expected reward `r_π(s)`.
    pub fn induced_chain(&self, policy: &PolicyTable) -> (Matrix, Vector) {
        let n = self.n_states;
        let mut p = Matrix::zeros(n, n);
        let mut r = Vector::zeros(n);
        for s in 0..n {
            for a in 0..self.n_actions {
                let w = policy.prob(s, a);
                r[s] += w * self.reward_at(s, a);
                for (next, q) in self.probs_unchecked(s, a).into_iter().enumerate() {
                    p[(s, next)] += w * q;
                }
            }
        }
        (p, r)
    }

    /// `J(π) = ρ0ᵀ (I − γ P_π)⁻¹ r_π`.
    pub fn exact_return(&self, policy: &PolicyTable) -> Result<f64> {
        self.check_policy(policy)?;
        let (p, r) = self.induced_chain(policy);
        let n = self.n_states;
        let a = Matrix::identity(n, n) - p * self.discount;
        let v = solve_vec(&a, &r, "policy evaluation")?;
        Ok(v.iter()
            .zip(&self.initial_distribution)
            .map(|(v, p)| v * p)
            .sum())
    }

    pub(crate) fn check_policy(&self, policy: &PolicyTable) -> Result<()> {
        if policy.n_states != self.n_states || policy.n_actions != self.n_actions {
            return Err(Error::DimensionMismatch {
                what: "policy table",
                expected: self.n_states * self.n_actions,
                found: policy.n_states * policy.n_actions,
            });
        }
        Ok(())
    }

    fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        probs.len() - 1
    }

    pub(crate) fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
        Self::sample_categorical(probs, rng)
    }
}

impl Environment for DiscreteMdpParams {
    type State = usize;
    type Action = usize;

    fn num_params(&self) -> usize {
        self.transition_logits.len() + self.reward.len()
    }

    fn theta(&self) -> Vector {
        Vector::from_iterator(
            self.num_params(),
            self.transition_logits.iter().chain(&self.reward).copied(),
        )
    }

    fn discount(&self) -> f64 {
        self.discount
    }

    fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        Self::sample_categorical(&self.initial_distribution, rng)
    }

    fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward_at(s, a)
    }

    fn sample_next<R: Rng + ?Sized>(&self, s: usize, a: usize, rng: &mut R) -> usize {
        Self::sample_categorical(&self.probs_unchecked(s, a), rng)
    }

    fn grad_reward(&self, s: usize, a: usize) -> Vector {
        let mut g = Vector::zeros(self.num_params());
        g[self.reward_index(s, a)] = 1.0;
        g
    }

    fn grad_log_transition(&self, s: usize, a: usize, next: usize) -> Vector {
        let mut g = Vector::zeros(self.num_params());
        for (k, p) in self.probs_unchecked(s, a).into_iter().enumerate() {
            g[self.logit_index(s, a, k)] = if k == next { 1.0 - p } else { -p };
        }
        g
    }
}
