use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::StochasticPolicy;
use crate::env::{DiscreteMdpParams, PolicyTable};
use crate::linalg::{log_softmax, softmax};
use crate::{Error, Matrix, Result, Vector};

/// `π(a|s) = softmax(logits[s][·])_a`, logits stored row-major `(s, a)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularSoftmaxPolicy {
    n_states: usize,
    n_actions: usize,
    logits: Vec<f64>,
}

impl TabularSoftmaxPolicy {
    pub fn new(n_states: usize, n_actions: usize, logits: Vec<f64>) -> Result<Self> {
        if logits.len() != n_states * n_actions {
            return Err(Error::DimensionMismatch {
                what: "policy logits",
                expected: n_states * n_actions,
                found: logits.len(),
            });
        }
        if logits.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("logits", "entries must be finite"));
        }
        Ok(TabularSoftmaxPolicy {
            n_states,
            n_actions,
            logits,
        })
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        TabularSoftmaxPolicy {
            n_states,
            n_actions,
            logits: vec![0.0; n_states * n_actions],
        }
    }

    /// Logits equal to `log π` of a strictly positive probability table.
    pub fn from_table(table: &PolicyTable) -> Result<Self> {
        if table.probs.iter().any(|&p| !(p > 0.0)) {
            return Err(Error::invalid("table", "probabilities must be positive"));
        }
        let logits = table
            .probs
            .iter()
            .map(|&p| num_traits::Float::ln(p))
            .collect();
        Self::new(table.n_states, table.n_actions, logits)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    pub fn index(&self, s: usize, a: usize) -> usize {
        s * self.n_actions + a
    }

    fn row(&self, s: usize) -> &[f64] {
        &self.logits[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn probs(&self, s: usize) -> Vec<f64> {
        softmax(self.row(s))
    }

    pub fn table(&self) -> PolicyTable {
        let mut probs = Vec::with_capacity(self.logits.len());
        for s in 0..self.n_states {
            probs.extend(self.probs(s));
        }
        PolicyTable {
            n_states: self.n_states,
            n_actions: self.n_actions,
            probs,
        }
    }

    /// Checks that the policy is shaped for `mdp`.
    pub fn check_against(&self, mdp: &DiscreteMdpParams) -> Result<()> {
        if self.n_states != mdp.n_states() || self.n_actions != mdp.n_actions() {
            return Err(Error::DimensionMismatch {
                what: "policy vs mdp",
                expected: mdp.n_states() * mdp.n_actions(),
                found: self.n_states * self.n_actions,
            });
        }
        Ok(())
    }
}

impl StochasticPolicy for TabularSoftmaxPolicy {
    type State = usize;
    type Action = usize;

    fn num_params(&self) -> usize {
        self.logits.len()
    }

    fn params(&self) -> Vector {
        Vector::from_column_slice(&self.logits)
    }

    fn with_params(&self, params: &Vector) -> Result<Self> {
        Self::new(self.n_states, self.n_actions, params.as_slice().to_vec())
    }

    fn log_prob(&self, s: usize, a: usize) -> f64 {
        log_softmax(self.row(s))[a]
    }

    /// `∂ log π(a|s) / ∂ logits[s][b] = 1{a=b} − π(b|s)`; other rows are zero.
    fn grad_log_prob(&self, s: usize, a: usize) -> Vector {
        let mut g = Vector::zeros(self.logits.len());
        for (b, p) in self.probs(s).into_iter().enumerate() {
            g[self.index(s, b)] = if a == b { 1.0 - p } else { -p };
        }
        g
    }

    /// `−(diag(π) − π πᵀ)` on the row block of state `s`, independent of `a`.
    fn hess_log_prob(&self, s: usize, _a: usize) -> Matrix {
        let n = self.logits.len();
        let mut h = Matrix::zeros(n, n);
        let p = self.probs(s);
        for b in 0..self.n_actions {
            for c in 0..self.n_actions {
                let diag = if b == c { p[b] } else { 0.0 };
                h[(self.index(s, b), self.index(s, c))] = -(diag - p[b] * p[c]);
            }
        }
        h
    }

    fn sample_action<R: Rng + ?Sized>(&self, s: usize, rng: &mut R) -> usize {
        DiscreteMdpParams::sample_index(&self.probs(s), rng)
    }
}
