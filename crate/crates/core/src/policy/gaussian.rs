#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{Mlp, StochasticPolicy};
use crate::{Error, Matrix, Result, Vector};

/// Lower bound enforced on the policy's action standard deviation.
pub const MIN_ACTION_STD: f64 = 1e-6;

/// Step of the central differences used for the MLP-mean Hessian.
const MLP_HESSIAN_STEP: f64 = 1e-5;

/// Parametric mean of a [`GaussianPolicy`].
#[derive(Debug, Clone, PartialEq)]
pub enum MeanFn {
    /// `mean(s) = −gain · s`, parameters `[gain]`.
    Linear {
        gain: f64,
    },
    Mlp(Mlp),
}

/// `a ~ N(mean_φ(s), σ_π²)` with a fixed, non-learned `σ_π`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPolicy {
    mean: MeanFn,
    action_std: f64,
}

impl GaussianPolicy {
    pub fn new(mean: MeanFn, action_std: f64) -> Result<Self> {
        if !(action_std >= MIN_ACTION_STD) || !action_std.is_finite() {
            return Err(Error::invalid(
                "action_std",
                "must be finite and at least 1e-6",
            ));
        }
        Ok(GaussianPolicy { mean, action_std })
    }

    pub fn linear(gain: f64, action_std: f64) -> Result<Self> {
        Self::new(MeanFn::Linear { gain }, action_std)
    }

    pub fn mean_fn(&self) -> &MeanFn {
        &self.mean
    }

    pub fn action_std(&self) -> f64 {
        self.action_std
    }

    pub fn mean(&self, s: f64) -> f64 {
        match &self.mean {
            MeanFn::Linear { gain } => -gain * s,
            MeanFn::Mlp(net) => net.eval(s),
        }
    }

    fn mean_with_grad(&self, s: f64) -> (f64, Vector) {
        match &self.mean {
            MeanFn::Linear { gain } => (-gain * s, Vector::from_element(1, -s)),
            MeanFn::Mlp(net) => net.eval_with_grad(s),
        }
    }
}

impl StochasticPolicy for GaussianPolicy {
    type State = f64;
    type Action = f64;

    fn num_params(&self) -> usize {
        match &self.mean {
            MeanFn::Linear { .. } => 1,
            MeanFn::Mlp(net) => net.num_params(),
        }
    }

    fn params(&self) -> Vector {
        match &self.mean {
            MeanFn::Linear { gain } => Vector::from_element(1, *gain),
            MeanFn::Mlp(net) => Vector::from_column_slice(net.params()),
        }
    }

    fn with_params(&self, params: &Vector) -> Result<Self> {
        if params.len() != self.num_params() {
            return Err(Error::DimensionMismatch {
                what: "gaussian policy params",
                expected: self.num_params(),
                found: params.len(),
            });
        }
        let mean = match &self.mean {
            MeanFn::Linear { .. } => MeanFn::Linear { gain: params[0] },
            MeanFn::Mlp(net) => MeanFn::Mlp(net.with_params(params.as_slice())?),
        };
        Self::new(mean, self.action_std)
    }

    fn log_prob(&self, s: f64, a: f64) -> f64 {
        let r = a - self.mean(s);
        let sd = self.action_std;
        -r * r / (2.0 * sd * sd) - (sd * (2.0 * core::f64::consts::PI).sqrt()).ln()
    }

    fn grad_log_prob(&self, s: f64, a: f64) -> Vector {
        let (m, dm) = self.mean_with_grad(s);
        dm * ((a - m) / (self.action_std * self.action_std))
    }

    /// Closed form for the linear mean (`−s²/σ_π²`); central differences of
    /// the score for the MLP mean, symmetrised.
    fn hess_log_prob(&self, s: f64, a: f64) -> Matrix {
        let var = self.action_std * self.action_std;
        match &self.mean {
            MeanFn::Linear { .. } => Matrix::from_element(1, 1, -s * s / var),
            MeanFn::Mlp(net) => {
                let n = net.num_params();
                let base = net.params().to_vec();
                let mut h = Matrix::zeros(n, n);
                let mut probe = base.clone();
                for j in 0..n {
                    probe[j] = base[j] + MLP_HESSIAN_STEP;
                    let up = self.score_at(net, &probe, s, a);
                    probe[j] = base[j] - MLP_HESSIAN_STEP;
                    let dn = self.score_at(net, &probe, s, a);
                    probe[j] = base[j];
                    h.set_column(j, &((up - dn) / (2.0 * MLP_HESSIAN_STEP)));
                }
                (&h + h.transpose()) * 0.5
            }
        }
    }

    fn sample_action<R: Rng + ?Sized>(&self, s: f64, rng: &mut R) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        self.mean(s) + self.action_std * z
    }
}

impl GaussianPolicy {
    fn score_at(&self, net: &Mlp, params: &[f64], s: f64, a: f64) -> Vector {
        // params always has the right length here
        let probe = net.with_params(params).expect("same layout");
        let (m, dm) = probe.eval_with_grad(s);
        dm * ((a - m) / (self.action_std * self.action_std))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};
    use alloc::vec::Vec;

    fn mlp_policy() -> GaussianPolicy {
        let mut rng = stream_rng(8, Stream::Fit, 0);
        let net = Mlp::random(6, 0.0, 1.5, 1.0, &mut rng).unwrap();
        let p: Vec<f64> = net
            .params()
            .iter()
            .enumerate()
            .map(|(i, v)| if i >= 12 { 0.3 - 0.05 * i as f64 } else { *v })
            .collect();
        GaussianPolicy::new(MeanFn::Mlp(net.with_params(&p).unwrap()), 0.1).unwrap()
    }

    fn fd_grad(p: &GaussianPolicy, s: f64, a: f64) -> Vector {
        let eps = 1e-6;
        let n = p.num_params();
        Vector::from_fn(n, |i, _| {
            let mut up = p.params();
            let mut dn = p.params();
            up[i] += eps;
            dn[i] -= eps;
            (p.with_params(&up).unwrap().log_prob(s, a)
                - p.with_params(&dn).unwrap().log_prob(s, a))
                / (2.0 * eps)
        })
    }

    #[test]
    fn log_prob_at_mean_is_normaliser() {
        let p = GaussianPolicy::linear(1.0, 0.1).unwrap();
        let expected = -(0.1 * (2.0 * core::f64::consts::PI).sqrt()).ln();
        assert!((p.log_prob(1.0, -1.0) - expected).abs() < 1e-14);
        assert_eq!(p.grad_log_prob(1.0, -1.0)[0], 0.0);
    }

    #[test]
    fn linear_hessian_is_minus_s_squared_over_variance() {
        let p = GaussianPolicy::linear(0.7, 0.2).unwrap();
        let h = p.hess_log_prob(1.5, 0.3);
        assert!((h[(0, 0)] + 1.5 * 1.5 / 0.04).abs() < 1e-12);
        // FD of the score
        let eps = 1e-6;
        let up = GaussianPolicy::linear(0.7 + eps, 0.2)
            .unwrap()
            .grad_log_prob(1.5, 0.3)[0];
        let dn = GaussianPolicy::linear(0.7 - eps, 0.2)
            .unwrap()
            .grad_log_prob(1.5, 0.3)[0];
        assert!(((up - dn) / (2.0 * eps) - h[(0, 0)]).abs() < 1e-4 * h[(0, 0)].abs());
    }

    #[test]
    fn scores_match_finite_differences() {
        for p in [GaussianPolicy::linear(0.4, 0.1).unwrap(), mlp_policy()] {
            for &(s, a) in &[(0.5, 0.1), (-1.2, 0.4), (2.0, -0.9)] {
                let g = p.grad_log_prob(s, a);
                let fd = fd_grad(&p, s, a);
                let rel = (&g - &fd).norm() / fd.norm().max(1e-12);
                assert!(rel <= 1e-5, "rel {rel}");
            }
        }
    }

    #[test]
    fn mlp_hessian_matches_fd_and_is_symmetric() {
        let p = mlp_policy();
        let (s, a) = (0.8, -0.2);
        let h = p.hess_log_prob(s, a);
        assert!((&h - h.transpose()).amax() < 1e-12);
        let eps = 1e-4;
        let n = p.num_params();
        let fd = Matrix::from_fn(n, n, |i, j| {
            let mut up = p.params();
            let mut dn = p.params();
            up[j] += eps;
            dn[j] -= eps;
            (p.with_params(&up).unwrap().grad_log_prob(s, a)[i]
                - p.with_params(&dn).unwrap().grad_log_prob(s, a)[i])
                / (2.0 * eps)
        });
        let rel = (&h - &fd).norm() / fd.norm();
        assert!(rel <= 1e-4, "rel {rel}");
    }

    #[test]
    fn std_lower_bound_is_enforced() {
        assert!(GaussianPolicy::linear(1.0, 1e-7).is_err());
        assert!(GaussianPolicy::linear(1.0, 0.0).is_err());
        assert!(GaussianPolicy::linear(1.0, MIN_ACTION_STD).is_ok());
    }

    #[test]
    fn score_mean_is_zero_statistically() {
        let p = mlp_policy();
        let mut rng = stream_rng(3, Stream::Custom(1), 0);
        let n = 100_000;
        let s = 0.6;
        let samples: Vec<Vector> = (0..n)
            .map(|_| {
                let a = p.sample_action(s, &mut rng);
                p.grad_log_prob(s, a)
            })
            .collect();
        for i in 0..p.num_params() {
            let xs: Vec<f64> = samples.iter().map(|g| g[i]).collect();
            let mean = xs.iter().sum::<f64>() / n as f64;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            let se = (var / n as f64).sqrt();
            assert!(
                mean.abs() <= 3.0 * se + 1e-15,
                "component {i}: mean {mean} se {se}"
            );
        }
    }
}
