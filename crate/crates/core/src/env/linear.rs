#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::Environment;
use crate::{Error, Result, Vector};

/// Scalar linear system `s' = θ_s s + θ_a a + ε`, `ε ~ N(0, σ²)`, with
/// reward `exp(−λ(θ_q s² + θ_r a²))`.
///
/// `theta` layout: `[θ_s, θ_a, θ_q, θ_r]`. Noise, reward scale, discount and
/// the initial-state spread are fixed (not adapted by the outer loop).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearGaussianParams {
    pub theta_s: f64,
    pub theta_a: f64,
    pub theta_q: f64,
    pub theta_r: f64,
    pub noise_std: f64,
    pub reward_scale: f64,
    pub discount: f64,
    pub initial_state_std: f64,
}

impl Default for LinearGaussianParams {
    /// The reference real system: all four coefficients equal to one.
    fn default() -> Self {
        LinearGaussianParams {
            theta_s: 1.0,
            theta_a: 1.0,
            theta_q: 1.0,
            theta_r: 1.0,
            noise_std: 0.1,
            reward_scale: 0.1,
            discount: 0.95,
            initial_state_std: 1.0,
        }
    }
}

impl LinearGaussianParams {
    pub fn validate(&self) -> Result<Self> {
        if !(self.noise_std > 0.0) {
            return Err(Error::invalid("noise_std", "must be positive"));
        }
        if !(self.reward_scale > 0.0) {
            return Err(Error::invalid("reward_scale", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.discount) {
            return Err(Error::invalid("discount", "must lie in [0, 1)"));
        }
        if !(self.initial_state_std > 0.0) {
            return Err(Error::invalid("initial_state_std", "must be positive"));
        }
        if ![self.theta_s, self.theta_a, self.theta_q, self.theta_r]
            .iter()
            .all(|x| x.is_finite())
        {
            return Err(Error::invalid("theta", "entries must be finite"));
        }
        Ok(*self)
    }

    pub fn with_theta(&self, theta: &Vector) -> Result<Self> {
        if theta.len() != 4 {
            return Err(Error::DimensionMismatch {
                what: "theta",
                expected: 4,
                found: theta.len(),
            });
        }
        LinearGaussianParams {
            theta_s: theta[0],
            theta_a: theta[1],
            theta_q: theta[2],
            theta_r: theta[3],
            ..*self
        }
        .validate()
    }

    /// Quadratic stage cost `λ(θ_q s² + θ_r a²)`; the reward is `exp(−cost)`.
    pub fn stage_cost(&self, s: f64, a: f64) -> f64 {
        self.reward_scale * (self.theta_q * s * s + self.theta_r * a * a)
    }

    /// Discounted return of the Gaussian policy `a ~ N(−k s, σ_π²)`,
    /// evaluated in closed form.
    ///
    /// Under a linear-Gaussian closed loop `s_t ~ N(0, v_t)` with
    /// `v_{t+1} = (θ_s − θ_a k)² v_t + θ_a² σ_π² + σ²`, and the expected
    /// reward at each step is the Gaussian integral
    /// `E[exp(−xᵀ M x)] = det(I + 2 Σ M)^{−1/2}` for `x = (s, ξ)`.
    pub fn linear_policy_return(&self, gain: f64, action_std: f64) -> f64 {
        let v0 = self.initial_state_std * self.initial_state_std;
        self.closed_loop_return(0.0, v0, gain, action_std)
    }

    /// `V^π(s)` of the same policy from a known start state: the closed
    /// loop mean is `(θ_s − θ_a k)^t s` and each step's reward integral
    /// gains the factor `exp(−m_t² (M (I + 2ΣM)⁻¹)₁₁)`.
    pub fn linear_policy_value(&self, state: f64, gain: f64, action_std: f64) -> f64 {
        self.closed_loop_return(state, 0.0, gain, action_std)
    }

    fn closed_loop_return(&self, mean: f64, var: f64, gain: f64, action_std: f64) -> f64 {
        let lam = self.reward_scale;
        let (q, r) = (self.theta_q, self.theta_r);
        let c = self.theta_s - self.theta_a * gain;
        let drive =
            self.theta_a * self.theta_a * action_std * action_std + self.noise_std * self.noise_std;
        // det of I + 2·diag(v, 1)·M for the quadratic form M of the
        // state/action-noise pair, expanded so no terms cancel.
        let m22 = lam * r * action_std * action_std;
        let cross = lam * q * (1.0 + 2.0 * m22) + lam * r * gain * gain;
        let (mut m, mut v) = (mean, var);
        let mut weight = 1.0;
        let mut total = 0.0;
        while weight > 1e-16 && v.is_finite() {
            let det = 1.0 + 2.0 * m22 + 2.0 * v * cross;
            let exponent = if m == 0.0 || cross == 0.0 {
                0.0
            } else {
                m * m * (cross / det)
            };
            // NaN only once both moments have overflowed; the reward is 0.
            if !exponent.is_nan() {
                total += weight * (-exponent).exp() / det.sqrt();
            }
            m *= c;
            v = c * c * v + drive;
            weight *= self.discount;
        }
        total
    }
}

impl Environment for LinearGaussianParams {
    type State = f64;
    type Action = f64;

    fn num_params(&self) -> usize {
        4
    }

    fn theta(&self) -> Vector {
        Vector::from_column_slice(&[self.theta_s, self.theta_a, self.theta_q, self.theta_r])
    }

    fn discount(&self) -> f64 {
        self.discount
    }

    fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        self.initial_state_std * z
    }

    fn reward(&self, s: f64, a: f64) -> f64 {
        (-self.stage_cost(s, a)).exp()
    }

    fn sample_next<R: Rng + ?Sized>(&self, s: f64, a: f64, rng: &mut R) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        self.theta_s * s + self.theta_a * a + self.noise_std * z
    }

    fn grad_reward(&self, s: f64, a: f64) -> Vector {
        let r = self.reward(s, a);
        let l = self.reward_scale;
        Vector::from_column_slice(&[0.0, 0.0, -l * s * s * r, -l * a * a * r])
    }

    fn grad_log_transition(&self, s: f64, a: f64, next: f64) -> Vector {
        let resid = next - self.theta_s * s - self.theta_a * a;
        let w = resid / (self.noise_std * self.noise_std);
        Vector::from_column_slice(&[w * s, w * a, 0.0, 0.0])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{rollout, EnvTag};
    use crate::policy::{GaussianPolicy, StochasticPolicy};
    use crate::rng::{stream_rng, Stream};

    #[test]
    fn zero_noise_limit_is_deterministic() {
        let env = LinearGaussianParams {
            noise_std: 1e-300,
            ..Default::default()
        };
        let mut rng = stream_rng(3, Stream::SimRollout, 0);
        assert!(env.sample_next(1.0, -1.0, &mut rng).abs() < 1e-250);
    }

    #[test]
    fn reward_at_origin_is_one_and_bounded() {
        let env = LinearGaussianParams::default();
        assert_eq!(env.reward(0.0, 0.0), 1.0);
        for &(s, a) in &[(1.0, 2.0), (-30.0, 4.0), (1e-3, -1e-3)] {
            let r = env.reward(s, a);
            assert!(r > 0.0 && r <= 1.0);
        }
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        let base = LinearGaussianParams::default();
        assert!(LinearGaussianParams {
            noise_std: 0.0,
            ..base
        }
        .validate()
        .is_err());
        assert!(LinearGaussianParams {
            reward_scale: -1.0,
            ..base
        }
        .validate()
        .is_err());
        assert!(LinearGaussianParams {
            discount: 1.0,
            ..base
        }
        .validate()
        .is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let env = LinearGaussianParams {
            theta_s: 0.7,
            theta_a: 0.4,
            theta_q: 0.9,
            theta_r: 0.3,
            ..Default::default()
        };
        let (s, a, next) = (0.8, -0.3, 0.45);
        let log_f = |e: &LinearGaussianParams| {
            let r = next - e.theta_s * s - e.theta_a * a;
            -r * r / (2.0 * e.noise_std * e.noise_std)
        };
        let g_f = env.grad_log_transition(s, a, next);
        let g_r = env.grad_reward(s, a);
        let h = 1e-6;
        for i in 0..4 {
            let mut tp = env.theta();
            let mut tm = env.theta();
            tp[i] += h;
            tm[i] -= h;
            let (ep, em) = (env.with_theta(&tp).unwrap(), env.with_theta(&tm).unwrap());
            let fd_f = (log_f(&ep) - log_f(&em)) / (2.0 * h);
            let fd_r = (ep.reward(s, a) - em.reward(s, a)) / (2.0 * h);
            assert!((fd_f - g_f[i]).abs() < 1e-6 * (1.0 + fd_f.abs()));
            assert!((fd_r - g_r[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn closed_form_value_matches_monte_carlo() {
        let env = LinearGaussianParams {
            theta_s: 0.9,
            theta_a: 0.6,
            ..Default::default()
        };
        let policy = GaussianPolicy::linear(0.4, 0.1).unwrap();
        let horizon = crate::env::truncation_horizon(env.discount);
        let mut rng = stream_rng(8, Stream::Custom(1), 0);
        for &s0 in &[0.0, 1.5, -4.0] {
            let n = 4000;
            let returns: alloc::vec::Vec<f64> = (0..n)
                .map(|_| {
                    let (mut s, mut total, mut w) = (s0, 0.0, 1.0);
                    for _ in 0..horizon {
                        let a = policy.sample_action(s, &mut rng);
                        total += w * env.reward(s, a);
                        s = env.sample_next(s, a, &mut rng);
                        w *= env.discount;
                    }
                    total
                })
                .collect();
            let mean = returns.iter().sum::<f64>() / n as f64;
            let var = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            let exact = env.linear_policy_value(s0, 0.4, 0.1);
            assert!(
                (mean - exact).abs() < 3.0 * (var / n as f64).sqrt(),
                "s0 {s0}: {mean} vs {exact}"
            );
        }
    }

    #[test]
    fn value_of_unstable_loop_stays_finite() {
        let env = LinearGaussianParams {
            theta_s: 3.0,
            ..Default::default()
        };
        for gain in [0.0, 0.5, 10.0] {
            let v = env.linear_policy_value(2.0, gain, 0.1);
            assert!(v.is_finite() && v >= 0.0);
            assert!(env.linear_policy_return(gain, 0.1).is_finite());
        }
        let zero_q = LinearGaussianParams {
            theta_q: 0.0,
            ..env
        };
        assert!(zero_q.linear_policy_value(1e200, 0.0, 0.1).is_finite());
    }

    #[test]
    fn closed_form_return_matches_monte_carlo() {
        let env = LinearGaussianParams::default();
        let policy = GaussianPolicy::linear(0.6, 0.1).unwrap();
        let exact = env.linear_policy_return(0.6, 0.1);
        let horizon = crate::env::truncation_horizon(env.discount);
        let n = 20_000;
        let trajs = rollout(&env, &policy, horizon, n, 5, EnvTag::Real).unwrap();
        let returns: alloc::vec::Vec<f64> = trajs
            .iter()
            .map(|t| {
                t.transitions
                    .iter()
                    .enumerate()
                    .map(|(k, tr)| env.discount.powi(k as i32) * tr.reward)
                    .sum()
            })
            .collect();
        let mean = returns.iter().sum::<f64>() / n as f64;
        let var = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        assert!(
            (mean - exact).abs() < 3.0 * se,
            "mc {mean} exact {exact} se {se}"
        );
    }
}
