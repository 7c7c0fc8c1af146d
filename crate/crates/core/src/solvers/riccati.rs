use crate::env::LinearGaussianParams;
use crate::policy::GaussianPolicy;
use crate::{Error, Result};

const MAX_DARE_ITERATIONS: usize = 1_000_000;

/// Scalar Riccati solution: value curvature `P` and feedback gain `K`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiccatiSolution {
    pub p: f64,
    pub k: f64,
}

impl RiccatiSolution {
    fn gain(params: &LinearGaussianParams, p: f64) -> f64 {
        params.theta_a * p * params.theta_s / (params.theta_r + params.theta_a * params.theta_a * p)
    }

    /// `(|P − (λq + γ(θ_s − θ_a K)² P)|, |K − θ_a P θ_s / (r + θ_a² P)|)`.
    pub fn residuals(&self, params: &LinearGaussianParams) -> (f64, f64) {
        let closed = params.theta_s - params.theta_a * self.k;
        let p_res = (self.p
            - (params.reward_scale * params.theta_q + params.discount * closed * closed * self.p))
            .abs();
        let k_res = (self.k - Self::gain(params, self.p)).abs();
        (p_res, k_res)
    }
}

/// Fixed-point iteration on the scalar Riccati pair
///
/// ```text
/// P = λ q + γ (θ_s − θ_a K)² P,    K = θ_a P θ_s / (r + θ_a² P)
/// ```
///
/// from `P₀ = λ q` until `|ΔP| < tol`.
pub fn solve_dare(params: &LinearGaussianParams, tol: f64) -> Result<RiccatiSolution> {
    if !(tol > 0.0) {
        return Err(Error::invalid("tol", "must be positive"));
    }
    let ill_posed = !(params.reward_scale * params.theta_r > 0.0) && params.theta_a == 0.0;
    if ill_posed {
        return Err(Error::invalid(
            "theta",
            "needs λ·θ_r > 0 or θ_a ≠ 0 for a well-posed gain",
        ));
    }
    let base = params.reward_scale * params.theta_q;
    let mut p = base;
    let mut delta = f64::INFINITY;
    for _ in 0..MAX_DARE_ITERATIONS {
        let k = RiccatiSolution::gain(params, p);
        let closed = params.theta_s - params.theta_a * k;
        let next = base + params.discount * closed * closed * p;
        delta = (next - p).abs();
        p = next;
        if !p.is_finite() {
            break;
        }
        if delta < tol {
            return Ok(RiccatiSolution {
                p,
                k: RiccatiSolution::gain(params, p),
            });
        }
    }
    Err(Error::NotConverged {
        what: "Riccati fixed-point iteration",
        iterations: MAX_DARE_ITERATIONS,
        residual: delta,
    })
}

/// Gaussian policy with mean `−K s`.
pub fn lqr_policy(solution: &RiccatiSolution, action_std: f64) -> Result<GaussianPolicy> {
    GaussianPolicy::linear(solution.k, action_std)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(gamma: f64, lam: f64, s: f64, a: f64, q: f64, r: f64) -> LinearGaussianParams {
        LinearGaussianParams {
            theta_s: s,
            theta_a: a,
            theta_q: q,
            theta_r: r,
            reward_scale: lam,
            discount: gamma,
            ..Default::default()
        }
    }

    #[test]
    fn zero_discount_closed_form() {
        let sol = solve_dare(&params(0.0, 1.0, 1.0, 1.0, 1.0, 1.0), 1e-12).unwrap();
        assert!((sol.p - 1.0).abs() < 1e-15);
        assert!((sol.k - 0.5).abs() < 1e-15);
    }

    #[test]
    fn uncontrollable_closed_form() {
        let pr = params(0.9, 0.5, 0.8, 0.0, 2.0, 1.0);
        let sol = solve_dare(&pr, 1e-13).unwrap();
        assert_eq!(sol.k, 0.0);
        let expected = 0.5 * 2.0 / (1.0 - 0.9 * 0.64);
        assert!((sol.p - expected).abs() < 1e-10);
    }

    #[test]
    fn residuals_vanish_at_default_system() {
        let pr = params(0.95, 0.1, 1.0, 1.0, 1.0, 1.0);
        let sol = solve_dare(&pr, 1e-12).unwrap();
        let (rp, rk) = sol.residuals(&pr);
        assert!(rp <= 1e-10 && rk <= 1e-10, "{rp} {rk}");
        assert!(sol.p > 0.0);
    }

    #[test]
    fn divergent_iteration_reports_non_convergence() {
        let pr = params(0.9, 1.0, 2.0, 0.0, 1.0, 1.0);
        assert!(matches!(
            solve_dare(&pr, 1e-12),
            Err(Error::NotConverged { .. })
        ));
    }

    #[test]
    fn ill_posed_gain_is_rejected() {
        let pr = params(0.9, 1.0, 0.5, 0.0, 1.0, 0.0);
        assert!(matches!(
            solve_dare(&pr, 1e-12),
            Err(Error::InvalidArgument { .. })
        ));
    }

    #[test]
    fn lqr_policy_mean_is_linear_feedback() {
        let pol = lqr_policy(&RiccatiSolution { p: 1.0, k: 0.5 }, 0.1).unwrap();
        assert_eq!(pol.mean(2.0), -1.0);
        let zero = lqr_policy(&RiccatiSolution { p: 1.0, k: 0.0 }, 0.1).unwrap();
        assert_eq!(zero.mean(3.7), 0.0);
    }
}
