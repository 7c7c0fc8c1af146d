//! Brute-force references: central finite differences, exhaustive policy
//! enumeration and Monte-Carlo comparators.
//!
//! Everything here is built from environment and inner-solver primitives
//! only; none of it calls into [`crate::sensitivities`].

use alloc::string::String;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::env::{DiscreteMdpParams, Environment, PolicyTable};
use crate::linalg::{relative_error, solve_vec};
use crate::policy::{StochasticPolicy, TabularSoftmaxPolicy};
use crate::solvers::{distill, evaluate_policy};
use crate::{Error, Matrix, Result, Vector};

/// Value-iteration tolerance used whenever the distillation map is
/// differentiated numerically.
pub const ORACLE_VI_TOL: f64 = 1e-10;
/// Default step for parameter finite differences.
pub const PARAM_EPS: f64 = 1e-5;
/// Default step for objective finite differences.
pub const OBJECTIVE_EPS: f64 = 1e-4;

/// One analytic-versus-numeric comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct FdReport {
    pub quantity: String,
    pub analytic: Matrix,
    pub numeric: Matrix,
    /// `‖analytic − numeric‖_F / max(‖numeric‖_F, 1e-12)`.
    pub relative_error: f64,
    pub eps: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl FdReport {
    pub fn new(
        quantity: impl Into<String>,
        analytic: Matrix,
        numeric: Matrix,
        eps: f64,
        tolerance: f64,
    ) -> Self {
        let err = if analytic.shape() == numeric.shape() {
            relative_error(&analytic, &numeric)
        } else {
            f64::INFINITY
        };
        FdReport {
            quantity: quantity.into(),
            analytic,
            numeric,
            relative_error: err,
            eps,
            tolerance,
            pass: err <= tolerance,
        }
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if !(1e-7..=1e-3).contains(&eps) {
        return Err(Error::invalid("eps", "must lie in [1e-7, 1e-3]"));
    }
    Ok(())
}

/// Central differences `(f(x + ε e_i) − f(x − ε e_i)) / 2ε`, one column per
/// coordinate of `x`.
pub fn central_differences<F>(x: &Vector, eps: f64, f: F) -> Result<Matrix>
where
    F: Fn(&Vector) -> Result<Vector>,
{
    let mut out: Option<Matrix> = None;
    for i in 0..x.len() {
        let mut up = x.clone();
        let mut dn = x.clone();
        up[i] += eps;
        dn[i] -= eps;
        let col = (f(&up)? - f(&dn)?) / (2.0 * eps);
        let m = out.get_or_insert_with(|| Matrix::zeros(col.len(), x.len()));
        m.set_column(i, &col);
    }
    Ok(out.unwrap_or_else(|| Matrix::zeros(0, 0)))
}

/// Logits of the distillation map `θ ↦ log softmax(Q*_θ / τ)` with a tight
/// value-iteration tolerance.
pub fn distilled_logits(
    template: &DiscreteMdpParams,
    theta: &Vector,
    temperature: f64,
) -> Result<Vector> {
    let mdp = template.with_theta(theta)?;
    let (_, pol) = distill(&mdp, ORACLE_VI_TOL, temperature)?;
    Ok(pol.params())
}

/// Central-difference Jacobian of the distillation map at `theta`.
pub fn fd_policy_jacobian(
    template: &DiscreteMdpParams,
    theta: &Vector,
    temperature: f64,
    eps: f64,
) -> Result<Matrix> {
    check_eps(eps)?;
    central_differences(theta, eps, |th| distilled_logits(template, th, temperature))
}

/// `J(θ)`: exact return on `real` of the policy distilled from the
/// simulator at `theta`.
pub fn distilled_real_return(
    template: &DiscreteMdpParams,
    real: &DiscreteMdpParams,
    theta: &Vector,
    temperature: f64,
) -> Result<f64> {
    let mdp = template.with_theta(theta)?;
    let (_, pol) = distill(&mdp, ORACLE_VI_TOL, temperature)?;
    real.exact_return(&pol.table())
}

/// `(J(θ + ε d) − J(θ − ε d)) / 2ε` for each direction `d` (normalised to
/// unit length).
pub fn fd_objective_gradient(
    template: &DiscreteMdpParams,
    real: &DiscreteMdpParams,
    theta: &Vector,
    temperature: f64,
    eps: f64,
    directions: &[Vector],
) -> Result<Vec<f64>> {
    check_eps(eps)?;
    directions
        .iter()
        .map(|d| {
            let norm = d.norm();
            if !(norm > 0.0) || d.len() != theta.len() {
                return Err(Error::invalid(
                    "directions",
                    "must be non-zero and match theta",
                ));
            }
            let d = d / norm;
            let up = distilled_real_return(template, real, &(theta + &d * eps), temperature)?;
            let dn = distilled_real_return(template, real, &(theta - &d * eps), temperature)?;
            Ok((up - dn) / (2.0 * eps))
        })
        .collect()
}

/// Central differences of `Q^π` (exact policy evaluation, row-major
/// `(s, a)`) with respect to the simulator parameters.
pub fn fd_critic_theta(mdp: &DiscreteMdpParams, policy: &PolicyTable, eps: f64) -> Result<Matrix> {
    check_eps(eps)?;
    central_differences(&mdp.theta(), eps, |th| {
        let v = evaluate_policy(&mdp.with_theta(th)?, policy)?;
        Ok(Vector::from_column_slice(&v.q))
    })
}

/// Central differences of `Q^π` with respect to the policy logits.
pub fn fd_critic_phi(
    mdp: &DiscreteMdpParams,
    policy: &TabularSoftmaxPolicy,
    eps: f64,
) -> Result<Matrix> {
    check_eps(eps)?;
    central_differences(&policy.params(), eps, |phi| {
        let v = evaluate_policy(mdp, &policy.with_params(phi)?.table())?;
        Ok(Vector::from_column_slice(&v.q))
    })
}

/// `Σ_t γ^t P(s_t = s)` by a direct linear solve.
fn discounted_visits(mdp: &DiscreteMdpParams, table: &PolicyTable) -> Result<Vector> {
    let n = mdp.n_states();
    let mut p = Matrix::zeros(n, n);
    for s in 0..n {
        for a in 0..mdp.n_actions() {
            for (k, f) in mdp.transition_probs(s, a)?.into_iter().enumerate() {
                p[(s, k)] += table.prob(s, a) * f;
            }
        }
    }
    let a = Matrix::identity(n, n) - p.transpose() * mdp.discount();
    solve_vec(
        &a,
        &Vector::from_column_slice(mdp.initial_distribution()),
        "visit solve",
    )
}

/// `Σ_s ρ(s) Σ_a π(a|s) η(s, a)` for a vector-valued table `η`.
pub fn occupancy_expectation(
    mdp: &DiscreteMdpParams,
    policy: &TabularSoftmaxPolicy,
    eta: &[Vector],
) -> Result<Vector> {
    let na = mdp.n_actions();
    if eta.len() != mdp.n_states() * na || eta.is_empty() {
        return Err(Error::invalid("eta", "needs one entry per (state, action)"));
    }
    let table = policy.table();
    let rho = discounted_visits(mdp, &table)?;
    let mut out = Vector::zeros(eta[0].len());
    for s in 0..mdp.n_states() {
        for a in 0..na {
            out.axpy(rho[s] * table.prob(s, a), &eta[s * na + a], 1.0);
        }
    }
    Ok(out)
}

/// The exact inner gradient `Σ_s ρ(s) Σ_a π(a|s) ∇ log π(a|s) Q^π(s, a)`
/// for a tabular softmax policy, written out directly.
pub fn inner_gradient(mdp: &DiscreteMdpParams, policy: &TabularSoftmaxPolicy) -> Result<Vector> {
    let table = policy.table();
    let v = evaluate_policy(mdp, &table)?;
    let na = mdp.n_actions();
    let mut eta = Vec::with_capacity(mdp.n_states() * na);
    for s in 0..mdp.n_states() {
        for a in 0..na {
            let mut g = Vector::zeros(policy.num_params());
            for b in 0..na {
                let ind = if a == b { 1.0 } else { 0.0 };
                g[s * na + b] = (ind - table.prob(s, b)) * v.q(s, a);
            }
            eta.push(g);
        }
    }
    occupancy_expectation(mdp, policy, &eta)
}

/// Central differences of [`inner_gradient`] in the policy logits.
pub fn fd_inner_gradient_phi(
    mdp: &DiscreteMdpParams,
    policy: &TabularSoftmaxPolicy,
    eps: f64,
) -> Result<Matrix> {
    check_eps(eps)?;
    central_differences(&policy.params(), eps, |phi| {
        inner_gradient(mdp, &policy.with_params(phi)?)
    })
}

/// Central differences of [`inner_gradient`] in the simulator parameters.
pub fn fd_inner_gradient_theta(
    mdp: &DiscreteMdpParams,
    policy: &TabularSoftmaxPolicy,
    eps: f64,
) -> Result<Matrix> {
    check_eps(eps)?;
    central_differences(&mdp.theta(), eps, |th| {
        inner_gradient(&mdp.with_theta(th)?, policy)
    })
}

/// Central differences of [`occupancy_expectation`] with `η` frozen, in
/// the policy logits (`wrt_theta = false`) or the simulator parameters.
pub fn fd_frozen_expectation(
    mdp: &DiscreteMdpParams,
    policy: &TabularSoftmaxPolicy,
    eta: &[Vector],
    wrt_theta: bool,
    eps: f64,
) -> Result<Matrix> {
    check_eps(eps)?;
    if wrt_theta {
        central_differences(&mdp.theta(), eps, |th| {
            occupancy_expectation(&mdp.with_theta(th)?, policy, eta)
        })
    } else {
        central_differences(&policy.params(), eps, |phi| {
            occupancy_expectation(mdp, &policy.with_params(phi)?, eta)
        })
    }
}

/// Basis of the logit directions that change the policy: per state, the
/// columns `e_0 − e_j`. Softmax ignores the orthogonal per-state shifts.
fn policy_directions(n_states: usize, n_actions: usize) -> Matrix {
    let cols = n_states * n_actions.saturating_sub(1);
    let mut z = Matrix::zeros(n_states * n_actions, cols);
    for s in 0..n_states {
        for j in 1..n_actions {
            let c = s * (n_actions - 1) + j - 1;
            z[(s * n_actions, c)] = 1.0;
            z[(s * n_actions + j, c)] = -1.0;
        }
    }
    z
}

/// Logits near `phi0` at which the exact inner gradient on `mdp` equals
/// `target`, found by Newton steps along [`policy_directions`] with a
/// finite-difference Jacobian.
fn track_level_set(
    mdp: &DiscreteMdpParams,
    phi0: &Vector,
    target: &Vector,
    tol: f64,
) -> Result<Vector> {
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let z = policy_directions(ns, na);
    let residual = |u: &Vector| -> Result<Vector> {
        let pol = TabularSoftmaxPolicy::new(ns, na, (phi0 + &z * u).as_slice().to_vec())?;
        Ok(z.transpose() * (inner_gradient(mdp, &pol)? - target))
    };
    let mut u = Vector::zeros(z.ncols());
    let mut r = residual(&u)?;
    for _ in 0..50 {
        if r.amax() <= tol {
            return Ok(phi0 + &z * u);
        }
        let jac = central_differences(&u, 1e-6, residual)?;
        u -= solve_vec(&jac, &r, "level-set Newton step")?;
        r = residual(&u)?;
    }
    Err(Error::NotConverged {
        what: "level-set tracking",
        iterations: 50,
        residual: r.amax(),
    })
}

/// Central differences over `θ` of the map that keeps the exact inner
/// gradient at its value at `(phi0, theta)`. Where `phi0` is a stationary
/// point this is the map of inner solutions; in general it is the map
/// whose derivative the implicit-function theorem gives at `phi0`.
pub fn fd_level_set_jacobian(
    template: &DiscreteMdpParams,
    theta: &Vector,
    phi0: &Vector,
    eps: f64,
) -> Result<Matrix> {
    check_eps(eps)?;
    let mdp = template.with_theta(theta)?;
    let pol = TabularSoftmaxPolicy::new(mdp.n_states(), mdp.n_actions(), phi0.as_slice().to_vec())?;
    let target = inner_gradient(&mdp, &pol)?;
    let tol = 1e-13 * (1.0 + target.amax());
    central_differences(theta, eps, |th| {
        track_level_set(&template.with_theta(th)?, phi0, &target, tol)
    })
}

/// Directional central differences of the real return along the map of
/// [`fd_level_set_jacobian`]: the objective whose gradient the outer
/// chain rule gives when the implicit-function Jacobian is used.
pub fn fd_level_set_objective(
    template: &DiscreteMdpParams,
    real: &DiscreteMdpParams,
    theta: &Vector,
    phi0: &Vector,
    eps: f64,
    directions: &[Vector],
) -> Result<Vec<f64>> {
    check_eps(eps)?;
    let mdp = template.with_theta(theta)?;
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let target = inner_gradient(
        &mdp,
        &TabularSoftmaxPolicy::new(ns, na, phi0.as_slice().to_vec())?,
    )?;
    let tol = 1e-13 * (1.0 + target.amax());
    let j = |th: &Vector| -> Result<f64> {
        let phi = track_level_set(&template.with_theta(th)?, phi0, &target, tol)?;
        real.exact_return(&TabularSoftmaxPolicy::new(ns, na, phi.as_slice().to_vec())?.table())
    };
    directions
        .iter()
        .map(|d| {
            let norm = d.norm();
            if !(norm > 0.0) || d.len() != theta.len() {
                return Err(Error::invalid(
                    "directions",
                    "must be non-zero and match theta",
                ));
            }
            let d = d / norm;
            Ok((j(&(theta + &d * eps))? - j(&(theta - &d * eps))?) / (2.0 * eps))
        })
        .collect()
}

/// Subtracts each state's mean from its block of rows (rows ordered
/// `(s, a)`), removing the per-state logit shift that softmax ignores.
pub fn center_logit_rows(m: &Matrix, n_actions: usize) -> Matrix {
    let mut out = m.clone();
    if n_actions == 0 {
        return out;
    }
    for s in 0..m.nrows() / n_actions {
        let block = m.rows(s * n_actions, n_actions);
        let mean = block.row_mean();
        for a in 0..n_actions {
            let row = out.row(s * n_actions + a) - &mean;
            out.set_row(s * n_actions + a, &row);
        }
    }
    out
}

/// A deterministic policy and its exact return.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedPolicy {
    pub actions: Vec<usize>,
    pub value: f64,
}

/// Exact returns of all `|A|^|S|` deterministic policies, best first.
pub fn enumerate_policies(mdp: &DiscreteMdpParams) -> Result<Vec<RankedPolicy>> {
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let total = (na as u64).checked_pow(ns as u32).filter(|&t| t <= 1 << 20);
    let total = total
        .ok_or_else(|| Error::invalid("mdp", "too many deterministic policies to enumerate"))?;
    let mut out = Vec::with_capacity(total as usize);
    for code in 0..total {
        let mut c = code;
        let actions: Vec<usize> = (0..ns)
            .map(|_| {
                let a = (c % na as u64) as usize;
                c /= na as u64;
                a
            })
            .collect();
        let value = mdp.exact_return(&PolicyTable::deterministic(na, &actions))?;
        out.push(RankedPolicy { actions, value });
    }
    out.sort_by(|a, b| b.value.total_cmp(&a.value));
    Ok(out)
}

/// Sample mean and standard error of the mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
}

impl MeanSe {
    pub fn of(samples: &[f64]) -> Self {
        let n = samples.len() as f64;
        if samples.is_empty() {
            return MeanSe {
                mean: f64::NAN,
                se: f64::NAN,
            };
        }
        let mean = samples.iter().sum::<f64>() / n;
        if samples.len() < 2 {
            return MeanSe {
                mean,
                se: f64::INFINITY,
            };
        }
        let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        MeanSe {
            mean,
            se: (var / n).sqrt(),
        }
    }

    /// `(mean − target) / se`; zero when both the gap and `se` vanish.
    pub fn z_score(&self, target: f64) -> f64 {
        let gap = self.mean - target;
        if gap == 0.0 {
            0.0
        } else {
            gap / self.se
        }
    }

    pub fn within(&self, target: f64, n_se: f64) -> bool {
        self.z_score(target).abs() <= n_se
    }
}

/// Entry-wise mean/SE over replicate matrices; returns the per-entry
/// z-scores against `exact` (column-major order).
pub fn entrywise_z_scores(replicates: &[Matrix], exact: &Matrix) -> Result<Vec<f64>> {
    if replicates.is_empty() || replicates.iter().any(|m| m.shape() != exact.shape()) {
        return Err(Error::invalid(
            "replicates",
            "need matrices shaped like `exact`",
        ));
    }
    Ok((0..exact.len())
        .map(|i| {
            let xs: Vec<f64> = replicates.iter().map(|m| m.as_slice()[i]).collect();
            MeanSe::of(&xs).z_score(exact.as_slice()[i])
        })
        .collect())
}
