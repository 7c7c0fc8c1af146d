use alloc::vec::Vec;

use crate::config::StepWeighting;
use crate::env::{DiscreteMdpParams, Environment};
use crate::linalg::solve;
use crate::policy::{StochasticPolicy, TabularSoftmaxPolicy};
use crate::solvers::TabularValues;
use crate::{Error, Matrix, Result, Vector};

/// Parameter block a sensitivity is taken with respect to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Wrt {
    Phi,
    Theta,
}

/// State weighting that a sampled trajectory average converges to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Occupancy {
    /// `Σ_k γ^k P(s_k = s)`, the limit of `γ^k / n` weights.
    Discounted,
    /// `(1/N) Σ_{k<N} P(s_k = s)`, the limit of `1 / (nN)` weights.
    Averaged(usize),
}

impl Occupancy {
    pub fn from_weighting(weighting: StepWeighting, horizon: usize) -> Self {
        match weighting {
            StepWeighting::Discounted => Occupancy::Discounted,
            StepWeighting::Uniform => Occupancy::Averaged(horizon),
        }
    }
}

/// `ρ = (I − γ P_πᵀ)⁻¹ ρ0`, the unnormalised discounted state occupancy of
/// `policy` in `mdp`.
pub fn exact_occupancy(mdp: &DiscreteMdpParams, policy: &TabularSoftmaxPolicy) -> Result<Vector> {
    occupancy(mdp, policy, Occupancy::Discounted)
}

pub fn occupancy(
    mdp: &DiscreteMdpParams,
    policy: &TabularSoftmaxPolicy,
    kind: Occupancy,
) -> Result<Vector> {
    policy.check_against(mdp)?;
    let (p, _) = mdp.induced_chain(&policy.table());
    let rho0 = Vector::from_column_slice(mdp.initial_distribution());
    let n = mdp.n_states();
    match kind {
        Occupancy::Discounted => {
            let a = Matrix::identity(n, n) - p.transpose() * mdp.discount();
            let x = solve(
                &a,
                &Matrix::from_column_slice(n, 1, rho0.as_slice()),
                "occupancy",
            )?;
            Ok(x.column(0).into_owned())
        }
        Occupancy::Averaged(horizon) => {
            if horizon == 0 {
                return Err(Error::invalid("horizon", "must be at least 1"));
            }
            let pt = p.transpose();
            let mut rho = rho0;
            let mut acc = Vector::zeros(n);
            for _ in 0..horizon {
                acc += &rho;
                rho = &pt * rho;
            }
            Ok(acc / horizon as f64)
        }
    }
}

/// `∂P_π(s, s') / ∂x_i` for every parameter `i` of the chosen block.
fn chain_derivatives(
    mdp: &DiscreteMdpParams,
    policy: &TabularSoftmaxPolicy,
    wrt: Wrt,
) -> Vec<Matrix> {
    let ns = mdp.n_states();
    let dim = match wrt {
        Wrt::Phi => policy.num_params(),
        Wrt::Theta => mdp.num_params(),
    };
    let mut out = alloc::vec![Matrix::zeros(ns, ns); dim];
    for s in 0..ns {
        let pi = policy.probs(s);
        for (a, &pa) in pi.iter().enumerate() {
            let score = policy.grad_log_prob(s, a);
            for (next, f) in mdp.probs_unchecked(s, a).into_iter().enumerate() {
                let g = match wrt {
                    Wrt::Phi => score.clone(),
                    Wrt::Theta => mdp.grad_log_transition(s, a, next),
                };
                for (i, gi) in g.iter().enumerate() {
                    if *gi != 0.0 {
                        out[i][(s, next)] += pa * f * gi;
                    }
                }
            }
        }
    }
    out
}

/// Occupancy and its derivative along every parameter of `wrt`; column `i`
/// of the returned matrix is `∂ρ/∂x_i`.
pub fn occupancy_derivatives(
    mdp: &DiscreteMdpParams,
    policy: &TabularSoftmaxPolicy,
    kind: Occupancy,
    wrt: Wrt,
) -> Result<(Vector, Matrix)> {
    let rho = occupancy(mdp, policy, kind)?;
    let (p, _) = mdp.induced_chain(&policy.table());
    let pt = p.transpose();
    let dps = chain_derivatives(mdp, policy, wrt);
    let n = mdp.n_states();
    let mut d = Matrix::zeros(n, dps.len());
    match kind {
        Occupancy::Discounted => {
            let gamma = mdp.discount();
            let mut rhs = Matrix::zeros(n, dps.len());
            for (i, dp) in dps.iter().enumerate() {
                rhs.set_column(i, &(dp.transpose() * &rho * gamma));
            }
            let a = Matrix::identity(n, n) - &pt * gamma;
            d = solve(&a, &rhs, "occupancy derivative")?;
        }
        Occupancy::Averaged(horizon) => {
            let mut r = Vector::from_column_slice(mdp.initial_distribution());
            let mut dr = Matrix::zeros(n, dps.len());
            for _ in 0..horizon {
                d += &dr;
                let mut next = &pt * &dr;
                for (i, dp) in dps.iter().enumerate() {
                    let col = next.column(i) + dp.transpose() * &r;
                    next.set_column(i, &col);
                }
                dr = next;
                r = &pt * r;
            }
            d /= horizon as f64;
        }
    }
    Ok((rho, d))
}

/// `∂ Σ_s ρ(s) Σ_a π(a|s) η(s, a)` through the state-action distribution
/// only, for a vector-valued `η` tabulated at row `s * n_actions + a`.
/// Column `i` of the result is the derivative along parameter `i`.
pub fn exact_expectation_sensitivity(
    mdp: &DiscreteMdpParams,
    policy: &TabularSoftmaxPolicy,
    eta: &[Vector],
    kind: Occupancy,
    wrt: Wrt,
) -> Result<Matrix> {
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    if eta.len() != ns * na {
        return Err(Error::DimensionMismatch {
            what: "eta table",
            expected: ns * na,
            found: eta.len(),
        });
    }
    let rows = eta.first().map_or(0, |e| e.len());
    let (rho, drho) = occupancy_derivatives(mdp, policy, kind, wrt)?;
    let mut out = Matrix::zeros(rows, drho.ncols());
    for s in 0..ns {
        let pi = policy.probs(s);
        let mut mean_eta = Vector::zeros(rows);
        for a in 0..na {
            mean_eta.axpy(pi[a], &eta[s * na + a], 1.0);
        }
        out.ger(1.0, &mean_eta, &drho.row(s).transpose(), 1.0);
        if wrt == Wrt::Phi {
            for a in 0..na {
                let score = policy.grad_log_prob(s, a);
                out.ger(rho[s] * pi[a], &eta[s * na + a], &score, 1.0);
            }
        }
    }
    Ok(out)
}

fn score_times_q(policy: &TabularSoftmaxPolicy, values: &TabularValues) -> Vec<Vector> {
    let mut eta = Vec::with_capacity(values.q.len());
    for s in 0..values.n_states {
        for a in 0..values.n_actions {
            eta.push(policy.grad_log_prob(s, a) * values.q(s, a));
        }
    }
    eta
}

/// Exact counterpart of `mc_sens_phi` / `mc_sens_theta`: the derivative of
/// `E_ρ̂[∇_φ log π · Q̂]` through the occupancy and action distribution with
/// `Q̂` held fixed. `Occupancy::Discounted` gives the limit of the
/// discounted-weight estimators.
pub fn exact_mc_sens(
    mdp: &DiscreteMdpParams,
    policy: &TabularSoftmaxPolicy,
    values: &TabularValues,
    wrt: Wrt,
    kind: Occupancy,
) -> Result<Matrix> {
    exact_expectation_sensitivity(mdp, policy, &score_times_q(policy, values), kind, wrt)
}

/// `φ̂ = Σ_s ρ(s) Σ_a π(a|s) ∇_φ log π(a|s) Q̂(s, a)` with exact occupancy.
pub fn exact_inner_pg(
    mdp: &DiscreteMdpParams,
    policy: &TabularSoftmaxPolicy,
    values: &TabularValues,
    kind: Occupancy,
) -> Result<Vector> {
    let rho = occupancy(mdp, policy, kind)?;
    let na = mdp.n_actions();
    let eta = score_times_q(policy, values);
    let mut out = Vector::zeros(policy.num_params());
    for s in 0..mdp.n_states() {
        for (a, p) in policy.probs(s).into_iter().enumerate() {
            out.axpy(rho[s] * p, &eta[s * na + a], 1.0);
        }
    }
    Ok(out)
}
