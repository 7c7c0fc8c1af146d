//! Analytic sensitivities against brute-force finite differences on the
//! discrete simulator, at the distilled policy of each checked `θ`.

use std::io::Write;

use bilevel_core::env::DiscreteMdpParams;
use bilevel_core::oracles::{
    center_logit_rows, fd_critic_phi, fd_critic_theta, fd_frozen_expectation,
    fd_inner_gradient_phi, fd_inner_gradient_theta, fd_level_set_jacobian, fd_level_set_objective,
    fd_objective_gradient, fd_policy_jacobian, FdReport, OBJECTIVE_EPS, ORACLE_VI_TOL, PARAM_EPS,
};
use bilevel_core::outer::exact_outer_gradient;
use bilevel_core::policy::StochasticPolicy;
use bilevel_core::rng::{stream_rng, Stream};
use bilevel_core::sensitivities::{
    assemble_policy_jacobian, critic_sensitivities, exact_inner_pg_sensitivities, exact_mc_sens,
    Occupancy, Wrt,
};
use bilevel_core::solvers::{distill, evaluate_policy};
use bilevel_core::{Matrix, Result, Vector};
use rand::Rng;

pub const CRITIC_TOL: f64 = 1e-4;
pub const EXACT_TOL: f64 = 1e-6;
pub const JACOBIAN_TOL: f64 = 1e-3;
pub const DIRECTIONAL_TOL: f64 = 0.02;
/// Number of random directions per point in the outer-gradient check.
pub const DIRECTIONS: usize = 5;

/// Which groups of checks to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Suite {
    pub critics: bool,
    pub inner: bool,
    pub jacobian: bool,
    pub outer: bool,
}

impl Suite {
    pub const ALL: Suite = Suite {
        critics: true,
        inner: true,
        jacobian: true,
        outer: true,
    };
}

/// Runs the selected checks at `theta`. Row names are suffixed with
/// `label`. Directions for the outer check are drawn from `direction_seed`.
pub fn check_point(
    real: &DiscreteMdpParams,
    theta: &Vector,
    temperature: f64,
    suite: Suite,
    label: &str,
    direction_seed: u64,
) -> Result<Vec<FdReport>> {
    let sim = real.with_theta(theta)?;
    let (_, policy) = distill(&sim, ORACLE_VI_TOL, temperature)?;
    let values = evaluate_policy(&sim, &policy.table())?;
    let critic = critic_sensitivities(&sim, &policy, &values, 1e-13)?;
    let mut rows = Vec::new();
    let name = |q: &str| format!("{q}[{label}]");
    if suite.critics {
        let fd = fd_critic_theta(&sim, &policy.table(), PARAM_EPS)?;
        rows.push(FdReport::new(
            name("critic_dq_dtheta"),
            critic.dq_dtheta.clone(),
            fd,
            PARAM_EPS,
            CRITIC_TOL,
        ));
        let fd = fd_critic_phi(&sim, &policy, PARAM_EPS)?;
        rows.push(FdReport::new(
            name("critic_dq_dphi"),
            critic.dq_dphi.clone(),
            fd,
            PARAM_EPS,
            CRITIC_TOL,
        ));
    }
    let pg = exact_inner_pg_sensitivities(&sim, &policy, &values, &critic, Occupancy::Discounted)?;
    if suite.inner {
        let na = sim.n_actions();
        let eta: Vec<Vector> = (0..sim.n_states() * na)
            .map(|i| policy.grad_log_prob(i / na, i % na) * values.q(i / na, i % na))
            .collect();
        for (wrt, q, flag) in [
            (Wrt::Phi, "mc_sens_phi", false),
            (Wrt::Theta, "mc_sens_theta", true),
        ] {
            let exact = exact_mc_sens(&sim, &policy, &values, wrt, Occupancy::Discounted)?;
            let fd = fd_frozen_expectation(&sim, &policy, &eta, flag, PARAM_EPS)?;
            rows.push(FdReport::new(name(q), exact, fd, PARAM_EPS, EXACT_TOL));
        }
        let fd = fd_inner_gradient_phi(&sim, &policy, PARAM_EPS)?;
        rows.push(FdReport::new(
            name("inner_pg_dphi"),
            pg.dpg_dphi.clone(),
            fd,
            PARAM_EPS,
            EXACT_TOL,
        ));
        let fd = fd_inner_gradient_theta(&sim, &policy, PARAM_EPS)?;
        rows.push(FdReport::new(
            name("inner_pg_dtheta"),
            pg.dpg_dtheta.clone(),
            fd,
            PARAM_EPS,
            EXACT_TOL,
        ));
    }
    if !(suite.jacobian || suite.outer) {
        return Ok(rows);
    }
    let jac = assemble_policy_jacobian(&pg, None)?;
    if suite.jacobian {
        let fd = center_logit_rows(
            &fd_policy_jacobian(real, theta, temperature, PARAM_EPS)?,
            sim.n_actions(),
        );
        rows.push(FdReport::new(
            name("policy_jacobian"),
            jac.dphi_dtheta.clone(),
            fd,
            PARAM_EPS,
            JACOBIAN_TOL,
        ));
        let fd = fd_level_set_jacobian(real, theta, &policy.params(), PARAM_EPS)?;
        rows.push(FdReport::new(
            name("policy_jacobian_level_set"),
            jac.dphi_dtheta.clone(),
            center_logit_rows(&fd, sim.n_actions()),
            PARAM_EPS,
            JACOBIAN_TOL,
        ));
    }
    if suite.outer {
        let grad = exact_outer_gradient(real, &policy, &jac, Occupancy::Discounted)?;
        let mut rng = stream_rng(direction_seed, Stream::Custom(0x4449_5253), 0);
        let dirs: Vec<Vector> = (0..DIRECTIONS)
            .map(|_| {
                let d = Vector::from_fn(theta.len(), |_, _| rng.random::<f64>() * 2.0 - 1.0);
                &d / d.norm()
            })
            .collect();
        let fd = fd_objective_gradient(real, real, theta, temperature, OBJECTIVE_EPS, &dirs)?;
        for (i, (d, f)) in dirs.iter().zip(fd).enumerate() {
            rows.push(FdReport::new(
                name(&format!("outer_directional_{i}")),
                Matrix::from_element(1, 1, grad.grad_theta.dot(d)),
                Matrix::from_element(1, 1, f),
                OBJECTIVE_EPS,
                DIRECTIONAL_TOL,
            ));
        }
        let fd = fd_level_set_objective(real, real, theta, &policy.params(), OBJECTIVE_EPS, &dirs)?;
        for (i, (d, f)) in dirs.iter().zip(fd).enumerate() {
            rows.push(FdReport::new(
                name(&format!("outer_directional_level_set_{i}")),
                Matrix::from_element(1, 1, grad.grad_theta.dot(d)),
                Matrix::from_element(1, 1, f),
                OBJECTIVE_EPS,
                DIRECTIONAL_TOL,
            ));
        }
    }
    Ok(rows)
}

/// Writes `quantity,analytic_norm,fd_norm,relative_error,tolerance,pass`.
pub fn write_reports<W: Write>(out: W, rows: &[FdReport]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "quantity",
        "analytic_norm",
        "fd_norm",
        "relative_error",
        "eps",
        "tolerance",
        "pass",
    ])?;
    for r in rows {
        w.write_record([
            r.quantity.clone(),
            r.analytic.norm().to_string(),
            r.numeric.norm().to_string(),
            r.relative_error.to_string(),
            r.eps.to_string(),
            r.tolerance.to_string(),
            r.pass.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
