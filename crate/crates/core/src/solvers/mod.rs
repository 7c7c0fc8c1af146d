//! Inner-level solvers: the in-simulation RL problem for a fixed `theta`.

mod fit;
mod riccati;
mod spg;
mod value_iteration;

pub use fit::{fit_mlp_policy, fit_scalar_mlp, fit_value_mlp, FitOptions};
pub use riccati::{lqr_policy, solve_dare, RiccatiSolution};
pub use spg::{inner_spg_train, SpgConfig, SpgOutcome};
pub use value_iteration::{
    distill, evaluate_policy, soft_policy_from_q, soft_value_iteration,
    soft_value_iteration_with_trace, TabularValues,
};
