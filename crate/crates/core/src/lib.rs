//! Bi-level stochastic policy gradient for simulator adaptation.
//!
//! The inner level trains a policy purely in a parameterised simulator
//! (transition model and reward, jointly `theta`). The outer level adjusts
//! `theta` by policy-gradient ascent on the *real* return of that policy,
//! chaining through the sensitivity of the inner solution `d phi / d theta`
//! obtained by implicit differentiation of the inner policy gradient.
//!
//! The crate is `no_std` + `alloc`. File formats, configuration and the CLI
//! live in the `bilevel-harness` crate.
//!
//! Module map:
//!
//! - [`env`]: the discrete softmax MDP and the 1-D linear-Gaussian system,
//!   seeded rollouts, exact tabular evaluation.
//! - [`policy`]: tabular softmax and Gaussian (linear or MLP mean) policies
//!   with analytic scores and Hessians.
//! - [`solvers`]: value iteration, tau-softmax distillation, Riccati/LQR,
//!   MLP fitting and a plain inner SPG trainer.
//! - [`sensitivities`]: critic sensitivity recursions, Markov-chain
//!   sensitivity estimators with W-accumulators, exact tabular counterparts
//!   and the implicit-function solve for `d phi / d theta`.
//! - [`outer`]: real-world gradient and the full bi-level loop.
//! - [`oracles`]: finite differences, policy enumeration and statistical
//!   comparators that share no code with [`sensitivities`].

#![no_std]
// `!(x > 0.0)` deliberately rejects NaN along with nonpositive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod config;
pub mod env;
mod error;
pub mod linalg;
pub mod oracles;
pub mod outer;
pub mod policy;
pub mod rng;
pub mod sensitivities;
pub mod solvers;

pub use config::{BilevelConfig, EnvKind, Pathway, PolicyMean, StepWeighting, ThetaInit};
pub use error::{Error, Result};
pub use linalg::{Matrix, Vector};
