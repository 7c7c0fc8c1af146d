//! The CLI subcommands as library functions.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use bilevel_core::env::{rollout, DiscreteMdpParams, EnvTag, Environment};
use bilevel_core::oracles::{enumerate_policies, FdReport};
use bilevel_core::outer::{
    continuous_inner_policy, continuous_optimal_return, continuous_real, discrete_optimal_return,
    discrete_real, initial_theta, optimality_gap_report, real_q_estimates, run_bilevel_with,
    RunHistory,
};
use bilevel_core::policy::{GaussianPolicy, StochasticPolicy, TabularSoftmaxPolicy};
use bilevel_core::solvers::distill;
use bilevel_core::{EnvKind, Error, PolicyMean, Vector};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{env_label, RunConfig};
use crate::gradcheck::{check_point, write_reports, Suite};
use crate::output::{write_history, RunSummary, SeedSummary};

/// A failed command with its process exit code: 1 for invalid input,
/// 2 for numerical failure.
#[derive(Debug, Clone, PartialEq)]
pub struct CommandError {
    pub code: u8,
    pub message: String,
}

impl CommandError {
    pub fn invalid(message: impl Into<String>) -> Self {
        CommandError {
            code: 1,
            message: message.into(),
        }
    }

    pub fn numerical(message: impl Into<String>) -> Self {
        CommandError {
            code: 2,
            message: message.into(),
        }
    }

    fn io(path: &Path, e: impl fmt::Display) -> Self {
        Self::invalid(format!("{}: {e}", path.display()))
    }
}

impl From<Error> for CommandError {
    fn from(e: Error) -> Self {
        CommandError {
            code: if e.is_numerical() { 2 } else { 1 },
            message: e.to_string(),
        }
    }
}

impl fmt::Display for CommandError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CommandError {}

pub type CmdResult<T> = Result<T, CommandError>;

fn create(path: &Path) -> CmdResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CommandError::io(path, e))
}

fn ensure_dir(dir: &Path) -> CmdResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CommandError::io(dir, e))
}

pub fn history_path(cfg: &RunConfig, seed: u64) -> PathBuf {
    cfg.out_dir.join(format!("{}_seed{seed}.csv", cfg.name))
}

pub fn summary_path(cfg: &RunConfig) -> PathBuf {
    cfg.out_dir.join(format!("{}_summary.json", cfg.name))
}

/// Result of [`run`]: per-seed histories and the written summary.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub histories: Vec<RunHistory>,
    pub summary: RunSummary,
}

/// Runs every seed (in a worker pool), then writes one CSV per seed, the
/// summary JSON and the resolved configuration.
pub fn run(cfg: &RunConfig) -> CmdResult<RunOutcome> {
    ensure_dir(&cfg.out_dir)?;
    let results: Vec<Result<(RunHistory, Vec<u64>), Error>> = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let mut wall = Vec::new();
            let mut last = Instant::now();
            let history = run_bilevel_with(&cfg.core, seed, |_| {
                if cfg.wall_time {
                    wall.push(last.elapsed().as_millis() as u64);
                    last = Instant::now();
                }
            })?;
            Ok((history, wall))
        })
        .collect();
    let mut histories = Vec::with_capacity(results.len());
    for (r, &seed) in results.into_iter().zip(&cfg.seeds) {
        let (history, wall) = r.map_err(CommandError::from)?;
        let path = history_path(cfg, seed);
        let run_id = format!("{}-seed{seed}", cfg.name);
        write_history(create(&path)?, &run_id, &history, &wall)
            .map_err(|e| CommandError::io(&path, e))?;
        histories.push(history);
    }
    let summary = RunSummary::new(
        &cfg.name,
        env_label(cfg.core.env_kind),
        histories.iter().map(SeedSummary::of).collect(),
    );
    let path = summary_path(cfg);
    let mut json = serde_json::to_string_pretty(&summary).expect("summary is plain data");
    json.push('\n');
    std::fs::write(&path, json).map_err(|e| CommandError::io(&path, e))?;
    let path = cfg.out_dir.join(format!("{}_config.toml", cfg.name));
    std::fs::write(&path, cfg.to_toml()).map_err(|e| CommandError::io(&path, e))?;
    Ok(RunOutcome { histories, summary })
}

/// A halted seed turns a completed run into a numerical failure.
pub fn run_status(outcome: &RunOutcome) -> CmdResult<()> {
    let halted: Vec<String> = outcome
        .summary
        .seeds
        .iter()
        .filter_map(|s| s.halted.as_ref().map(|h| format!("seed {}: {h}", s.seed)))
        .collect();
    if halted.is_empty() {
        Ok(())
    } else {
        Err(CommandError::numerical(format!(
            "runs halted early: {}",
            halted.join("; ")
        )))
    }
}

fn require_discrete(cfg: &RunConfig, what: &str) -> CmdResult<DiscreteMdpParams> {
    if cfg.core.env_kind != EnvKind::Discrete {
        return Err(CommandError::invalid(format!(
            "{what} needs env = \"discrete\""
        )));
    }
    Ok(discrete_real(&cfg.core)?)
}

/// The oracle suite at `θ₀` of every configured seed. Writes
/// `<name>_gradcheck.csv` and returns the rows.
pub fn gradcheck(cfg: &RunConfig) -> CmdResult<Vec<FdReport>> {
    let real = require_discrete(cfg, "gradcheck")?;
    ensure_dir(&cfg.out_dir)?;
    let per_seed: Vec<Result<Vec<FdReport>, Error>> = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let theta = initial_theta(&cfg.core, seed)?;
            check_point(
                &real,
                &theta,
                cfg.core.temperature,
                Suite::ALL,
                &format!("seed={seed}"),
                seed,
            )
        })
        .collect();
    let mut rows = Vec::new();
    for r in per_seed {
        rows.extend(r?);
    }
    let path = cfg.out_dir.join(format!("{}_gradcheck.csv", cfg.name));
    write_reports(create(&path)?, &rows).map_err(|e| CommandError::io(&path, e))?;
    Ok(rows)
}

/// Ranking of all deterministic policies on the real MDP, or on the
/// simulator at `theta` when given, as CSV on `out`.
pub fn enumerate<W: Write>(cfg: &RunConfig, theta: Option<&[f64]>, mut out: W) -> CmdResult<()> {
    let real = require_discrete(cfg, "enumerate")?;
    let mdp = match theta {
        Some(t) => real.with_theta(&Vector::from_column_slice(t))?,
        None => real,
    };
    let ranked = enumerate_policies(&mdp)?;
    let best = ranked.first().map_or(f64::NAN, |r| r.value);
    let io = |e: std::io::Error| CommandError::invalid(e.to_string());
    writeln!(out, "rank,actions,return,fraction_of_best").map_err(io)?;
    for (i, r) in ranked.iter().enumerate() {
        let actions: Vec<String> = r.actions.iter().map(|a| a.to_string()).collect();
        writeln!(
            out,
            "{},{},{},{}",
            i + 1,
            actions.join(" "),
            r.value,
            r.value / best
        )
        .map_err(io)?;
    }
    Ok(())
}

/// Real-environment evaluation of a stored `(θ, φ)` pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evaluation {
    pub env: String,
    pub theta: Vec<f64>,
    pub phi: Vec<f64>,
    pub real_return: f64,
    pub j_star: f64,
    pub normalized_return: f64,
    /// Discrete only.
    pub argmax_matches: Option<usize>,
    /// Standard error of a Monte-Carlo estimate; absent when exact.
    pub standard_error: Option<f64>,
}

/// Evaluates `phi` (or, when absent, the inner solution at `theta`) on the
/// real environment. Continuous `phi` is the linear gain `[K]`; MLP
/// policies are re-fitted from `theta` and evaluated by Monte-Carlo with
/// the configured real rollouts of the first seed.
pub fn eval(cfg: &RunConfig, theta: &[f64], phi: Option<&[f64]>) -> CmdResult<Evaluation> {
    let c = &cfg.core;
    let theta_v = Vector::from_column_slice(theta);
    match c.env_kind {
        EnvKind::Discrete => {
            let real = discrete_real(c)?;
            let sim = real.with_theta(&theta_v)?;
            let policy = match phi {
                Some(p) => {
                    TabularSoftmaxPolicy::new(real.n_states(), real.n_actions(), p.to_vec())?
                }
                None => distill(&sim, c.vi_tol, c.temperature)?.1,
            };
            let j = real.exact_return(&policy.table())?;
            let j_star = discrete_optimal_return(&real)?;
            let gap = optimality_gap_report(&sim, &real, c.temperature)?;
            Ok(Evaluation {
                env: "discrete".into(),
                theta: theta.to_vec(),
                phi: policy.params().iter().copied().collect(),
                real_return: j,
                j_star,
                normalized_return: j / j_star,
                argmax_matches: Some(gap.matches),
                standard_error: None,
            })
        }
        EnvKind::Continuous => {
            let real = continuous_real(c)?;
            let sim = real.with_theta(&theta_v)?;
            let j_star = continuous_optimal_return(&real, c.action_std, c.dare_tol)?;
            let (policy, gain) = match (phi, c.policy_mean) {
                (Some([k]), _) => (GaussianPolicy::linear(*k, c.action_std)?, Some(*k)),
                (Some(_), _) => {
                    return Err(CommandError::invalid(
                        "continuous --phi takes one value, the linear gain K; omit it to use the inner solution",
                    ))
                }
                (None, PolicyMean::Linear) => {
                    let p = continuous_inner_policy(c, &sim, 0, 0)?;
                    let k = bilevel_core::solvers::solve_dare(&sim, c.dare_tol)?.k;
                    (p, Some(k))
                }
                (None, PolicyMean::Mlp) => (continuous_inner_policy(c, &sim, cfg.seeds[0], 0)?, None),
            };
            let (j, se) = match gain {
                Some(k) => (real.linear_policy_return(k, c.action_std), None),
                None => {
                    let seed = bilevel_core::rng::derive_seed(
                        cfg.seeds[0],
                        bilevel_core::rng::Stream::RealRollout,
                        0,
                    );
                    let trajs = rollout(
                        &real,
                        &policy,
                        c.real_horizon,
                        c.real_trajectories,
                        seed,
                        EnvTag::Real,
                    )?;
                    let returns: Vec<f64> = real_q_estimates(&trajs, real.discount())
                        .iter()
                        .map(|q| q.first().copied().unwrap_or(0.0))
                        .collect();
                    let m = bilevel_core::oracles::MeanSe::of(&returns);
                    (m.mean, Some(m.se))
                }
            };
            Ok(Evaluation {
                env: "continuous".into(),
                theta: theta.to_vec(),
                phi: policy.params().iter().copied().collect(),
                real_return: j,
                j_star,
                normalized_return: j / j_star,
                argmax_matches: None,
                standard_error: se,
            })
        }
    }
}
