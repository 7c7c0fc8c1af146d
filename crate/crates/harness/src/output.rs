//! Per-iteration CSV histories, run summaries and long-format plot data.

use std::io::{Read, Write};

use bilevel_core::outer::{BilevelRunState, RunHistory};
use serde::{Deserialize, Serialize};

/// Iterations at the end of a run whose median is reported.
pub const FINAL_WINDOW: usize = 20;

/// Column names of the per-iteration CSV for a `theta` of length `n`.
pub fn history_header(n_theta: usize) -> Vec<String> {
    let mut h: Vec<String> = [
        "run_id",
        "seed",
        "iteration",
        "real_return",
        "normalized_return",
        "grad_norm",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    h.extend((0..n_theta).map(|i| format!("theta_{i}")));
    h.push("argmax_matches".into());
    h.push("wall_time_ms".into());
    h
}

/// Writes one row per recorded iteration. `wall_ms[i]` is the time of
/// iteration `i`; pass an empty slice to write 0 everywhere.
pub fn write_history<W: Write>(
    out: W,
    run_id: &str,
    history: &RunHistory,
    wall_ms: &[u64],
) -> csv::Result<()> {
    let n_theta = history
        .states
        .first()
        .map_or(history.final_theta.len(), |s| s.theta.len());
    let mut w = csv::Writer::from_writer(out);
    w.write_record(history_header(n_theta))?;
    for (i, s) in history.states.iter().enumerate() {
        let mut row = vec![
            run_id.to_string(),
            history.seed.to_string(),
            s.iteration.to_string(),
            s.real_return.to_string(),
            s.normalized_return.to_string(),
            s.grad_norm.to_string(),
        ];
        row.extend(s.theta.iter().map(|x| x.to_string()));
        row.push(s.argmax_matches.map(|m| m.to_string()).unwrap_or_default());
        row.push(wall_ms.get(i).copied().unwrap_or(0).to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Median of a non-empty slice (mean of the middle pair for even length).
pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub j_star: f64,
    pub iterations: usize,
    pub start_normalized_return: f64,
    pub final_normalized_return: f64,
    /// Median over the last [`FINAL_WINDOW`] iterations.
    pub median_final_normalized_return: f64,
    pub final_argmax_matches: Option<usize>,
    pub final_theta: Vec<f64>,
    pub halted: Option<String>,
}

impl SeedSummary {
    pub fn of(history: &RunHistory) -> Self {
        let returns: Vec<f64> = history.states.iter().map(|s| s.normalized_return).collect();
        let tail = &returns[returns.len().saturating_sub(FINAL_WINDOW)..];
        let last: Option<&BilevelRunState> = history.states.last();
        SeedSummary {
            seed: history.seed,
            j_star: history.j_star,
            iterations: history.states.len(),
            start_normalized_return: returns.first().copied().unwrap_or(f64::NAN),
            final_normalized_return: returns.last().copied().unwrap_or(f64::NAN),
            median_final_normalized_return: median(tail),
            final_argmax_matches: last.and_then(|s| s.argmax_matches),
            final_theta: history.final_theta.iter().copied().collect(),
            halted: history.halted.as_ref().map(|e| e.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub name: String,
    pub env: String,
    pub seeds: Vec<SeedSummary>,
    /// Median across seeds of each seed's final-window median.
    pub median_final_normalized_return: f64,
}

impl RunSummary {
    pub fn new(name: &str, env: &str, seeds: Vec<SeedSummary>) -> Self {
        let meds: Vec<f64> = seeds
            .iter()
            .map(|s| s.median_final_normalized_return)
            .collect();
        RunSummary {
            name: name.to_string(),
            env: env.to_string(),
            median_final_normalized_return: median(&meds),
            seeds,
        }
    }
}

/// One point of a learning curve.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub iteration: usize,
    pub seed: u64,
    pub normalized_return: f64,
}

/// Reads `(iteration, seed, normalized_return)` from a history CSV.
pub fn read_curve<R: Read>(input: R) -> Result<Vec<CurvePoint>, String> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers().map_err(|e| e.to_string())?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| format!("missing column `{name}`"))
    };
    let (ci, cs, cn) = (col("iteration")?, col("seed")?, col("normalized_return")?);
    let mut out = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| e.to_string())?;
        let field = |c: usize| {
            rec.get(c)
                .ok_or_else(|| format!("row {}: short record", line + 2))
        };
        out.push(CurvePoint {
            iteration: field(ci)?
                .parse()
                .map_err(|e| format!("row {}: {e}", line + 2))?,
            seed: field(cs)?
                .parse()
                .map_err(|e| format!("row {}: {e}", line + 2))?,
            normalized_return: field(cn)?
                .parse()
                .map_err(|e| format!("row {}: {e}", line + 2))?,
        });
    }
    Ok(out)
}

/// Merges per-seed curves into one long-format table. Every curve must
/// cover the same iterations.
pub fn emit_plot_data<W: Write>(curves: &[Vec<CurvePoint>], out: W) -> Result<usize, String> {
    let grid = |c: &Vec<CurvePoint>| c.iter().map(|p| p.iteration).collect::<Vec<_>>();
    if let Some(first) = curves.first() {
        let g = grid(first);
        if let Some(i) = curves.iter().position(|c| grid(c) != g) {
            return Err(format!(
                "iteration grid of input {} ({} rows) differs from input 1 ({} rows)",
                i + 1,
                curves[i].len(),
                g.len()
            ));
        }
    }
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| e.to_string();
    w.write_record(["iteration", "seed", "normalized_return"])
        .map_err(err)?;
    let mut rows = 0;
    for c in curves {
        for p in c {
            w.write_record([
                p.iteration.to_string(),
                p.seed.to_string(),
                p.normalized_return.to_string(),
            ])
            .map_err(err)?;
            rows += 1;
        }
    }
    w.flush().map_err(|e| e.to_string())?;
    Ok(rows)
}
