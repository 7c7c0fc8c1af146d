use std::io::BufReader;
use std::path::PathBuf;
use std::process::ExitCode;

use bilevel_core::Pathway;
use bilevel_harness::commands::{self, CmdResult, CommandError};
use bilevel_harness::config::{parse_seed_list, RunConfig};
use bilevel_harness::output::{emit_plot_data, read_curve};
use clap::{Parser, Subcommand, ValueEnum};

/// Bi-level simulator adaptation: experiment runner and gradient checks.
#[derive(Debug, Parser)]
#[command(name = "bilevel", version)]
struct Cli {
    /// Configuration file; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seeds to run, e.g. `0-4` or `1,5,9`.
    #[arg(long, global = true)]
    seed_list: Option<String>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    pathway: Option<PathwayArg>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PathwayArg {
    Exact,
    Sampled,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the bi-level loop for every seed; writes CSVs and a summary.
    Run,
    /// Compare analytic sensitivities with finite differences.
    Gradcheck,
    /// Rank all deterministic policies of the discrete MDP.
    Enumerate {
        /// Rank on the simulator at these parameters instead of the real MDP.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        theta: Option<Vec<f64>>,
    },
    /// Evaluate a (theta, phi) pair on the real environment.
    Eval {
        #[arg(
            long,
            value_delimiter = ',',
            allow_hyphen_values = true,
            required = true
        )]
        theta: Vec<f64>,
        /// Policy parameters; the inner solution at theta when omitted.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        phi: Option<Vec<f64>>,
    },
    /// Merge per-seed history CSVs into long-format plot data.
    PlotData {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Output file; stdout when omitted.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

fn load(cli: &Cli) -> CmdResult<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::from_file(p),
        None => RunConfig::parse_with_overrides("", "<defaults>", std::env::vars()),
    }
    .map_err(|e| CommandError::invalid(e.to_string()))?;
    if let Some(s) = &cli.seed_list {
        cfg.seeds =
            parse_seed_list(s).map_err(|e| CommandError::invalid(format!("--seed-list: {e}")))?;
    }
    if let Some(o) = &cli.out {
        cfg.out_dir = o.clone();
    }
    if let Some(p) = cli.pathway {
        cfg.core.pathway = match p {
            PathwayArg::Exact => Pathway::Exact,
            PathwayArg::Sampled => Pathway::Sampled,
        };
        cfg.core
            .validate()
            .map_err(|e| CommandError::invalid(format!("--pathway: {e}")))?;
    }
    Ok(cfg)
}

fn execute(cli: Cli) -> CmdResult<()> {
    let cfg = load(&cli)?;
    match cli.command {
        Command::Run => {
            let outcome = commands::run(&cfg)?;
            for s in &outcome.summary.seeds {
                println!(
                    "seed {}: {} iterations, normalized return {:.4} -> {:.4} (final-{} median {:.4}){}",
                    s.seed,
                    s.iterations,
                    s.start_normalized_return,
                    s.final_normalized_return,
                    bilevel_harness::output::FINAL_WINDOW,
                    s.median_final_normalized_return,
                    s.final_argmax_matches
                        .map(|m| format!(", argmax matches {m}/3"))
                        .unwrap_or_default()
                );
            }
            println!(
                "median over seeds: {:.4}; wrote {}",
                outcome.summary.median_final_normalized_return,
                cfg.out_dir.display()
            );
            commands::run_status(&outcome)
        }
        Command::Gradcheck => {
            let rows = commands::gradcheck(&cfg)?;
            let failed: Vec<&str> = rows
                .iter()
                .filter(|r| !r.pass)
                .map(|r| r.quantity.as_str())
                .collect();
            for r in &rows {
                println!(
                    "{} {:<40} rel err {:.3e} (tol {:.0e})",
                    if r.pass { "PASS" } else { "FAIL" },
                    r.quantity,
                    r.relative_error,
                    r.tolerance
                );
            }
            if failed.is_empty() {
                Ok(())
            } else {
                Err(CommandError::numerical(format!(
                    "{} of {} checks failed",
                    failed.len(),
                    rows.len()
                )))
            }
        }
        Command::Enumerate { theta } => {
            commands::enumerate(&cfg, theta.as_deref(), std::io::stdout().lock())
        }
        Command::Eval { theta, phi } => {
            let e = commands::eval(&cfg, &theta, phi.as_deref())?;
            println!("{}", serde_json::to_string_pretty(&e).expect("plain data"));
            Ok(())
        }
        Command::PlotData { inputs, output } => {
            let mut curves = Vec::with_capacity(inputs.len());
            for p in &inputs {
                let f = std::fs::File::open(p)
                    .map_err(|e| CommandError::invalid(format!("{}: {e}", p.display())))?;
                curves.push(
                    read_curve(BufReader::new(f))
                        .map_err(|e| CommandError::invalid(format!("{}: {e}", p.display())))?,
                );
            }
            let result = match output {
                Some(path) => {
                    let f = std::fs::File::create(&path)
                        .map_err(|e| CommandError::invalid(format!("{}: {e}", path.display())))?;
                    emit_plot_data(&curves, std::io::BufWriter::new(f))
                }
                None => emit_plot_data(&curves, std::io::stdout().lock()),
            };
            result.map(|_| ()).map_err(CommandError::invalid)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
