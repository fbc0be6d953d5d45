use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use feastest::config::{ExperimentConfig, ScenarioGrid};
use feastest::{emit, run_experiment, HarnessError};
use feastest_core::boundaries::{lower_bound_value, rejection_timescale};
use feastest_core::instances::{signal_level, Instance};
use serde_json::json;

#[derive(Parser)]
#[command(name = "feastest", version, about = "Sequential feasibility tests for unknown linear programs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment grid and write results.csv, aggregates.csv and traces.
    Run {
        /// Experiment configuration (JSON).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Use a built-in grid; replaces the cells of --config.
        #[arg(long, value_enum)]
        scenario: Option<ScenarioGrid>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Master seed, overriding the configuration.
        #[arg(long)]
        seed: Option<u64>,
        /// Write one JSON trace per run.
        #[arg(long)]
        traces: bool,
        /// Worker threads (default: all cores).
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Print the signal level of an instance.
    Gamma {
        /// Instance document (JSON).
        #[arg(long)]
        instance: PathBuf,
    },
    /// Print the rejection timescale and the finite-armed lower bound.
    Bound {
        #[arg(long)]
        gamma: f64,
        #[arg(long)]
        delta: f64,
        #[arg(long = "N")]
        n: f64,
        #[arg(long)]
        d: usize,
        #[arg(long)]
        m: usize,
    },
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Run { config, scenario, out, seed, traces, jobs } => {
            let mut cfg = match (&config, scenario) {
                (Some(path), grid) => {
                    let mut cfg = ExperimentConfig::load(path)?;
                    if let Some(grid) = grid {
                        cfg.cells = grid.cells();
                    }
                    cfg
                }
                (None, Some(grid)) => grid.config(),
                (None, None) => return Err(HarnessError::Config("either --config or --scenario is required".into())),
            };
            if let Some(s) = seed {
                cfg.master_seed = s;
            }
            cfg.traces |= traces;
            let runs = run_experiment(&cfg, jobs)?;
            let failed: Vec<_> =
                runs.iter().filter_map(|r| r.error.as_ref().map(|e| (r.cell, r.row.run_id, e))).collect();
            for (cell, run, err) in &failed {
                eprintln!("cell {cell} run {run} failed: {err}");
            }
            emit(&out, &cfg, &runs)?;
            eprintln!("{} runs written to {}", runs.len(), out.display());
            Ok(())
        }
        Command::Gamma { instance } => {
            let text = std::fs::read_to_string(&instance).map_err(|e| HarnessError::io(&instance, e))?;
            let inst: Instance = serde_json::from_str(&text)
                .map_err(|e| HarnessError::Config(format!("{}: {e}", instance.display())))?;
            let level = signal_level(&inst);
            println!("{}", serde_json::to_string_pretty(&level).map_err(|e| HarnessError::Json(e.to_string()))?);
            Ok(())
        }
        Command::Bound { gamma, delta, n, d, m } => {
            let ts = rejection_timescale(gamma, delta, n, d, m)?;
            // The finite-armed bound is only defined on part of the range.
            let lb = lower_bound_value(d, gamma.abs(), delta).ok();
            let doc = json!({
                "gamma": gamma,
                "delta": delta,
                "N": n,
                "d": d,
                "m": m,
                "timescale": ts.t,
                "timescale_overflow": ts.overflow,
                "lower_bound_K": d,
                "lower_bound": lb,
            });
            println!("{}", serde_json::to_string_pretty(&doc).map_err(|e| HarnessError::Json(e.to_string()))?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
