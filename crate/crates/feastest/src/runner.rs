//! Seeded, parallel execution of an experiment grid.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use feastest_core::engines::{run_test, Decision, TestTrace};
use feastest_core::environments::Environment;
use feastest_core::instances::signal_level;
use feastest_core::seed::{derive_seed, stream_rng};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{CellSpec, ExperimentConfig};
use crate::HarnessError;

/// Stream used to draw the special arm of lower-bound cells.
const ARM_STREAM: u64 = 2;

/// One line of `results.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub scenario: String,
    pub d: usize,
    pub m: usize,
    pub gamma: f64,
    pub delta: f64,
    pub sigma: f64,
    pub algorithm: String,
    #[serde(rename = "N")]
    pub n: f64,
    pub boundary_scale: f64,
    pub certified: bool,
    pub run_id: u64,
    pub seed: u64,
    /// `feasible`, `infeasible`, `timeout` or `error`.
    pub decision: String,
    pub correct: bool,
    pub tau: Option<u64>,
    pub tau_early: Option<u64>,
    pub wall_ms: u64,
}

/// A finished run: its row, and its trace unless the run failed.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub cell: usize,
    pub row: ResultRow,
    pub trace: Option<TestTrace>,
    pub error: Option<String>,
}

fn panic_message(payload: Box<dyn std::any::Any + Send>) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        (*s).to_string()
    } else if let Some(s) = payload.downcast_ref::<String>() {
        s.clone()
    } else {
        "panic".to_string()
    }
}

/// Executes one replication of one cell. Never fails: errors and panics
/// become rows with `decision = error`.
pub fn run_one(config: &ExperimentConfig, cell_idx: usize, run_id: u64) -> RunOutput {
    let cell = &config.cells[cell_idx];
    let seed = derive_seed(config.master_seed, &cell.key(), run_id);
    let k_star = match cell {
        CellSpec::LowerBound { k, .. } => stream_rng(seed, ARM_STREAM).random_range(1..=*k),
        _ => 1,
    };
    let spec = config.test;
    let mut row = ResultRow {
        scenario: cell.label(),
        d: 0,
        m: 0,
        gamma: f64::NAN,
        delta: spec.delta,
        sigma: f64::NAN,
        algorithm: spec.algorithm.name().to_string(),
        n: spec.n,
        boundary_scale: spec.boundary_scale,
        certified: false,
        run_id,
        seed,
        decision: "error".to_string(),
        correct: false,
        tau: None,
        tau_early: None,
        wall_ms: 0,
    };
    let started = Instant::now();
    let built = cell.build(k_star);
    if let Ok(inst) = &built {
        row.d = inst.d();
        row.m = inst.m();
        row.sigma = inst.sigma();
        row.gamma = signal_level(inst).gamma;
        row.certified = spec.test_config(inst.sigma(), seed, false).params.certified();
    }
    let gamma = row.gamma;
    let attempt = catch_unwind(AssertUnwindSafe(|| -> Result<TestTrace, HarnessError> {
        let inst = built?;
        let test_cfg = spec.test_config(inst.sigma(), seed, config.traces);
        let trace = if matches!(cell, CellSpec::LowerBound { .. }) {
            let mut env = Environment::sampled_index(inst.clone(), seed)?;
            run_test(&inst.view(), &test_cfg, &mut env)?
        } else {
            let mut env = Environment::gaussian(inst.clone(), seed);
            run_test(&inst.view(), &test_cfg, &mut env)?
        };
        Ok(trace)
    }));
    if config.record_wall_time {
        row.wall_ms = started.elapsed().as_millis() as u64;
    }
    match attempt {
        Ok(Ok(trace)) => {
            row.decision = trace.decision.name().to_string();
            row.correct = match trace.decision {
                Decision::Feasible => gamma > 0.0,
                Decision::Infeasible => gamma < 0.0,
                Decision::Timeout => false,
            };
            row.tau = trace.tau;
            row.tau_early = trace.tau_early;
            RunOutput { cell: cell_idx, row, trace: Some(trace), error: None }
        }
        Ok(Err(e)) => RunOutput { cell: cell_idx, row, trace: None, error: Some(e.to_string()) },
        Err(p) => RunOutput { cell: cell_idx, row, trace: None, error: Some(panic_message(p)) },
    }
}

/// Runs every cell and replication. Output is ordered by (cell, run) and
/// does not depend on `jobs`.
pub fn run_experiment(config: &ExperimentConfig, jobs: Option<usize>) -> Result<Vec<RunOutput>, HarnessError> {
    config.validate()?;
    let work: Vec<(usize, u64)> =
        (0..config.cells.len()).flat_map(|c| (0..config.replications).map(move |r| (c, r))).collect();
    let exec = || work.par_iter().map(|&(c, r)| run_one(config, c, r)).collect::<Vec<_>>();
    let out = match jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| HarnessError::Config(format!("thread pool: {e}")))?
            .install(exec),
        None => exec(),
    };
    Ok(out)
}
