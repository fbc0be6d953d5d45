//! CSV and JSON artifacts.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::runner::{ResultRow, RunOutput};
use crate::summary::{summarize, Aggregate};
use crate::HarnessError;

pub const RESULTS_FILE: &str = "results.csv";
pub const AGGREGATES_FILE: &str = "aggregates.csv";
pub const TRACES_DIR: &str = "traces";

fn write_csv<T: Serialize>(path: &Path, items: &[T]) -> Result<(), HarnessError> {
    let file = File::create(path).map_err(|e| HarnessError::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    for item in items {
        w.serialize(item).map_err(|e| HarnessError::csv(path, e))?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, HarnessError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| HarnessError::csv(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| HarnessError::csv(path, e))).collect()
}

pub fn write_results(path: &Path, rows: &[ResultRow]) -> Result<(), HarnessError> {
    write_csv(path, rows)
}

pub fn read_results(path: &Path) -> Result<Vec<ResultRow>, HarnessError> {
    read_csv(path)
}

pub fn write_aggregates(path: &Path, aggs: &[Aggregate]) -> Result<(), HarnessError> {
    write_csv(path, aggs)
}

pub fn read_aggregates(path: &Path) -> Result<Vec<Aggregate>, HarnessError> {
    read_csv(path)
}

/// File name of a run's trace: `<cell>_<run>.json`, the cell being its
/// zero-padded index in the configuration.
pub fn trace_file_name(cell: usize, run: u64) -> String {
    format!("cell{cell:03}_{run}.json")
}

/// Writes `results.csv`, `aggregates.csv` and, when enabled, one JSON trace
/// per successful run under `out`.
pub fn emit(out: &Path, config: &ExperimentConfig, runs: &[RunOutput]) -> Result<Vec<PathBuf>, HarnessError> {
    fs::create_dir_all(out).map_err(|e| HarnessError::io(out, e))?;
    let rows: Vec<ResultRow> = runs.iter().map(|r| r.row.clone()).collect();
    let results = out.join(RESULTS_FILE);
    write_results(&results, &rows)?;
    let aggregates = out.join(AGGREGATES_FILE);
    write_aggregates(&aggregates, &summarize(&rows))?;
    let mut written = vec![results, aggregates];
    if config.traces {
        let dir = out.join(TRACES_DIR);
        fs::create_dir_all(&dir).map_err(|e| HarnessError::io(&dir, e))?;
        for run in runs {
            let Some(trace) = &run.trace else { continue };
            let path = dir.join(trace_file_name(run.cell, run.row.run_id));
            let file = File::create(&path).map_err(|e| HarnessError::io(&path, e))?;
            let mut w = BufWriter::new(file);
            serde_json::to_writer(&mut w, trace).map_err(|e| HarnessError::Json(format!("{}: {e}", path.display())))?;
            w.flush().map_err(|e| HarnessError::io(&path, e))?;
            written.push(path);
        }
    }
    Ok(written)
}
