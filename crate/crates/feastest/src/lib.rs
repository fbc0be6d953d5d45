//! Experiment harness for the sequential feasibility tests in
//! `feastest-core`: configuration, seeded parallel replication, summary
//! statistics and CSV/JSON artifacts.

use std::path::{Path, PathBuf};

pub mod config;
pub mod output;
pub mod runner;
pub mod summary;

pub use config::{CellSpec, ExperimentConfig, ScenarioGrid, TestSpec};
pub use output::emit;
pub use runner::{run_experiment, ResultRow, RunOutput};
pub use summary::{summarize, Aggregate};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] feastest_core::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("json: {0}")]
    Json(String),
}

impl HarnessError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.to_path_buf(), source }
    }

    pub fn csv(path: &Path, source: csv::Error) -> Self {
        HarnessError::Csv { path: path.to_path_buf(), source }
    }

    /// Whether the error stems from user input rather than the environment.
    pub fn is_config(&self) -> bool {
        matches!(self, HarnessError::Config(_) | HarnessError::Core(_))
    }
}
