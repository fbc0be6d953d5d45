//! Experiment configuration documents.

use std::fs;
use std::path::Path;

use feastest_core::boundaries::{Algorithm, BoundaryParams};
use feastest_core::engines::{TestConfig, DEFAULT_MAX_ROUNDS};
use feastest_core::environments::lower_bound_instance;
use feastest_core::instances::{make_section5_instance, Instance, Section5Scenario};
use serde::{Deserialize, Serialize};

use crate::HarnessError;

/// One cell of the experiment grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CellSpec {
    /// A two-constraint unit-ball benchmark instance.
    Section5 {
        scenario: Section5Scenario,
        d: usize,
        #[serde(default)]
        gamma: Option<f64>,
        #[serde(default = "default_sigma")]
        sigma: f64,
    },
    /// An explicit instance with Gaussian feedback.
    Instance { name: String, instance: Instance },
    /// The single-constraint `K`-armed family with randomised-index
    /// feedback. Without `k_star` the special arm is drawn uniformly per run.
    LowerBound {
        #[serde(rename = "K")]
        k: usize,
        gamma: f64,
        #[serde(default)]
        epsilon: Option<f64>,
        #[serde(default)]
        k_star: Option<usize>,
    },
}

fn default_sigma() -> f64 {
    0.1
}

impl CellSpec {
    /// Stable text key; per-run seeds are derived from it.
    pub fn key(&self) -> String {
        match self {
            CellSpec::Section5 { scenario, d, gamma, sigma } => {
                let g = if scenario.uses_gamma() { gamma.unwrap_or(f64::NAN) } else { f64::NAN };
                format!("section5/{}/d={d}/gamma={g}/sigma={sigma}", scenario.name())
            }
            CellSpec::Instance { name, .. } => format!("instance/{name}"),
            CellSpec::LowerBound { k, gamma, epsilon, k_star } => {
                format!("lower-bound/K={k}/gamma={gamma}/epsilon={epsilon:?}/k_star={k_star:?}")
            }
        }
    }

    /// Label used in the `scenario` column.
    pub fn label(&self) -> String {
        match self {
            CellSpec::Section5 { scenario, .. } => scenario.name().to_string(),
            CellSpec::Instance { name, .. } => name.clone(),
            CellSpec::LowerBound { .. } => "lower-bound".to_string(),
        }
    }

    /// Builds the instance for a run; `k_star` is only read by the
    /// lower-bound family when the cell leaves it open.
    pub fn build(&self, k_star: usize) -> Result<Instance, HarnessError> {
        let inst = match self {
            CellSpec::Section5 { scenario, d, gamma, sigma } => {
                let g = if scenario.uses_gamma() {
                    gamma.ok_or_else(|| HarnessError::Config(format!("cell {} needs gamma", self.key())))?
                } else {
                    std::f64::consts::FRAC_1_SQRT_2
                };
                make_section5_instance(*scenario, *d, g, *sigma)?
            }
            CellSpec::Instance { instance, .. } => instance.clone(),
            CellSpec::LowerBound { k, gamma, epsilon, k_star: fixed } => {
                lower_bound_instance(*k, *gamma, *epsilon, fixed.unwrap_or(k_star))?
            }
        };
        Ok(inst)
    }
}

fn default_delta() -> f64 {
    0.1
}

fn default_n() -> f64 {
    1.0
}

fn default_scale() -> f64 {
    1.0
}

fn default_max_rounds() -> u64 {
    DEFAULT_MAX_ROUNDS
}

/// Test settings shared by every cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestSpec {
    #[serde(default = "default_algorithm")]
    pub algorithm: Algorithm,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(rename = "N", default = "default_n")]
    pub n: f64,
    #[serde(default)]
    pub early_stop: bool,
    #[serde(default = "default_scale")]
    pub boundary_scale: f64,
    #[serde(default = "default_max_rounds")]
    pub max_rounds: u64,
}

fn default_algorithm() -> Algorithm {
    Algorithm::Eogt
}

impl Default for TestSpec {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Eogt,
            delta: default_delta(),
            n: default_n(),
            early_stop: false,
            boundary_scale: 1.0,
            max_rounds: DEFAULT_MAX_ROUNDS,
        }
    }
}

impl TestSpec {
    /// Engine configuration for an instance with noise scale `sigma`.
    pub fn test_config(&self, sigma: f64, seed: u64, record_steps: bool) -> TestConfig {
        let params = BoundaryParams::new(self.algorithm, self.delta, self.n, sigma).with_scale(self.boundary_scale);
        TestConfig { params, early_stop: self.early_stop, max_rounds: self.max_rounds, seed, record_steps }
    }
}

fn one() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub cells: Vec<CellSpec>,
    #[serde(default)]
    pub test: TestSpec,
    #[serde(default = "one")]
    pub replications: u64,
    #[serde(default)]
    pub master_seed: u64,
    /// Write one JSON trace per run.
    #[serde(default)]
    pub traces: bool,
    /// Fill `wall_ms`; off by default so output files are reproducible.
    #[serde(default)]
    pub record_wall_time: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            cells: Vec::new(),
            test: TestSpec::default(),
            replications: 1,
            master_seed: 0,
            traces: false,
            record_wall_time: false,
        }
    }
}

/// Named benchmark grids over the unit ball.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ScenarioGrid {
    /// Both d-sweep scenarios, `d` in 2..=10.
    #[value(name = "section5-d-sweep")]
    DSweep,
    /// Both gamma scenarios at `d = 4`, gamma in 0.2, 0.3, ..., 1.0.
    #[value(name = "section5-gamma-sweep")]
    GammaSweep,
}

/// The d-sweep cells over `ds`.
pub fn d_sweep_cells(ds: impl IntoIterator<Item = usize> + Clone, sigma: f64) -> Vec<CellSpec> {
    let mut cells = Vec::new();
    for scenario in [Section5Scenario::FeasibleDSweep, Section5Scenario::InfeasibleDSweep] {
        for d in ds.clone() {
            cells.push(CellSpec::Section5 { scenario, d, gamma: None, sigma });
        }
    }
    cells
}

/// The gamma-sweep cells for the given scenarios at dimension `d`.
pub fn gamma_sweep_cells(scenarios: &[Section5Scenario], d: usize, gammas: &[f64], sigma: f64) -> Vec<CellSpec> {
    let mut cells = Vec::new();
    for &scenario in scenarios {
        for &g in gammas {
            cells.push(CellSpec::Section5 { scenario, d, gamma: Some(g), sigma });
        }
    }
    cells
}

/// `0.2, 0.3, ..., 1.0` without accumulated rounding.
pub fn gamma_grid(from_tenths: u32, to_tenths: u32) -> Vec<f64> {
    (from_tenths..=to_tenths).map(|k| f64::from(k) / 10.0).collect()
}

impl ScenarioGrid {
    pub fn cells(self) -> Vec<CellSpec> {
        match self {
            ScenarioGrid::DSweep => d_sweep_cells(2..=10, 0.1),
            ScenarioGrid::GammaSweep => gamma_sweep_cells(
                &[Section5Scenario::FeasibleGamma, Section5Scenario::InfeasibleGamma],
                4,
                &gamma_grid(2, 10),
                0.1,
            ),
        }
    }

    /// Benchmark defaults: 50 replications, `delta = 0.1`, `N = 1`.
    pub fn config(self) -> ExperimentConfig {
        ExperimentConfig { cells: self.cells(), replications: 50, ..ExperimentConfig::default() }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            HarnessError::Config(msg) => HarnessError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Checks everything that can be checked before running.
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.cells.is_empty() {
            return Err(HarnessError::Config("no cells configured".into()));
        }
        if self.replications == 0 {
            return Err(HarnessError::Config("replications must be at least 1".into()));
        }
        for cell in &self.cells {
            let inst = cell.build(1)?;
            self.test.test_config(inst.sigma(), 0, false).validate()?;
        }
        Ok(())
    }
}
