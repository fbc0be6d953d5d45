//! Sequential feasibility tests for unknown linear programs under bandit
//! feedback.
//!
//! A learner repeatedly plays actions `x` from a known domain and observes
//! noisy scores `S = A x + noise` for a latent matrix `A`. The tests in
//! [`engines`] decide, with error probability at most `delta`, whether some
//! action satisfies `A x >= alpha`.
//!
//! The crate is `no_std` and only needs an allocator. IO, configuration and
//! parallel experiment running live in the `feastest` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod boundaries;
pub mod diagnostics;
pub mod engines;
pub mod environments;
mod error;
pub mod instances;
pub mod minimax;
pub mod regression;
pub mod seed;
pub mod selectors;

pub use boundaries::{Algorithm, BoundaryParams, Timescale};
pub use diagnostics::{diagnostics, DiagnosticsRecord};
pub use engines::{run_eogt, run_teogt, run_test, Decision, StepRecord, StopReason, TestConfig, TestTrace};
pub use environments::{Environment, Feedback, NoiseMode};
pub use error::{Error, Result};
pub use instances::{DomainSpec, Instance, InstanceView, Section5Scenario, SignalLevel, SignalMethod};
pub use regression::RegressionState;
pub use selectors::SelectionResult;

/// Absolute tolerance under which two values are treated as tied.
/// Ties always resolve to the lowest index.
pub const TIE_TOL: f64 = 1e-12;

/// Index of the smallest entry, lowest index among entries within
/// [`TIE_TOL`] of the minimum.
pub(crate) fn argmin_lowest(values: &[f64]) -> usize {
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    values.iter().position(|v| *v <= min + TIE_TOL).unwrap_or(0)
}
