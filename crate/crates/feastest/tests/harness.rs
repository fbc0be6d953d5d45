//! Harness behaviour: configuration, summaries, artifacts and determinism.

use std::fs;
use std::path::Path;

use feastest::config::{d_sweep_cells, gamma_grid};
use feastest::output::{
    read_aggregates, read_results, trace_file_name, write_aggregates, write_results, AGGREGATES_FILE, RESULTS_FILE,
    TRACES_DIR,
};
use feastest::summary::moments;
use feastest::{emit, run_experiment, summarize, CellSpec, ExperimentConfig, ScenarioGrid, TestSpec};
use feastest_core::boundaries::Algorithm;
use feastest_core::engines::TestTrace;
use feastest_core::instances::{DomainSpec, Instance, Section5Scenario};
use nalgebra::{DMatrix, DVector};

fn fixture(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn small_config() -> ExperimentConfig {
    ExperimentConfig {
        cells: vec![
            CellSpec::Section5 { scenario: Section5Scenario::FeasibleGamma, d: 2, gamma: Some(0.8), sigma: 0.1 },
            CellSpec::Section5 { scenario: Section5Scenario::InfeasibleDSweep, d: 3, gamma: None, sigma: 0.1 },
            CellSpec::LowerBound { k: 3, gamma: 0.5, epsilon: Some(0.1), k_star: None },
        ],
        replications: 4,
        master_seed: 2024,
        ..ExperimentConfig::default()
    }
}

#[test]
fn golden_aggregates_from_fixture_rows() {
    let rows = read_results(&fixture("results_small.csv")).unwrap();
    assert_eq!(rows.len(), 5);
    let aggs = summarize(&rows);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join(AGGREGATES_FILE);
    write_aggregates(&path, &aggs).unwrap();
    let got = fs::read_to_string(&path).unwrap();
    let want = fs::read_to_string(fixture("aggregates_small.csv")).unwrap();
    assert_eq!(got, want);
    assert_eq!(read_aggregates(&path).unwrap(), aggs);
}

#[test]
fn results_round_trip_byte_for_byte() {
    let src = fixture("results_small.csv");
    let rows = read_results(&src).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join(RESULTS_FILE);
    write_results(&path, &rows).unwrap();
    assert_eq!(fs::read_to_string(&path).unwrap(), fs::read_to_string(&src).unwrap());
    assert_eq!(rows[1].tau_early, None);
    assert_eq!(rows[0].tau_early, Some(20));
}

#[test]
fn moments_use_sample_sd_and_lower_median() {
    assert_eq!(moments(&[]), None);
    let one = moments(&[7]).unwrap();
    assert_eq!((one.mean, one.sd, one.median), (7.0, 0.0, 7));
    let four = moments(&[4, 1, 3, 2]).unwrap();
    assert_eq!(four.median, 2);
    assert_eq!(four.mean, 2.5);
    assert!((four.sd - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
}

#[test]
fn summary_counts_each_run_once() {
    let cfg = small_config();
    let runs = run_experiment(&cfg, Some(1)).unwrap();
    let rows: Vec<_> = runs.iter().map(|r| r.row.clone()).collect();
    let aggs = summarize(&rows);
    assert_eq!(aggs.len(), 3);
    assert_eq!(aggs.iter().map(|a| a.runs).sum::<u64>(), 12);
    for a in &aggs {
        assert_eq!(
            a.incorrect + a.timeouts + a.errors,
            rows.iter().filter(|r| r.scenario == a.scenario && r.d == a.d && !r.correct).count() as u64
        );
    }
    assert!(aggs.iter().all(|a| a.incorrect == 0 && a.errors == 0));
}

#[test]
fn parallel_and_serial_runs_write_identical_files() {
    let mut cfg = small_config();
    cfg.traces = true;
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    emit(a.path(), &cfg, &run_experiment(&cfg, Some(1)).unwrap()).unwrap();
    emit(b.path(), &cfg, &run_experiment(&cfg, Some(4)).unwrap()).unwrap();
    for f in [RESULTS_FILE, AGGREGATES_FILE] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    let traces: Vec<_> = fs::read_dir(a.path().join(TRACES_DIR)).unwrap().collect();
    assert_eq!(traces.len(), 12);
    let name = trace_file_name(1, 3);
    let ta = fs::read(a.path().join(TRACES_DIR).join(&name)).unwrap();
    assert_eq!(ta, fs::read(b.path().join(TRACES_DIR).join(&name)).unwrap());
    let trace: TestTrace = serde_json::from_slice(&ta).unwrap();
    assert_eq!(trace.rounds.len() as u64, trace.rounds_played);
}

#[test]
fn seeds_follow_cells_not_positions() {
    let cfg = small_config();
    let mut swapped = cfg.clone();
    swapped.cells.reverse();
    let a = run_experiment(&cfg, Some(1)).unwrap();
    let b = run_experiment(&swapped, Some(1)).unwrap();
    for r in &a {
        let twin = b.iter().find(|s| s.row.scenario == r.row.scenario && s.row.run_id == r.row.run_id).unwrap();
        assert_eq!(twin.row, r.row);
    }
    let mut reseeded = cfg.clone();
    reseeded.master_seed += 1;
    let c = run_experiment(&reseeded, Some(1)).unwrap();
    assert_ne!(a[0].row.seed, c[0].row.seed);
}

#[test]
fn failing_runs_become_error_rows() {
    // Lifted domains are outside what the selectors handle; every run fails
    // without taking the experiment down.
    let inst = Instance::new(
        DomainSpec::Lifted { inner: Box::new(DomainSpec::UnitBall { d: 2 }) },
        DMatrix::from_row_slice(1, 3, &[0.5, 0.0, 0.0]),
        DVector::zeros(1),
        0.1,
    )
    .unwrap();
    let cfg = ExperimentConfig {
        cells: vec![CellSpec::Instance { name: "lifted".into(), instance: inst }],
        replications: 2,
        ..ExperimentConfig::default()
    };
    let runs = run_experiment(&cfg, Some(1)).unwrap();
    assert!(runs.iter().all(|r| r.row.decision == "error" && r.error.is_some() && r.trace.is_none()));
    let rows: Vec<_> = runs.iter().map(|r| r.row.clone()).collect();
    assert_eq!(summarize(&rows)[0].errors, 2);
}

#[test]
fn invalid_configs_are_rejected_up_front() {
    assert!(ExperimentConfig::from_json("{").unwrap_err().is_config());
    let empty = ExperimentConfig::default();
    assert!(run_experiment(&empty, None).unwrap_err().is_config());
    let mut bad = small_config();
    bad.test = TestSpec { algorithm: Algorithm::Teogt, delta: 0.7, ..TestSpec::default() };
    assert!(run_experiment(&bad, None).unwrap_err().is_config());
    let mut missing = small_config();
    missing.cells =
        vec![CellSpec::Section5 { scenario: Section5Scenario::FeasibleGamma, d: 2, gamma: None, sigma: 0.1 }];
    assert!(missing.validate().is_err());
}

#[test]
fn config_documents_parse_with_defaults() {
    let cfg = ExperimentConfig::from_json(
        r#"{"cells": [{"kind": "section5", "scenario": "feasible-gamma", "d": 3, "gamma": 0.4},
                      {"kind": "lower-bound", "K": 5, "gamma": 0.5}],
            "test": {"algorithm": "teogt", "boundary_scale": 0.02}}"#,
    )
    .unwrap();
    assert_eq!(cfg.replications, 1);
    assert_eq!(cfg.test.delta, 0.1);
    assert_eq!(cfg.test.n, 1.0);
    assert_eq!(cfg.test.algorithm, Algorithm::Teogt);
    assert!(!cfg.record_wall_time);
    match &cfg.cells[0] {
        CellSpec::Section5 { sigma, .. } => assert_eq!(*sigma, 0.1),
        other => panic!("unexpected cell {other:?}"),
    }
    let back = ExperimentConfig::from_json(&serde_json::to_string(&cfg).unwrap()).unwrap();
    assert_eq!(back, cfg);
}

#[test]
fn built_in_grids_have_the_documented_shape() {
    let d = ScenarioGrid::DSweep.config();
    assert_eq!(d.cells.len() as u64 * d.replications, 900);
    assert_eq!(d.cells, d_sweep_cells(2..=10, 0.1));
    let g = ScenarioGrid::GammaSweep.config();
    assert_eq!(g.cells.len(), 18);
    assert_eq!(gamma_grid(2, 10), vec![0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0]);
    assert!(d.validate().is_ok() && g.validate().is_ok());
}

#[test]
fn wall_time_is_only_recorded_on_request() {
    let mut cfg = small_config();
    cfg.replications = 1;
    assert!(run_experiment(&cfg, Some(1)).unwrap().iter().all(|r| r.row.wall_ms == 0));
    cfg.record_wall_time = true;
    assert!(run_experiment(&cfg, Some(1)).is_ok());
}
