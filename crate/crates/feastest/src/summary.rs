//! Per-cell aggregates of result rows.

use serde::{Deserialize, Serialize};

use crate::runner::ResultRow;

/// One line of `aggregates.csv`. Stopping-time statistics cover the runs
/// where the time is defined; medians use the lower-median convention.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
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
    pub runs: u64,
    /// Decisions contradicting the sign of the signal level.
    pub incorrect: u64,
    pub timeouts: u64,
    /// Runs that failed before producing a decision.
    pub errors: u64,
    pub tau_count: u64,
    pub tau_mean: Option<f64>,
    pub tau_sd: Option<f64>,
    pub tau_median: Option<u64>,
    pub tau_early_count: u64,
    pub tau_early_mean: Option<f64>,
    pub tau_early_sd: Option<f64>,
    pub tau_early_median: Option<u64>,
}

/// Mean, sample standard deviation (zero for a single value) and lower
/// median.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub count: u64,
    pub mean: f64,
    pub sd: f64,
    pub median: u64,
}

pub fn moments(values: &[u64]) -> Option<Moments> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().map(|&v| v as f64).sum::<f64>() / n;
    let sd = if values.len() > 1 {
        let ss: f64 = values.iter().map(|&v| (v as f64 - mean).powi(2)).sum();
        (ss / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let mut sorted = values.to_vec();
    sorted.sort_unstable();
    let median = sorted[(sorted.len() - 1) / 2];
    Some(Moments { count: values.len() as u64, mean, sd, median })
}

type CellKey = (String, usize, usize, u64, u64, u64, String, u64, u64);

fn cell_key(r: &ResultRow) -> CellKey {
    (
        r.scenario.clone(),
        r.d,
        r.m,
        r.gamma.to_bits(),
        r.delta.to_bits(),
        r.sigma.to_bits(),
        r.algorithm.clone(),
        r.n.to_bits(),
        r.boundary_scale.to_bits(),
    )
}

/// One aggregate per cell, in order of first appearance.
pub fn summarize(rows: &[ResultRow]) -> Vec<Aggregate> {
    let mut keys: Vec<CellKey> = Vec::new();
    let mut groups: Vec<Vec<&ResultRow>> = Vec::new();
    for r in rows {
        let k = cell_key(r);
        match keys.iter().position(|x| *x == k) {
            Some(p) => groups[p].push(r),
            None => {
                keys.push(k);
                groups.push(vec![r]);
            }
        }
    }
    groups
        .into_iter()
        .map(|g| {
            let first = g[0];
            let taus: Vec<u64> = g.iter().filter_map(|r| r.tau).collect();
            let early: Vec<u64> = g.iter().filter_map(|r| r.tau_early).collect();
            let t = moments(&taus);
            let e = moments(&early);
            let decided = |r: &&&ResultRow| r.decision == "feasible" || r.decision == "infeasible";
            Aggregate {
                scenario: first.scenario.clone(),
                d: first.d,
                m: first.m,
                gamma: first.gamma,
                delta: first.delta,
                sigma: first.sigma,
                algorithm: first.algorithm.clone(),
                n: first.n,
                boundary_scale: first.boundary_scale,
                certified: first.certified,
                runs: g.len() as u64,
                incorrect: g.iter().filter(decided).filter(|r| !r.correct).count() as u64,
                timeouts: g.iter().filter(|r| r.decision == "timeout").count() as u64,
                errors: g.iter().filter(|r| r.decision == "error").count() as u64,
                tau_count: taus.len() as u64,
                tau_mean: t.map(|m| m.mean),
                tau_sd: t.map(|m| m.sd),
                tau_median: t.map(|m| m.median),
                tau_early_count: early.len() as u64,
                tau_early_mean: e.map(|m| m.mean),
                tau_early_sd: e.map(|m| m.sd),
                tau_early_median: e.map(|m| m.median),
            }
        })
        .collect()
}
