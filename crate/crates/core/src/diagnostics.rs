//! Environment-side decomposition of a recorded test run.
//!
//! With `Delta_t = (Gamma - (A x_t - alpha)^{i_t}) sign(Gamma)`,
//! `R_t = sum Delta_s` and `Z_t = sum zeta_s^{i_s}`, the statistic satisfies
//! `stat_t = t Gamma - sign(Gamma) R_t + Z_t` exactly. `N_t` is
//! `||x_t||^2_{V_t^{-1}}` before the round's update.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::engines::{CompensatedSum, TestTrace};
use crate::error::{Error, Result};
use crate::instances::{signal_level, Instance};
use crate::regression::RegressionState;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub gamma: f64,
    pub delta: Vec<f64>,
    pub regret: Vec<f64>,
    pub z: Vec<f64>,
    pub n: Vec<f64>,
    /// `max_t |stat_t - (t Gamma - sign(Gamma) R_t + Z_t)|`.
    pub max_residual: f64,
    /// `sum_{s <= t} N_s <= 2 d ln(1 + (t + 1) / d)` held at every round.
    pub cumulative_n_ok: bool,
}

pub fn diagnostics(trace: &TestTrace, inst: &Instance, noise: Option<&[DVector<f64>]>) -> Result<DiagnosticsRecord> {
    let noise = noise.ok_or_else(|| Error::DiagnosticsUnavailable("no noise record".into()))?;
    let rounds = &trace.rounds;
    if rounds.len() as u64 != trace.rounds_played {
        return Err(Error::DiagnosticsUnavailable("trace was run without per-round records".into()));
    }
    if noise.len() != rounds.len() {
        return Err(Error::DiagnosticsUnavailable(format!(
            "noise record has {} rounds, trace has {}",
            noise.len(),
            rounds.len()
        )));
    }
    let gamma = signal_level(inst).gamma;
    let sign = if gamma < 0.0 { -1.0 } else { 1.0 };
    let a = inst.latent_matrix();
    let alpha = inst.alpha();
    let d = inst.d();
    let mut replay = RegressionState::new(inst.m(), d).with_action_bound(f64::INFINITY);
    let zero_s = DVector::zeros(inst.m());

    let mut out = DiagnosticsRecord {
        gamma,
        delta: Vec::with_capacity(rounds.len()),
        regret: Vec::with_capacity(rounds.len()),
        z: Vec::with_capacity(rounds.len()),
        n: Vec::with_capacity(rounds.len()),
        max_residual: 0.0,
        cumulative_n_ok: true,
    };
    let mut regret = CompensatedSum::default();
    let mut z = CompensatedSum::default();
    let mut n_sum = 0.0;
    for (k, (rec, zeta)) in rounds.iter().zip(noise).enumerate() {
        let t = (k + 1) as f64;
        let x = DVector::from_column_slice(&rec.x);
        let slack = a.row(rec.i).dot(&x.transpose()) - alpha[rec.i];
        let delta = (gamma - slack) * sign;
        regret.add(delta);
        z.add(zeta[rec.i]);
        let n = replay.v_inv_quad(&x);
        replay.update(&x, &zero_s, 0.0)?;
        n_sum += n;
        if n_sum > 2.0 * d as f64 * libm::log(1.0 + (t + 1.0) / d as f64) {
            out.cumulative_n_ok = false;
        }
        let predicted = t * gamma - sign * regret.value() + z.value();
        out.max_residual = out.max_residual.max(libm::fabs(rec.stat - predicted));
        out.delta.push(delta);
        out.regret.push(regret.value());
        out.z.push(z.value());
        out.n.push(n);
    }
    Ok(out)
}
