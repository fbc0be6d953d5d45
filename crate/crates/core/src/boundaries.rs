//! Anytime stopping boundaries and timescales.
//!
//! Logarithms are natural. Every `ln t` that could fall below one is
//! clamped to `max(ln t, 1)`, so all boundaries are finite and positive from
//! the first round.

use alloc::format;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::regression::check_delta;

/// Largest horizon searched by [`rejection_timescale`].
pub const TIMESCALE_CAP: u64 = 1_000_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Eogt,
    Teogt,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Eogt => "eogt",
            Algorithm::Teogt => "teogt",
        }
    }
}

/// Parameters shared by both boundary families.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryParams {
    pub delta: f64,
    /// Exponent of the schedule `delta_t = delta * t^{-n}`.
    #[serde(rename = "N")]
    pub n: f64,
    pub sigma: f64,
    pub family: Algorithm,
    #[serde(default = "default_scale")]
    pub boundary_scale: f64,
}

fn default_scale() -> f64 {
    1.0
}

impl BoundaryParams {
    pub fn new(family: Algorithm, delta: f64, n: f64, sigma: f64) -> Self {
        Self { delta, n, sigma, family, boundary_scale: 1.0 }
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.boundary_scale = scale;
        self
    }

    pub fn validate(&self) -> Result<()> {
        check_delta(self.delta)?;
        if !(self.n >= 1.0 && self.n.is_finite()) {
            return Err(invalid("N", format!("must be finite and at least 1, got {}", self.n)));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(invalid("sigma", "must be finite and positive"));
        }
        if !(self.boundary_scale > 0.0 && self.boundary_scale.is_finite()) {
            return Err(invalid("boundary_scale", "must be finite and positive"));
        }
        if self.family == Algorithm::Teogt && self.delta >= 0.5 {
            return Err(invalid("delta", "the tempered test needs delta < 1/2"));
        }
        Ok(())
    }

    /// Whether the run carries the theoretical reliability guarantee:
    /// unscaled boundaries, and `N > 1` for EOGT.
    pub fn certified(&self) -> bool {
        self.boundary_scale >= 1.0
            && match self.family {
                Algorithm::Eogt => self.n > 1.0,
                Algorithm::Teogt => self.delta < 0.5,
            }
    }

    /// `delta_t = delta * t^{-N}`.
    pub fn delta_at(&self, t: u64) -> f64 {
        self.delta * libm::pow(t as f64, -self.n)
    }
}

fn clamped_ln(t: f64) -> f64 {
    libm::log(t).max(1.0)
}

/// `sigma * sqrt(4 t ln(11 max(ln t, 1) / delta))`.
pub fn lil(t: u64, delta: f64, sigma: f64) -> f64 {
    let t = t as f64;
    sigma * libm::sqrt(4.0 * t * libm::log(11.0 * clamped_ln(t) / delta))
}

/// `scale * (rho_sum + LIL(t, delta / 2, sigma))`.
pub fn eogt_boundary(rho_sum: f64, t: u64, params: &BoundaryParams) -> f64 {
    params.boundary_scale * (rho_sum + lil(t, params.delta / 2.0, params.sigma))
}

/// The tempered-test boundaries `(Q^F, Q^I)`.
///
/// `sigma` multiplies only the LIL term; the polylogarithmic terms bound
/// selection bias rather than noise.
pub fn teogt_boundaries(t: u64, d: usize, m: usize, params: &BoundaryParams) -> (f64, f64) {
    let tf = t as f64;
    let df = d as f64;
    let l = clamped_ln(tf);
    let log_term = libm::log(8.0 * m as f64 / params.delta);
    let tail = lil(t, params.delta / 2.0, params.sigma);
    let qf = 45.0 * libm::sqrt(df * tf * l * l * l * l) * (df + log_term) + tail;
    let qi = 27.0 * libm::sqrt(df * tf * l * l * l) * (libm::sqrt(df) + log_term) + tail;
    (params.boundary_scale * qf, params.boundary_scale * qi)
}

/// A rejection timescale, or the search cap when none was found below it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Timescale {
    pub t: u64,
    pub overflow: bool,
}

/// `t |gamma| - rhs(t)`; the timescale is the first `t >= 2d` where this is
/// positive.
pub fn timescale_slack(t: u64, gamma: f64, delta: f64, n: f64, d: usize, m: usize) -> f64 {
    let tf = t as f64;
    let df = d as f64;
    let l2 = libm::log(2.0 * tf / df);
    let sched = libm::log(2.0 * m as f64 / delta) + n * libm::log(tf);
    let rhs = 2.0 * lil(t, delta / 2.0, 1.0) + 4.0 * df * libm::sqrt(tf) * l2 + 2.0 * libm::sqrt(df * tf * l2 * sched);
    tf * gamma.abs() - rhs
}

/// Horizon `T(gamma; delta, N)` by which EOGT stops with probability at least
/// `1 - delta`.
///
/// Found by doubling from `2d` and then bisecting; the slack is negative
/// then positive on every parameter range where the search is used.
pub fn rejection_timescale(gamma: f64, delta: f64, n: f64, d: usize, m: usize) -> Result<Timescale> {
    if gamma == 0.0 || !gamma.is_finite() {
        return Err(invalid("gamma", "the timescale needs a finite nonzero signal"));
    }
    check_delta(delta)?;
    if d == 0 || m == 0 {
        return Err(invalid("d", "dimension and constraint count must be positive"));
    }
    let ok = |t: u64| timescale_slack(t, gamma, delta, n, d, m) > 0.0;
    let start = 2 * d as u64;
    if ok(start) {
        return Ok(Timescale { t: start, overflow: false });
    }
    let mut lo = start;
    let mut hi = start;
    loop {
        if hi >= TIMESCALE_CAP {
            return Ok(Timescale { t: TIMESCALE_CAP, overflow: true });
        }
        hi = (hi * 2).min(TIMESCALE_CAP);
        if ok(hi) {
            break;
        }
        lo = hi;
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Timescale { t: hi, overflow: false })
}

/// `(1 - 2 delta)^3 K / (79 gamma^2)`, a lower bound on the expected stopping
/// time of any reliable test over the single-constraint `K`-armed family.
pub fn lower_bound_value(k: usize, gamma: f64, delta: f64) -> Result<f64> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(invalid("gamma", format!("must lie in (0, 1], got {gamma}")));
    }
    if !(delta > 0.0 && delta < 0.5) {
        return Err(invalid("delta", format!("must lie in (0, 1/2), got {delta}")));
    }
    let c = 1.0 - 2.0 * delta;
    Ok(c * c * c * k as f64 / (79.0 * gamma * gamma))
}
