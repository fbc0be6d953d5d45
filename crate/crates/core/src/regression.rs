//! Online regularised least squares with unit regulariser.
//!
//! After `t - 1` observations `(x_s, S_s)` the state holds
//! `V = I + sum x_s x_s^T`, `U = sum S_s x_s^T` and `A_hat = U V^{-1}`,
//! together with the running sum of local noise scales used by the EOGT
//! boundary.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};
use crate::instances::DOMAIN_SLACK;

/// Default bound on the number of L1 extreme points enumerated.
pub const DEFAULT_EXTREME_POINT_CAP: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionState {
    t: u64,
    v: DMatrix<f64>,
    v_inv: DMatrix<f64>,
    v_inv_sqrt: DMatrix<f64>,
    u: DMatrix<f64>,
    a_hat: DMatrix<f64>,
    logdet_v: f64,
    rho_sum: f64,
    action_bound: f64,
}

pub(crate) fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta < 1.0 {
        Ok(())
    } else {
        Err(invalid("delta", format!("must lie in (0, 1), got {delta}")))
    }
}

impl RegressionState {
    /// The empty state at `t = 1`: `V = I`, `A_hat = 0`.
    pub fn new(m: usize, d: usize) -> Self {
        Self {
            t: 1,
            v: DMatrix::identity(d, d),
            v_inv: DMatrix::identity(d, d),
            v_inv_sqrt: DMatrix::identity(d, d),
            u: DMatrix::zeros(m, d),
            a_hat: DMatrix::zeros(m, d),
            logdet_v: 0.0,
            rho_sum: 0.0,
            action_bound: 1.0,
        }
    }

    /// Raises the accepted action norm, e.g. to `sqrt 2` for lifted domains.
    pub fn with_action_bound(mut self, bound: f64) -> Self {
        self.action_bound = bound;
        self
    }

    /// Round index; the state summarises rounds `1..t`.
    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn m(&self) -> usize {
        self.u.nrows()
    }

    pub fn d(&self) -> usize {
        self.v.nrows()
    }

    pub fn v(&self) -> &DMatrix<f64> {
        &self.v
    }

    pub fn v_inv(&self) -> &DMatrix<f64> {
        &self.v_inv
    }

    /// Symmetric square root of `V^{-1}`.
    pub fn v_inv_sqrt(&self) -> &DMatrix<f64> {
        &self.v_inv_sqrt
    }

    pub fn u(&self) -> &DMatrix<f64> {
        &self.u
    }

    pub fn a_hat(&self) -> &DMatrix<f64> {
        &self.a_hat
    }

    pub fn logdet_v(&self) -> f64 {
        self.logdet_v
    }

    pub fn rho_sum(&self) -> f64 {
        self.rho_sum
    }

    /// `x^T V^{-1} x`.
    pub fn v_inv_quad(&self, x: &DVector<f64>) -> f64 {
        x.dot(&(&self.v_inv * x)).max(0.0)
    }

    /// `||x||_{V^{-1}}`.
    pub fn v_inv_norm(&self, x: &DVector<f64>) -> f64 {
        libm::sqrt(self.v_inv_quad(x))
    }

    /// Adds the observation `(x, s)` and the local noise scale spent on it.
    pub fn update(&mut self, x: &DVector<f64>, s: &DVector<f64>, rho_used: f64) -> Result<()> {
        if x.len() != self.d() || s.len() != self.m() {
            return Err(Error::InvalidDimension(format!("update expects x in R^{} and S in R^{}", self.d(), self.m())));
        }
        if x.iter().chain(s.iter()).any(|v| !v.is_finite()) || !rho_used.is_finite() {
            return Err(Error::NonFinite("regression update"));
        }
        let n = x.norm();
        if n > self.action_bound + DOMAIN_SLACK {
            return Err(invalid("x", format!("norm {n} exceeds {}", self.action_bound)));
        }
        let quad = self.v_inv_quad(x);
        self.logdet_v += libm::log1p(quad);
        self.v += x * x.transpose();
        self.u += s * x.transpose();
        self.refresh_factors()?;
        self.a_hat = &self.u * &self.v_inv;
        self.rho_sum += rho_used;
        self.t += 1;
        Ok(())
    }

    fn refresh_factors(&mut self) -> Result<()> {
        let chol = self.v.clone().cholesky().ok_or(Error::NonFinite("design matrix factorisation"))?;
        self.v_inv = chol.inverse();
        let eig = self.v.clone().symmetric_eigen();
        let inv_sqrt = eig.eigenvalues.map(|l| 1.0 / libm::sqrt(l.max(1.0)));
        self.v_inv_sqrt = &eig.eigenvectors * DMatrix::from_diagonal(&inv_sqrt) * eig.eigenvectors.transpose();
        Ok(())
    }

    /// `omega_t(delta) = 1 + sigma * sqrt(((ln(m / delta)) + logdet V / 2) / 2)`.
    pub fn confidence_radius(&self, delta: f64, sigma: f64) -> Result<f64> {
        check_delta(delta)?;
        let m = self.m() as f64;
        let inner = 0.5 * (libm::log(m / delta) + 0.5 * self.logdet_v);
        Ok(1.0 + sigma * libm::sqrt(inner.max(0.0)))
    }

    /// `rho_t(x; delta) = 2 omega_t(delta) ||x||_{V^{-1}}`.
    pub fn local_noise_scale(&self, x: &DVector<f64>, delta: f64, sigma: f64) -> Result<f64> {
        Ok(2.0 * self.confidence_radius(delta, sigma)? * self.v_inv_norm(x))
    }

    /// The `2d` signed offsets `+-radius * V^{-1/2} e_j`, ordered by axis
    /// then sign (`+` first).
    pub fn l1_offsets(&self, radius: f64) -> Vec<DVector<f64>> {
        let d = self.d();
        let mut out = Vec::with_capacity(2 * d);
        for j in 0..d {
            let col = self.v_inv_sqrt.column(j) * radius;
            out.push(col.clone_owned());
            out.push(-col);
        }
        out
    }

    /// Lazily enumerates the `(2d)^m` extreme points of the L1 confidence
    /// set `{A~ : ||(A~^i - A_hat^i) V^{1/2}||_1 <= radius}`.
    ///
    /// Row `i` of each point is `A_hat^i +- radius (V^{-1/2} e_j)^T`. Row 0 is
    /// the most significant digit of the enumeration; within a row, axes go
    /// in increasing order with `+` before `-`.
    pub fn l1_extreme_points(&self, radius: f64, cap: usize) -> Result<L1ExtremePoints<'_>> {
        if !(radius >= 0.0 && radius.is_finite()) {
            return Err(invalid("radius", "must be finite and nonnegative"));
        }
        let count = extreme_point_count(self.m(), self.d(), cap)?;
        Ok(L1ExtremePoints { a_hat: &self.a_hat, offsets: self.l1_offsets(radius), next: 0, count })
    }
}

/// `(2d)^m`, refusing values above `cap`.
pub fn extreme_point_count(m: usize, d: usize, cap: usize) -> Result<usize> {
    let base = 2 * d as u128;
    let mut count: u128 = 1;
    for _ in 0..m {
        count = count.saturating_mul(base);
    }
    if count > cap as u128 {
        Err(Error::EnumerationCap { count, cap })
    } else {
        Ok(count as usize)
    }
}

/// Iterator over the L1 confidence-set extreme points.
pub struct L1ExtremePoints<'a> {
    a_hat: &'a DMatrix<f64>,
    offsets: Vec<DVector<f64>>,
    next: usize,
    count: usize,
}

impl Iterator for L1ExtremePoints<'_> {
    type Item = DMatrix<f64>;

    fn next(&mut self) -> Option<DMatrix<f64>> {
        if self.next >= self.count {
            return None;
        }
        let k = self.offsets.len();
        let m = self.a_hat.nrows();
        let mut rest = self.next;
        let mut out = self.a_hat.clone();
        for i in (0..m).rev() {
            let digit = rest % k;
            rest /= k;
            let mut row = out.row_mut(i);
            row += self.offsets[digit].transpose();
        }
        self.next += 1;
        Some(out)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = self.count - self.next;
        (left, Some(left))
    }
}

impl ExactSizeIterator for L1ExtremePoints<'_> {}
