//! Action and constraint selection for both tests.
//!
//! EOGT plays optimistically: it maximises over actions the most optimistic
//! value of `min_i (A~ x - alpha)^i` over matrices `A~` in the confidence set,
//! then measures the constraint that is smallest at the chosen pair.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::argmin_lowest;
use crate::error::{Error, Result};
use crate::instances::{DomainSpec, InstanceView};
use crate::minimax::{minimize_over_simplex, SimplexMin};
use crate::regression::{extreme_point_count, RegressionState, DEFAULT_EXTREME_POINT_CAP};

/// Norm under which `pi^T A~` is treated as the zero vector.
pub const DEGENERATE_NORM: f64 = 1e-12;
/// Iterations of each ascent run in the tempered ball selector.
pub const ASCENT_ITERS: usize = 200;

/// Which confidence set the selection optimised over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SetKind {
    Ellipsoid,
    L1,
    /// The tempered radius, no confidence set.
    Radius,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    pub x: DVector<f64>,
    /// Measured constraint, 0-based.
    pub i: usize,
    pub value: f64,
    pub a_tilde: Option<DMatrix<f64>>,
    pub pi: Option<DVector<f64>>,
    pub set: SetKind,
    /// The optimum over the domain is not guaranteed.
    pub approximate: bool,
    /// A random direction replaced a degenerate maximiser.
    pub fallback: bool,
}

/// Points to enumerate for a domain handled by enumeration, with a flag
/// telling whether enumeration is exact for the selection at hand.
fn candidate_points(domain: &DomainSpec, m: usize) -> Option<(Vec<DVector<f64>>, bool)> {
    match domain {
        DomainSpec::FiniteSet { points } => Some((points.clone(), true)),
        // A convex function of x peaks at a vertex; with one constraint the
        // optimistic value is convex.
        DomainSpec::Simplex { d } => {
            Some(((0..*d).map(|k| DVector::from_fn(*d, |j, _| if j == k { 1.0 } else { 0.0 })).collect(), m == 1))
        }
        DomainSpec::Lifted { inner } => candidate_points(inner, m).map(|(pts, exact)| {
            let lifted = pts
                .into_iter()
                .map(|p| {
                    let n = p.len();
                    let mut q = p.resize_vertically(n + 1, 0.0);
                    q[n] = 1.0;
                    q
                })
                .collect();
            (lifted, exact)
        }),
        DomainSpec::UnitBall { .. } => None,
    }
}

/// EOGT selection over an enumerable domain with the ellipsoidal set.
///
/// Row-wise optimism over the ellipsoid of radius `omega` adds exactly
/// `omega ||x||_{V^{-1}}` to every row, so each candidate is scored by
/// `min_i (A_hat x - alpha)^i + omega ||x||_{V^{-1}}`.
pub fn eogt_select_finite(state: &RegressionState, delta_t: f64, view: &InstanceView<'_>) -> Result<SelectionResult> {
    let (points, exact) = candidate_points(view.domain, view.m())
        .ok_or_else(|| Error::Unsupported(format!("finite selection over {:?}", view.domain)))?;
    let omega = state.confidence_radius(delta_t / 2.0, view.sigma)?;
    let a_hat = state.a_hat();
    let mut best: Option<(f64, usize, f64)> = None;
    for (k, p) in points.iter().enumerate() {
        let nrm = state.v_inv_norm(p);
        let v = (a_hat * p - view.alpha).min() + omega * nrm;
        if best.is_none_or(|(bv, _, _)| v > bv) {
            best = Some((v, k, nrm));
        }
    }
    let (value, k, nrm) = best.ok_or_else(|| Error::InvalidDimension("empty domain".into()))?;
    let x = points[k].clone();
    let mut a_tilde = a_hat.clone();
    if nrm > 0.0 {
        let shift = state.v_inv() * &x * (omega / nrm);
        for mut row in a_tilde.row_iter_mut() {
            row += shift.transpose();
        }
    }
    let scores = &a_tilde * &x - view.alpha;
    let i = argmin_lowest(scores.as_slice());
    Ok(SelectionResult {
        x,
        i,
        value,
        a_tilde: Some(a_tilde),
        pi: None,
        set: SetKind::Ellipsoid,
        approximate: !exact,
        fallback: false,
    })
}

/// Draws a uniformly random unit vector.
pub fn random_unit_vector(d: usize, rng: &mut impl Rng) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let n = v.norm();
        if n > 1e-9 {
            return v / n;
        }
    }
}

/// EOGT selection over the unit ball through the L1 relaxation.
///
/// Every extreme point `A~` of the L1 set of radius
/// `sqrt(d) omega_t(delta_t / 2)` is scored by
/// `min_pi ||pi^T A~|| - pi^T alpha`; the best is played along
/// `pi*^T A~* / ||pi*^T A~*||`.
pub fn eogt_select_ball(
    state: &RegressionState,
    delta_t: f64,
    view: &InstanceView<'_>,
    rng: &mut impl Rng,
) -> Result<SelectionResult> {
    if !matches!(view.domain, DomainSpec::UnitBall { .. }) {
        return Err(Error::Unsupported(format!("ball selection over {:?}", view.domain)));
    }
    let (m, d) = (view.m(), view.d());
    let count = extreme_point_count(m, d, DEFAULT_EXTREME_POINT_CAP)?;
    let omega = state.confidence_radius(delta_t / 2.0, view.sigma)?;
    let radius = libm::sqrt(d as f64) * omega;
    let offsets = state.l1_offsets(radius);
    let k = offsets.len();
    let a_hat = state.a_hat();

    // Candidate rows per constraint and their pairwise inner products.
    let rows: Vec<Vec<DVector<f64>>> = (0..m)
        .map(|i| {
            let base = a_hat.row(i).transpose();
            offsets.iter().map(|o| &base + o).collect()
        })
        .collect();
    let mut dots = vec![vec![0.0; k * k]; m * m];
    for a in 0..m {
        for b in a..m {
            for ka in 0..k {
                for kb in 0..k {
                    let v = rows[a][ka].dot(&rows[b][kb]);
                    dots[a * m + b][ka * k + kb] = v;
                    dots[b * m + a][kb * k + ka] = v;
                }
            }
        }
    }

    let mut digits = vec![0usize; m];
    let mut gram = DMatrix::zeros(m, m);
    let mut best: Option<(SimplexMin, Vec<usize>)> = None;
    for idx in 0..count {
        let mut rest = idx;
        for i in (0..m).rev() {
            digits[i] = rest % k;
            rest /= k;
        }
        for a in 0..m {
            for b in 0..m {
                gram[(a, b)] = dots[a * m + b][digits[a] * k + digits[b]];
            }
        }
        let sol = minimize_over_simplex(&gram, view.alpha);
        if best.as_ref().is_none_or(|(b, _)| sol.value > b.value) {
            best = Some((sol, digits.clone()));
        }
    }
    let (sol, digits) = best.ok_or_else(|| Error::InvalidDimension("no extreme points".into()))?;
    let mut a_tilde = DMatrix::zeros(m, d);
    for (i, dg) in digits.iter().enumerate() {
        a_tilde.set_row(i, &rows[i][*dg].transpose());
    }
    let dir = a_tilde.transpose() * &sol.pi;
    let n = dir.norm();
    let (x, fallback) = if n < DEGENERATE_NORM { (random_unit_vector(d, rng), true) } else { (dir / n, false) };
    let scores = &a_tilde * &x - view.alpha;
    let i = argmin_lowest(scores.as_slice());
    Ok(SelectionResult {
        x,
        i,
        value: sol.value,
        a_tilde: Some(a_tilde),
        pi: Some(sol.pi),
        set: SetKind::L1,
        approximate: false,
        fallback,
    })
}

/// EOGT selection dispatched on the domain.
pub fn eogt_select(
    state: &RegressionState,
    delta_t: f64,
    view: &InstanceView<'_>,
    rng: &mut impl Rng,
) -> Result<SelectionResult> {
    match view.domain {
        DomainSpec::UnitBall { .. } => eogt_select_ball(state, delta_t, view, rng),
        _ => eogt_select_finite(state, delta_t, view),
    }
}

/// `Rad_t(x) = sqrt(t / d) ||x||^2_{V^{-1}} + sqrt(d ||x||^2_{V^{-1}})`.
pub fn tempered_radius(state: &RegressionState, x: &DVector<f64>, t: u64) -> f64 {
    let d = state.d() as f64;
    let q = state.v_inv_quad(x);
    libm::sqrt(t as f64 / d) * q + libm::sqrt(d * q)
}

fn tempered_objective(state: &RegressionState, view: &InstanceView<'_>, x: &DVector<f64>, t: u64) -> f64 {
    (state.a_hat() * x - view.alpha).min() + tempered_radius(state, x, t)
}

/// The tempered program over the ball with its data laid out flat.
struct Tempered<'a> {
    /// `A_hat` row-major.
    a: Vec<f64>,
    /// `V^{-1}` (symmetric).
    vinv: &'a [f64],
    alpha: &'a [f64],
    d: usize,
    /// `sqrt(t / d)`.
    ct: f64,
    /// `sqrt(d)`.
    sd: f64,
}

impl<'a> Tempered<'a> {
    fn new(state: &'a RegressionState, view: &'a InstanceView<'_>, t: u64) -> Self {
        let d = state.d();
        let a_hat = state.a_hat();
        let a = (0..state.m()).flat_map(|i| a_hat.row(i).iter().copied().collect::<Vec<_>>()).collect();
        Self {
            a,
            vinv: state.v_inv().as_slice(),
            alpha: view.alpha.as_slice(),
            d,
            ct: libm::sqrt(t as f64 / d as f64),
            sd: libm::sqrt(d as f64),
        }
    }

    /// Value, active constraint and `x^T V^{-1} x` at `x`; leaves
    /// `V^{-1} x` in `vx`.
    fn eval(&self, x: &[f64], vx: &mut [f64]) -> (f64, usize, f64) {
        let mut q = 0.0;
        for (v, col) in vx.iter_mut().zip(self.vinv.chunks_exact(self.d)) {
            let acc: f64 = col.iter().zip(x).map(|(a, b)| a * b).sum();
            *v = acc;
        }
        for (a, b) in x.iter().zip(vx.iter()) {
            q += a * b;
        }
        let q = q.max(0.0);
        let mut stack = [0.0f64; 8];
        let mut heap = Vec::new();
        let m = self.alpha.len();
        let scores: &mut [f64] = if m <= stack.len() {
            &mut stack[..m]
        } else {
            heap.resize(m, 0.0);
            &mut heap
        };
        for ((sc, row), al) in scores.iter_mut().zip(self.a.chunks_exact(self.d)).zip(self.alpha) {
            *sc = row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() - al;
        }
        let i = argmin_lowest(scores);
        let min = scores[i];
        (min + self.ct * q + libm::sqrt(self.sd * self.sd * q), i, q)
    }
}

fn ascend(problem: &Tempered<'_>, start: &DVector<f64>) -> (DVector<f64>, f64) {
    let d = problem.d;
    let mut x: Vec<f64> = start.iter().copied().collect();
    project_ball_slice(&mut x);
    let mut vx = vec![0.0; d];
    let mut g = vec![0.0; d];
    let (mut val, mut i, mut q) = problem.eval(&x, &mut vx);
    let mut best_val = val;
    let mut best_x = x.clone();
    let c1 = 2.0 * problem.ct;
    for it in 1..=ASCENT_ITERS {
        let c2 = if q > 1e-300 { problem.sd / libm::sqrt(q) } else { 0.0 };
        let row = &problem.a[i * d..(i + 1) * d];
        let mut gn = 0.0;
        for c in 0..d {
            g[c] = row[c] + vx[c] * (c1 + c2);
            gn += g[c] * g[c];
        }
        let gn = libm::sqrt(gn);
        if gn < 1e-15 {
            break;
        }
        let step = 1.0 / (gn * libm::sqrt(it as f64));
        for (xc, gc) in x.iter_mut().zip(&g) {
            *xc += gc * step;
        }
        project_ball_slice(&mut x);
        (val, i, q) = problem.eval(&x, &mut vx);
        if val > best_val {
            best_val = val;
            best_x.copy_from_slice(&x);
        }
    }
    (DVector::from_vec(best_x), best_val)
}

fn project_ball_slice(x: &mut [f64]) {
    let n = libm::sqrt(x.iter().map(|v| v * v).sum::<f64>());
    if n > 1.0 {
        x.iter_mut().for_each(|v| *v /= n);
    }
}

/// Tempered selection: `argmax_x min_i (A_hat x - alpha)^i + Rad_t(x)`.
///
/// Enumerable domains are solved exactly. Over the ball the program is
/// nonconvex; it is attacked by projected supergradient ascent from
/// `hint`, `prev` and the `2d` signed axes, and flagged approximate.
pub fn teogt_select(
    state: &RegressionState,
    view: &InstanceView<'_>,
    t: u64,
    hint: Option<&DVector<f64>>,
    prev: Option<&DVector<f64>>,
) -> Result<SelectionResult> {
    let (x, value, approximate) = match candidate_points(view.domain, view.m()) {
        Some((points, exact)) => {
            let mut best: Option<(f64, usize)> = None;
            for (k, p) in points.iter().enumerate() {
                let v = tempered_objective(state, view, p, t);
                if best.is_none_or(|(bv, _)| v > bv) {
                    best = Some((v, k));
                }
            }
            let (v, k) = best.ok_or_else(|| Error::InvalidDimension("empty domain".into()))?;
            (points[k].clone(), v, !exact)
        }
        None => {
            if !matches!(view.domain, DomainSpec::UnitBall { .. }) {
                return Err(Error::Unsupported(format!("tempered selection over {:?}", view.domain)));
            }
            let d = view.d();
            let mut starts: Vec<DVector<f64>> = Vec::with_capacity(2 * d + 2);
            starts.extend(hint.cloned());
            starts.extend(prev.cloned());
            for j in 0..d {
                for s in [1.0, -1.0] {
                    starts.push(DVector::from_fn(d, |k, _| if k == j { s } else { 0.0 }));
                }
            }
            let problem = Tempered::new(state, view, t);
            let mut best: Option<(DVector<f64>, f64)> = None;
            for s in starts {
                let (x, v) = ascend(&problem, &s);
                if best.as_ref().is_none_or(|(_, bv)| v > *bv) {
                    best = Some((x, v));
                }
            }
            let (x, v) = best.expect("at least 2d starts");
            (x, v, true)
        }
    };
    let scores = state.a_hat() * &x - view.alpha;
    let i = argmin_lowest(scores.as_slice());
    Ok(SelectionResult { x, i, value, a_tilde: None, pi: None, set: SetKind::Radius, approximate, fallback: false })
}
