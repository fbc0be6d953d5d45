//! Convex minimisation over the probability simplex.
//!
//! For a fixed matrix `M` (rows `M^i`) and offsets `alpha`, the maximin value
//! of `min_i (M x - alpha)^i` over the unit ball equals
//!
//! ```text
//! min_{pi in simplex} ||pi^T M||_2 - pi^T alpha
//! ```
//!
//! The objective only depends on `M` through its Gram matrix `G = M M^T`,
//! which is what the routines here take. Two constraints reduce to a convex
//! scalar problem solved by golden-section search; more constraints use
//! projected gradient descent with backtracking, refined by golden-section
//! searches along every edge of the simplex.

use alloc::vec;
use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};

/// Interval width at which golden-section search stops.
pub const GOLDEN_TOL: f64 = 1e-12;

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Minimiser of `sqrt(pi^T G pi) - alpha^T pi` over the simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexMin {
    pub value: f64,
    pub pi: DVector<f64>,
}

/// Evaluates `sqrt(pi^T G pi) - alpha^T pi`.
pub fn objective(gram: &DMatrix<f64>, alpha: &DVector<f64>, pi: &DVector<f64>) -> f64 {
    let q = pi.dot(&(gram * pi));
    libm::sqrt(q.max(0.0)) - alpha.dot(pi)
}

/// Golden-section search for the minimum of a convex function on `[lo, hi]`.
pub fn golden_section(mut lo: f64, mut hi: f64, tol: f64, f: impl Fn(f64) -> f64) -> (f64, f64) {
    let mut c = hi - INV_PHI * (hi - lo);
    let mut d = lo + INV_PHI * (hi - lo);
    let mut fc = f(c);
    let mut fd = f(d);
    while hi - lo > tol {
        if fc <= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - INV_PHI * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + INV_PHI * (hi - lo);
            fd = f(d);
        }
    }
    let mid = 0.5 * (lo + hi);
    (mid, f(mid))
}

/// Minimises along the edge `p e_a + (1 - p) e_b`, endpoints included.
fn edge_min(gram: &DMatrix<f64>, alpha: &DVector<f64>, a: usize, b: usize) -> (f64, f64) {
    let (gaa, gbb, gab) = (gram[(a, a)], gram[(b, b)], gram[(a, b)]);
    let (aa, ab) = (alpha[a], alpha[b]);
    let f = |p: f64| {
        let r = 1.0 - p;
        let q = p * p * gaa + 2.0 * p * r * gab + r * r * gbb;
        libm::sqrt(q.max(0.0)) - (p * aa + r * ab)
    };
    let (p, fp) = golden_section(0.0, 1.0, GOLDEN_TOL, f);
    // Lowest index wins exact ties, so e_a (p = 1) is preferred over e_b.
    let mut best = (1.0, f(1.0));
    for (cand, val) in [(p, fp), (0.0, f(0.0))] {
        if val < best.1 {
            best = (cand, val);
        }
    }
    best
}

/// Euclidean projection onto the probability simplex.
pub fn project_to_simplex(v: &DVector<f64>) -> DVector<f64> {
    let mut u: Vec<f64> = v.iter().copied().collect();
    u.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (k, uk) in u.iter().enumerate() {
        cum += uk;
        let t = (cum - 1.0) / (k as f64 + 1.0);
        if uk - t > 0.0 {
            theta = t;
        }
    }
    v.map(|x| (x - theta).max(0.0))
}

fn gradient(gram: &DMatrix<f64>, alpha: &DVector<f64>, pi: &DVector<f64>) -> DVector<f64> {
    let z = gram * pi;
    let n = libm::sqrt(pi.dot(&z).max(0.0));
    if n > 1e-14 {
        z / n - alpha
    } else {
        -alpha
    }
}

fn projected_gradient(gram: &DMatrix<f64>, alpha: &DVector<f64>, start: DVector<f64>) -> SimplexMin {
    let mut pi = start;
    let mut val = objective(gram, alpha, &pi);
    let mut step = 1.0;
    for _ in 0..5_000 {
        let g = gradient(gram, alpha, &pi);
        let mut accepted = None;
        while step > 1e-18 {
            let cand = project_to_simplex(&(&pi - &g * step));
            let diff = &cand - &pi;
            let cval = objective(gram, alpha, &cand);
            if cval <= val + g.dot(&diff) + diff.norm_squared() / (2.0 * step) {
                accepted = Some((cand, cval, diff.norm()));
                break;
            }
            step *= 0.5;
        }
        let Some((cand, cval, moved)) = accepted else {
            break;
        };
        let improved = cval < val;
        if improved {
            pi = cand;
            val = cval;
        }
        if moved < 1e-13 || !improved {
            break;
        }
        step *= 2.0;
    }
    SimplexMin { value: val, pi }
}

/// Minimises `sqrt(pi^T G pi) - alpha^T pi` over the simplex of dimension
/// `alpha.len()`.
///
/// `gram` must be symmetric positive semidefinite with matching dimension.
pub fn minimize_over_simplex(gram: &DMatrix<f64>, alpha: &DVector<f64>) -> SimplexMin {
    let m = alpha.len();
    debug_assert_eq!(gram.nrows(), m);
    match m {
        0 => SimplexMin { value: 0.0, pi: DVector::zeros(0) },
        1 => {
            let pi = DVector::from_element(1, 1.0);
            SimplexMin { value: objective(gram, alpha, &pi), pi }
        }
        2 => {
            let (p, value) = edge_min(gram, alpha, 0, 1);
            SimplexMin { value, pi: DVector::from_vec(vec![p, 1.0 - p]) }
        }
        _ => {
            let mut best = projected_gradient(gram, alpha, DVector::from_element(m, 1.0 / m as f64));
            for a in 0..m {
                for b in (a + 1)..m {
                    let (p, v) = edge_min(gram, alpha, a, b);
                    if v < best.value {
                        let mut pi = DVector::zeros(m);
                        pi[a] = p;
                        pi[b] = 1.0 - p;
                        best = SimplexMin { value: v, pi };
                    }
                }
            }
            // Polish from the best point found; an interior optimum is
            // reached from there with far fewer backtracking steps.
            let polished = projected_gradient(gram, alpha, best.pi.clone());
            if polished.value < best.value {
                polished
            } else {
                best
            }
        }
    }
}
