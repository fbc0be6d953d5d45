//! Problem instances, action domains and the ground-truth signal level.
//!
//! An [`Instance`] holds the latent constraint matrix `A` (m x d), the known
//! tolerance vector `alpha`, the action domain and the noise scale. Only
//! environments and oracles read `A`; testers see an [`InstanceView`].

use alloc::boxed::Box;
use alloc::format;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::minimax::minimize_over_simplex;

/// Slack allowed on norm and membership checks.
pub const DOMAIN_SLACK: f64 = 1e-9;
/// Default per-coordinate resolution of the simplex grid fallback.
pub const DEFAULT_GRID_RESOLUTION: f64 = 1e-2;
/// Maximum number of grid points the simplex fallback will visit.
pub const GRID_POINT_CAP: u64 = 2_000_000;

/// Action domain. Every point has Euclidean norm at most one, except the
/// lifted domain produced by [`augment_tolerance`], whose points carry an
/// extra constant coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DomainDoc", into = "DomainDoc")]
pub enum DomainSpec {
    UnitBall {
        d: usize,
    },
    Simplex {
        d: usize,
    },
    FiniteSet {
        points: Vec<DVector<f64>>,
    },
    /// `{(x, 1) : x in inner}`.
    Lifted {
        inner: Box<DomainSpec>,
    },
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
enum DomainDoc {
    UnitBall { d: usize },
    Simplex { d: usize },
    FiniteSet { points: Vec<Vec<f64>> },
    Lifted { inner: Box<DomainDoc> },
}

impl From<DomainSpec> for DomainDoc {
    fn from(d: DomainSpec) -> Self {
        match d {
            DomainSpec::UnitBall { d } => DomainDoc::UnitBall { d },
            DomainSpec::Simplex { d } => DomainDoc::Simplex { d },
            DomainSpec::FiniteSet { points } => {
                DomainDoc::FiniteSet { points: points.into_iter().map(|p| p.iter().copied().collect()).collect() }
            }
            DomainSpec::Lifted { inner } => DomainDoc::Lifted { inner: Box::new(DomainDoc::from(*inner)) },
        }
    }
}

impl TryFrom<DomainDoc> for DomainSpec {
    type Error = Error;

    fn try_from(doc: DomainDoc) -> Result<Self> {
        let spec = match doc {
            DomainDoc::UnitBall { d } => DomainSpec::UnitBall { d },
            DomainDoc::Simplex { d } => DomainSpec::Simplex { d },
            DomainDoc::FiniteSet { points } => {
                DomainSpec::FiniteSet { points: points.into_iter().map(DVector::from_vec).collect() }
            }
            DomainDoc::Lifted { inner } => DomainSpec::Lifted { inner: Box::new(DomainSpec::try_from(*inner)?) },
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl DomainSpec {
    /// Builds a finite domain, validating dimensions and norms.
    pub fn finite(points: Vec<DVector<f64>>) -> Result<Self> {
        let spec = DomainSpec::FiniteSet { points };
        spec.validate()?;
        Ok(spec)
    }

    /// Ambient dimension of the actions.
    pub fn dim(&self) -> usize {
        match self {
            DomainSpec::UnitBall { d } | DomainSpec::Simplex { d } => *d,
            DomainSpec::FiniteSet { points } => points.first().map_or(0, |p| p.len()),
            DomainSpec::Lifted { inner } => inner.dim() + 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            DomainSpec::UnitBall { d } | DomainSpec::Simplex { d } => {
                if *d == 0 {
                    return Err(Error::InvalidDimension("domain dimension must be at least 1".to_string()));
                }
            }
            DomainSpec::FiniteSet { points } => {
                let Some(first) = points.first() else {
                    return Err(Error::InvalidDimension("finite domain is empty".to_string()));
                };
                let d = first.len();
                if d == 0 {
                    return Err(Error::InvalidDimension("finite domain points are empty".to_string()));
                }
                for (k, p) in points.iter().enumerate() {
                    if p.len() != d {
                        return Err(Error::InvalidDimension(format!(
                            "point {k} has dimension {}, expected {d}",
                            p.len()
                        )));
                    }
                    if p.iter().any(|v| !v.is_finite()) {
                        return Err(Error::NonFinite("finite domain point"));
                    }
                    if p.norm() > 1.0 + DOMAIN_SLACK {
                        return Err(invalid("points", format!("point {k} has norm {} > 1", p.norm())));
                    }
                }
            }
            DomainSpec::Lifted { inner } => inner.validate()?,
        }
        Ok(())
    }

    /// Checks membership up to [`DOMAIN_SLACK`].
    pub fn check_contains(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::InvalidDimension(format!(
                "action has dimension {}, domain has {}",
                x.len(),
                self.dim()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("action"));
        }
        let violation = match self {
            DomainSpec::UnitBall { .. } => x.norm() - 1.0,
            DomainSpec::Simplex { .. } => {
                let neg = x.iter().fold(0.0_f64, |acc, v| acc.max(-v));
                neg.max((x.sum() - 1.0).abs())
            }
            DomainSpec::FiniteSet { points } => points.iter().map(|p| (p - x).amax()).fold(f64::INFINITY, f64::min),
            DomainSpec::Lifted { inner } => {
                let d = inner.dim();
                let tail = (x[d] - 1.0).abs();
                if tail > DOMAIN_SLACK {
                    tail
                } else {
                    return inner.check_contains(&x.rows(0, d).into_owned());
                }
            }
        };
        if violation > DOMAIN_SLACK {
            Err(Error::OutsideDomain { violation })
        } else {
            Ok(())
        }
    }
}

/// A feasibility-testing instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "InstanceDoc", into = "InstanceDoc")]
pub struct Instance {
    domain: DomainSpec,
    a: DMatrix<f64>,
    alpha: DVector<f64>,
    sigma: f64,
}

#[derive(Serialize, Deserialize)]
struct InstanceDoc {
    domain: DomainSpec,
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    alpha: Vec<f64>,
    sigma: f64,
}

impl From<Instance> for InstanceDoc {
    fn from(inst: Instance) -> Self {
        let a = (0..inst.a.nrows()).map(|i| inst.a.row(i).iter().copied().collect()).collect();
        InstanceDoc { domain: inst.domain, a, alpha: inst.alpha.iter().copied().collect(), sigma: inst.sigma }
    }
}

impl TryFrom<InstanceDoc> for Instance {
    type Error = Error;

    fn try_from(doc: InstanceDoc) -> Result<Self> {
        let m = doc.a.len();
        let d = doc.a.first().map_or(0, |r| r.len());
        if doc.a.iter().any(|r| r.len() != d) {
            return Err(Error::InvalidDimension("rows of A have unequal lengths".to_string()));
        }
        let flat: Vec<f64> = doc.a.into_iter().flatten().collect();
        let a = DMatrix::from_row_slice(m, d, &flat);
        Instance::new(doc.domain, a, DVector::from_vec(doc.alpha), doc.sigma)
    }
}

impl Instance {
    /// Validates and builds an instance.
    ///
    /// Rows of `A` must have norm at most one. For a lifted domain the check
    /// applies to the unaugmented columns only.
    pub fn new(domain: DomainSpec, a: DMatrix<f64>, alpha: DVector<f64>, sigma: f64) -> Result<Self> {
        domain.validate()?;
        let (m, d) = a.shape();
        if m == 0 {
            return Err(Error::InvalidDimension("at least one constraint is required".to_string()));
        }
        if d != domain.dim() {
            return Err(Error::InvalidDimension(format!(
                "A has {d} columns but the domain has dimension {}",
                domain.dim()
            )));
        }
        if alpha.len() != m {
            return Err(Error::InvalidDimension(format!("alpha has length {}, expected {m}", alpha.len())));
        }
        if a.iter().chain(alpha.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("instance"));
        }
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(invalid("sigma", "must be finite and positive"));
        }
        let checked_cols = match domain {
            DomainSpec::Lifted { .. } => d - 1,
            _ => d,
        };
        for i in 0..m {
            let n = a.row(i).columns(0, checked_cols).norm();
            if n > 1.0 + DOMAIN_SLACK {
                return Err(invalid("A", format!("row {i} has norm {n} > 1")));
            }
        }
        Ok(Self { domain, a, alpha, sigma })
    }

    pub fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    /// The latent constraint matrix. Environment and oracle code only.
    pub fn latent_matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn m(&self) -> usize {
        self.a.nrows()
    }

    pub fn d(&self) -> usize {
        self.a.ncols()
    }

    /// Everything a tester is allowed to know about the instance.
    pub fn view(&self) -> InstanceView<'_> {
        InstanceView { domain: &self.domain, alpha: &self.alpha, sigma: self.sigma }
    }
}

/// Tester-side view: domain, tolerances and noise scale, without `A`.
#[derive(Debug, Clone, Copy)]
pub struct InstanceView<'a> {
    pub domain: &'a DomainSpec,
    pub alpha: &'a DVector<f64>,
    pub sigma: f64,
}

impl InstanceView<'_> {
    pub fn m(&self) -> usize {
        self.alpha.len()
    }

    pub fn d(&self) -> usize {
        self.domain.dim()
    }
}

/// How a signal level was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum SignalMethod {
    ExactFinite,
    BallConvex,
    Grid { resolution: f64 },
}

/// The minimax value `max_x min_i (A x - alpha)^i` and a maximiser.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalLevel {
    pub gamma: f64,
    pub argmax_x: Option<Vec<f64>>,
    #[serde(flatten)]
    pub method: SignalMethod,
}

impl SignalLevel {
    /// True iff the instance is feasible (`gamma > 0`).
    pub fn is_feasible(&self) -> bool {
        self.gamma > 0.0
    }
}

fn min_slack(a: &DMatrix<f64>, alpha: &DVector<f64>, x: &DVector<f64>) -> f64 {
    (a * x - alpha).min()
}

fn finite_signal(a: &DMatrix<f64>, alpha: &DVector<f64>, points: &[DVector<f64>]) -> SignalLevel {
    let mut best = (f64::NEG_INFINITY, 0usize);
    for (k, p) in points.iter().enumerate() {
        let v = min_slack(a, alpha, p);
        if v > best.0 {
            best = (v, k);
        }
    }
    SignalLevel {
        gamma: best.0,
        argmax_x: Some(points[best.1].iter().copied().collect()),
        method: SignalMethod::ExactFinite,
    }
}

fn ball_signal(a: &DMatrix<f64>, alpha: &DVector<f64>) -> SignalLevel {
    let gram = a * a.transpose();
    let sol = minimize_over_simplex(&gram, alpha);
    let dir = a.transpose() * &sol.pi;
    let n = dir.norm();
    let candidate = if n > 1e-12 { dir / n } else { DVector::zeros(a.ncols()) };
    // The maximiser is not unique when pi^T A vanishes; report it only when
    // the recovered point attains the value.
    let argmax_x = if (min_slack(a, alpha, &candidate) - sol.value).abs() <= 1e-7 {
        Some(candidate.iter().copied().collect())
    } else {
        None
    };
    SignalLevel { gamma: sol.value, argmax_x, method: SignalMethod::BallConvex }
}

fn binomial(n: u64, k: u64) -> u64 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * u128::from(n - i) / u128::from(i + 1);
        if acc > u128::from(u64::MAX) {
            return u64::MAX;
        }
    }
    acc as u64
}

/// Number of points of the simplex grid `{x : x_k in {0, 1/n, ..., 1}}`.
pub fn simplex_grid_size(d: usize, n: u64) -> u64 {
    binomial(n + d as u64 - 1, d as u64 - 1)
}

/// Visits every point of the simplex grid with `n` subdivisions.
pub fn for_each_simplex_grid_point(d: usize, n: u64, mut visit: impl FnMut(&DVector<f64>)) {
    let mut counts = vec![0u64; d];
    let mut x = DVector::zeros(d);
    // Odometer over compositions of n into d parts, last part implied.
    loop {
        let used: u64 = counts[..d - 1].iter().sum();
        if used <= n {
            counts[d - 1] = n - used;
            for k in 0..d {
                x[k] = counts[k] as f64 / n as f64;
            }
            visit(&x);
        }
        let mut k = 0;
        loop {
            if k + 1 >= d {
                return;
            }
            counts[k] += 1;
            if counts[..d - 1].iter().sum::<u64>() <= n {
                break;
            }
            counts[k] = 0;
            k += 1;
        }
    }
}

fn simplex_signal(a: &DMatrix<f64>, alpha: &DVector<f64>, d: usize) -> SignalLevel {
    if a.nrows() == 1 {
        // A single linear constraint is maximised at a vertex.
        let vertices: Vec<DVector<f64>> =
            (0..d).map(|k| DVector::from_fn(d, |j, _| f64::from(u8::from(j == k)))).collect();
        return finite_signal(a, alpha, &vertices);
    }
    let mut n = libm::round(1.0 / DEFAULT_GRID_RESOLUTION) as u64;
    while n > 1 && simplex_grid_size(d, n) > GRID_POINT_CAP {
        n -= 1;
    }
    let mut best = (f64::NEG_INFINITY, DVector::zeros(d));
    for_each_simplex_grid_point(d, n, |x| {
        let v = min_slack(a, alpha, x);
        if v > best.0 {
            best = (v, x.clone());
        }
    });
    SignalLevel {
        gamma: best.0,
        argmax_x: Some(best.1.iter().copied().collect()),
        method: SignalMethod::Grid { resolution: 1.0 / n as f64 },
    }
}

fn signal_of(domain: &DomainSpec, a: &DMatrix<f64>, alpha: &DVector<f64>) -> SignalLevel {
    match domain {
        DomainSpec::FiniteSet { points } => finite_signal(a, alpha, points),
        DomainSpec::UnitBall { .. } => ball_signal(a, alpha),
        DomainSpec::Simplex { d } => simplex_signal(a, alpha, *d),
        DomainSpec::Lifted { inner } => {
            // A'(x, 1) - alpha' = A x - (alpha' - c) with c the last column.
            let d = inner.dim();
            let head = a.columns(0, d).into_owned();
            let shifted = alpha - a.column(d);
            let mut level = signal_of(inner, &head, &shifted);
            if let Some(x) = level.argmax_x.as_mut() {
                x.push(1.0);
            }
            level
        }
    }
}

/// Signal level `Gamma = max_x min_i (A x - alpha)^i` of an instance.
///
/// Finite domains are enumerated exactly; the unit ball goes through the
/// convex dual over the simplex; a simplex domain with one constraint is
/// solved at its vertices and otherwise by a reported grid search.
pub fn signal_level(inst: &Instance) -> SignalLevel {
    signal_of(&inst.domain, &inst.a, &inst.alpha)
}

/// The four two-constraint benchmark families over the unit ball.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Section5Scenario {
    /// `x1 >= 0, x2 >= 0`; signal `1/sqrt 2`.
    FeasibleDSweep,
    /// `x1 >= 1/sqrt 2, x1 <= -1/sqrt 2`; signal `-1/sqrt 2`.
    InfeasibleDSweep,
    /// `x1, x2 >= 1/sqrt 2 - gamma`; signal `gamma`.
    FeasibleGamma,
    /// `x1 >= gamma, x1 <= -gamma`; signal `-gamma`.
    InfeasibleGamma,
}

impl Section5Scenario {
    pub const ALL: [Section5Scenario; 4] = [
        Section5Scenario::FeasibleDSweep,
        Section5Scenario::InfeasibleDSweep,
        Section5Scenario::FeasibleGamma,
        Section5Scenario::InfeasibleGamma,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Section5Scenario::FeasibleDSweep => "feasible-d-sweep",
            Section5Scenario::InfeasibleDSweep => "infeasible-d-sweep",
            Section5Scenario::FeasibleGamma => "feasible-gamma",
            Section5Scenario::InfeasibleGamma => "infeasible-gamma",
        }
    }

    pub fn is_feasible(self) -> bool {
        matches!(self, Section5Scenario::FeasibleDSweep | Section5Scenario::FeasibleGamma)
    }

    /// Whether the builder reads its `gamma` argument.
    pub fn uses_gamma(self) -> bool {
        matches!(self, Section5Scenario::FeasibleGamma | Section5Scenario::InfeasibleGamma)
    }
}

/// Builds one of the m = 2 unit-ball instances, with the two constraints
/// embedded in the first two coordinates of `R^d` (remaining columns zero).
pub fn make_section5_instance(scenario: Section5Scenario, d: usize, gamma: f64, sigma: f64) -> Result<Instance> {
    if d < 2 {
        return Err(Error::InvalidDimension(format!("two axis constraints need d >= 2, got {d}")));
    }
    if scenario.uses_gamma() && !(gamma > 0.0 && gamma <= 1.0) {
        return Err(invalid("gamma", format!("must lie in (0, 1], got {gamma}")));
    }
    let h = core::f64::consts::FRAC_1_SQRT_2;
    let mut a = DMatrix::zeros(2, d);
    let offset;
    match scenario {
        Section5Scenario::FeasibleDSweep | Section5Scenario::FeasibleGamma => {
            a[(0, 0)] = 1.0;
            a[(1, 1)] = 1.0;
            offset = if scenario == Section5Scenario::FeasibleDSweep { 0.0 } else { h - gamma };
        }
        Section5Scenario::InfeasibleDSweep | Section5Scenario::InfeasibleGamma => {
            a[(0, 0)] = 1.0;
            a[(1, 0)] = -1.0;
            offset = if scenario == Section5Scenario::InfeasibleDSweep { h } else { gamma };
        }
    }
    Instance::new(DomainSpec::UnitBall { d }, a, DVector::from_element(2, offset), sigma)
}

/// The equivalent zero-tolerance instance on the lifted domain
/// `{(x, 1)}`: row `i` gains the entry `-alpha^i`.
pub fn augment_tolerance(inst: &Instance) -> Instance {
    let (m, d) = inst.a.shape();
    let mut a = inst.a.clone().resize_horizontally(d + 1, 0.0);
    for i in 0..m {
        a[(i, d)] = -inst.alpha[i];
    }
    Instance {
        domain: DomainSpec::Lifted { inner: Box::new(inst.domain.clone()) },
        a,
        alpha: DVector::zeros(m),
        sigma: inst.sigma,
    }
}
