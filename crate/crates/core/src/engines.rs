//! The sequential tests.
//!
//! Both tests accumulate the statistic `sum_s (S_s - alpha)^{i_s}` over the
//! measured constraints and stop when it leaves a boundary band. EOGT uses
//! the data-driven boundary `rho_sum + LIL`; the tempered test uses the
//! deterministic pair `(Q^F, Q^I)`. Both can additionally certify
//! feasibility early from the running mean of the played actions.

use alloc::vec::Vec;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::boundaries::{eogt_boundary, teogt_boundaries, Algorithm, BoundaryParams};
use crate::environments::Feedback;
use crate::error::{invalid, Result};
use crate::instances::{DomainSpec, InstanceView};
use crate::regression::RegressionState;
use crate::seed::{stream_rng, FALLBACK_STREAM};
use crate::selectors::{eogt_select, eogt_select_ball, tempered_radius, teogt_select};

/// Default round cap.
pub const DEFAULT_MAX_ROUNDS: u64 = 200_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestConfig {
    pub params: BoundaryParams,
    /// Stop as soon as the early certificate fires. When off, the first
    /// firing round is still recorded.
    #[serde(default)]
    pub early_stop: bool,
    #[serde(default = "default_max_rounds")]
    pub max_rounds: u64,
    #[serde(default)]
    pub seed: u64,
    /// Keep one [`StepRecord`] per round in the trace.
    #[serde(default)]
    pub record_steps: bool,
}

fn default_max_rounds() -> u64 {
    DEFAULT_MAX_ROUNDS
}

impl TestConfig {
    pub fn new(params: BoundaryParams, seed: u64) -> Self {
        Self { params, early_stop: false, max_rounds: DEFAULT_MAX_ROUNDS, seed, record_steps: false }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.max_rounds == 0 {
            return Err(invalid("max_rounds", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Decision {
    Feasible,
    Infeasible,
    Timeout,
}

impl Decision {
    pub fn name(self) -> &'static str {
        match self {
            Decision::Feasible => "feasible",
            Decision::Infeasible => "infeasible",
            Decision::Timeout => "timeout",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Boundary,
    Early,
    Cap,
}

/// One round of a test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: u64,
    pub x: Vec<f64>,
    /// Measured constraint, 0-based.
    pub i: usize,
    #[serde(rename = "S")]
    pub s: Vec<f64>,
    pub stat: f64,
    /// Lower stopping threshold (negative).
    pub boundary_lo: f64,
    /// Upper stopping threshold.
    pub boundary_hi: f64,
    /// Width spent this round: the local noise scale for EOGT, the tempered
    /// radius otherwise.
    pub rho_t: f64,
    pub running_mean_x: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestTrace {
    pub decision: Decision,
    pub tau: Option<u64>,
    pub tau_early: Option<u64>,
    pub stopped_via: StopReason,
    pub rounds_played: u64,
    pub final_stat: f64,
    pub certified: bool,
    /// Rounds whose selection was not a guaranteed optimum.
    pub approximate_rounds: u64,
    /// Rounds that fell back to a random direction.
    pub fallback_rounds: u64,
    pub seed: u64,
    pub config: TestConfig,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rounds: Vec<StepRecord>,
}

/// Neumaier-compensated running sum. The test statistic is kept with it so
/// that long runs stay accurate to a few ulps.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if libm::fabs(self.sum) >= libm::fabs(v) {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Recomputes the statistic sequence from recorded scores.
pub fn replay_stat(rounds: &[StepRecord], alpha: &DVector<f64>) -> Vec<f64> {
    let mut acc = CompensatedSum::default();
    rounds
        .iter()
        .map(|r| {
            acc.add(r.s[r.i] - alpha[r.i]);
            acc.value()
        })
        .collect()
}

/// True iff every extreme point of the L1 set of radius
/// `sqrt(d) omega_t(delta_t / 2)` makes `mean_x` strictly feasible.
///
/// Over that set `min (A~^i mean_x)` is `A_hat^i mean_x - r ||V^{-1/2} mean_x||_inf`,
/// which is what is evaluated here.
pub fn early_stop_check(
    state: &RegressionState,
    mean_x: &DVector<f64>,
    delta_t: f64,
    view: &InstanceView<'_>,
) -> Result<bool> {
    let r = libm::sqrt(state.d() as f64) * state.confidence_radius(delta_t / 2.0, view.sigma)?;
    let width = r * (state.v_inv_sqrt() * mean_x).amax();
    let slack = (state.a_hat() * mean_x - view.alpha).min() - width;
    Ok(slack > 0.0)
}

fn action_bound(domain: &DomainSpec) -> f64 {
    match domain {
        DomainSpec::Lifted { inner } => libm::sqrt(action_bound(inner) * action_bound(inner) + 1.0),
        _ => 1.0,
    }
}

struct Outcome {
    decision: Decision,
    tau: Option<u64>,
    via: StopReason,
}

struct Run<'v, 'a> {
    view: &'v InstanceView<'a>,
    config: TestConfig,
    state: RegressionState,
    stat: CompensatedSum,
    sum_x: DVector<f64>,
    tau_early: Option<u64>,
    approximate_rounds: u64,
    fallback_rounds: u64,
    rounds: Vec<StepRecord>,
}

impl<'v, 'a> Run<'v, 'a> {
    fn new(view: &'v InstanceView<'a>, config: &TestConfig) -> Result<Self> {
        config.validate()?;
        view.domain.validate()?;
        Ok(Self {
            view,
            config: *config,
            state: RegressionState::new(view.m(), view.d()).with_action_bound(action_bound(view.domain)),
            stat: CompensatedSum::default(),
            sum_x: DVector::zeros(view.d()),
            tau_early: None,
            approximate_rounds: 0,
            fallback_rounds: 0,
            rounds: Vec::new(),
        })
    }

    /// Plays `x`, measures constraint `i` and updates every running quantity.
    /// Returns the round's record and whether the early certificate fired.
    #[allow(clippy::too_many_arguments)]
    fn play(
        &mut self,
        env: &mut impl Feedback,
        t: u64,
        x: &DVector<f64>,
        i: usize,
        rho: f64,
        spend: f64,
        band: impl Fn(&RegressionState) -> (f64, f64),
    ) -> Result<StepRecord> {
        let s = env.observe(x)?;
        self.stat.add(s[i] - self.view.alpha[i]);
        self.state.update(x, &s, spend)?;
        self.sum_x += x;
        let mean = &self.sum_x / t as f64;
        if t >= 2 && self.tau_early.is_none() {
            let delta_next = self.config.params.delta_at(t + 1);
            if early_stop_check(&self.state, &mean, delta_next, self.view)? {
                self.tau_early = Some(t);
            }
        }
        let (lo, hi) = band(&self.state);
        Ok(StepRecord {
            t,
            x: x.iter().copied().collect(),
            i,
            s: s.iter().copied().collect(),
            stat: self.stat.value(),
            boundary_lo: lo,
            boundary_hi: hi,
            rho_t: rho,
            running_mean_x: mean.iter().copied().collect(),
        })
    }

    fn judge(&self, t: u64, rec: &StepRecord) -> Option<Outcome> {
        if rec.stat > rec.boundary_hi {
            return Some(Outcome { decision: Decision::Feasible, tau: Some(t), via: StopReason::Boundary });
        }
        if rec.stat < rec.boundary_lo {
            return Some(Outcome { decision: Decision::Infeasible, tau: Some(t), via: StopReason::Boundary });
        }
        if self.config.early_stop && self.tau_early == Some(t) {
            return Some(Outcome { decision: Decision::Feasible, tau: Some(t), via: StopReason::Early });
        }
        None
    }

    fn keep(&mut self, rec: StepRecord) {
        if self.config.record_steps {
            self.rounds.push(rec);
        }
    }

    fn finish(self, outcome: Option<Outcome>) -> TestTrace {
        let outcome = outcome.unwrap_or(Outcome { decision: Decision::Timeout, tau: None, via: StopReason::Cap });
        TestTrace {
            decision: outcome.decision,
            tau: outcome.tau,
            tau_early: self.tau_early,
            stopped_via: outcome.via,
            rounds_played: self.state.t() - 1,
            final_stat: self.stat.value(),
            certified: self.config.params.certified(),
            approximate_rounds: self.approximate_rounds,
            fallback_rounds: self.fallback_rounds,
            seed: self.config.seed,
            config: self.config,
            rounds: self.rounds,
        }
    }
}

/// Runs EOGT, calling `observe` after every round with the updated state.
pub fn run_eogt_observed(
    view: &InstanceView<'_>,
    config: &TestConfig,
    env: &mut impl Feedback,
    mut observe: impl FnMut(&RegressionState, &StepRecord),
) -> Result<TestTrace> {
    let mut run = Run::new(view, config)?;
    let params = run.config.params;
    let mut rng = stream_rng(config.seed, FALLBACK_STREAM);
    let mut outcome = None;
    for t in 1..=run.config.max_rounds {
        let delta_t = params.delta_at(t);
        let sel = eogt_select(&run.state, delta_t, view, &mut rng)?;
        run.approximate_rounds += u64::from(sel.approximate);
        run.fallback_rounds += u64::from(sel.fallback);
        let rho = run.state.local_noise_scale(&sel.x, delta_t / 2.0, view.sigma)?;
        let rec = run.play(env, t, &sel.x, sel.i, rho, rho, |st| {
            let b = eogt_boundary(st.rho_sum(), t, &params);
            (-b, b)
        })?;
        observe(&run.state, &rec);
        outcome = run.judge(t, &rec);
        run.keep(rec);
        if outcome.is_some() {
            break;
        }
    }
    Ok(run.finish(outcome))
}

/// EOGT: optimistic action, greedy constraint, stop when
/// `|stat| > rho_sum + LIL(t, delta / 2)`.
pub fn run_eogt(view: &InstanceView<'_>, config: &TestConfig, env: &mut impl Feedback) -> Result<TestTrace> {
    run_eogt_observed(view, config, env, |_, _| {})
}

/// Runs the tempered test, calling `observe` after every round.
pub fn run_teogt_observed(
    view: &InstanceView<'_>,
    config: &TestConfig,
    env: &mut impl Feedback,
    mut observe: impl FnMut(&RegressionState, &StepRecord),
) -> Result<TestTrace> {
    let mut run = Run::new(view, config)?;
    let params = run.config.params;
    let (d, m) = (view.d(), view.m());
    let mut rng = stream_rng(config.seed, FALLBACK_STREAM);
    let ball = matches!(view.domain, DomainSpec::UnitBall { .. });
    let mut prev: Option<DVector<f64>> = None;
    let mut outcome = None;
    for t in 1..=run.config.max_rounds {
        let hint = if ball {
            let h = eogt_select_ball(&run.state, params.delta, view, &mut rng)?;
            run.fallback_rounds += u64::from(h.fallback);
            Some(h.x)
        } else {
            None
        };
        let sel = teogt_select(&run.state, view, run.state.t(), hint.as_ref(), prev.as_ref())?;
        run.approximate_rounds += u64::from(sel.approximate);
        let rad = tempered_radius(&run.state, &sel.x, run.state.t());
        let rec = run.play(env, t, &sel.x, sel.i, rad, 0.0, |_| {
            let (qf, qi) = teogt_boundaries(t, d, m, &params);
            (-qf, qi)
        })?;
        observe(&run.state, &rec);
        outcome = run.judge(t, &rec);
        run.keep(rec);
        prev = Some(sel.x);
        if outcome.is_some() {
            break;
        }
    }
    Ok(run.finish(outcome))
}

/// The tempered test: stop when `stat > Q^I` (feasible) or
/// `stat < -Q^F` (infeasible).
pub fn run_teogt(view: &InstanceView<'_>, config: &TestConfig, env: &mut impl Feedback) -> Result<TestTrace> {
    run_teogt_observed(view, config, env, |_, _| {})
}

/// Runs the test named by `config.params.family`.
pub fn run_test(view: &InstanceView<'_>, config: &TestConfig, env: &mut impl Feedback) -> Result<TestTrace> {
    match config.params.family {
        Algorithm::Eogt => run_eogt(view, config, env),
        Algorithm::Teogt => run_teogt(view, config, env),
    }
}
