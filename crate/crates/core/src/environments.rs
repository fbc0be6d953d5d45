//! Feedback generation.
//!
//! An [`Environment`] owns the instance and answers actions with noisy
//! scores. It is the only place outside oracles and diagnostics that reads
//! the latent matrix.

use alloc::boxed::Box;
use alloc::format;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::instances::{DomainSpec, Instance};
use crate::seed::{stream_rng, NOISE_STREAM};

/// Source of scores for the tests.
pub trait Feedback {
    fn observe(&mut self, x: &DVector<f64>) -> Result<DVector<f64>>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum NoiseMode {
    /// `S = A x + N(0, sd^2 I)`.
    GaussianLinear { sd: f64 },
    /// Single constraint over the simplex: draw `K ~ x` and return
    /// `a_K + N(0, 1/2)`.
    SampledIndex,
}

#[derive(Debug, Clone)]
pub struct Environment {
    inst: Instance,
    mode: NoiseMode,
    rng: ChaCha8Rng,
    noise_log: Option<Vec<DVector<f64>>>,
}

impl Environment {
    /// Gaussian linear responses with standard deviation `inst.sigma()`.
    pub fn gaussian(inst: Instance, seed: u64) -> Self {
        let sd = inst.sigma();
        Self { inst, mode: NoiseMode::GaussianLinear { sd }, rng: stream_rng(seed, NOISE_STREAM), noise_log: None }
    }

    /// Randomised-index responses; needs a simplex domain and one constraint.
    pub fn sampled_index(inst: Instance, seed: u64) -> Result<Self> {
        if !matches!(inst.domain(), DomainSpec::Simplex { .. }) || inst.m() != 1 {
            return Err(Error::Unsupported(
                "sampled-index feedback needs a simplex domain and a single constraint".into(),
            ));
        }
        Ok(Self { inst, mode: NoiseMode::SampledIndex, rng: stream_rng(seed, NOISE_STREAM), noise_log: None })
    }

    /// Overrides the Gaussian noise level, e.g. zero for noiseless runs.
    pub fn with_noise_sd(mut self, sd: f64) -> Result<Self> {
        if !(sd >= 0.0 && sd.is_finite()) {
            return Err(invalid("sd", "must be finite and nonnegative"));
        }
        match self.mode {
            NoiseMode::GaussianLinear { .. } => self.mode = NoiseMode::GaussianLinear { sd },
            NoiseMode::SampledIndex => {
                return Err(Error::Unsupported("noise level of sampled-index feedback is fixed".into()))
            }
        }
        Ok(self)
    }

    /// Records the noise `zeta = S - A x` of every observation.
    pub fn with_noise_log(mut self) -> Self {
        self.noise_log = Some(Vec::new());
        self
    }

    pub fn instance(&self) -> &Instance {
        &self.inst
    }

    pub fn mode(&self) -> NoiseMode {
        self.mode
    }

    pub fn noise_log(&self) -> Option<&[DVector<f64>]> {
        self.noise_log.as_deref()
    }

    pub fn take_noise_log(&mut self) -> Option<Vec<DVector<f64>>> {
        self.noise_log.take()
    }

    fn sample_index(&mut self, x: &DVector<f64>) -> usize {
        let total: f64 = x.iter().map(|v| v.max(0.0)).sum();
        let u: f64 = self.rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut last = 0;
        for (k, v) in x.iter().enumerate() {
            let p = v.max(0.0);
            if p > 0.0 {
                last = k;
                acc += p;
                if u < acc {
                    return k;
                }
            }
        }
        last
    }
}

impl Feedback for Environment {
    fn observe(&mut self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.inst.domain().check_contains(x)?;
        let mean = self.inst.latent_matrix() * x;
        let s = match self.mode {
            NoiseMode::GaussianLinear { sd } => {
                let m = mean.len();
                let noise = DVector::from_fn(m, |_, _| sd * self.rng.sample::<f64, _>(StandardNormal));
                &mean + noise
            }
            NoiseMode::SampledIndex => {
                let k = self.sample_index(x);
                let z: f64 = self.rng.sample(StandardNormal);
                let a_k = self.inst.latent_matrix()[(0, k)];
                DVector::from_element(1, a_k + libm::sqrt(0.5) * z)
            }
        };
        if let Some(log) = self.noise_log.as_mut() {
            log.push(&s - &mean);
        }
        Ok(s)
    }
}

impl<F: Feedback + ?Sized> Feedback for Box<F> {
    fn observe(&mut self, x: &DVector<f64>) -> Result<DVector<f64>> {
        (**self).observe(x)
    }
}

/// Default and bound for the off-arm magnitude of the lower-bound family.
pub fn lower_bound_epsilon_bound(k: usize, gamma: f64) -> f64 {
    libm::sqrt(1.0 - gamma * gamma) / (2.0 * libm::sqrt(k as f64))
}

/// The single-constraint `K`-armed instance with arm `k_star` (1-based)
/// scoring `gamma` and the others `-epsilon`; `k_star = 0` makes every arm
/// infeasible. `epsilon = None` picks `min(1e-3, bound / 2)`.
pub fn lower_bound_instance(k: usize, gamma: f64, epsilon: Option<f64>, k_star: usize) -> Result<Instance> {
    if k == 0 {
        return Err(invalid("K", "needs at least one arm"));
    }
    if !(gamma > 0.0 && gamma <= 0.5) {
        return Err(invalid("gamma", format!("must lie in (0, 1/2], got {gamma}")));
    }
    if k_star > k {
        return Err(invalid("k_star", format!("must lie in [0, {k}], got {k_star}")));
    }
    let bound = lower_bound_epsilon_bound(k, gamma);
    let eps = epsilon.unwrap_or_else(|| (1e-3f64).min(bound / 2.0));
    if !(eps > 0.0 && eps < bound) {
        return Err(invalid("epsilon", format!("must lie in (0, {bound}), got {eps}")));
    }
    let mut a = DMatrix::from_element(1, k, -eps);
    if k_star >= 1 {
        a[(0, k_star - 1)] = gamma;
    }
    // The arms feed a noise process of variance 1/2 on top of index
    // sampling, so the boundaries run at unit scale.
    Instance::new(DomainSpec::Simplex { d: k }, a, DVector::zeros(1), 1.0)
}

/// Sampled-index environment over [`lower_bound_instance`].
pub fn make_lower_bound_instance(
    k: usize,
    gamma: f64,
    epsilon: Option<f64>,
    k_star: usize,
    seed: u64,
) -> Result<Environment> {
    Environment::sampled_index(lower_bound_instance(k, gamma, epsilon, k_star)?, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{make_section5_instance, signal_level, Section5Scenario};
    use approx::assert_abs_diff_eq;

    #[test]
    fn noiseless_gaussian_is_exact() {
        let inst = make_section5_instance(Section5Scenario::FeasibleGamma, 3, 0.4, 0.1).unwrap();
        let mut env = Environment::gaussian(inst.clone(), 3).with_noise_sd(0.0).unwrap().with_noise_log();
        let x = DVector::from_vec(alloc::vec![0.6, -0.8, 0.0]);
        let s = env.observe(&x).unwrap();
        assert_eq!(s, inst.latent_matrix() * &x);
        assert!(env.noise_log().unwrap()[0].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn rejects_actions_outside_domain() {
        let inst = make_section5_instance(Section5Scenario::FeasibleDSweep, 2, 0.0, 0.1).unwrap();
        let mut env = Environment::gaussian(inst, 0);
        assert!(matches!(env.observe(&DVector::from_vec(alloc::vec![1.0, 0.1])), Err(Error::OutsideDomain { .. })));
    }

    #[test]
    fn lower_bound_layout() {
        let inst = lower_bound_instance(4, 0.5, Some(0.01), 2).unwrap();
        assert_eq!(
            inst.latent_matrix().row(0).iter().copied().collect::<Vec<_>>(),
            alloc::vec![-0.01, 0.5, -0.01, -0.01]
        );
        assert_eq!(signal_level(&inst).gamma, 0.5);
        let none = lower_bound_instance(4, 0.5, Some(0.01), 0).unwrap();
        assert_eq!(signal_level(&none).gamma, -0.01);
        let sq = inst.latent_matrix().row(0).norm_squared();
        assert_abs_diff_eq!(sq, 0.25 + 3.0 * 1e-4, epsilon = 1e-15);
    }

    #[test]
    fn lower_bound_parameter_checks() {
        assert!(lower_bound_instance(4, 0.6, None, 1).is_err());
        assert!(lower_bound_instance(4, 0.5, Some(0.5), 1).is_err());
        assert!(lower_bound_instance(4, 0.5, None, 5).is_err());
        assert!(lower_bound_instance(0, 0.5, None, 0).is_err());
        let inst = lower_bound_instance(8, 0.5, None, 3).unwrap();
        assert_eq!(inst.latent_matrix()[(0, 0)], -1e-3);
    }

    #[test]
    fn sampled_index_requires_simplex() {
        let inst = make_section5_instance(Section5Scenario::FeasibleDSweep, 2, 0.0, 0.1).unwrap();
        assert!(Environment::sampled_index(inst, 0).is_err());
    }
}
