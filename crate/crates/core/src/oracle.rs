//! Conjugate normal reference model: exact posterior draws, closed-form
//! leave-one-out answers, and synthetic heavy-tail generators.
//!
//! This is the ground truth used by the test suites. The model is a single
//! common location parameter with known observation noise and a normal
//! prior, so every posterior, leave-one-out posterior, and predictive
//! density is available in closed form — no MCMC anywhere.
//!
//! All sampling uses the seedable cross-platform ChaCha8 generator
//! (`rand_chacha`) with `rand_distr` samplers, so draws are reproducible bit
//! for bit for a fixed seed.

use std::fmt;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::gpd::GeneralizedPareto;
use crate::loglik::{LogLikMatrix, PointwiseKind, PointwiseValues};

#[derive(Debug, Clone, PartialEq)]
pub enum OracleError {
    InvalidParameter { name: &'static str, value: f64 },
    EmptyData,
}

impl fmt::Display for OracleError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::InvalidParameter { name, value } => {
                write!(f, "invalid {}: {}", name, value)
            }
            Self::EmptyData => write!(f, "model needs at least one observation"),
        }
    }
}

impl std::error::Error for OracleError {}

/// Observations `y` modeled as `y_i ~ N(θ, obs_sd²)` with a single common
/// location θ under the prior `θ ~ N(prior_mean, prior_sd²)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConjugateNormalModel {
    y: Vec<f64>,
    obs_sd: f64,
    prior_mean: f64,
    prior_sd: f64,
}

impl ConjugateNormalModel {
    pub fn new(
        y: Vec<f64>,
        obs_sd: f64,
        prior_mean: f64,
        prior_sd: f64,
    ) -> Result<Self, OracleError> {
        if y.is_empty() {
            return Err(OracleError::EmptyData);
        }
        if let Some(&bad) = y.iter().find(|v| !v.is_finite()) {
            return Err(OracleError::InvalidParameter { name: "observation", value: bad });
        }
        if !(obs_sd.is_finite() && obs_sd > 0.0) {
            return Err(OracleError::InvalidParameter { name: "obs_sd", value: obs_sd });
        }
        if !(prior_sd.is_finite() && prior_sd > 0.0) {
            return Err(OracleError::InvalidParameter { name: "prior_sd", value: prior_sd });
        }
        if !prior_mean.is_finite() {
            return Err(OracleError::InvalidParameter { name: "prior_mean", value: prior_mean });
        }
        Ok(Self { y, obs_sd, prior_mean, prior_sd })
    }

    pub fn data(&self) -> &[f64] {
        &self.y
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn obs_sd(&self) -> f64 {
        self.obs_sd
    }

    /// Same prior and noise, different data.
    pub fn with_data(&self, y: Vec<f64>) -> Result<Self, OracleError> {
        Self::new(y, self.obs_sd, self.prior_mean, self.prior_sd)
    }

    /// Posterior mean and variance of θ given a subset of the data with the
    /// stated sum and count (count 0 returns the prior).
    fn posterior_from(&self, sum: f64, count: usize) -> (f64, f64) {
        let prior_precision = 1.0 / (self.prior_sd * self.prior_sd);
        let obs_precision = 1.0 / (self.obs_sd * self.obs_sd);
        let precision = prior_precision + count as f64 * obs_precision;
        let mean = (self.prior_mean * prior_precision + sum * obs_precision) / precision;
        (mean, 1.0 / precision)
    }

    /// Full-data posterior mean and variance of θ.
    pub fn posterior(&self) -> (f64, f64) {
        self.posterior_from(self.y.iter().sum(), self.n())
    }

    /// Posterior of θ given all data except point `i`.
    pub fn loo_posterior(&self, i: usize) -> (f64, f64) {
        let sum: f64 = self.y.iter().sum::<f64>() - self.y[i];
        self.posterior_from(sum, self.n() - 1)
    }

    /// Log posterior-predictive density of a new observation under the
    /// full-data posterior.
    pub fn predictive_logpdf(&self, x: f64) -> f64 {
        let (mean, var) = self.posterior();
        normal_logpdf(x, mean, var + self.obs_sd * self.obs_sd)
    }

    /// Exact leave-one-out elpd: component `i` is the log predictive density
    /// of `y_i` under the posterior from the remaining points (the prior
    /// predictive when n = 1).
    pub fn exact_loo(&self) -> PointwiseValues {
        let values = (0..self.n())
            .map(|i| {
                let (mean, var) = self.loo_posterior(i);
                normal_logpdf(self.y[i], mean, var + self.obs_sd * self.obs_sd)
            })
            .collect();
        PointwiseValues::new(values, PointwiseKind::ElpdLoo)
    }

    /// Closed-form lpd of the observed data under the full posterior.
    pub fn lpd_closed_form(&self) -> PointwiseValues {
        let values = self.y.iter().map(|&yi| self.predictive_logpdf(yi)).collect();
        PointwiseValues::new(values, PointwiseKind::Lpd)
    }

    /// Exact draws of θ from the full-data posterior.
    pub fn sample_posterior(&self, draws: usize, seed: u64) -> Vec<f64> {
        let (mean, var) = self.posterior();
        let sd = var.sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..draws).map(|_| mean + sd * rng.sample::<f64, _>(StandardNormal)).collect()
    }

    /// Log-likelihood matrix from exact posterior draws: entry `(s, i)` is
    /// `log N(y_i; θ^s, obs_sd²)`. Needs at least two draws.
    pub fn sample_loglik(&self, draws: usize, seed: u64) -> LogLikMatrix {
        assert!(draws >= 2, "need at least two draws");
        let thetas = self.sample_posterior(draws, seed);
        let var = self.obs_sd * self.obs_sd;
        let norm = (2.0 * std::f64::consts::PI * var).ln();
        let mut values = Array2::zeros((draws, self.n()));
        for (s, &theta) in thetas.iter().enumerate() {
            for (i, &yi) in self.y.iter().enumerate() {
                let d = yi - theta;
                values[(s, i)] = -0.5 * (norm + d * d / var);
            }
        }
        LogLikMatrix::new(values, None).expect("finite closed-form densities")
    }

    /// Total log posterior-predictive density of an independent test set
    /// (closed form; zero for an empty set). Callers rescale to per-point
    /// units as needed.
    pub fn test_elpd(&self, test_y: &[f64]) -> f64 {
        test_y.iter().map(|&x| self.predictive_logpdf(x)).sum()
    }
}

pub(crate) fn normal_logpdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * ((2.0 * std::f64::consts::PI * var).ln() + d * d / var)
}

/// Data drawn from the model's own generative process: one shared location
/// `θ0 ~ N(prior_mean, prior_sd²)`, then `y_i ~ N(θ0, obs_sd²)`. The fitted
/// common-location model is well specified for this data.
pub fn simulate_shared_mean(
    n: usize,
    prior_mean: f64,
    prior_sd: f64,
    obs_sd: f64,
    seed: u64,
) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let theta0 = prior_mean + prior_sd * rng.sample::<f64, _>(StandardNormal);
    (0..n).map(|_| theta0 + obs_sd * rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Overdispersed data: an independent location per point,
/// `θ0_i ~ N(prior_mean, prior_sd²)` and `y_i ~ N(θ0_i, obs_sd²)`. Fitting
/// the common-location model to this data is increasingly misspecified as
/// `prior_sd/obs_sd` grows, which drives the importance-ratio tails heavy —
/// the failure regime the diagnostics are for.
pub fn simulate_varying_means(
    n: usize,
    prior_mean: f64,
    prior_sd: f64,
    obs_sd: f64,
    seed: u64,
) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let theta0 = prior_mean + prior_sd * rng.sample::<f64, _>(StandardNormal);
            theta0 + obs_sd * rng.sample::<f64, _>(StandardNormal)
        })
        .collect()
}

/// Synthetic importance ratios with a controlled tail: `round(tail_mass·S)`
/// draws from `1 + GPD(sigma, k_true)` mixed into a constant unit bulk, in
/// shuffled order. With a unit bulk the mixture mean is
/// `1 + tail_mass·sigma/(1−k_true)` for `k_true < 1`, which gives tests a
/// closed-form target. Deterministic per seed.
pub fn gen_heavy_ratios(
    k_true: f64,
    sigma: f64,
    draws: usize,
    tail_mass: f64,
    seed: u64,
) -> Vec<f64> {
    assert!(sigma > 0.0, "sigma must be positive");
    assert!((0.0..=1.0).contains(&tail_mass), "tail mass must lie in [0, 1]");
    let tail_n = (tail_mass * draws as f64).round() as usize;
    let gpd = GeneralizedPareto::new(0.0, sigma, k_true).expect("valid parameters");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ratios = vec![1.0; draws - tail_n];
    ratios.extend(
        (0..tail_n).map(|_| 1.0 + gpd.quantile(rng.random::<f64>()).expect("p in [0,1)")),
    );
    ratios.shuffle(&mut rng);
    ratios
}
