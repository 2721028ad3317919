//! Generalized Pareto distribution: quantile/CDF evaluation and the
//! Zhang–Stephens empirical-Bayes parameter fit used for tail smoothing.
//!
//! The shape convention is the heavy-tail-positive one: `k > 0` means a
//! power-law upper tail (infinite variance when `k ≥ 1/2`, infinite mean when
//! `k ≥ 1`), `k = 0` is the exponential limit, `k < 0` a bounded upper tail.

use std::fmt;

use crate::loglik::log_sum_exp;

/// Minimum number of exceedances accepted by [`fit_gpd`]. The candidate grid
/// is built from sample quantiles and needs a few order statistics to exist.
pub const MIN_TAIL_SIZE: usize = 5;

/// Below this magnitude of the shape parameter, quantile and CDF switch to
/// their exponential-limit forms to avoid cancellation.
const SHAPE_ZERO_CUTOFF: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub enum GpdError {
    InvalidProbability { p: f64 },
    OutOfSupport { x: f64 },
    ScaleNotPositive { scale: f64 },
    ParamNotFinite,
    /// Fewer exceedances than [`MIN_TAIL_SIZE`].
    InsufficientTail { got: usize, min: usize },
    /// Exceedances must be strictly positive and finite.
    NonPositiveExceedance { index: usize, value: f64 },
}

impl fmt::Display for GpdError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::InvalidProbability { p } => write!(f, "probability {} outside [0, 1)", p),
            Self::OutOfSupport { x } => write!(f, "{} is outside the distribution support", x),
            Self::ScaleNotPositive { scale } => write!(f, "scale must be positive, got {}", scale),
            Self::ParamNotFinite => write!(f, "parameters must be finite"),
            Self::InsufficientTail { got, min } => {
                write!(f, "tail fit needs at least {} exceedances, got {}", min, got)
            }
            Self::NonPositiveExceedance { index, value } => {
                write!(f, "exceedance {} at index {} is not strictly positive", value, index)
            }
        }
    }
}

impl std::error::Error for GpdError {}

/// Generalized Pareto distribution with location μ, scale σ > 0, shape k.
///
/// Support is `x ≥ μ` for `k ≥ 0` and `μ ≤ x ≤ μ − σ/k` for `k < 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneralizedPareto {
    location: f64,
    scale: f64,
    shape: f64,
}

impl GeneralizedPareto {
    pub fn new(location: f64, scale: f64, shape: f64) -> Result<Self, GpdError> {
        if !(location.is_finite() && scale.is_finite() && shape.is_finite()) {
            return Err(GpdError::ParamNotFinite);
        }
        if scale <= 0.0 {
            return Err(GpdError::ScaleNotPositive { scale });
        }
        Ok(Self { location, scale, shape })
    }

    pub fn location(&self) -> f64 {
        self.location
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn shape(&self) -> f64 {
        self.shape
    }

    pub fn supports(&self, x: f64) -> bool {
        if x < self.location {
            return false;
        }
        if self.shape < 0.0 {
            x <= self.location - self.scale / self.shape
        } else {
            true
        }
    }

    /// Inverse CDF: `μ + σ((1−p)^{−k} − 1)/k`, or `μ − σ ln(1−p)` in the
    /// exponential limit. Monotone nondecreasing in `p`.
    pub fn quantile(&self, p: f64) -> Result<f64, GpdError> {
        if !(0.0..1.0).contains(&p) {
            return Err(GpdError::InvalidProbability { p });
        }
        let log1m_p = (-p).ln_1p();
        if self.shape.abs() < SHAPE_ZERO_CUTOFF {
            Ok(self.location - self.scale * log1m_p)
        } else {
            // expm1 keeps precision when k·log(1−p) is small
            Ok(self.location + self.scale * (-self.shape * log1m_p).exp_m1() / self.shape)
        }
    }

    /// CDF at `x`; errors when `x` is outside the support.
    pub fn cdf(&self, x: f64) -> Result<f64, GpdError> {
        if !self.supports(x) {
            return Err(GpdError::OutOfSupport { x });
        }
        let z = (x - self.location) / self.scale;
        if self.shape.abs() < SHAPE_ZERO_CUTOFF {
            Ok(-(-z).exp_m1())
        } else {
            let inner = self.shape * z;
            // 1 + kz ≥ 0 holds inside the support; at the k < 0 endpoint the
            // CDF is exactly 1.
            if inner <= -1.0 {
                return Ok(1.0);
            }
            Ok(-(-inner.ln_1p() / self.shape).exp_m1())
        }
    }
}

/// Result of fitting a GPD to tail exceedances: the fitted distribution is
/// anchored at the threshold (its location), with `exceedance_count` values
/// above it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailFit {
    pub dist: GeneralizedPareto,
    pub exceedance_count: usize,
}

impl TailFit {
    pub fn threshold(&self) -> f64 {
        self.dist.location()
    }
}

/// Fits a GPD to strictly positive exceedances using the empirical-Bayes
/// estimator of Zhang and Stephens (2009).
///
/// Candidate values of the transformed parameter `b = −k/σ` are built from
/// sample quantiles, each weighted by its profile likelihood; the point
/// estimate is the weight-averaged `b`, from which `k` and `σ` are recovered.
/// The estimator is scale-equivariant: scaling the exceedances by `c > 0`
/// scales `σ` by `c` and leaves `k` unchanged. No prior shrinkage is applied
/// to the fitted shape.
pub fn fit_gpd(exceedances: &[f64], threshold: f64) -> Result<TailFit, GpdError> {
    let m = exceedances.len();
    if m < MIN_TAIL_SIZE {
        return Err(GpdError::InsufficientTail { got: m, min: MIN_TAIL_SIZE });
    }
    for (index, &value) in exceedances.iter().enumerate() {
        if !(value > 0.0 && value.is_finite()) {
            return Err(GpdError::NonPositiveExceedance { index, value });
        }
    }

    let mut sorted = exceedances.to_vec();
    sorted.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let x_max = sorted[m - 1];
    // first-quartile order statistic (1-indexed floor(m/4 + 1/2))
    let quartile_idx = ((m as f64) / 4.0 + 0.5).floor() as usize;
    let x_star = sorted[quartile_idx.max(1) - 1];

    let grid_len = 30 + (m as f64).sqrt().floor() as usize;
    let mut candidates = Vec::with_capacity(grid_len);
    let mut profile = Vec::with_capacity(grid_len);
    for j in 1..=grid_len {
        let b = 1.0 / x_max + (1.0 - (grid_len as f64 / (j as f64 - 0.5)).sqrt()) / (3.0 * x_star);
        candidates.push(b);
        profile.push(profile_log_lik(b, &sorted));
    }

    // posterior-style weights over the candidate grid
    let norm = log_sum_exp(&profile);
    let b_hat: f64 = candidates
        .iter()
        .zip(&profile)
        .map(|(b, l)| b * (l - norm).exp())
        .sum();

    let (shape, scale) = if b_hat == 0.0 {
        // exponential limit of the parametrization
        (0.0, sorted.iter().sum::<f64>() / m as f64)
    } else {
        let k = mean_log1m(b_hat, &sorted);
        (k, -k / b_hat)
    };

    Ok(TailFit {
        dist: GeneralizedPareto::new(threshold, scale, shape)?,
        exceedance_count: m,
    })
}

/// Profile log-likelihood of the transformed parameter `b`, maximized over
/// the shape given `b`.
fn profile_log_lik(b: f64, sorted: &[f64]) -> f64 {
    let m = sorted.len() as f64;
    if b == 0.0 {
        let mean: f64 = sorted.iter().sum::<f64>() / m;
        return m * (-mean.ln() - 1.0);
    }
    let k = mean_log1m(b, sorted);
    m * ((-b / k).ln() - k - 1.0)
}

/// Mean of `ln(1 − b·x)` over the sample. The factors are strictly positive
/// for every candidate `b`, so short products share one transcendental call;
/// chunks whose product leaves the normal f64 range fall back to elementwise
/// evaluation.
fn mean_log1m(b: f64, xs: &[f64]) -> f64 {
    let mut total = 0.0;
    let mut chunks = xs.chunks_exact(4);
    for chunk in &mut chunks {
        let p = (1.0 - b * chunk[0])
            * (1.0 - b * chunk[1])
            * (1.0 - b * chunk[2])
            * (1.0 - b * chunk[3]);
        if p > 0.0 && p.is_finite() {
            total += p.ln();
        } else {
            total += chunk.iter().map(|&x| (-b * x).ln_1p()).sum::<f64>();
        }
    }
    total += chunks.remainder().iter().map(|&x| (-b * x).ln_1p()).sum::<f64>();
    total / xs.len() as f64
}
