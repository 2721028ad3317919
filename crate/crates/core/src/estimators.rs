//! Pointwise and total elpd estimators, standard errors, paired model
//! comparison, and the Bayesian bootstrap.

use std::fmt;

use rayon::prelude::*;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::loglik::{log_mean_exp, log_weighted_mean_exp, LogLikMatrix, PointwiseKind, PointwiseValues};
use crate::psis::{diagnose, psis_smooth_with, raw_log_ratios, truncate_weights, DiagnosticLevel};

#[derive(Debug, Clone, PartialEq)]
pub enum EstimatorError {
    /// Standard errors need at least two pointwise components.
    DegenerateSampleSize { n: usize },
    LengthMismatch { left: usize, right: usize },
    InvalidReplicates { got: usize },
}

impl fmt::Display for EstimatorError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::DegenerateSampleSize { n } => {
                write!(f, "need at least 2 pointwise components, got {}", n)
            }
            Self::LengthMismatch { left, right } => {
                write!(f, "pointwise vectors have different lengths: {} vs {}", left, right)
            }
            Self::InvalidReplicates { got } => {
                write!(f, "bootstrap needs at least 2 replicates, got {}", got)
            }
        }
    }
}

impl std::error::Error for EstimatorError {}

/// Weighting scheme for approximate leave-one-out estimation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LooMethod {
    /// Raw importance sampling.
    Is,
    /// Truncated importance sampling, capping ratios at `S^exponent · r̄`.
    Tis { exponent: f64 },
    /// Pareto-smoothed importance sampling with a post-smoothing cap at
    /// `S^trunc_exponent · w̄`.
    Psis { tail_fraction: f64, trunc_exponent: f64 },
}

impl LooMethod {
    /// PSIS at the default 20% tail fraction and `S^{3/4}` truncation.
    pub fn psis_default() -> Self {
        Self::Psis {
            tail_fraction: crate::psis::DEFAULT_TAIL_FRACTION,
            trunc_exponent: crate::psis::DEFAULT_PSIS_TRUNCATION_EXPONENT,
        }
    }

    /// TIS at the default `√S` truncation.
    pub fn tis_default() -> Self {
        Self::Tis { exponent: crate::psis::DEFAULT_TIS_TRUNCATION_EXPONENT }
    }
}

/// Which estimator produced a result.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EstimateMethod {
    IsLoo,
    TisLoo { exponent: f64 },
    PsisLoo { tail_fraction: f64 },
    Waic,
    Kfold,
}

impl EstimateMethod {
    /// Short name used in reports: rows print as `elpd_<name>` etc.
    pub fn short_name(&self) -> &'static str {
        match self {
            Self::IsLoo | Self::TisLoo { .. } | Self::PsisLoo { .. } => "loo",
            Self::Waic => "waic",
            Self::Kfold => "kfold",
        }
    }
}

/// A complete estimate: pointwise contributions, totals, effective parameter
/// count, standard errors, and per-point diagnostics.
///
/// Standard errors are defined over the n pointwise components and need
/// n ≥ 2; single-point inputs report them as zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ElpdResult {
    pub method: EstimateMethod,
    pub pointwise: PointwiseValues,
    /// Sum of the pointwise components.
    pub total: f64,
    /// Effective number of parameters: `lpd_total − total` for LOO methods,
    /// `p_waic` for WAIC, and available for K-fold only when a full-data
    /// log-likelihood matrix was supplied.
    pub p_eff: Option<f64>,
    pub se_p_eff: Option<f64>,
    /// `−2 · total`, the conventional deviance-style scale.
    pub ic_scale: f64,
    pub se_total: f64,
    /// Fitted tail shape per point; populated (length n) only by PSIS, with
    /// `None` at points whose tail was degenerate. Empty for every method
    /// that fits no tails (IS, TIS, WAIC, K-fold).
    pub k_hats: Vec<Option<f64>>,
    /// Posterior variance of the log predictive density per point; only
    /// populated by WAIC.
    pub waic_variance_terms: Vec<f64>,
    /// Set when a first-order bias correction has been applied.
    pub bias_corrected: bool,
}

impl ElpdResult {
    pub fn point_count(&self) -> usize {
        self.pointwise.len()
    }

    /// Counts of points at each diagnostic level, indexed good/ok/high/severe.
    pub fn diagnostic_counts(&self) -> [usize; 4] {
        let mut counts = [0usize; 4];
        for k in &self.k_hats {
            let slot = match diagnose(*k).level {
                DiagnosticLevel::Good => 0,
                DiagnosticLevel::Ok => 1,
                DiagnosticLevel::WarnHigh => 2,
                DiagnosticLevel::Severe => 3,
            };
            counts[slot] += 1;
        }
        counts
    }

    /// Number of WAIC variance terms above the 0.4 reliability threshold.
    pub fn waic_flagged_terms(&self) -> usize {
        self.waic_variance_terms.iter().filter(|&&t| t > WAIC_TERM_THRESHOLD).count()
    }
}

/// A WAIC estimate is considered unreliable when any posterior variance of
/// the log predictive density exceeds this.
pub const WAIC_TERM_THRESHOLD: f64 = 0.4;

/// Paired difference between two models evaluated on the same data points.
/// The sign convention is second minus first: positive favors `b`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonResult {
    pub elpd_diff: f64,
    pub se_diff: f64,
    pub pointwise_diff: Vec<f64>,
}

/// Approximate leave-one-out elpd from full-posterior draws.
///
/// Per point, the log-likelihood column is negated into log importance
/// ratios, weighted per `method`, and combined through the self-normalized
/// estimator `log(Σ_s w_s p(y_i|θ^s) / Σ_s w_s)`.
pub fn elpd_loo(matrix: &LogLikMatrix, method: LooMethod) -> ElpdResult {
    let n = matrix.point_count();
    let per_point: Vec<(f64, f64, Option<f64>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let col = matrix.column_vec(i);
            let ratios = raw_log_ratios(&col);
            let (log_weights, k_hat) = match method {
                LooMethod::Is => (ratios, None),
                LooMethod::Tis { exponent } => {
                    (truncate_weights(&ratios, exponent).log_weights, None)
                }
                LooMethod::Psis { tail_fraction, trunc_exponent } => {
                    let w = psis_smooth_with(&ratios, tail_fraction, trunc_exponent)
                        .with_point_index(i);
                    (w.log_weights, w.k_hat)
                }
            };
            let elpd_i = log_weighted_mean_exp(&col, &log_weights);
            let lpd_i = log_mean_exp(&col, None).expect("nonempty column");
            (elpd_i, lpd_i, k_hat)
        })
        .collect();

    let pointwise_elpd: Vec<f64> = per_point.iter().map(|t| t.0).collect();
    let p_eff_terms: Vec<f64> = per_point.iter().map(|t| t.1 - t.0).collect();
    let k_hats: Vec<Option<f64>> = match method {
        LooMethod::Psis { .. } => per_point.iter().map(|t| t.2).collect(),
        _ => Vec::new(),
    };

    let total: f64 = pointwise_elpd.iter().sum();
    let p_eff: f64 = p_eff_terms.iter().sum();
    let estimate_method = match method {
        LooMethod::Is => EstimateMethod::IsLoo,
        LooMethod::Tis { exponent } => EstimateMethod::TisLoo { exponent },
        LooMethod::Psis { tail_fraction, .. } => EstimateMethod::PsisLoo { tail_fraction },
    };

    ElpdResult {
        method: estimate_method,
        se_total: se_or_zero(&pointwise_elpd),
        se_p_eff: Some(se_or_zero(&p_eff_terms)),
        pointwise: PointwiseValues::new(pointwise_elpd, PointwiseKind::ElpdLoo),
        total,
        p_eff: Some(p_eff),
        ic_scale: -2.0 * total,
        k_hats,
        waic_variance_terms: Vec::new(),
        bias_corrected: false,
    }
}

/// WAIC: pointwise `lpd_i` minus the posterior variance of the log
/// predictive density, with the variance-based effective parameter count.
pub fn waic(matrix: &LogLikMatrix) -> ElpdResult {
    let n = matrix.point_count();
    let per_point: Vec<(f64, f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let col = matrix.column_vec(i);
            let lpd_i = log_mean_exp(&col, None).expect("nonempty column");
            (lpd_i, sample_variance(&col))
        })
        .collect();

    let pointwise: Vec<f64> = per_point.iter().map(|(lpd_i, term)| lpd_i - term).collect();
    let terms: Vec<f64> = per_point.iter().map(|(_, term)| *term).collect();
    let total: f64 = pointwise.iter().sum();
    let p_waic: f64 = terms.iter().sum();

    ElpdResult {
        method: EstimateMethod::Waic,
        se_total: se_or_zero(&pointwise),
        se_p_eff: Some(se_or_zero(&terms)),
        pointwise: PointwiseValues::new(pointwise, PointwiseKind::ElpdWaic),
        total,
        p_eff: Some(p_waic),
        ic_scale: -2.0 * total,
        k_hats: Vec::new(),
        waic_variance_terms: terms,
        bias_corrected: false,
    }
}

/// Standard error of a pointwise total: `√(n · sample-variance)`.
pub fn se_of(pointwise: &PointwiseValues) -> Result<f64, EstimatorError> {
    se_of_slice(&pointwise.values)
}

fn se_of_slice(values: &[f64]) -> Result<f64, EstimatorError> {
    let n = values.len();
    if n < 2 {
        return Err(EstimatorError::DegenerateSampleSize { n });
    }
    Ok((n as f64 * sample_variance(values)).sqrt())
}

pub(crate) fn se_or_zero(values: &[f64]) -> f64 {
    se_of_slice(values).unwrap_or(0.0)
}

/// Unbiased (n−1 denominator) sample variance, two-pass.
fn sample_variance(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean: f64 = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
}

/// Paired comparison of two estimates over the same data points.
///
/// Positive `elpd_diff` favors the second argument. The paired standard
/// error uses the per-point differences, which is tighter than combining the
/// two marginal standard errors whenever the pointwise values are positively
/// correlated.
pub fn compare(a: &ElpdResult, b: &ElpdResult) -> Result<ComparisonResult, EstimatorError> {
    if a.point_count() != b.point_count() {
        return Err(EstimatorError::LengthMismatch { left: a.point_count(), right: b.point_count() });
    }
    let pointwise_diff: Vec<f64> = b
        .pointwise
        .values
        .iter()
        .zip(&a.pointwise.values)
        .map(|(bi, ai)| bi - ai)
        .collect();
    let elpd_diff: f64 = pointwise_diff.iter().sum();
    let se_diff = se_of_slice(&pointwise_diff)?;
    Ok(ComparisonResult { elpd_diff, se_diff, pointwise_diff })
}

/// Nonparametric uncertainty for a pointwise total: each replicate draws
/// flat-Dirichlet weights over the n points and evaluates `n · Σ w_i x_i`;
/// the result is the standard deviation across replicates.
///
/// Replicates use per-replicate derived RNG streams, so the result is
/// deterministic for a fixed seed regardless of execution order.
pub fn bayesian_bootstrap_se(
    pointwise: &PointwiseValues,
    replicates: usize,
    seed: u64,
) -> Result<f64, EstimatorError> {
    if replicates < 2 {
        return Err(EstimatorError::InvalidReplicates { got: replicates });
    }
    let values = &pointwise.values;
    let n = values.len();
    let stats: Vec<f64> = (0..replicates)
        .into_par_iter()
        .map(|rep| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(rep as u64 + 1);
            // flat Dirichlet via normalized unit exponentials
            let gammas: Vec<f64> = (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
            let total: f64 = gammas.iter().sum();
            n as f64 * gammas.iter().zip(values).map(|(g, x)| g / total * x).sum::<f64>()
        })
        .collect();
    Ok(sample_variance(&stats).sqrt())
}
