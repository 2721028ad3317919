//! Importance-ratio stabilization: raw ratios, ratio truncation, and Pareto
//! smoothing with the tail-shape diagnostic.
//!
//! Inputs and outputs are log-scale throughout; ratios are only exponentiated
//! inside max-shifted blocks, so the pipeline tolerates log-likelihood columns
//! spanning hundreds of log units.

use std::fmt;

use crate::gpd::{fit_gpd, TailFit, MIN_TAIL_SIZE};
use crate::loglik::log_sum_exp;

/// Fraction of draws treated as the upper tail when smoothing.
pub const DEFAULT_TAIL_FRACTION: f64 = 0.2;

/// Post-smoothing truncation exponent: weights are capped at `S^e · w̄`.
pub const DEFAULT_PSIS_TRUNCATION_EXPONENT: f64 = 0.75;

/// Truncation exponent for plain truncated importance sampling, capping raw
/// ratios at `√S · r̄`. An exponent of 1/4 gives the heavy-truncation variant.
pub const DEFAULT_TIS_TRUNCATION_EXPONENT: f64 = 0.5;

/// How a weight vector was produced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightMethod {
    Raw,
    Truncated { exponent: f64 },
    Psis,
}

/// What happened to the tail during Pareto smoothing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TailOutcome {
    /// Method does not smooth the tail (raw or truncated weights).
    NotSmoothed,
    /// Tail replaced by fitted order statistics.
    Smoothed(TailSmoothing),
    /// All tail values equal; raw weights kept (truncated only). A constant
    /// tail means the full posterior already matches the left-out posterior,
    /// so raw importance sampling is exact there.
    Degenerate,
    /// Too few tail draws to fit; raw weights kept (truncated only).
    TooFewDraws,
}

/// Details of a successful tail fit. The fit lives in the shifted ratio
/// space: a ratio `r` maps to `exp(log r − log_shift)`, so the fitted
/// location equals the shifted tail threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailSmoothing {
    pub fit: TailFit,
    pub log_shift: f64,
    /// Number of tail values replaced by order statistics (ties with the
    /// threshold are left in the bulk).
    pub replaced: usize,
}

/// A per-data-point vector of S importance weights on the log scale, plus
/// the fitted tail diagnostic.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedWeights {
    /// Unnormalized log weights, same proportionality constant as the input
    /// log ratios.
    pub log_weights: Vec<f64>,
    /// Fitted generalized Pareto shape, when a tail fit happened.
    pub k_hat: Option<f64>,
    pub method: WeightMethod,
    /// Which data point these weights belong to; set by the estimator layer.
    pub point_index: usize,
    pub tail: TailOutcome,
}

impl SmoothedWeights {
    pub fn with_point_index(mut self, point_index: usize) -> Self {
        self.point_index = point_index;
        self
    }
}

/// Log importance ratios for one data point: `log(1/p(y_i|θ^s))`, i.e. the
/// negated log-likelihood column. The proportionality constant is irrelevant
/// downstream because every estimator self-normalizes.
pub fn raw_log_ratios(loglik_column: &[f64]) -> Vec<f64> {
    loglik_column.iter().map(|v| -v).collect()
}

/// Truncated importance weights: `w^s = min(r^s, S^exponent · r̄)` computed
/// in log space, where `r̄` is the mean of the raw ratios.
pub fn truncate_weights(log_ratios: &[f64], exponent: f64) -> SmoothedWeights {
    assert!(
        exponent > 0.0 && exponent <= 1.0,
        "truncation exponent must lie in (0, 1], got {}",
        exponent
    );
    let s = log_ratios.len();
    assert!(s >= 1, "need at least one ratio");
    let log_bound = log_truncation_bound(log_ratios, s, exponent);
    SmoothedWeights {
        log_weights: log_ratios.iter().map(|&lr| lr.min(log_bound)).collect(),
        k_hat: None,
        method: WeightMethod::Truncated { exponent },
        point_index: 0,
        tail: TailOutcome::NotSmoothed,
    }
}

/// `log(S^exponent · mean(exp(log_values)))`
fn log_truncation_bound(log_values: &[f64], s: usize, exponent: f64) -> f64 {
    exponent * (s as f64).ln() + log_sum_exp(log_values) - (s as f64).ln()
}

/// Pareto-smoothed weights with the default `S^{3/4} · w̄` truncation.
pub fn psis_smooth(log_ratios: &[f64], tail_fraction: f64) -> SmoothedWeights {
    psis_smooth_with(log_ratios, tail_fraction, DEFAULT_PSIS_TRUNCATION_EXPONENT)
}

/// Pareto smoothing with an explicit truncation exponent.
///
/// The tail is the `M = ⌈tail_fraction·S⌉` largest ratios. The threshold is
/// the largest ratio left outside the tail; tail values strictly above it are
/// replaced, in ascending rank order, by the fitted generalized Pareto
/// quantiles at `(z − 1/2)/M'` for `z = 1..M'`, where `M'` excludes exact
/// ties with the threshold (those stay in the bulk, keeping the fitted
/// exceedances strictly positive). Finally the whole vector is capped at
/// `S^exponent · w̄`, `w̄` being the mean of the smoothed (post-replacement)
/// weights.
///
/// When the tail is constant or too small to fit, the raw ratios are kept,
/// the same cap is applied, and `k_hat` is left undefined with the outcome
/// flagged on the result.
pub fn psis_smooth_with(
    log_ratios: &[f64],
    tail_fraction: f64,
    truncation_exponent: f64,
) -> SmoothedWeights {
    assert!(
        tail_fraction > 0.0 && tail_fraction < 1.0,
        "tail fraction must lie in (0, 1), got {}",
        tail_fraction
    );
    let s = log_ratios.len();
    assert!(s >= 1, "need at least one ratio");
    let tail_len = (tail_fraction * s as f64).ceil() as usize;

    if tail_len < MIN_TAIL_SIZE || tail_len >= s {
        return fallback(log_ratios, s, truncation_exponent, TailOutcome::TooFewDraws);
    }

    let bulk_len = s - tail_len;
    let compare =
        |&a: &usize, &b: &usize| log_ratios[a].partial_cmp(&log_ratios[b]).expect("finite");
    // Only the tail needs full ordering: partition at the threshold order
    // statistic, then sort the M elements above it.
    let mut order: Vec<usize> = (0..s).collect();
    let (_, &mut threshold_idx, tail_indices) =
        order.select_nth_unstable_by(bulk_len - 1, compare);
    tail_indices.sort_unstable_by(compare);
    let tail_indices = &order[bulk_len..];

    let log_shift = log_ratios[tail_indices[tail_len - 1]];
    let threshold = (log_ratios[threshold_idx] - log_shift).exp();

    // Exceedances above the threshold in the shifted linear space; exact
    // ties fall back into the bulk.
    let mut replaced_positions = Vec::with_capacity(tail_len);
    let mut exceedances = Vec::with_capacity(tail_len);
    for &idx in tail_indices {
        let value = (log_ratios[idx] - log_shift).exp();
        let excess = value - threshold;
        if excess > 0.0 {
            replaced_positions.push(idx);
            exceedances.push(excess);
        }
    }

    if exceedances.is_empty()
        || exceedances.iter().all(|&e| e == exceedances[0]) && exceedances.len() > 1
    {
        return fallback(log_ratios, s, truncation_exponent, TailOutcome::Degenerate);
    }
    if exceedances.len() < MIN_TAIL_SIZE {
        return fallback(log_ratios, s, truncation_exponent, TailOutcome::TooFewDraws);
    }

    let fit = fit_gpd(&exceedances, threshold).expect("positive exceedances checked above");
    let replaced = exceedances.len();

    // Replacement order statistics on the log scale. A heavy fitted shape
    // can push the top quantiles past the linear f64 range, so the smoothed
    // weights and their mean are carried in log space end to end.
    let mut smoothed = log_ratios.to_vec();
    for (z, &idx) in replaced_positions.iter().enumerate() {
        let p = (z as f64 + 0.5) / replaced as f64;
        smoothed[idx] = log_shift + log_gpd_quantile(&fit, p);
    }
    let log_bound = truncation_exponent * (s as f64).ln() + log_sum_exp(&smoothed)
        - (s as f64).ln();
    let log_weights: Vec<f64> = smoothed.iter().map(|&lw| lw.min(log_bound)).collect();

    SmoothedWeights {
        log_weights,
        k_hat: Some(fit.dist.shape()),
        method: WeightMethod::Psis,
        point_index: 0,
        tail: TailOutcome::Smoothed(TailSmoothing { fit, log_shift, replaced }),
    }
}

/// Log of the fitted quantile `location + σ((1−p)^{−k} − 1)/k`, switching to
/// an exponent-dominant form when the direct evaluation would overflow.
fn log_gpd_quantile(fit: &TailFit, p: f64) -> f64 {
    let location = fit.threshold();
    let (scale, shape) = (fit.dist.scale(), fit.dist.shape());
    let l = -(-p).ln_1p(); // −ln(1−p) ≥ 0
    if shape.abs() < 1e-6 {
        return (location + scale * l).ln();
    }
    let t = shape * l;
    if t < 700.0 {
        (location + scale * t.exp_m1() / shape).ln()
    } else {
        // q = (σ/k)e^t + (μ − σ/k); the correction factor is ~1 here
        t + (scale / shape).ln() + ((location - scale / shape) * shape / scale * (-t).exp()).ln_1p()
    }
}

fn fallback(
    log_ratios: &[f64],
    s: usize,
    truncation_exponent: f64,
    tail: TailOutcome,
) -> SmoothedWeights {
    let log_bound = log_truncation_bound(log_ratios, s, truncation_exponent);
    SmoothedWeights {
        log_weights: log_ratios.iter().map(|&lr| lr.min(log_bound)).collect(),
        k_hat: None,
        method: WeightMethod::Psis,
        point_index: 0,
        tail,
    }
}

/// Reliability ladder for the fitted tail shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum DiagnosticLevel {
    /// k̂ < 1/2: importance-ratio variance is finite, fast convergence.
    Good,
    /// 1/2 ≤ k̂ ≤ 0.7: infinite ratio variance but acceptable performance.
    Ok,
    /// 0.7 < k̂ ≤ 1: unreliable; prefer direct sampling or K-fold CV.
    WarnHigh,
    /// k̂ > 1: ratio mean does not exist.
    Severe,
}

impl DiagnosticLevel {
    pub fn label(&self) -> &'static str {
        match self {
            Self::Good => "good",
            Self::Ok => "ok",
            Self::WarnHigh => "high",
            Self::Severe => "severe",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagnosticFlag {
    pub level: DiagnosticLevel,
    /// `None` when the tail was degenerate and nothing was fitted; such
    /// points classify as good because constant weights need no smoothing.
    pub k_hat: Option<f64>,
}

/// Maps a fitted tail shape to its diagnostic level.
pub fn diagnose(k_hat: Option<f64>) -> DiagnosticFlag {
    let level = match k_hat {
        None => DiagnosticLevel::Good,
        Some(k) if k < 0.5 => DiagnosticLevel::Good,
        Some(k) if k <= 0.7 => DiagnosticLevel::Ok,
        Some(k) if k <= 1.0 => DiagnosticLevel::WarnHigh,
        Some(_) => DiagnosticLevel::Severe,
    };
    DiagnosticFlag { level, k_hat }
}

impl fmt::Display for DiagnosticLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}
