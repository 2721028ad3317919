//! Log-likelihood matrix data model and the numerically stable pointwise
//! log predictive density.
//!
//! All likelihood and weight arithmetic in this crate stays on the natural-log
//! scale; exponentials only ever appear inside max-shifted sums. The
//! quantities involved routinely span hundreds of log units, so anything else
//! would overflow.

use std::fmt;

use ndarray::Array2;
use rayon::prelude::*;

/// Validation errors for log-likelihood input.
#[derive(Debug, Clone, PartialEq)]
pub enum MatrixError {
    /// An entry is NaN or ±infinity. Zero likelihoods (−inf) are rejected
    /// here because every downstream importance ratio would be infinite.
    NonFinite { row: usize, col: usize, value: f64 },
    /// Fewer than 2 draws or fewer than 1 data point.
    EmptyMatrix { draws: usize, points: usize },
    /// Rows of differing length.
    Ragged { row: usize, expected: usize, got: usize },
    /// Chain label count does not match the draw count.
    ChainLabelMismatch { labels: usize, draws: usize },
    /// Empty input vector where at least one element is required.
    EmptyInput,
}

impl fmt::Display for MatrixError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::NonFinite { row, col, value } => {
                write!(f, "non-finite log-likelihood {} at draw {}, point {}", value, row, col)
            }
            Self::EmptyMatrix { draws, points } => {
                write!(f, "matrix must have at least 2 draws and 1 point, got {}x{}", draws, points)
            }
            Self::Ragged { row, expected, got } => {
                write!(f, "row {} has {} entries, expected {}", row, got, expected)
            }
            Self::ChainLabelMismatch { labels, draws } => {
                write!(f, "{} chain labels for {} draws", labels, draws)
            }
            Self::EmptyInput => write!(f, "input vector is empty"),
        }
    }
}

impl std::error::Error for MatrixError {}

/// An S×n matrix of pointwise log-likelihood values: rows are posterior
/// draws, columns are data points, entry `(s, i)` holds `log p(y_i | θ^s)`.
///
/// Construction validates that every entry is finite and that there are at
/// least two draws. Optional per-row chain labels are retained for
/// provenance only; nothing downstream consumes them.
#[derive(Debug, Clone, PartialEq)]
pub struct LogLikMatrix {
    values: Array2<f64>,
    chain_ids: Option<Vec<String>>,
}

impl LogLikMatrix {
    /// Validates a draws-by-points array into a `LogLikMatrix`.
    pub fn new(values: Array2<f64>, chain_ids: Option<Vec<String>>) -> Result<Self, MatrixError> {
        let (draws, points) = values.dim();
        if draws < 2 || points < 1 {
            return Err(MatrixError::EmptyMatrix { draws, points });
        }
        for ((row, col), &value) in values.indexed_iter() {
            if !value.is_finite() {
                return Err(MatrixError::NonFinite { row, col, value });
            }
        }
        if let Some(ids) = &chain_ids {
            if ids.len() != draws {
                return Err(MatrixError::ChainLabelMismatch { labels: ids.len(), draws });
            }
        }
        Ok(Self { values, chain_ids })
    }

    /// Validates a row-per-draw nested vector, checking rectangularity first.
    pub fn from_rows(rows: Vec<Vec<f64>>, chain_ids: Option<Vec<String>>) -> Result<Self, MatrixError> {
        let draws = rows.len();
        let points = rows.first().map_or(0, Vec::len);
        if draws < 2 || points < 1 {
            return Err(MatrixError::EmptyMatrix { draws, points });
        }
        let mut flat = Vec::with_capacity(draws * points);
        for (r, row) in rows.iter().enumerate() {
            if row.len() != points {
                return Err(MatrixError::Ragged { row: r, expected: points, got: row.len() });
            }
            flat.extend_from_slice(row);
        }
        let values = Array2::from_shape_vec((draws, points), flat).expect("shape checked above");
        Self::new(values, chain_ids)
    }

    /// Number of posterior draws S.
    pub fn draw_count(&self) -> usize {
        self.values.nrows()
    }

    /// Number of data points n.
    pub fn point_count(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn chain_ids(&self) -> Option<&[String]> {
        self.chain_ids.as_deref()
    }

    /// Copies column `i` (all draws for one data point) into a fresh vector.
    pub fn column_vec(&self, i: usize) -> Vec<f64> {
        self.values.column(i).to_vec()
    }
}

/// What a per-point vector measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointwiseKind {
    Lpd,
    ElpdLoo,
    ElpdWaic,
    PWaicTerm,
    ElpdKfold,
}

/// A length-n vector of per-data-point values, tagged with what it measures.
#[derive(Debug, Clone, PartialEq)]
pub struct PointwiseValues {
    pub values: Vec<f64>,
    pub kind: PointwiseKind,
}

impl PointwiseValues {
    pub fn new(values: Vec<f64>, kind: PointwiseKind) -> Self {
        debug_assert!(values.iter().all(|v| v.is_finite()));
        Self { values, kind }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }
}

/// Max-shifted log of a (weighted) mean of exponentials:
/// `log(Σ w_s e^{v_s} / Σ w_s)`, with unit weights when `weights` is `None`.
///
/// The shift makes the result exact for constant vectors and keeps the
/// computation stable for inputs anywhere in the finite f64 range.
pub fn log_mean_exp(values: &[f64], weights: Option<&[f64]>) -> Result<f64, MatrixError> {
    if values.is_empty() {
        return Err(MatrixError::EmptyInput);
    }
    match weights {
        None => {
            let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
            Ok(max + (sum / values.len() as f64).ln())
        }
        Some(w) => {
            assert_eq!(w.len(), values.len(), "weight length must match value length");
            assert!(w.iter().all(|&x| x >= 0.0), "weights must be nonnegative");
            let w_sum: f64 = w.iter().sum();
            assert!(w_sum > 0.0, "weight sum must be positive");
            let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let num: f64 = values.iter().zip(w).map(|(v, &wi)| wi * (v - max).exp()).sum();
            Ok(max + (num / w_sum).ln())
        }
    }
}

/// `log(Σ e^{v_s})` with max-shift; −∞ for an empty slice.
pub(crate) fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

/// Ratio-of-sums mean with log-scale weights:
/// `log(Σ e^{lw_s} e^{v_s} / Σ e^{lw_s})`. Self-normalized, so any constant
/// added to the log weights cancels. The two shifted sums are S exactly for
/// a constant value vector, making the constant case exact.
pub(crate) fn log_weighted_mean_exp(values: &[f64], log_weights: &[f64]) -> f64 {
    debug_assert_eq!(values.len(), log_weights.len());
    let mut max_joint = f64::NEG_INFINITY;
    let mut max_weight = f64::NEG_INFINITY;
    for (v, w) in values.iter().zip(log_weights) {
        max_joint = max_joint.max(v + w);
        max_weight = max_weight.max(*w);
    }
    let num: f64 = values
        .iter()
        .zip(log_weights)
        .map(|(v, w)| (v + w - max_joint).exp())
        .sum();
    let den: f64 = log_weights.iter().map(|w| (w - max_weight).exp()).sum();
    (max_joint - max_weight) + (num.ln() - den.ln())
}

/// Computed log pointwise predictive density: component `i` is
/// `log((1/S) Σ_s exp(log p(y_i | θ^s)))`.
pub fn lpd(matrix: &LogLikMatrix) -> PointwiseValues {
    let values: Vec<f64> = (0..matrix.point_count())
        .into_par_iter()
        .map(|i| {
            let col = matrix.column_vec(i);
            log_mean_exp(&col, None).expect("validated matrix has nonempty columns")
        })
        .collect();
    PointwiseValues::new(values, PointwiseKind::Lpd)
}
