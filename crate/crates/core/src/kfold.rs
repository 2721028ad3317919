//! Fold construction and K-fold cross-validation aggregation.
//!
//! Nothing here refits models: the estimator consumes per-fold draw matrices
//! produced by whatever fitting tool the user runs, which keeps the crate
//! engine-agnostic. Fold assignments serialize to a two-column table for
//! handoff to those tools.

use std::collections::BTreeMap;
use std::fmt;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::estimators::{ElpdResult, EstimateMethod};
use crate::loglik::{log_mean_exp, lpd, LogLikMatrix, PointwiseKind, PointwiseValues};

#[derive(Debug, Clone, PartialEq)]
pub enum KfoldError {
    InvalidK { k: usize, n: usize },
    /// Points missing from or duplicated across the supplied folds, or fold
    /// matrices whose shape disagrees with the assignment.
    CoverageError { detail: String },
    LengthMismatch { left: usize, right: usize },
    InvalidFoldMatrix { fold: usize, detail: String },
    ParseError { line: usize, detail: String },
}

impl fmt::Display for KfoldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::InvalidK { k, n } => write!(f, "K must satisfy 2 <= K <= n, got K={} n={}", k, n),
            Self::CoverageError { detail } => write!(f, "fold coverage error: {}", detail),
            Self::LengthMismatch { left, right } => {
                write!(f, "length mismatch: {} vs {}", left, right)
            }
            Self::InvalidFoldMatrix { fold, detail } => {
                write!(f, "invalid log-likelihood matrix for fold {}: {}", fold, detail)
            }
            Self::ParseError { line, detail } => {
                write!(f, "assignment table parse error at line {}: {}", line, detail)
            }
        }
    }
}

impl std::error::Error for KfoldError {}

/// Assignment of each data point to one of K folds (fold ids are 1-based;
/// point indices are 0-based matrix columns).
#[derive(Debug, Clone, PartialEq)]
pub struct FoldAssignment {
    pub assignment: Vec<usize>,
    pub k: usize,
    /// Seed used to generate the assignment; `None` when loaded from a table.
    pub seed: Option<u64>,
    pub strata: Option<Vec<String>>,
}

impl FoldAssignment {
    pub fn point_count(&self) -> usize {
        self.assignment.len()
    }

    /// Ascending point indices assigned to `fold`. Holdout matrix columns
    /// follow this order.
    pub fn fold_points(&self, fold: usize) -> Vec<usize> {
        self.assignment
            .iter()
            .enumerate()
            .filter(|(_, &f)| f == fold)
            .map(|(i, _)| i)
            .collect()
    }

    /// Two-column table `point_index,fold_id` with a header row.
    pub fn to_table(&self) -> String {
        let mut out = String::from("point_index,fold_id\n");
        for (i, f) in self.assignment.iter().enumerate() {
            out.push_str(&format!("{},{}\n", i, f));
        }
        out
    }

    /// Parses the table written by [`FoldAssignment::to_table`]. Requires
    /// point indices 0..n−1 each appearing exactly once and every fold in
    /// 1..=K nonempty.
    pub fn from_table(text: &str) -> Result<Self, KfoldError> {
        let mut pairs = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with("point_index") {
                continue;
            }
            let mut parts = line.split(',');
            let parse = |s: Option<&str>| -> Result<usize, KfoldError> {
                s.and_then(|v| v.trim().parse::<usize>().ok())
                    .ok_or(KfoldError::ParseError { line: lineno + 1, detail: line.to_string() })
            };
            let point = parse(parts.next())?;
            let fold = parse(parts.next())?;
            pairs.push((point, fold));
        }
        let n = pairs.len();
        let mut assignment = vec![0usize; n];
        let mut seen = vec![false; n];
        for (point, fold) in pairs {
            if point >= n || seen[point] {
                return Err(KfoldError::CoverageError {
                    detail: format!("point index {} out of range or duplicated", point),
                });
            }
            if fold == 0 {
                return Err(KfoldError::CoverageError {
                    detail: "fold ids are 1-based".to_string(),
                });
            }
            seen[point] = true;
            assignment[point] = fold;
        }
        let k = assignment.iter().copied().max().unwrap_or(0);
        if k < 2 || k > n {
            return Err(KfoldError::InvalidK { k, n });
        }
        for fold in 1..=k {
            if !assignment.contains(&fold) {
                return Err(KfoldError::CoverageError { detail: format!("fold {} is empty", fold) });
            }
        }
        Ok(Self { assignment, k, seed: None, strata: None })
    }
}

/// Held-out log-likelihood for one fold: `holdout_loglik` is draws × fold
/// points (columns in ascending point-index order), evaluated under the
/// posterior fitted without that fold. `full_loglik` optionally holds the
/// same draws evaluated at all n points, which the bias correction needs.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldLogLik {
    pub fold_id: usize,
    pub holdout_loglik: Array2<f64>,
    pub full_loglik: Option<Array2<f64>>,
}

/// Randomly permutes the points (per stratum, when strata are given) and
/// deals them systematically into K folds. Deterministic for a fixed seed;
/// fold sizes within each stratum differ by at most one.
pub fn make_folds(
    n: usize,
    k: usize,
    seed: u64,
    strata: Option<&[String]>,
) -> Result<FoldAssignment, KfoldError> {
    if k < 2 || k > n {
        return Err(KfoldError::InvalidK { k, n });
    }
    if let Some(labels) = strata {
        if labels.len() != n {
            return Err(KfoldError::LengthMismatch { left: labels.len(), right: n });
        }
    }

    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    match strata {
        Some(labels) => {
            for (i, label) in labels.iter().enumerate() {
                groups.entry(label.as_str()).or_default().push(i);
            }
        }
        None => {
            groups.insert("", (0..n).collect());
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0usize; n];
    // The fold cursor carries over between strata so the overall deal stays
    // one continuous cycle and total fold sizes also balance.
    let mut cursor = 0usize;
    for indices in groups.values_mut() {
        indices.shuffle(&mut rng);
        for &point in indices.iter() {
            assignment[point] = cursor % k + 1;
            cursor += 1;
        }
    }

    Ok(FoldAssignment { assignment, k, seed: Some(seed), strata: strata.map(<[String]>::to_vec) })
}

/// Aggregates per-fold held-out log-likelihoods into a pointwise elpd
/// estimate: each point's contribution is the log of the average held-out
/// likelihood over its fold's draws.
///
/// `full_matrix`, when given, is the log-likelihood matrix from a fit to the
/// complete data; it provides the effective-parameter count
/// `p_eff = lpd_total − total`, which is otherwise unavailable.
pub fn elpd_kfold(
    folds: &[FoldLogLik],
    assignment: &FoldAssignment,
    full_matrix: Option<&LogLikMatrix>,
) -> Result<ElpdResult, KfoldError> {
    let n = assignment.point_count();
    let mut pointwise = vec![f64::NAN; n];
    let mut covered = vec![false; n];

    for fold in folds {
        let points = assignment.fold_points(fold.fold_id);
        if points.is_empty() {
            return Err(KfoldError::CoverageError {
                detail: format!("fold {} has no points in the assignment", fold.fold_id),
            });
        }
        if fold.holdout_loglik.ncols() != points.len() {
            return Err(KfoldError::CoverageError {
                detail: format!(
                    "fold {} holdout matrix has {} columns for {} assigned points",
                    fold.fold_id,
                    fold.holdout_loglik.ncols(),
                    points.len()
                ),
            });
        }
        if fold.holdout_loglik.nrows() == 0 {
            return Err(KfoldError::InvalidFoldMatrix {
                fold: fold.fold_id,
                detail: "no draws".to_string(),
            });
        }
        for (col, &point) in points.iter().enumerate() {
            if covered[point] {
                return Err(KfoldError::CoverageError {
                    detail: format!("point {} appears in more than one fold", point),
                });
            }
            let column = fold.holdout_loglik.column(col).to_vec();
            if column.iter().any(|v| !v.is_finite()) {
                return Err(KfoldError::InvalidFoldMatrix {
                    fold: fold.fold_id,
                    detail: format!("non-finite entry in column for point {}", point),
                });
            }
            pointwise[point] = log_mean_exp(&column, None).expect("nonempty column");
            covered[point] = true;
        }
    }

    if let Some(missing) = covered.iter().position(|&c| !c) {
        return Err(KfoldError::CoverageError {
            detail: format!("point {} is not covered by any fold", missing),
        });
    }

    let total: f64 = pointwise.iter().sum();
    let (p_eff, se_p_eff) = match full_matrix {
        Some(full) if full.point_count() == n => {
            let full_lpd = lpd(full);
            let terms: Vec<f64> =
                full_lpd.values.iter().zip(&pointwise).map(|(l, e)| l - e).collect();
            (Some(terms.iter().sum()), Some(crate::estimators::se_or_zero(&terms)))
        }
        Some(full) => {
            return Err(KfoldError::LengthMismatch { left: full.point_count(), right: n });
        }
        None => (None, None),
    };

    Ok(ElpdResult {
        method: EstimateMethod::Kfold,
        se_total: crate::estimators::se_or_zero(&pointwise),
        se_p_eff,
        total,
        p_eff,
        ic_scale: -2.0 * total,
        pointwise: PointwiseValues::new(pointwise, PointwiseKind::ElpdKfold),
        k_hats: Vec::new(),
        waic_variance_terms: Vec::new(),
        bias_corrected: false,
    })
}

/// First-order bias correction for the reduced training-set size:
/// adds `full_lpd_i − (1/K) Σ_k per_fold_full_lpd[k][i]` to each pointwise
/// component, where `per_fold_full_lpd[k]` holds the lpd of all n points
/// under fold k's training posterior.
pub fn burman_correction(
    kfold: &ElpdResult,
    full_lpd: &PointwiseValues,
    per_fold_full_lpd: &[Vec<f64>],
) -> Result<ElpdResult, KfoldError> {
    let n = kfold.point_count();
    if full_lpd.len() != n {
        return Err(KfoldError::LengthMismatch { left: full_lpd.len(), right: n });
    }
    if per_fold_full_lpd.is_empty() {
        return Err(KfoldError::CoverageError { detail: "no per-fold lpd vectors".to_string() });
    }
    for fold in per_fold_full_lpd {
        if fold.len() != n {
            return Err(KfoldError::LengthMismatch { left: fold.len(), right: n });
        }
    }

    let k = per_fold_full_lpd.len() as f64;
    let pointwise: Vec<f64> = (0..n)
        .map(|i| {
            let fold_avg: f64 = per_fold_full_lpd.iter().map(|fold| fold[i]).sum::<f64>() / k;
            kfold.pointwise.values[i] + full_lpd.values[i] - fold_avg
        })
        .collect();
    let total: f64 = pointwise.iter().sum();
    let p_eff_terms: Vec<f64> =
        full_lpd.values.iter().zip(&pointwise).map(|(l, e)| l - e).collect();

    Ok(ElpdResult {
        method: EstimateMethod::Kfold,
        se_total: crate::estimators::se_or_zero(&pointwise),
        se_p_eff: Some(crate::estimators::se_or_zero(&p_eff_terms)),
        total,
        p_eff: Some(p_eff_terms.iter().sum()),
        ic_scale: -2.0 * total,
        pointwise: PointwiseValues::new(pointwise, PointwiseKind::ElpdKfold),
        k_hats: Vec::new(),
        waic_variance_terms: Vec::new(),
        bias_corrected: true,
    })
}

/// Mean and spread of totals across repeated K-fold runs with different
/// permutation seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct RepeatSummary {
    pub mean_total: f64,
    pub sd_total: f64,
    pub repetitions: usize,
}

pub fn summarize_repeats(results: &[ElpdResult]) -> Result<RepeatSummary, KfoldError> {
    if results.is_empty() {
        return Err(KfoldError::CoverageError { detail: "no repetitions".to_string() });
    }
    let totals: Vec<f64> = results.iter().map(|r| r.total).collect();
    let r = totals.len() as f64;
    let mean = totals.iter().sum::<f64>() / r;
    let sd = if totals.len() < 2 {
        0.0
    } else {
        (totals.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / (r - 1.0)).sqrt()
    };
    Ok(RepeatSummary { mean_total: mean, sd_total: sd, repetitions: totals.len() })
}
