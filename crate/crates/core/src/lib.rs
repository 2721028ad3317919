//! Estimation of pointwise out-of-sample predictive accuracy for Bayesian
//! models, computed from a matrix of posterior log-likelihood draws.
//!
//! The input to everything here is an S×n matrix holding `log p(y_i | θ^s)`
//! for S posterior draws and n data points ([`LogLikMatrix`]). From that the
//! crate computes:
//!
//! * leave-one-out expected log predictive density (elpd) via raw, truncated,
//!   or Pareto-smoothed importance sampling ([`estimators::elpd_loo`]),
//! * WAIC and its variance-based effective parameter count
//!   ([`estimators::waic`]),
//! * K-fold cross-validation aggregation from externally fitted per-fold
//!   draws ([`kfold`]),
//! * standard errors, paired model comparison, and Bayesian-bootstrap
//!   uncertainty ([`estimators`]),
//! * per-point tail-shape diagnostics for the importance weights ([`psis`]).
//!
//! The [`oracle`] module holds a conjugate normal reference model with exact
//! posterior draws and closed-form leave-one-out answers, used as ground
//! truth in the test suites.

pub mod estimators;
pub mod gpd;
pub mod kfold;
pub mod loglik;
pub mod oracle;
pub mod psis;

pub use estimators::{
    bayesian_bootstrap_se, compare, elpd_loo, se_of, waic, ComparisonResult, ElpdResult,
    EstimateMethod, EstimatorError, LooMethod,
};
pub use gpd::{fit_gpd, GeneralizedPareto, GpdError, TailFit};
pub use kfold::{
    burman_correction, elpd_kfold, make_folds, summarize_repeats, FoldAssignment, FoldLogLik,
    KfoldError, RepeatSummary,
};
pub use loglik::{
    log_mean_exp, lpd, LogLikMatrix, MatrixError, PointwiseKind, PointwiseValues,
};
pub use oracle::{
    gen_heavy_ratios, simulate_shared_mean, simulate_varying_means, ConjugateNormalModel,
    OracleError,
};
pub use psis::{
    diagnose, psis_smooth, psis_smooth_with, raw_log_ratios, truncate_weights, DiagnosticFlag,
    DiagnosticLevel, SmoothedWeights, TailOutcome, WeightMethod,
};
