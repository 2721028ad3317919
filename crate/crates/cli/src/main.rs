//! Command-line front end: ingest log-likelihood matrices, run the
//! estimators, and emit a human-readable report plus an optional
//! machine-readable JSON document.
//!
//! Exit codes: 0 success, 1 usage, 2 parse/validation, 3 estimator error.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use elpd::estimators::{
    bayesian_bootstrap_se, compare, elpd_loo, waic, ElpdResult, EstimatorError, LooMethod,
};
use elpd::kfold::{elpd_kfold, make_folds, FoldAssignment, FoldLogLik, KfoldError};
use elpd::loglik::LogLikMatrix;
use elpd::psis::{DEFAULT_PSIS_TRUNCATION_EXPONENT, DEFAULT_TIS_TRUNCATION_EXPONENT};

mod input;
mod report;

use input::{load_matrix, InputError, InputFormat, InputSpec};
use report::BootstrapDoc;

#[derive(Parser)]
#[command(
    name = "elpd",
    version,
    about = "Pointwise out-of-sample predictive accuracy from posterior log-likelihood draws"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Approximate leave-one-out elpd (PSIS by default)
    Loo(EstimateArgs),
    /// WAIC and its variance-based effective parameter count
    Waic(WaicArgs),
    /// Generate a K-fold assignment table for external fitting tools
    KfoldSplit(KfoldSplitArgs),
    /// Aggregate per-fold held-out log-likelihoods into a K-fold estimate
    KfoldElpd(KfoldElpdArgs),
    /// Compare two models fitted to the same data points
    Compare(CompareArgs),
}

#[derive(Args)]
struct InputArgs {
    /// Log-likelihood input file (rows are draws)
    path: PathBuf,
    /// Input file format
    #[arg(long, value_enum, default_value_t = InputFormat::MatrixCsv)]
    format: InputFormat,
    /// Column-name prefix (draws-csv) or field name (ndjson)
    #[arg(long, default_value = "log_lik")]
    column_prefix: String,
}

impl InputArgs {
    fn spec(&self) -> InputSpec {
        InputSpec {
            path: self.path.clone(),
            format: self.format,
            column_prefix: self.column_prefix.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    /// Raw importance sampling
    Is,
    /// Truncated importance sampling
    Tis,
    /// Pareto-smoothed importance sampling
    Psis,
    /// WAIC (compare only)
    Waic,
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Weighting method
    #[arg(long, value_enum, default_value_t = MethodArg::Psis)]
    method: MethodArg,
    /// Tail fraction for Pareto smoothing
    #[arg(long, default_value_t = 0.2)]
    tail_fraction: f64,
    /// Truncation exponent (defaults: 0.5 for tis, 0.75 for psis)
    #[arg(long)]
    trunc_exponent: Option<f64>,
    /// Bayesian bootstrap replicates for the elpd total
    #[arg(long, num_args = 0..=1, default_missing_value = "1000")]
    bootstrap: Option<usize>,
    /// RNG seed (bootstrap replicates)
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Print the pointwise table
    #[arg(long)]
    pointwise: bool,
    /// Write the machine-readable JSON document to this path
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct WaicArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Bayesian bootstrap replicates for the elpd total
    #[arg(long, num_args = 0..=1, default_missing_value = "1000")]
    bootstrap: Option<usize>,
    /// RNG seed (bootstrap replicates)
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Print the pointwise table
    #[arg(long)]
    pointwise: bool,
    /// Write the machine-readable JSON document to this path
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct KfoldSplitArgs {
    /// Number of data points
    #[arg(long)]
    n: usize,
    /// Number of folds K
    #[arg(long)]
    folds: usize,
    /// Permutation seed
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Optional strata labels, one per line
    #[arg(long)]
    strata: Option<PathBuf>,
    /// Write the assignment table here instead of stdout
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct KfoldElpdArgs {
    /// Fold assignment table (point_index,fold_id)
    assignment: PathBuf,
    /// Held-out log-likelihood matrix for one fold, as K=PATH (repeatable);
    /// columns are that fold's points in ascending point order
    #[arg(long = "fold", value_name = "K=PATH")]
    folds: Vec<String>,
    /// Full-data log-likelihood matrix (enables the p_eff row)
    #[arg(long)]
    full: Option<PathBuf>,
    /// Print the pointwise table
    #[arg(long)]
    pointwise: bool,
    /// Write the machine-readable JSON document to this path
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    /// Log-likelihood input for the first model
    path_a: PathBuf,
    /// Log-likelihood input for the second model
    path_b: PathBuf,
    /// Input file format (both inputs)
    #[arg(long, value_enum, default_value_t = InputFormat::MatrixCsv)]
    format: InputFormat,
    /// Column-name prefix (draws-csv) or field name (ndjson)
    #[arg(long, default_value = "log_lik")]
    column_prefix: String,
    /// Estimator run on both inputs
    #[arg(long, value_enum, default_value_t = MethodArg::Psis)]
    method: MethodArg,
    /// Tail fraction for Pareto smoothing
    #[arg(long, default_value_t = 0.2)]
    tail_fraction: f64,
    /// Truncation exponent (defaults: 0.5 for tis, 0.75 for psis)
    #[arg(long)]
    trunc_exponent: Option<f64>,
    /// Write the machine-readable JSON document to this path
    #[arg(long)]
    output: Option<PathBuf>,
}

/// Failure category, mapped to the documented exit codes.
enum Failure {
    Usage(String),
    Parse(String),
    Estimator(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Self::Usage(_) => 1,
            Self::Parse(_) => 2,
            Self::Estimator(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Self::Usage(m) | Self::Parse(m) | Self::Estimator(m) => m,
        }
    }
}

impl From<InputError> for Failure {
    fn from(e: InputError) -> Self {
        Failure::Parse(e.to_string())
    }
}

impl From<EstimatorError> for Failure {
    fn from(e: EstimatorError) -> Self {
        match e {
            EstimatorError::InvalidReplicates { .. } => Failure::Usage(e.to_string()),
            _ => Failure::Estimator(e.to_string()),
        }
    }
}

impl From<KfoldError> for Failure {
    fn from(e: KfoldError) -> Self {
        match e {
            KfoldError::InvalidK { .. } => Failure::Usage(e.to_string()),
            KfoldError::ParseError { .. } => Failure::Parse(e.to_string()),
            _ => Failure::Estimator(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{}", e);
                return ExitCode::SUCCESS;
            }
            eprint!("{}", e);
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Loo(args) => run_loo(args),
        Command::Waic(args) => run_waic(args),
        Command::KfoldSplit(args) => run_kfold_split(args),
        Command::KfoldElpd(args) => run_kfold_elpd(args),
        Command::Compare(args) => run_compare(args),
    }
}

fn loo_method(
    method: MethodArg,
    tail_fraction: f64,
    trunc_exponent: Option<f64>,
) -> Result<LooMethod, Failure> {
    if !(0.0 < tail_fraction && tail_fraction < 1.0) {
        return Err(Failure::Usage(format!(
            "--tail-fraction must lie in (0, 1), got {}",
            tail_fraction
        )));
    }
    if let Some(e) = trunc_exponent {
        if !(0.0 < e && e <= 1.0) {
            return Err(Failure::Usage(format!(
                "--trunc-exponent must lie in (0, 1], got {}",
                e
            )));
        }
    }
    match method {
        MethodArg::Is => Ok(LooMethod::Is),
        MethodArg::Tis => Ok(LooMethod::Tis {
            exponent: trunc_exponent.unwrap_or(DEFAULT_TIS_TRUNCATION_EXPONENT),
        }),
        MethodArg::Psis => Ok(LooMethod::Psis {
            tail_fraction,
            trunc_exponent: trunc_exponent.unwrap_or(DEFAULT_PSIS_TRUNCATION_EXPONENT),
        }),
        MethodArg::Waic => Err(Failure::Usage(
            "--method waic is only valid for the compare command; use the waic command instead"
                .to_string(),
        )),
    }
}

fn run_bootstrap(
    result: &ElpdResult,
    replicates: Option<usize>,
    seed: u64,
) -> Result<Option<BootstrapDoc>, Failure> {
    replicates
        .map(|n| {
            let se = bayesian_bootstrap_se(&result.pointwise, n, seed)?;
            Ok(BootstrapDoc { replicates: n, seed, se })
        })
        .transpose()
}

fn emit(
    result: &ElpdResult,
    draws: usize,
    source: &str,
    bootstrap: Option<BootstrapDoc>,
    pointwise: bool,
    output: Option<&PathBuf>,
) -> Result<(), Failure> {
    print!("{}", report::render(result, source, bootstrap.as_ref()));
    if pointwise {
        print!("{}", report::render_pointwise(result));
    }
    if let Some(path) = output {
        let doc = report::result_doc(result, draws, bootstrap);
        write_json(path, &doc)?;
    }
    Ok(())
}

fn write_json<T: serde::Serialize>(path: &PathBuf, doc: &T) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(doc)
        .map_err(|e| Failure::Estimator(format!("serializing results: {}", e)))?;
    text.push('\n');
    std::fs::write(path, text)
        .map_err(|e| Failure::Parse(format!("{}: {}", path.display(), e)))
}

fn matrix_source(matrix: &LogLikMatrix) -> String {
    format!("{} by {} log-likelihood matrix", matrix.draw_count(), matrix.point_count())
}

fn run_loo(args: EstimateArgs) -> Result<(), Failure> {
    let method = loo_method(args.method, args.tail_fraction, args.trunc_exponent)?;
    let matrix = load_matrix(&args.input.spec())?;
    let result = elpd_loo(&matrix, method);
    let bootstrap = run_bootstrap(&result, args.bootstrap, args.seed)?;
    let source = matrix_source(&matrix);
    emit(&result, matrix.draw_count(), &source, bootstrap, args.pointwise, args.output.as_ref())
}

fn run_waic(args: WaicArgs) -> Result<(), Failure> {
    let matrix = load_matrix(&args.input.spec())?;
    let result = waic(&matrix);
    let bootstrap = run_bootstrap(&result, args.bootstrap, args.seed)?;
    let source = matrix_source(&matrix);
    emit(&result, matrix.draw_count(), &source, bootstrap, args.pointwise, args.output.as_ref())
}

fn read_strata(path: &PathBuf) -> Result<Vec<String>, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Parse(format!("{}: {}", path.display(), e)))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect())
}

fn run_kfold_split(args: KfoldSplitArgs) -> Result<(), Failure> {
    let strata = args.strata.as_ref().map(read_strata).transpose()?;
    let assignment = make_folds(args.n, args.folds, args.seed, strata.as_deref())?;
    let table = assignment.to_table();
    match &args.output {
        Some(path) => std::fs::write(path, table)
            .map_err(|e| Failure::Parse(format!("{}: {}", path.display(), e)))?,
        None => print!("{}", table),
    }
    Ok(())
}

fn run_kfold_elpd(args: KfoldElpdArgs) -> Result<(), Failure> {
    let table = std::fs::read_to_string(&args.assignment)
        .map_err(|e| Failure::Parse(format!("{}: {}", args.assignment.display(), e)))?;
    let assignment = FoldAssignment::from_table(&table)?;

    if args.folds.is_empty() {
        return Err(Failure::Usage("at least one --fold K=PATH is required".to_string()));
    }
    let mut folds = Vec::new();
    let mut total_draws = 0usize;
    for spec in &args.folds {
        let (k, path) = spec.split_once('=').ok_or_else(|| {
            Failure::Usage(format!("--fold expects K=PATH, got {:?}", spec))
        })?;
        let fold_id: usize = k
            .trim()
            .parse()
            .map_err(|_| Failure::Usage(format!("--fold expects a numeric fold id, got {:?}", k)))?;
        let matrix = load_matrix(&InputSpec {
            path: PathBuf::from(path),
            format: InputFormat::MatrixCsv,
            column_prefix: String::new(),
        })?;
        total_draws += matrix.draw_count();
        folds.push(FoldLogLik {
            fold_id,
            holdout_loglik: matrix.values().clone(),
            full_loglik: None,
        });
    }

    let full = args
        .full
        .as_ref()
        .map(|path| {
            load_matrix(&InputSpec {
                path: path.clone(),
                format: InputFormat::MatrixCsv,
                column_prefix: String::new(),
            })
        })
        .transpose()?;

    let result = elpd_kfold(&folds, &assignment, full.as_ref())?;
    let source = format!(
        "{} folds over {} points ({} held-out draws)",
        assignment.k,
        assignment.point_count(),
        total_draws
    );
    emit(&result, total_draws, &source, None, args.pointwise, args.output.as_ref())
}

fn run_compare(args: CompareArgs) -> Result<(), Failure> {
    let spec = |path: &PathBuf| InputSpec {
        path: path.clone(),
        format: args.format,
        column_prefix: args.column_prefix.clone(),
    };
    let matrix_a = load_matrix(&spec(&args.path_a))?;
    let matrix_b = load_matrix(&spec(&args.path_b))?;

    let estimate = |m: &LogLikMatrix| -> Result<ElpdResult, Failure> {
        Ok(match args.method {
            MethodArg::Waic => waic(m),
            other => elpd_loo(m, loo_method(other, args.tail_fraction, args.trunc_exponent)?),
        })
    };
    let result_a = estimate(&matrix_a)?;
    let result_b = estimate(&matrix_b)?;
    let comparison = compare(&result_a, &result_b)?;

    let mut label_a = String::new();
    let mut label_b = String::new();
    write!(label_a, "{} on {} (elpd {:.1})", result_a.method.short_name(), args.path_a.display(), result_a.total).ok();
    write!(label_b, "{} on {} (elpd {:.1})", result_b.method.short_name(), args.path_b.display(), result_b.total).ok();
    print!("{}", report::render_comparison(&comparison, &label_a, &label_b));

    if let Some(path) = &args.output {
        let doc = report::CompareDoc {
            elpd_diff: comparison.elpd_diff,
            se_diff: comparison.se_diff,
            sign_convention: "second minus first; positive favors the second model".to_string(),
            a: report::result_doc(&result_a, matrix_a.draw_count(), None),
            b: report::result_doc(&result_b, matrix_b.draw_count(), None),
            pointwise_diff: comparison.pointwise_diff.clone(),
        };
        write_json(path, &doc)?;
    }
    Ok(())
}
