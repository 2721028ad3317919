//! File-format layer: log-likelihood matrices from plain CSV, MCMC-style
//! draws CSV with header-based column selection, and newline-delimited JSON.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use elpd::loglik::{LogLikMatrix, MatrixError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum InputFormat {
    /// Numeric CSV, rows are draws; optional single header row.
    MatrixCsv,
    /// Header-named CSV (e.g. sampler output); columns selected by prefix.
    DrawsCsv,
    /// One JSON object per draw with an array-valued log-likelihood field.
    Ndjson,
}

#[derive(Debug, Clone)]
pub struct InputSpec {
    pub path: PathBuf,
    pub format: InputFormat,
    pub column_prefix: String,
}

#[derive(Debug)]
pub enum InputError {
    Io { path: PathBuf, source: std::io::Error },
    Parse { path: PathBuf, line: usize, detail: String },
    NonRectangular { path: PathBuf, line: usize, expected: usize, got: usize },
    NoMatchingColumns { path: PathBuf, prefix: String },
    Matrix { path: PathBuf, source: MatrixError },
}

impl fmt::Display for InputError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Io { path, source } => write!(f, "{}: {}", path.display(), source),
            Self::Parse { path, line, detail } => {
                write!(f, "{}:{}: {}", path.display(), line, detail)
            }
            Self::NonRectangular { path, line, expected, got } => write!(
                f,
                "{}:{}: row has {} fields, expected {}",
                path.display(),
                line,
                got,
                expected
            ),
            Self::NoMatchingColumns { path, prefix } => write!(
                f,
                "{}: no columns match prefix {prefix:?} (looked for {prefix:?}.N or {prefix:?}[N])",
                path.display()
            ),
            Self::Matrix { path, source } => write!(f, "{}: {}", path.display(), source),
        }
    }
}

impl std::error::Error for InputError {}

pub fn load_matrix(spec: &InputSpec) -> Result<LogLikMatrix, InputError> {
    let text = fs::read_to_string(&spec.path)
        .map_err(|source| InputError::Io { path: spec.path.clone(), source })?;
    match spec.format {
        InputFormat::MatrixCsv => parse_matrix_csv(&text, &spec.path),
        InputFormat::DrawsCsv => parse_draws_csv(&text, &spec.path, &spec.column_prefix),
        InputFormat::Ndjson => parse_ndjson(&text, &spec.path, &spec.column_prefix),
    }
}

/// Lines that carry data: skips blanks and '#' comments, keeps 1-based
/// line numbers for error reporting.
fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

pub fn parse_matrix_csv(text: &str, path: &Path) -> Result<LogLikMatrix, InputError> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width: Option<usize> = None;
    let mut first_data_line = true;
    for (lineno, line) in data_lines(text) {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed: Result<Vec<f64>, _> = fields.iter().map(|f| f.parse::<f64>()).collect();
        match parsed {
            Ok(values) => {
                let expected = *width.get_or_insert(values.len());
                if values.len() != expected {
                    return Err(InputError::NonRectangular {
                        path: path.to_path_buf(),
                        line: lineno,
                        expected,
                        got: values.len(),
                    });
                }
                rows.push(values);
            }
            Err(e) => {
                // a non-numeric first row is a header
                if first_data_line {
                    width = Some(fields.len());
                } else {
                    return Err(InputError::Parse {
                        path: path.to_path_buf(),
                        line: lineno,
                        detail: e.to_string(),
                    });
                }
            }
        }
        first_data_line = false;
    }
    LogLikMatrix::from_rows(rows, None)
        .map_err(|source| InputError::Matrix { path: path.to_path_buf(), source })
}

/// Column name of the form `prefix.N` or `prefix[N]`; returns N.
fn indexed_column(name: &str, prefix: &str) -> Option<usize> {
    let rest = name.strip_prefix(prefix)?;
    if let Some(idx) = rest.strip_prefix('.') {
        return idx.parse().ok();
    }
    if let Some(idx) = rest.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
        return idx.parse().ok();
    }
    None
}

pub fn parse_draws_csv(
    text: &str,
    path: &Path,
    column_prefix: &str,
) -> Result<LogLikMatrix, InputError> {
    let mut lines = data_lines(text);
    let (header_line, header) = lines
        .next()
        .ok_or_else(|| InputError::Parse {
            path: path.to_path_buf(),
            line: 1,
            detail: "empty file".to_string(),
        })?;
    let names: Vec<&str> = header.split(',').map(str::trim).collect();

    // loglik columns ordered by their numeric index
    let mut selected: Vec<(usize, usize)> = names
        .iter()
        .enumerate()
        .filter_map(|(pos, name)| indexed_column(name, column_prefix).map(|idx| (idx, pos)))
        .collect();
    if selected.is_empty() {
        return Err(InputError::NoMatchingColumns {
            path: path.to_path_buf(),
            prefix: column_prefix.to_string(),
        });
    }
    selected.sort_unstable();
    for pair in selected.windows(2) {
        if pair[0].0 == pair[1].0 {
            return Err(InputError::Parse {
                path: path.to_path_buf(),
                line: header_line,
                detail: format!("duplicate column index {} for prefix {:?}", pair[0].0, column_prefix),
            });
        }
    }
    let chain_pos = names.iter().position(|n| *n == "chain" || *n == "chain__");

    let mut rows = Vec::new();
    let mut chains = Vec::new();
    for (lineno, line) in lines {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != names.len() {
            return Err(InputError::NonRectangular {
                path: path.to_path_buf(),
                line: lineno,
                expected: names.len(),
                got: fields.len(),
            });
        }
        let mut row = Vec::with_capacity(selected.len());
        for &(_, pos) in &selected {
            let value = fields[pos].parse::<f64>().map_err(|e| InputError::Parse {
                path: path.to_path_buf(),
                line: lineno,
                detail: format!("column {:?}: {}", names[pos], e),
            })?;
            row.push(value);
        }
        rows.push(row);
        if let Some(pos) = chain_pos {
            chains.push(fields[pos].to_string());
        }
    }
    let chain_ids = chain_pos.map(|_| chains);
    LogLikMatrix::from_rows(rows, chain_ids)
        .map_err(|source| InputError::Matrix { path: path.to_path_buf(), source })
}

pub fn parse_ndjson(
    text: &str,
    path: &Path,
    column_prefix: &str,
) -> Result<LogLikMatrix, InputError> {
    let mut rows = Vec::new();
    for (lineno, line) in data_lines(text) {
        let value: serde_json::Value =
            serde_json::from_str(line).map_err(|e| InputError::Parse {
                path: path.to_path_buf(),
                line: lineno,
                detail: e.to_string(),
            })?;
        let array = value.get(column_prefix).and_then(|v| v.as_array()).ok_or_else(|| {
            InputError::Parse {
                path: path.to_path_buf(),
                line: lineno,
                detail: format!("object has no array field {:?}", column_prefix),
            }
        })?;
        let row: Result<Vec<f64>, InputError> = array
            .iter()
            .map(|v| {
                v.as_f64().ok_or_else(|| InputError::Parse {
                    path: path.to_path_buf(),
                    line: lineno,
                    detail: format!("non-numeric entry in {:?}", column_prefix),
                })
            })
            .collect();
        let row = row?;
        if let Some(first) = rows.first() {
            let expected: &Vec<f64> = first;
            if row.len() != expected.len() {
                return Err(InputError::NonRectangular {
                    path: path.to_path_buf(),
                    line: lineno,
                    expected: expected.len(),
                    got: row.len(),
                });
            }
        }
        rows.push(row);
    }
    LogLikMatrix::from_rows(rows, None)
        .map_err(|source| InputError::Matrix { path: path.to_path_buf(), source })
}
