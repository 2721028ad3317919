//! Report rendering: the three-row estimate table with a tail-shape status
//! line, and the machine-readable JSON document it round-trips with.

use elpd::estimators::{ComparisonResult, ElpdResult, EstimateMethod, WAIC_TERM_THRESHOLD};
use serde::Serialize;

/// Machine-readable result document. Floats serialize with serde_json's
/// shortest round-trip encoding, so nothing is lost relative to the
/// in-memory values.
#[derive(Debug, Serialize)]
pub struct ResultDoc {
    pub method: String,
    pub draws: usize,
    pub points: usize,
    pub estimates: Estimates,
    pub diagnostics: Diagnostics,
    pub pointwise: PointwiseDoc,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bootstrap: Option<BootstrapDoc>,
    pub bias_corrected: bool,
}

#[derive(Debug, Serialize)]
pub struct Estimates {
    pub elpd: f64,
    pub se_elpd: f64,
    pub p_eff: Option<f64>,
    pub se_p_eff: Option<f64>,
    pub ic: f64,
    pub se_ic: f64,
}

#[derive(Debug, Serialize)]
pub struct Diagnostics {
    pub k_good: usize,
    pub k_ok: usize,
    pub k_high: usize,
    pub k_severe: usize,
    pub waic_flagged_terms: usize,
}

#[derive(Debug, Serialize)]
pub struct PointwiseDoc {
    pub elpd: Vec<f64>,
    pub k_hat: Vec<Option<f64>>,
    pub waic_variance_term: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct BootstrapDoc {
    pub replicates: usize,
    pub seed: u64,
    pub se: f64,
}

#[derive(Debug, Serialize)]
pub struct CompareDoc {
    pub elpd_diff: f64,
    pub se_diff: f64,
    /// Second model minus first: positive favors the second.
    pub sign_convention: String,
    pub a: ResultDoc,
    pub b: ResultDoc,
    pub pointwise_diff: Vec<f64>,
}

fn method_label(m: &EstimateMethod) -> String {
    match m {
        EstimateMethod::IsLoo => "is_loo".to_string(),
        EstimateMethod::TisLoo { .. } => "tis_loo".to_string(),
        EstimateMethod::PsisLoo { .. } => "psis_loo".to_string(),
        EstimateMethod::Waic => "waic".to_string(),
        EstimateMethod::Kfold => "kfold".to_string(),
    }
}

/// Row labels on the conventional scale: elpd_loo / p_loo / looic and the
/// analogous names for WAIC and K-fold CV.
fn row_labels(m: &EstimateMethod) -> (&'static str, &'static str, &'static str) {
    match m.short_name() {
        "waic" => ("elpd_waic", "p_waic", "waic"),
        "kfold" => ("elpd_kfold", "p_kfold", "kfoldic"),
        _ => ("elpd_loo", "p_loo", "looic"),
    }
}

pub fn result_doc(r: &ElpdResult, draws: usize, bootstrap: Option<BootstrapDoc>) -> ResultDoc {
    let [k_good, k_ok, k_high, k_severe] = r.diagnostic_counts();
    ResultDoc {
        method: method_label(&r.method),
        draws,
        points: r.point_count(),
        estimates: Estimates {
            elpd: r.total,
            se_elpd: r.se_total,
            p_eff: r.p_eff,
            se_p_eff: r.se_p_eff,
            ic: r.ic_scale,
            se_ic: 2.0 * r.se_total,
        },
        diagnostics: Diagnostics {
            k_good,
            k_ok,
            k_high,
            k_severe,
            waic_flagged_terms: r.waic_flagged_terms(),
        },
        pointwise: PointwiseDoc {
            elpd: r.pointwise.values.clone(),
            k_hat: r.k_hats.clone(),
            waic_variance_term: r.waic_variance_terms.clone(),
        },
        bootstrap,
        bias_corrected: r.bias_corrected,
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{:.1}", x))
}

/// Three estimate rows with standard errors, then the tail-shape status.
/// `source` describes the input, e.g. "4000 by 3020 log-likelihood matrix".
pub fn render(r: &ElpdResult, source: &str, bootstrap: Option<&BootstrapDoc>) -> String {
    let (elpd_row, p_row, ic_row) = row_labels(&r.method);
    let mut out = String::new();
    out.push_str(&format!("Computed from {}\n\n", source));
    let cells = [
        (elpd_row, format!("{:.1}", r.total), format!("{:.1}", r.se_total)),
        (p_row, fmt_opt(r.p_eff), fmt_opt(r.se_p_eff)),
        (ic_row, format!("{:.1}", r.ic_scale), format!("{:.1}", 2.0 * r.se_total)),
    ];
    let est_width = cells.iter().map(|c| c.1.len()).max().unwrap_or(8).max(8);
    let se_width = cells.iter().map(|c| c.2.len()).max().unwrap_or(4).max(4);
    out.push_str(&format!(
        "{:<10} {:>w$} {:>sw$}\n",
        "",
        "Estimate",
        "SE",
        w = est_width,
        sw = se_width
    ));
    for (label, est, se) in &cells {
        out.push_str(&format!(
            "{:<10} {:>w$} {:>sw$}\n",
            label,
            est,
            se,
            w = est_width,
            sw = se_width
        ));
    }
    if r.bias_corrected {
        out.push_str("(first-order bias correction applied)\n");
    }

    if !r.k_hats.is_empty() {
        let [good, ok, high, severe] = r.diagnostic_counts();
        out.push('\n');
        if ok + high + severe == 0 {
            out.push_str("All Pareto k estimates OK (k < 0.5)\n");
        } else {
            out.push_str(&format!(
                "Pareto k diagnostics: {} good (k < 0.5), {} ok (0.5 <= k <= 0.7), {} high (0.7 < k <= 1), {} severe (k > 1)\n",
                good, ok, high, severe
            ));
            if high + severe > 0 {
                out.push_str(
                    "Warning: some Pareto k estimates exceed 0.7; consider direct sampling for those points, K-fold cross-validation, or a more robust model\n",
                );
            } else {
                out.push_str("Warning: some Pareto k estimates are between 0.5 and 0.7\n");
            }
        }
    }
    if r.method == EstimateMethod::Waic {
        let flagged = r.waic_flagged_terms();
        out.push('\n');
        if flagged == 0 {
            out.push_str(&format!(
                "All pointwise variance terms below {:.1}\n",
                WAIC_TERM_THRESHOLD
            ));
        } else {
            out.push_str(&format!(
                "Warning: {} pointwise variance term(s) exceed {:.1}; the estimate may be unreliable\n",
                flagged, WAIC_TERM_THRESHOLD
            ));
        }
    }
    if let Some(b) = bootstrap {
        out.push_str(&format!(
            "\nBayesian bootstrap SE of elpd ({} replicates, seed {}): {:.1}\n",
            b.replicates, b.seed, b.se
        ));
    }
    out
}

pub fn render_pointwise(r: &ElpdResult) -> String {
    let mut out = String::from("\npoint  elpd");
    let has_k = !r.k_hats.is_empty();
    let has_terms = !r.waic_variance_terms.is_empty();
    if has_k {
        out.push_str("  k_hat");
    }
    if has_terms {
        out.push_str("  p_waic_term");
    }
    out.push('\n');
    for i in 0..r.point_count() {
        out.push_str(&format!("{:>5}  {:.4}", i, r.pointwise.values[i]));
        if has_k {
            match r.k_hats[i] {
                Some(k) => out.push_str(&format!("  {:.3}", k)),
                None => out.push_str("  NA"),
            }
        }
        if has_terms {
            out.push_str(&format!("  {:.4}", r.waic_variance_terms[i]));
        }
        out.push('\n');
    }
    out
}

pub fn render_comparison(c: &ComparisonResult, label_a: &str, label_b: &str) -> String {
    format!(
        "Comparison: second minus first (positive favors the second model)\n  first:  {}\n  second: {}\n\nelpd_diff {:>10}\nse        {:>10}\n",
        label_a,
        label_b,
        format!("{:.1}", c.elpd_diff),
        format!("{:.1}", c.se_diff)
    )
}
