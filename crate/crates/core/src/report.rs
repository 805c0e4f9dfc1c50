//! Machine-readable report shapes. Every number here is produced by
//! the inner modules; this layer only arranges and serializes them.
//! JSON reports carry a top-level `schema: 1` marker.

use crate::mle::{FitResult, GroupPrediction};
use crate::sim::{CoverageReport, SweepRow};
use serde::Serialize;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Serialize)]
pub struct CiRowJson {
    pub param: String,
    pub lower: Option<f64>,
    pub estimate: f64,
    pub upper: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct PredictionJson {
    pub group: String,
    pub u: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
}

#[derive(Debug, Serialize)]
pub struct EstimatesJson {
    pub beta: Vec<f64>,
    pub sigma: Vec<Vec<f64>>,
    pub omega: Vec<f64>,
    pub theta: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct DiagnosticsJson {
    pub nm_evals: usize,
    pub stage1_iterations: usize,
    pub stage1_converged: bool,
    pub stage2_iterations: usize,
    pub stage2_converged: bool,
    pub objective_evals: usize,
    pub grad_max_norm: f64,
    pub ep_nonconverged_groups: usize,
    pub ci_reliable: bool,
}

#[derive(Debug, Serialize)]
pub struct FitReportJson {
    pub schema: u32,
    pub command: String,
    pub method: String,
    pub d_fixed: usize,
    pub d_random: usize,
    pub m: usize,
    pub n_total: usize,
    pub loglik: f64,
    pub estimates: EstimatesJson,
    pub ci: Vec<CiRowJson>,
    pub predictions: Vec<PredictionJson>,
    pub diagnostics: DiagnosticsJson,
}

pub fn fit_report(
    result: &FitResult,
    method: &str,
    d_fixed: usize,
    d_random: usize,
    m: usize,
    n_total: usize,
) -> FitReportJson {
    FitReportJson {
        schema: SCHEMA_VERSION,
        command: "fit".into(),
        method: method.into(),
        d_fixed,
        d_random,
        m,
        n_total,
        loglik: result.loglik,
        estimates: EstimatesJson {
            beta: result.beta_hat.clone(),
            sigma: result.sigma_hat.to_rows(),
            omega: result.omega_hat.clone(),
            theta: result.theta_hat.clone(),
        },
        ci: result
            .ci
            .rows
            .iter()
            .map(|r| CiRowJson {
                param: r.name.clone(),
                lower: r.lower,
                estimate: r.estimate,
                upper: r.upper,
            })
            .collect(),
        predictions: predictions_json(&result.predictions),
        diagnostics: DiagnosticsJson {
            nm_evals: result.diagnostics.nm_evals,
            stage1_iterations: result.diagnostics.stage1_iterations,
            stage1_converged: result.diagnostics.stage1_converged,
            stage2_iterations: result.diagnostics.stage2_iterations,
            stage2_converged: result.diagnostics.stage2_converged,
            objective_evals: result.diagnostics.objective_evals,
            grad_max_norm: result.diagnostics.grad_max_norm,
            ep_nonconverged_groups: result.diagnostics.ep_nonconverged_groups,
            ci_reliable: result.diagnostics.ci_reliable,
        },
    }
}

pub fn predictions_json(preds: &[GroupPrediction]) -> Vec<PredictionJson> {
    preds
        .iter()
        .map(|p| PredictionJson {
            group: p.label.clone(),
            u: p.u.clone(),
            cov: p.cov.to_rows(),
        })
        .collect()
}

#[derive(Debug, Serialize)]
pub struct PredictReportJson {
    pub schema: u32,
    pub command: String,
    pub method: String,
    pub predictions: Vec<PredictionJson>,
}

#[derive(Debug, Serialize)]
pub struct ParamCoverageJson {
    pub param: String,
    pub true_value: f64,
    pub hits: usize,
    pub count: usize,
    pub coverage: f64,
    pub wilson_low99: f64,
    pub wilson_high99: f64,
    pub mean_ci_width: f64,
    pub mean_bias: f64,
}

#[derive(Debug, Serialize)]
pub struct TimingJson {
    pub median_s: f64,
    pub q90_s: f64,
    pub max_s: f64,
}

#[derive(Debug, Serialize)]
pub struct MethodCoverageJson {
    pub method: String,
    pub replications: usize,
    pub excluded: usize,
    pub params: Vec<ParamCoverageJson>,
    /// Present only when timings were requested; wall-clock quantiles
    /// are inherently non-reproducible, so the default report omits
    /// them to keep equal-seed runs byte-identical.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timing: Option<TimingJson>,
}

#[derive(Debug, Serialize)]
pub struct CoverageReportJson {
    pub schema: u32,
    pub command: String,
    pub replications: usize,
    pub alpha: f64,
    pub methods: Vec<MethodCoverageJson>,
}

pub fn coverage_report(report: &CoverageReport, with_timings: bool) -> CoverageReportJson {
    CoverageReportJson {
        schema: SCHEMA_VERSION,
        command: "coverage".into(),
        replications: report.replications_requested,
        alpha: report.alpha,
        methods: report
            .methods
            .iter()
            .map(|m| MethodCoverageJson {
                method: m.method.clone(),
                replications: m.replications,
                excluded: m.excluded,
                params: m
                    .params
                    .iter()
                    .map(|p| ParamCoverageJson {
                        param: p.name.clone(),
                        true_value: p.true_value,
                        hits: p.hits,
                        count: p.count,
                        coverage: p.coverage,
                        wilson_low99: p.wilson_low,
                        wilson_high99: p.wilson_high,
                        mean_ci_width: p.mean_ci_width,
                        mean_bias: p.mean_bias,
                    })
                    .collect(),
                timing: if with_timings {
                    Some(TimingJson {
                        median_s: m.timing.median_s,
                        q90_s: m.timing.q90_s,
                        max_s: m.timing.max_s,
                    })
                } else {
                    None
                },
            })
            .collect(),
    }
}

#[derive(Debug, Serialize)]
pub struct SweepRowJson {
    pub n_i: usize,
    pub reps: usize,
    pub mean_abs_discrepancy: f64,
    pub sd_abs_discrepancy: f64,
}

#[derive(Debug, Serialize)]
pub struct SweepReportJson {
    pub schema: u32,
    pub command: String,
    pub rows: Vec<SweepRowJson>,
}

pub fn sweep_report(rows: &[SweepRow]) -> SweepReportJson {
    SweepReportJson {
        schema: SCHEMA_VERSION,
        command: "sweep".into(),
        rows: rows
            .iter()
            .map(|r| SweepRowJson {
                n_i: r.n_i,
                reps: r.reps,
                mean_abs_discrepancy: r.mean_abs,
                sd_abs_discrepancy: r.sd_abs,
            })
            .collect(),
    }
}

/// Plain-text parameter table: `param, CI low, estimate, CI high`.
pub fn ci_table_text(result: &FitResult) -> String {
    let mut out = String::from("param\tci_lower\testimate\tci_upper\n");
    for r in &result.ci.rows {
        let fmt = |v: Option<f64>| match v {
            Some(x) => format!("{x:.6}"),
            None => "NA".into(),
        };
        out.push_str(&format!(
            "{}\t{}\t{:.6}\t{}\n",
            r.name,
            fmt(r.lower),
            r.estimate,
            fmt(r.upper)
        ));
    }
    out
}

/// Per-group prediction table: group, prediction entries, then the
/// conditional covariance in vech order.
pub fn predictions_tsv(preds: &[GroupPrediction], d_r: usize) -> String {
    let mut out = String::from("group");
    for k in 1..=d_r {
        out.push_str(&format!("\tu{k}"));
    }
    for j in 1..=d_r {
        for i in j..=d_r {
            out.push_str(&format!("\tcov{i}{j}"));
        }
    }
    out.push('\n');
    for p in preds {
        out.push_str(&p.label);
        for v in &p.u {
            out.push_str(&format!("\t{v}"));
        }
        for v in p.cov.vech() {
            out.push_str(&format!("\t{v}"));
        }
        out.push('\n');
    }
    out
}

/// Coverage table in TSV: one row per method and parameter.
pub fn coverage_tsv(report: &CoverageReport) -> String {
    let mut out = String::from(
        "method\tparam\ttrue_value\thits\tcount\tcoverage\twilson_low99\twilson_high99\tmean_ci_width\tmean_bias\texcluded\n",
    );
    for m in &report.methods {
        for p in &m.params {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{}\n",
                m.method,
                p.name,
                p.true_value,
                p.hits,
                p.count,
                p.coverage,
                p.wilson_low,
                p.wilson_high,
                p.mean_ci_width,
                p.mean_bias,
                m.excluded
            ));
        }
    }
    out
}

pub fn sweep_tsv(rows: &[SweepRow]) -> String {
    let mut out = String::from("n_i\treps\tmean_abs_discrepancy\tsd_abs_discrepancy\n");
    for r in rows {
        out.push_str(&format!(
            "{}\t{}\t{:.12}\t{:.12}\n",
            r.n_i, r.reps, r.mean_abs, r.sd_abs
        ));
    }
    out
}
