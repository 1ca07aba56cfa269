//! JSON documents written by the command-line front end.

use serde::{Deserialize, Serialize};

use crate::asymptotics::AsymptoticReport;
use crate::bh::ErrorMetrics;
use crate::pipeline::SelectionReport;
use crate::pvalue::PValueMethod;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub version: String,
    pub method: PValueMethod,
    pub q: f64,
    pub seed: Option<u64>,
    pub score: String,
    /// Test units.
    pub m: usize,
    /// Calibration units ranked against.
    pub n: usize,
    pub warnings: Vec<String>,
    pub tie_count: Option<usize>,
    /// Effective command configuration.
    pub config: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitEntry {
    pub id: String,
    pub p: f64,
    pub v_hat: f64,
    pub c: f64,
}

/// Output of `cfscreen select`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub meta: ReportMeta,
    pub k_star: usize,
    pub tau_hat: f64,
    pub selected: Vec<usize>,
    pub units: Vec<UnitEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<ErrorMetrics>,
}

impl ReportFile {
    pub fn new(report: &SelectionReport, ids: Vec<String>, config: serde_json::Value) -> Self {
        let units = report
            .units
            .iter()
            .zip(ids)
            .map(|(u, id)| UnitEntry {
                id,
                p: u.p,
                v_hat: u.v_hat,
                c: u.c,
            })
            .collect();
        Self {
            meta: ReportMeta {
                version: crate::VERSION.to_string(),
                method: report.method,
                q: report.selection.q,
                seed: report.seed,
                score: report.score.clone(),
                m: report.units.len(),
                n: report.n_calibration,
                warnings: report.warnings.clone(),
                tie_count: report.tie_count,
                config,
            },
            k_star: report.selection.k_star,
            tau_hat: report.selection.tau_hat,
            selected: report.selection.selected.clone(),
            units,
            metrics: report.metrics,
        }
    }
}

/// Output of `cfscreen asymptotics`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticsFile {
    pub version: String,
    pub config: serde_json::Value,
    #[serde(flatten)]
    pub report: AsymptoticReport,
    /// Closed-form `t*` and FDR when the population comes from a synthetic
    /// design.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub analytic_t_star: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub analytic_fdr: Option<f64>,
}
