//! Plot-ready rendering of an [`ExperimentReport`]: mean-squared-error
//! series per estimator per τ against log(n), and per-cell boxplot statistics
//! of the squared-error differences.

use serde::{Deserialize, Serialize};

use crate::error::{AdroError, Result};
use crate::sim::{ExperimentReport, REPORT_SCHEMA_VERSION};
use crate::stats;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MsePoint {
    pub n: usize,
    /// Natural logarithm of n, the x-axis of the series.
    pub log_n: f64,
    pub mean_sq_err: f64,
    pub replicates: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseSeries {
    /// "dro" or "adro".
    pub estimator: String,
    pub tau: f64,
    pub points: Vec<MsePoint>,
}

/// Five-number summary of the per-replicate squared-error differences in one
/// (n, τ) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxplotCell {
    pub n: usize,
    pub tau: f64,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub replicates: usize,
}

/// Versioned plot-data document derived from an experiment report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportOutput {
    pub schema: u32,
    pub mse_series: Vec<MseSeries>,
    pub diff_boxplots: Vec<BoxplotCell>,
}

/// Renders plot data from a report. Fails on a schema-version mismatch.
pub fn render_report(report: &ExperimentReport) -> Result<ReportOutput> {
    if report.schema != REPORT_SCHEMA_VERSION {
        return Err(AdroError::InvalidInput(format!(
            "report schema {} does not match supported version {}",
            report.schema, REPORT_SCHEMA_VERSION
        )));
    }
    let mut mse_series = Vec::new();
    for estimator in ["dro", "adro"] {
        for &tau in &report.config.tau_grid {
            let mut points = Vec::new();
            for &n in &report.config.n_grid {
                let sq: Vec<f64> = report
                    .records
                    .iter()
                    .filter(|r| r.n == n && r.tau == tau && r.error.is_none())
                    .map(|r| if estimator == "dro" { r.sq_err_dro } else { r.sq_err_adro })
                    .collect();
                points.push(MsePoint {
                    n,
                    log_n: (n as f64).ln(),
                    mean_sq_err: stats::mean(&sq),
                    replicates: sq.len(),
                });
            }
            mse_series.push(MseSeries { estimator: estimator.to_string(), tau, points });
        }
    }

    let mut diff_boxplots = Vec::new();
    for &n in &report.config.n_grid {
        for &tau in &report.config.tau_grid {
            let diffs: Vec<f64> = report
                .records
                .iter()
                .filter(|r| r.n == n && r.tau == tau && r.error.is_none())
                .map(|r| r.diff)
                .collect();
            if diffs.is_empty() {
                continue;
            }
            let (min, q1, median, q3, max) = stats::boxplot_stats(&diffs);
            diff_boxplots.push(BoxplotCell {
                n,
                tau,
                min,
                q1,
                median,
                q3,
                max,
                replicates: diffs.len(),
            });
        }
    }
    Ok(ReportOutput { schema: REPORT_SCHEMA_VERSION, mse_series, diff_boxplots })
}
