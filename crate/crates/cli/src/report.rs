//! Report files: machine-readable JSON with a reproducibility header plus
//! human-readable comparison tables.

use crate::{CliError, Result};
use mmresgnn_harness::metrics::MetricsReport;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Every CLI run persists the fully resolved configuration next to its
/// results so a report is reproducible from the file alone.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportFile {
    pub config: serde_json::Value,
    pub results: Vec<MetricsReport>,
}

pub fn write_report(path: &Path, report: &ReportFile) -> Result<()> {
    let json = serde_json::to_vec_pretty(report).map_err(|e| CliError::Data(e.to_string()))?;
    crate::formats::write_atomic(path, &json)
}

pub fn read_report(path: &Path) -> Result<ReportFile> {
    let bytes = std::fs::read(path).map_err(CliError::io(path.display().to_string()))?;
    serde_json::from_slice(&bytes).map_err(|e| CliError::Integrity {
        file: path.display().to_string(),
        reason: e.to_string(),
    })
}

/// Markdown comparison table over a set of metric rows.
pub fn comparison_table(reports: &[MetricsReport]) -> String {
    let mut s = String::from("| Variant | Split | MAE (dB) | NMSE | MAPE (%) | n | Strategy | Ratio |\n");
    s.push_str("|---|---|---|---|---|---|---|---|\n");
    for r in reports {
        s.push_str(&format!(
            "| {} | {:?} | {:.4} | {:.5} | {:.4} | {} | {} | {} |\n",
            r.variant_id,
            r.split,
            r.mae,
            r.nmse,
            r.mape,
            r.n,
            r.strategy.as_deref().unwrap_or("-"),
            r.ratio.map(|x| format!("{x}")).unwrap_or_else(|| "-".into()),
        ));
    }
    s
}
