//! Prediction-accuracy metrics: MAE (dB), NMSE and MAPE.

use crate::{HarnessError, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitKind {
    Train,
    Val,
    Test,
}

impl std::str::FromStr for SplitKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "train" => Ok(SplitKind::Train),
            "val" => Ok(SplitKind::Val),
            "test" => Ok(SplitKind::Test),
            other => Err(format!("unknown split: {other}")),
        }
    }
}

/// Raw metric values over one evaluation subset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Mean absolute error, dB.
    pub mae: f64,
    /// Normalized mean squared error.
    pub nmse: f64,
    /// Mean absolute percentage error, percent.
    pub mape: f64,
    pub n: usize,
}

/// Metrics plus the provenance needed for reporting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub variant_id: String,
    pub split: SplitKind,
    pub mae: f64,
    pub nmse: f64,
    pub mape: f64,
    pub n: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub strategy: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ratio: Option<f64>,
}

impl MetricsReport {
    pub fn new(variant_id: impl Into<String>, split: SplitKind, metrics: Metrics) -> Self {
        Self {
            variant_id: variant_id.into(),
            split,
            mae: metrics.mae,
            nmse: metrics.nmse,
            mape: metrics.mape,
            n: metrics.n,
            strategy: None,
            ratio: None,
        }
    }
}

/// MAE = mean |y - y_hat|; NMSE = sum (y - y_hat)^2 / sum y^2;
/// MAPE = mean |(y - y_hat) / y| * 100.
pub fn compute_metrics(y: &[f64], y_hat: &[f64]) -> Result<Metrics> {
    if y.len() != y_hat.len() {
        return Err(HarnessError::LengthMismatch {
            y: y.len(),
            y_hat: y_hat.len(),
        });
    }
    if y.is_empty() {
        return Err(HarnessError::LengthMismatch { y: 0, y_hat: 0 });
    }
    if let Some(idx) = y.iter().position(|&v| v == 0.0) {
        return Err(HarnessError::ZeroReference(idx));
    }
    let n = y.len() as f64;
    let mut abs_sum = 0.0;
    let mut sq_sum = 0.0;
    let mut energy = 0.0;
    let mut pct_sum = 0.0;
    for (&a, &b) in y.iter().zip(y_hat.iter()) {
        let d = a - b;
        abs_sum += d.abs();
        sq_sum += d * d;
        energy += a * a;
        pct_sum += (d / a).abs();
    }
    Ok(Metrics {
        mae: abs_sum / n,
        nmse: sq_sum / energy,
        mape: pct_sum / n * 100.0,
        n: y.len(),
    })
}
