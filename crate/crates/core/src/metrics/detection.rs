use serde::{Deserialize, Serialize};

use super::{aupr, auroc};
use crate::error::{Error, Result};
use crate::inference::PredictionSummary;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DetectionTask {
    /// Condition: the prediction is correct at threshold 0.5.
    ErrorDetection,
    /// Condition: the record is in-domain.
    OodDetection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionRow {
    pub method: String,
    pub auroc: f64,
    /// AUPR with the condition (success / in-domain) as the positive class.
    pub aupr_positive: f64,
    /// AUPR with the complement (error / out-of-domain) as the positive class.
    pub aupr_negative: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub task: DetectionTask,
    pub rows: Vec<DetectionRow>,
}

impl DetectionReport {
    pub fn row(&self, method: &str) -> Option<&DetectionRow> {
        self.rows.iter().find(|r| r.method == method)
    }
}

/// Negated predictive variance: higher means more confident.
pub fn bnn_confidence(summaries: &[PredictionSummary]) -> Vec<f64> {
    summaries.iter().map(|s| -s.variance).collect()
}

/// Max-class probability `max(p, 1−p)`.
pub fn deterministic_confidence(probs: &[f64]) -> Vec<f64> {
    probs.iter().map(|&p| p.max(1.0 - p)).collect()
}

/// Whether thresholding `p` at 0.5 recovers the label.
pub fn correct_at_threshold(probs: &[f64], labels: &[u8]) -> Vec<bool> {
    probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| u8::from(p >= 0.5) == y)
        .collect()
}

/// How well each method's confidence separates records that satisfy the
/// condition from those that do not.
pub fn detection_benchmark(
    task: DetectionTask,
    methods: &[(String, Vec<f64>)],
    condition: &[bool],
) -> Result<DetectionReport> {
    let labels: Vec<u8> = condition.iter().map(|&c| u8::from(c)).collect();
    let mut rows = Vec::with_capacity(methods.len());
    for (method, scores) in methods {
        let wrap = |e: Error| Error::Metric(format!("{task:?} for `{method}`: {e}"));
        rows.push(DetectionRow {
            method: method.clone(),
            auroc: auroc(scores, &labels).map_err(wrap)?,
            aupr_positive: aupr(scores, &labels, 1).map_err(wrap)?,
            aupr_negative: aupr(scores, &labels, 0).map_err(wrap)?,
        });
    }
    Ok(DetectionReport { task, rows })
}
