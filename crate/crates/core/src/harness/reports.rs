use serde::{Deserialize, Serialize};

use super::predictions::{split_rows, PredictionRow, SPLIT_OOD, SPLIT_TEST};
use crate::bounds::{verify_bounds, BoundReport};
use crate::error::{Error, Result};
use crate::metrics::{
    auroc, bce, bnn_confidence, correct_at_threshold, detection_benchmark, deterministic_confidence, mann_whitney,
    quantile_loss_ratio, risk_coverage, DetectionReport, DetectionTask, MannWhitney, RiskCoverageCurve,
};
use crate::training::TrainHistory;

pub const METHOD_BNN: &str = "bnn-variance";
pub const METHOD_DET: &str = "nn-sigmoid";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingRecord {
    pub config_digest: String,
    pub n_train: usize,
    pub n_validation: usize,
    pub n_ood: usize,
    /// Records dropped by the outlier fence, across all splits seen by `train`.
    pub removed_outliers: usize,
    pub bnn: TrainHistory,
    pub deterministic: TrainHistory,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundsFile {
    pub config_digest: String,
    #[serde(flatten)]
    pub report: BoundReport,
    /// Largest predictive variance seen.
    pub max_variance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelScores {
    pub auroc: f64,
    pub mean_bce: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageAuroc {
    pub coverage: f64,
    pub auroc: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiskCoverageSummary {
    pub quantile: f64,
    /// BNN BCE, most uncertain slice over most certain slice.
    pub bnn_loss_ratio: f64,
    /// GBDT BCE ordered by BNN variance.
    pub gbdt_loss_ratio: f64,
    pub bnn_total_loss: f64,
    pub gbdt_total_loss: f64,
    /// BNN AUROC over the most certain records.
    pub restricted_auroc: Vec<CoverageAuroc>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub config_digest: String,
    pub n_test: usize,
    pub bnn: ModelScores,
    pub deterministic: ModelScores,
    pub gbdt: ModelScores,
    pub risk_coverage: RiskCoverageSummary,
    pub error_detection: DetectionReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OodReport {
    pub config_digest: String,
    pub n_in_domain: usize,
    pub n_ood: usize,
    pub mean_variance_in_domain: f64,
    pub mean_variance_ood: f64,
    /// `mean_variance_ood / mean_variance_in_domain`.
    pub variance_ratio: f64,
    /// Two-sided test of OOD variances against in-domain variances.
    pub mann_whitney: MannWhitney,
    pub ood_detection: DetectionReport,
}

/// Curves written next to the evaluation report.
#[derive(Debug)]
pub struct EvaluationCurves {
    pub bnn: RiskCoverageCurve,
    pub gbdt: RiskCoverageCurve,
    pub means: Vec<f64>,
    pub labels: Vec<u8>,
}

fn test_rows(rows: &[PredictionRow]) -> Result<Vec<&PredictionRow>> {
    let test = split_rows(rows, SPLIT_TEST);
    if test.is_empty() {
        return Err(Error::Metric(format!("no `{SPLIT_TEST}` rows among the predictions")));
    }
    Ok(test)
}

pub fn bounds_file(rows: &[PredictionRow], digest: &str) -> Result<BoundsFile> {
    let summaries: Vec<_> = rows.iter().map(PredictionRow::summary).collect();
    let labels: Vec<u8> = rows.iter().map(|r| r.label).collect();
    Ok(BoundsFile {
        config_digest: digest.to_string(),
        report: verify_bounds(&summaries, &labels)?,
        max_variance: rows.iter().map(|r| r.variance).fold(0.0, f64::max),
    })
}

pub fn evaluation(rows: &[PredictionRow], digest: &str, quantile: f64) -> Result<(EvaluationReport, EvaluationCurves)> {
    let test = test_rows(rows)?;
    let labels: Vec<u8> = test.iter().map(|r| r.label).collect();
    let means: Vec<f64> = test.iter().map(|r| r.mean).collect();
    let det: Vec<f64> = test.iter().map(|r| r.det_prob).collect();
    let gbdt: Vec<f64> = test.iter().map(|r| r.gbdt_prob).collect();
    let variance: Vec<f64> = test.iter().map(|r| r.variance).collect();

    let bnn_losses = test
        .iter()
        .map(|r| r.summary().bce(r.label))
        .collect::<Result<Vec<_>>>()?;
    let gbdt_losses = gbdt
        .iter()
        .zip(&labels)
        .map(|(&p, &y)| bce(p, y))
        .collect::<Result<Vec<_>>>()?;
    let det_losses = det
        .iter()
        .zip(&labels)
        .map(|(&p, &y)| bce(p, y))
        .collect::<Result<Vec<_>>>()?;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;

    let bnn_curve = risk_coverage(&bnn_losses, &variance)?;
    let gbdt_curve = risk_coverage(&gbdt_losses, &variance)?;
    let restricted_auroc = [quantile, 0.4, 0.6, 0.8, 1.0]
        .into_iter()
        .map(|coverage| CoverageAuroc {
            coverage,
            auroc: bnn_curve.auroc_at(coverage, &means, &labels).ok(),
        })
        .collect();

    let summaries: Vec<_> = test.iter().map(|r| r.summary()).collect();
    let bnn_detection = detection_benchmark(
        DetectionTask::ErrorDetection,
        &[(METHOD_BNN.to_string(), bnn_confidence(&summaries))],
        &correct_at_threshold(&means, &labels),
    )?;
    let det_detection = detection_benchmark(
        DetectionTask::ErrorDetection,
        &[(METHOD_DET.to_string(), deterministic_confidence(&det))],
        &correct_at_threshold(&det, &labels),
    )?;

    let report = EvaluationReport {
        config_digest: digest.to_string(),
        n_test: test.len(),
        bnn: ModelScores {
            auroc: auroc(&means, &labels)?,
            mean_bce: mean(&bnn_losses),
        },
        deterministic: ModelScores {
            auroc: auroc(&det, &labels)?,
            mean_bce: mean(&det_losses),
        },
        gbdt: ModelScores {
            auroc: auroc(&gbdt, &labels)?,
            mean_bce: mean(&gbdt_losses),
        },
        risk_coverage: RiskCoverageSummary {
            quantile,
            bnn_loss_ratio: quantile_loss_ratio(&bnn_curve, quantile)?,
            gbdt_loss_ratio: quantile_loss_ratio(&gbdt_curve, quantile)?,
            bnn_total_loss: bnn_curve.total_loss(),
            gbdt_total_loss: gbdt_curve.total_loss(),
            restricted_auroc,
        },
        error_detection: DetectionReport {
            task: DetectionTask::ErrorDetection,
            rows: bnn_detection.rows.into_iter().chain(det_detection.rows).collect(),
        },
    };
    Ok((
        report,
        EvaluationCurves {
            bnn: bnn_curve,
            gbdt: gbdt_curve,
            means,
            labels,
        },
    ))
}

pub fn ood_report(rows: &[PredictionRow], digest: &str) -> Result<OodReport> {
    let inside = test_rows(rows)?;
    let outside = split_rows(rows, SPLIT_OOD);
    if outside.is_empty() {
        return Err(Error::Metric(format!("no `{SPLIT_OOD}` rows among the predictions")));
    }
    let var_in: Vec<f64> = inside.iter().map(|r| r.variance).collect();
    let var_out: Vec<f64> = outside.iter().map(|r| r.variance).collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (m_in, m_out) = (mean(&var_in), mean(&var_out));

    let pooled: Vec<&PredictionRow> = inside.iter().chain(&outside).copied().collect();
    let in_domain: Vec<bool> = pooled.iter().map(|r| r.split == SPLIT_TEST).collect();
    let summaries: Vec<_> = pooled.iter().map(|r| r.summary()).collect();
    let det: Vec<f64> = pooled.iter().map(|r| r.det_prob).collect();
    let ood_detection = detection_benchmark(
        DetectionTask::OodDetection,
        &[
            (METHOD_BNN.to_string(), bnn_confidence(&summaries)),
            (METHOD_DET.to_string(), deterministic_confidence(&det)),
        ],
        &in_domain,
    )?;
    Ok(OodReport {
        config_digest: digest.to_string(),
        n_in_domain: inside.len(),
        n_ood: outside.len(),
        mean_variance_in_domain: m_in,
        mean_variance_ood: m_out,
        variance_ratio: if m_in > 0.0 { m_out / m_in } else { f64::INFINITY },
        mann_whitney: mann_whitney(&var_out, &var_in)?,
        ood_detection,
    })
}
