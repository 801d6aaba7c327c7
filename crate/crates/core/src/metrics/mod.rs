//! Loss, ranking and uncertainty-ordering metrics.

mod coverage;
mod detection;
mod ranking;

pub use coverage::{quantile_loss_ratio, risk_coverage, RiskCoverageCurve};
pub use detection::{
    bnn_confidence, correct_at_threshold, detection_benchmark, deterministic_confidence, DetectionReport, DetectionRow,
    DetectionTask,
};
pub use ranking::{aupr, auroc, mann_whitney, MannWhitney};

use crate::error::{Error, Result};

/// Probabilities are clamped to `[PROB_CLAMP, 1 − PROB_CLAMP]` before logs.
pub const PROB_CLAMP: f64 = 1e-12;

/// `−[y ln p + (1−y) ln(1−p)]`.
pub fn bce(p: f64, y: u8) -> Result<f64> {
    if p.is_nan() {
        return Err(Error::NonFinite("probability".into()));
    }
    let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    match y {
        1 => Ok(-p.ln()),
        0 => Ok(-(-p).ln_1p()),
        other => Err(Error::NonBinaryLabel(other as f64)),
    }
}

pub fn mean_bce(probs: &[f64], labels: &[u8]) -> Result<f64> {
    if probs.len() != labels.len() || probs.is_empty() {
        return Err(Error::Metric(format!(
            "mean BCE needs matching non-empty inputs, got {} and {}",
            probs.len(),
            labels.len()
        )));
    }
    let mut total = 0.0;
    for (&p, &y) in probs.iter().zip(labels) {
        total += bce(p, y)?;
    }
    Ok(total / probs.len() as f64)
}

/// Checks lengths, finiteness and that both classes occur.
fn check_binary(scores: &[f64], labels: &[u8]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::Metric(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("scores".into()));
    }
    let mut pos = 0;
    for &y in labels {
        match y {
            0 => {}
            1 => pos += 1,
            other => return Err(Error::NonBinaryLabel(other as f64)),
        }
    }
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Metric(format!(
            "both classes are required ({pos} positive, {neg} negative records)"
        )));
    }
    Ok((pos, neg))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bce_values() {
        assert!((bce(0.5, 0).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((bce(0.5, 1).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(bce(1.0, 1).unwrap() < 1e-11);
        assert!((bce(0.1, 1).unwrap() - std::f64::consts::LN_10).abs() < 1e-12);
        assert!((bce(0.0, 1).unwrap() - 27.631021115928547).abs() < 1e-9);
        assert!(bce(0.3, 2).is_err());
        assert!(bce(f64::NAN, 1).is_err());
    }

    #[test]
    fn mean_bce_requires_pairs() {
        assert!(mean_bce(&[], &[]).is_err());
        assert!(mean_bce(&[0.2], &[1, 0]).is_err());
        let m = mean_bce(&[0.5, 0.5], &[0, 1]).unwrap();
        assert!((m - std::f64::consts::LN_2).abs() < 1e-15);
    }
}
