//! Closed-form bounds on binary cross-entropy given the predictive variance
//! of probabilities confined to `[0, 1]`.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::PredictionSummary;

/// Roundoff above 0.25 that is silently clamped.
pub const VARIANCE_SLACK: f64 = 1e-12;
/// Tolerance applied by [`verify_bounds`].
pub const VERIFY_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundInterval {
    pub variance: f64,
    pub lower: f64,
    /// `f64::INFINITY` at zero variance.
    pub upper: f64,
}

impl BoundInterval {
    pub fn contains(&self, loss: f64, tol: f64) -> bool {
        loss >= self.lower - tol && loss <= self.upper + tol
    }
}

fn checked_variance(v: f64) -> Result<f64> {
    if !(0.0..=0.25 + VARIANCE_SLACK).contains(&v) {
        return Err(Error::VarianceOutOfRange(v));
    }
    Ok(v.min(0.25))
}

/// `½ − ½√(1 − 4v)`, written as `2v / (1 + √(1 − 4v))` so small variances
/// keep their relative precision.
fn distance_from_edge(v: f64) -> f64 {
    2.0 * v / (1.0 + (1.0 - 4.0 * v).max(0.0).sqrt())
}

/// `−ln(½ + ½√(1−4v)) ≤ BCE ≤ −ln(½ − ½√(1−4v))`.
pub fn loss_bounds(variance: f64) -> Result<BoundInterval> {
    let v = checked_variance(variance)?;
    let d = distance_from_edge(v);
    Ok(BoundInterval {
        variance: v,
        lower: -(-d).ln_1p(),
        upper: if d == 0.0 { f64::INFINITY } else { -d.ln() },
    })
}

/// Range of predictive means compatible with `variance`.
pub fn mean_bounds(variance: f64) -> Result<(f64, f64)> {
    let d = distance_from_edge(checked_variance(variance)?);
    Ok((d, 1.0 - d))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundRecord {
    pub index: usize,
    pub label: u8,
    pub mean: f64,
    pub variance: f64,
    pub bce: f64,
    pub lower: f64,
    pub upper: f64,
}

impl BoundRecord {
    /// Distance to the nearest bound; negative when outside.
    pub fn margin(&self) -> f64 {
        (self.bce - self.lower).min(self.upper - self.bce)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub total: usize,
    pub tolerance: f64,
    pub violation_count: usize,
    /// Smallest margin across records; `None` for an empty batch.
    pub worst_margin: Option<f64>,
    pub violations: Vec<BoundRecord>,
    #[serde(skip)]
    pub records: Vec<BoundRecord>,
}

impl BoundReport {
    pub fn holds(&self) -> bool {
        self.violation_count == 0
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path.as_ref())?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(file), self)?;
        Ok(())
    }

    /// One row per record: `index,label,mean,variance,bce,lower,upper`.
    pub fn write_csv_to<W: Write>(&self, writer: W, ids: Option<&[String]>) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["record_id", "label", "mean", "variance", "bce", "lower", "upper"])?;
        for r in &self.records {
            let id = ids.map_or_else(|| r.index.to_string(), |ids| ids[r.index].clone());
            w.write_record([
                id,
                r.label.to_string(),
                r.mean.to_string(),
                r.variance.to_string(),
                r.bce.to_string(),
                r.lower.to_string(),
                if r.upper.is_infinite() {
                    "inf".into()
                } else {
                    r.upper.to_string()
                },
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Checks `lower − tol ≤ BCE(label, mean) ≤ upper + tol` record by record.
/// Violations are reported, never raised; malformed inputs are errors.
pub fn verify_bounds(summaries: &[PredictionSummary], labels: &[u8]) -> Result<BoundReport> {
    if summaries.len() != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "{} predictions but {} labels",
            summaries.len(),
            labels.len()
        )));
    }
    let mut records = Vec::with_capacity(summaries.len());
    for (index, (s, &label)) in summaries.iter().zip(labels).enumerate() {
        let interval = loss_bounds(s.variance)?;
        records.push(BoundRecord {
            index,
            label,
            mean: s.mean,
            variance: s.variance,
            bce: s.bce(label)?,
            lower: interval.lower,
            upper: interval.upper,
        });
    }
    let violations: Vec<BoundRecord> = records
        .iter()
        .filter(|r| r.margin() < -VERIFY_TOLERANCE)
        .cloned()
        .collect();
    Ok(BoundReport {
        total: records.len(),
        tolerance: VERIFY_TOLERANCE,
        violation_count: violations.len(),
        worst_margin: records.iter().map(BoundRecord::margin).reduce(f64::min),
        violations,
        records,
    })
}
