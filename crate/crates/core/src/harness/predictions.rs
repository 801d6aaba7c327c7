use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::PredictionSummary;

pub const SPLIT_TEST: &str = "test";
pub const SPLIT_OOD: &str = "ood";

/// One line of the predictions CSV. Reports are recomputed from these
/// columns alone.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub record_id: String,
    pub split: String,
    pub label: u8,
    pub mean: f64,
    pub mean_complement: f64,
    pub variance: f64,
    pub std: f64,
    pub samples: usize,
    pub det_prob: f64,
    pub gbdt_prob: f64,
    pub config_digest: String,
}

impl PredictionRow {
    pub fn summary(&self) -> PredictionSummary {
        PredictionSummary {
            mean: self.mean,
            mean_complement: self.mean_complement,
            variance: self.variance,
            samples: self.samples,
            probabilities: None,
        }
    }
}

pub fn write_predictions(rows: &[PredictionRow], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_predictions(path: impl AsRef<Path>) -> Result<Vec<PredictionRow>> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingInput {
            path: path.to_path_buf(),
            hint: " (run `predict` first)".into(),
        });
    }
    let mut rdr = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for (k, row) in rdr.deserialize().enumerate() {
        let row: PredictionRow = row.map_err(|e| Error::CsvLine {
            line: k as u64 + 2,
            message: e.to_string(),
        })?;
        if row.label > 1 {
            return Err(Error::NonBinaryLabel(row.label as f64));
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Concatenates prediction files, refusing rows from different configurations.
pub fn read_prediction_files(paths: &[impl AsRef<Path>]) -> Result<(Vec<PredictionRow>, String)> {
    let mut rows = Vec::new();
    for p in paths {
        rows.extend(read_predictions(p)?);
    }
    let digests: BTreeSet<&str> = rows.iter().map(|r| r.config_digest.as_str()).collect();
    match digests.len() {
        0 => Err(Error::Metric("no predictions to evaluate".into())),
        1 => {
            let digest = digests.into_iter().next().unwrap_or_default().to_string();
            Ok((rows, digest))
        }
        n => Err(Error::Invariant(format!(
            "predictions come from {n} different configurations: {}",
            digests.into_iter().collect::<Vec<_>>().join(", ")
        ))),
    }
}

pub fn split_rows<'a>(rows: &'a [PredictionRow], split: &str) -> Vec<&'a PredictionRow> {
    rows.iter().filter(|r| r.split == split).collect()
}
