//! Tabular binary-outcome data: the in-memory dataset, a synthetic ICU-like
//! generator, CSV ingestion, IQR-fence preprocessing and the subgroup
//! holdout used for out-of-domain experiments.

mod csvio;
mod holdout;
mod preprocess;
mod synthetic;

use serde::{Deserialize, Serialize};

pub use csvio::{load_csv, read_csv, write_csv, write_csv_to, CsvSchema};
pub use holdout::make_ood_holdout;
pub use preprocess::{preprocess, PreprocessConfig, Preprocessed, Preprocessor, Standardization};
pub use synthetic::{generate_synthetic, SubgroupSpec, SyntheticData, SyntheticSpec, IN_DOMAIN_GROUP, SUBGROUP};

use crate::error::{invalid, Error, Result};
use crate::ndcore::Matrix;

/// Features, binary labels and per-record metadata.
///
/// Missing cells hold `0.0` in `features` and are flagged in a parallel mask
/// until [`Preprocessor::transform`] imputes them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub features: Matrix,
    pub labels: Vec<u8>,
    pub feature_names: Vec<String>,
    pub ids: Vec<String>,
    pub groups: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    missing: Vec<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub standardization: Option<Standardization>,
}

impl Dataset {
    pub fn new(
        features: Matrix,
        labels: Vec<u8>,
        feature_names: Vec<String>,
        ids: Vec<String>,
        groups: Vec<String>,
    ) -> Result<Self> {
        let n = features.rows();
        if labels.len() != n || ids.len() != n || groups.len() != n {
            return Err(invalid(format!(
                "dataset columns disagree: {n} feature rows, {} labels, {} ids, {} groups",
                labels.len(),
                ids.len(),
                groups.len()
            )));
        }
        if feature_names.len() != features.cols() {
            return Err(invalid(format!(
                "{} feature names for {} feature columns",
                feature_names.len(),
                features.cols()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y > 1) {
            return Err(Error::NonBinaryLabel(bad as f64));
        }
        Ok(Self {
            features,
            labels,
            feature_names,
            ids,
            groups,
            missing: Vec::new(),
            standardization: None,
        })
    }

    /// Attaches a row-major missingness mask of the same shape as `features`.
    pub fn with_missing(mut self, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != self.features.len() {
            return Err(invalid("missingness mask does not match the feature matrix"));
        }
        if mask.iter().any(|&m| m) {
            for (v, &m) in self.features.as_mut_slice().iter_mut().zip(&mask) {
                if m {
                    *v = 0.0;
                }
            }
            self.missing = mask;
        } else {
            self.missing.clear();
        }
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.features.cols()
    }

    pub fn has_missing(&self) -> bool {
        self.missing.iter().any(|&m| m)
    }

    pub fn is_missing(&self, row: usize, col: usize) -> bool {
        !self.missing.is_empty() && self.missing[row * self.n_features() + col]
    }

    pub fn missing_count(&self) -> usize {
        self.missing.iter().filter(|&&m| m).count()
    }

    /// Value of a cell, `None` when missing.
    pub fn value(&self, row: usize, col: usize) -> Option<f64> {
        (!self.is_missing(row, col)).then(|| self.features.get(row, col))
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|n| n == name)
    }

    pub fn base_rate(&self) -> f64 {
        self.labels.iter().map(|&y| y as f64).sum::<f64>() / self.len().max(1) as f64
    }

    /// Rows selected by index, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let d = self.n_features();
        let missing = if self.missing.is_empty() {
            Vec::new()
        } else {
            indices
                .iter()
                .flat_map(|&i| self.missing[i * d..(i + 1) * d].iter().copied())
                .collect()
        };
        Self {
            features: self.features.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            feature_names: self.feature_names.clone(),
            ids: indices.iter().map(|&i| self.ids[i].clone()).collect(),
            groups: indices.iter().map(|&i| self.groups[i].clone()).collect(),
            missing,
            standardization: self.standardization.clone(),
        }
    }

    /// Rows of `self` followed by rows of `other`; feature names must agree.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        if self.feature_names != other.feature_names {
            return Err(invalid("cannot concatenate datasets with different features"));
        }
        let d = self.n_features();
        let mut data = self.features.as_slice().to_vec();
        data.extend_from_slice(other.features.as_slice());
        let missing = if self.missing.is_empty() && other.missing.is_empty() {
            Vec::new()
        } else {
            let pad = |ds: &Self| {
                if ds.missing.is_empty() {
                    vec![false; ds.len() * d]
                } else {
                    ds.missing.clone()
                }
            };
            [pad(self), pad(other)].concat()
        };
        Ok(Self {
            features: Matrix::new(self.len() + other.len(), d, data)?,
            labels: [self.labels.as_slice(), &other.labels].concat(),
            feature_names: self.feature_names.clone(),
            ids: [self.ids.as_slice(), &other.ids].concat(),
            groups: [self.groups.as_slice(), &other.groups].concat(),
            missing,
            standardization: self.standardization.clone(),
        })
    }

    pub(crate) fn missing_mask(&self) -> &[bool] {
        &self.missing
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Dataset {
        Dataset::new(
            Matrix::from_fn(3, 2, |r, c| (r * 2 + c) as f64),
            vec![0, 1, 1],
            vec!["a".into(), "b".into()],
            vec!["r0".into(), "r1".into(), "r2".into()],
            vec!["g".into(), "h".into(), "g".into()],
        )
        .unwrap()
    }

    #[test]
    fn rejects_inconsistent_columns() {
        let err = Dataset::new(Matrix::zeros(2, 1), vec![0], vec!["a".into()], vec![], vec![]);
        assert!(err.is_err());
        let err = Dataset::new(
            Matrix::zeros(1, 1),
            vec![2],
            vec!["a".into()],
            vec!["x".into()],
            vec!["g".into()],
        );
        assert!(matches!(err, Err(Error::NonBinaryLabel(_))));
    }

    #[test]
    fn subset_and_concat_keep_metadata() {
        let d = tiny();
        let mut mask = vec![false; 6];
        mask[3] = true;
        let d = d.with_missing(mask).unwrap();
        let s = d.subset(&[2, 1]);
        assert_eq!(s.ids, vec!["r2", "r1"]);
        assert!(s.is_missing(1, 1));
        assert_eq!(s.value(0, 0), Some(4.0));
        let c = s.concat(&tiny()).unwrap();
        assert_eq!(c.len(), 5);
        assert!(c.is_missing(1, 1) && !c.is_missing(4, 1));
        assert_eq!(c.missing_count(), 1);
    }
}
