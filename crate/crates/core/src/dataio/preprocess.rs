use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{invalid, Result};
use crate::ndcore::Matrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    /// Records with any feature outside `[Q1 − k·IQR, Q3 + k·IQR]` are dropped.
    pub iqr_multiplier: f64,
    /// Append a 0/1 `<name>_missing` column for features with gaps in the fit split.
    pub missing_indicators: bool,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            iqr_multiplier: 8.0,
            missing_indicators: false,
        }
    }
}

/// Per-feature location and scale used to standardize.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

/// Statistics fitted on one split and applied unchanged to every split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Preprocessor {
    pub feature_names: Vec<String>,
    pub q1: Vec<f64>,
    pub q3: Vec<f64>,
    pub iqr_multiplier: f64,
    pub standardization: Standardization,
    /// Features that receive a missingness indicator column.
    pub indicator_features: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Preprocessed {
    pub dataset: Dataset,
    /// Ids of records dropped by the outlier fence.
    pub removed: Vec<String>,
}

/// Linear-interpolation quantile of sorted values.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

impl Preprocessor {
    pub fn fit(fit_on: &Dataset, config: &PreprocessConfig) -> Result<Self> {
        if fit_on.is_empty() {
            return Err(invalid("cannot fit preprocessing on an empty split"));
        }
        if config.iqr_multiplier.is_nan() || config.iqr_multiplier <= 0.0 {
            return Err(invalid("iqr_multiplier must be positive"));
        }
        let d = fit_on.n_features();
        let column = |j: usize| -> Vec<f64> { (0..fit_on.len()).filter_map(|i| fit_on.value(i, j)).collect() };
        let (mut q1, mut q3) = (Vec::with_capacity(d), Vec::with_capacity(d));
        for j in 0..d {
            let mut col = column(j);
            if col.is_empty() {
                return Err(invalid(format!(
                    "feature `{}` has no observed values",
                    fit_on.feature_names[j]
                )));
            }
            col.sort_by(f64::total_cmp);
            q1.push(quantile(&col, 0.25));
            q3.push(quantile(&col, 0.75));
        }
        let mut pre = Self {
            feature_names: fit_on.feature_names.clone(),
            q1,
            q3,
            iqr_multiplier: config.iqr_multiplier,
            standardization: Standardization {
                means: vec![0.0; d],
                sds: vec![1.0; d],
            },
            indicator_features: Vec::new(),
        };

        let kept: Vec<usize> = (0..fit_on.len()).filter(|&i| pre.inside_fence(fit_on, i)).collect();
        for j in 0..d {
            let vals: Vec<f64> = kept.iter().filter_map(|&i| fit_on.value(i, j)).collect();
            if vals.is_empty() {
                return Err(invalid(format!(
                    "feature `{}` has no values after outlier removal",
                    fit_on.feature_names[j]
                )));
            }
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / n;
            let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
            pre.standardization.means[j] = mean;
            pre.standardization.sds[j] = if sd > 0.0 {
                sd
            } else {
                log::warn!(
                    "feature `{}` has zero variance; leaving it unscaled",
                    fit_on.feature_names[j]
                );
                1.0
            };
        }
        if config.missing_indicators {
            pre.indicator_features = (0..d)
                .filter(|&j| (0..fit_on.len()).any(|i| fit_on.is_missing(i, j)))
                .collect();
        }
        Ok(pre)
    }

    /// Acceptance window of feature `j`.
    pub fn fence(&self, j: usize) -> (f64, f64) {
        let iqr = self.q3[j] - self.q1[j];
        (
            self.q1[j] - self.iqr_multiplier * iqr,
            self.q3[j] + self.iqr_multiplier * iqr,
        )
    }

    fn inside_fence(&self, ds: &Dataset, i: usize) -> bool {
        (0..ds.n_features()).all(|j| match ds.value(i, j) {
            Some(v) => {
                let (lo, hi) = self.fence(j);
                v >= lo && v <= hi
            }
            None => true,
        })
    }

    /// Drops fenced-out records, mean-imputes gaps and standardizes with the
    /// fitted statistics. Never refits.
    pub fn transform(&self, ds: &Dataset) -> Result<Preprocessed> {
        if ds.feature_names != self.feature_names {
            return Err(invalid("dataset features do not match the fitted preprocessor"));
        }
        let (kept, removed): (Vec<usize>, Vec<usize>) = (0..ds.len()).partition(|&i| self.inside_fence(ds, i));
        let d = ds.n_features();
        let width = d + self.indicator_features.len();
        let mut data = Vec::with_capacity(kept.len() * width);
        let Standardization { means, sds } = &self.standardization;
        for &i in &kept {
            for j in 0..d {
                let v = ds.value(i, j).unwrap_or(means[j]);
                data.push((v - means[j]) / sds[j]);
            }
            for &j in &self.indicator_features {
                data.push(if ds.is_missing(i, j) { 1.0 } else { 0.0 });
            }
        }
        let mut names = ds.feature_names.clone();
        names.extend(
            self.indicator_features
                .iter()
                .map(|&j| format!("{}_missing", ds.feature_names[j])),
        );
        let mut out = Dataset::new(
            Matrix::new(kept.len(), width, data)?,
            kept.iter().map(|&i| ds.labels[i]).collect(),
            names,
            kept.iter().map(|&i| ds.ids[i].clone()).collect(),
            kept.iter().map(|&i| ds.groups[i].clone()).collect(),
        )?;
        out.standardization = Some(self.standardization.clone());
        Ok(Preprocessed {
            dataset: out,
            removed: removed.into_iter().map(|i| ds.ids[i].clone()).collect(),
        })
    }
}

/// Fits on `fit_on` and transforms it.
pub fn preprocess(fit_on: &Dataset, config: &PreprocessConfig) -> Result<(Preprocessor, Preprocessed)> {
    let pre = Preprocessor::fit(fit_on, config)?;
    let out = pre.transform(fit_on)?;
    Ok((pre, out))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn column(values: &[f64]) -> Dataset {
        let n = values.len();
        Dataset::new(
            Matrix::new(n, 1, values.to_vec()).unwrap(),
            vec![0; n],
            vec!["x".into()],
            (0..n).map(|i| i.to_string()).collect(),
            vec![String::new(); n],
        )
        .unwrap()
    }

    #[test]
    fn eight_iqr_fence() {
        let train = column(&[1.0, 3.0, 5.0, 7.0, 9.0]);
        let pre = Preprocessor::fit(&train, &PreprocessConfig::default()).unwrap();
        assert_eq!((pre.q1[0], pre.q3[0]), (3.0, 7.0));
        assert_eq!(pre.fence(0), (-29.0, 39.0));
        let out = pre.transform(&column(&[0.0, 39.0, 1000.0, -29.5])).unwrap();
        assert_eq!(out.removed, vec!["2", "3"]);
        assert_eq!(out.dataset.len(), 2);
    }

    #[test]
    fn standardized_input_is_unchanged() {
        let raw = [0.3, -1.2, 2.2, 0.1, -0.7, 1.9, -2.0, 0.4];
        let mean = raw.iter().sum::<f64>() / raw.len() as f64;
        let sd = (raw.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / raw.len() as f64).sqrt();
        let z: Vec<f64> = raw.iter().map(|v| (v - mean) / sd).collect();
        let ds = column(&z);
        let (_, out) = preprocess(&ds, &PreprocessConfig::default()).unwrap();
        for (a, b) in out.dataset.features.as_slice().iter().zip(&z) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn test_split_uses_training_statistics() {
        let train = column(&[1.0, 2.0, 3.0, 4.0]);
        let pre = Preprocessor::fit(&train, &PreprocessConfig::default()).unwrap();
        let stored = pre.standardization.clone();
        let a = pre.transform(&column(&[10.0, 2.5])).unwrap();
        let b = pre.transform(&column(&[-5.0, 2.5, 3.0])).unwrap();
        assert_eq!(pre.standardization, stored);
        assert_eq!(a.dataset.standardization, Some(stored));
        assert_eq!(a.dataset.features.get(1, 0), b.dataset.features.get(1, 0));
    }

    #[test]
    fn outliers_do_not_move_statistics() {
        let pre_clean = Preprocessor::fit(&column(&[1.0, 2.0, 3.0, 4.0, 5.0]), &PreprocessConfig::default()).unwrap();
        let pre_dirty =
            Preprocessor::fit(&column(&[1.0, 2.0, 3.0, 4.0, 5.0, 1e6]), &PreprocessConfig::default()).unwrap();
        assert!((pre_dirty.standardization.means[0] - 3.0).abs() < 1e-12);
        assert_eq!(pre_clean.standardization.means, pre_dirty.standardization.means);
    }

    #[test]
    fn missing_values_are_imputed_with_fit_means() {
        let ds = column(&[1.0, 2.0, 0.0, 3.0])
            .with_missing(vec![false, false, true, false])
            .unwrap();
        let cfg = PreprocessConfig {
            missing_indicators: true,
            ..PreprocessConfig::default()
        };
        let (pre, out) = preprocess(&ds, &cfg).unwrap();
        assert!((pre.standardization.means[0] - 2.0).abs() < 1e-12);
        assert!(!out.dataset.has_missing());
        assert_eq!(out.dataset.features.get(2, 0), 0.0);
        assert_eq!(out.dataset.feature_names, vec!["x", "x_missing"]);
        assert_eq!(out.dataset.features.get(2, 1), 1.0);
        assert_eq!(out.dataset.features.get(0, 1), 0.0);
    }

    #[test]
    fn constant_feature_is_kept() {
        let (pre, out) = preprocess(&column(&[4.0, 4.0, 4.0]), &PreprocessConfig::default()).unwrap();
        assert_eq!(pre.standardization.sds[0], 1.0);
        assert_eq!(out.dataset.len(), 3);
        assert!(out.dataset.features.as_slice().iter().all(|&v| v == 0.0));
    }
}
