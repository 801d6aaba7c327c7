use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::GbdtConfig;
use crate::dataio::{CsvSchema, PreprocessConfig, SyntheticSpec, SUBGROUP};
use crate::error::{Error, Result};
use crate::training::TrainConfig;
use crate::variational::MixturePrior;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase")]
pub enum DataSource {
    Synthetic(SyntheticSpec),
    Csv(CsvSource),
}

impl Default for DataSource {
    fn default() -> Self {
        Self::Synthetic(SyntheticSpec::default())
    }
}

/// A single labelled CSV holding in-domain and subgroup records.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSource {
    pub path: PathBuf,
    #[serde(default)]
    pub schema: CsvSchema,
    /// Share of in-domain records set aside for testing.
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
}

fn default_test_fraction() -> f64 {
    0.2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub hidden: Vec<usize>,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self { hidden: vec![128, 128] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Every stage seed (data, init, training, inference, baseline, split)
    /// is derived from this one.
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Posterior samples `T` per prediction.
    pub samples: usize,
    /// Share of the training records held out for validation BCE.
    pub validation_fraction: f64,
    /// Group tag of the records held out as out-of-domain.
    pub ood_group: String,
    /// Features replaced by their training mean in the out-of-domain set.
    /// Unset: the two most shifted features for synthetic data, none for CSV.
    pub masked_features: Option<Vec<String>>,
    /// Slice size for the risk-coverage loss ratio and restricted AUROC.
    pub quantile: f64,
    pub data: DataSource,
    pub network: NetworkConfig,
    pub prior: MixturePrior,
    pub train: TrainConfig,
    pub gbdt: GbdtConfig,
    pub preprocess: PreprocessConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            output_dir: PathBuf::from("runs/experiment"),
            samples: 100,
            validation_fraction: 0.1,
            ood_group: SUBGROUP.to_string(),
            masked_features: None,
            quantile: 0.2,
            data: DataSource::default(),
            network: NetworkConfig::default(),
            prior: MixturePrior::default(),
            train: TrainConfig::default(),
            gbdt: GbdtConfig::default(),
            preprocess: PreprocessConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// Reads TOML. A relative CSV path is taken relative to the config file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingInput {
                path: path.to_path_buf(),
                hint: String::new(),
            },
            _ => e.into(),
        })?;
        let mut cfg = Self::from_toml(&text)?;
        if let DataSource::Csv(src) = &mut cfg.data {
            if src.path.is_relative() {
                if let Some(dir) = path.parent() {
                    src.path = dir.join(&src.path);
                }
            }
        }
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.samples < 2 {
            return bad(format!("samples must be at least 2, got {}", self.samples));
        }
        if !(0.0..0.5).contains(&self.validation_fraction) {
            return bad(format!(
                "validation_fraction {} outside [0, 0.5)",
                self.validation_fraction
            ));
        }
        if !(self.quantile > 0.0 && self.quantile <= 0.5) {
            return bad(format!("quantile {} outside (0, 0.5]", self.quantile));
        }
        if self.ood_group.is_empty() {
            return bad("ood_group must name a record group".into());
        }
        if let DataSource::Csv(src) = &self.data {
            if !(src.test_fraction > 0.0 && src.test_fraction < 1.0) {
                return bad(format!("test_fraction {} outside (0, 1)", src.test_fraction));
            }
        }
        self.train.validate()?;
        self.gbdt.validate()?;
        if let DataSource::Synthetic(spec) = &self.data {
            spec.validate()?;
        }
        Ok(())
    }

    /// The configuration with every stage seed set from `seed`.
    pub fn resolved(&self) -> Self {
        let mut cfg = self.clone();
        cfg.train.seed = cfg.seed;
        cfg.gbdt.seed = cfg.seed;
        if let DataSource::Synthetic(spec) = &mut cfg.data {
            spec.seed = cfg.seed;
        }
        cfg
    }

    pub fn masked(&self) -> Vec<String> {
        match (&self.masked_features, &self.data) {
            (Some(m), _) => m.clone(),
            (None, DataSource::Synthetic(spec)) => spec.most_shifted_features(2),
            (None, DataSource::Csv(_)) => Vec::new(),
        }
    }

    /// Hex SHA-256 of the resolved configuration, ignoring `output_dir`.
    pub fn digest(&self) -> Result<String> {
        let mut value = serde_json::to_value(self.resolved())?;
        if let Some(map) = value.as_object_mut() {
            map.remove("output_dir");
        }
        Ok(hex::encode(Sha256::digest(serde_json::to_vec(&value)?)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip() {
        let cfg = ExperimentConfig::default();
        let back = ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_toml_uses_defaults() {
        let cfg = ExperimentConfig::from_toml(
            "seed = 3\n[train]\nepochs = 2\n[data]\nsource = \"synthetic\"\nn_train = 100\n",
        )
        .unwrap();
        assert_eq!(cfg.train.epochs, 2);
        assert_eq!(cfg.train.batch_size, 256);
        match &cfg.data {
            DataSource::Synthetic(s) => assert_eq!((s.n_train, s.n_test), (100, 10_000)),
            other => panic!("{other:?}"),
        }
        assert_eq!(cfg.resolved().train.seed, 3);
    }

    #[test]
    fn csv_source_parses() {
        let cfg = ExperimentConfig::from_toml("[data]\nsource = \"csv\"\npath = \"x.csv\"\n").unwrap();
        assert!(matches!(&cfg.data, DataSource::Csv(c) if c.test_fraction == 0.2 && c.schema.label == "label"));
        assert!(cfg.masked().is_empty());
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        assert!(ExperimentConfig::from_toml("sed = 3\n").is_err());
        assert!(ExperimentConfig::from_toml("samples = 1\n").is_err());
        assert!(ExperimentConfig::from_toml("[train]\nepochs = 0\n").is_err());
    }

    #[test]
    fn digest_ignores_output_dir_but_not_seed() {
        let a = ExperimentConfig::default();
        let b = ExperimentConfig {
            output_dir: "elsewhere".into(),
            ..a.clone()
        };
        let c = ExperimentConfig { seed: 8, ..a.clone() };
        assert_eq!(a.digest().unwrap(), b.digest().unwrap());
        assert_ne!(a.digest().unwrap(), c.digest().unwrap());
        assert_eq!(a.digest().unwrap().len(), 64);
    }

    #[test]
    fn default_mask_is_the_most_shifted_pair() {
        assert_eq!(ExperimentConfig::default().masked(), vec!["age", "weight"]);
    }
}
