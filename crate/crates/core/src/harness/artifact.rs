use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::baselines::GbdtModel;
use crate::dataio::Preprocessor;
use crate::error::{Error, Result};
use crate::network::{BnnModel, DeterministicModel};
use crate::training::TrainConfig;

pub const FORMAT_VERSION: u32 = 1;

/// A feature overwritten with a constant in the out-of-domain set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskedFeature {
    pub name: String,
    pub index: usize,
    /// Training mean in standardized units.
    pub value: f64,
}

/// Everything `predict` needs, in one self-describing JSON file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub format_version: u32,
    pub config_digest: String,
    pub seed: u64,
    pub train_config: TrainConfig,
    pub bnn: BnnModel,
    pub deterministic: DeterministicModel,
    pub gbdt: GbdtModel,
    pub preprocessor: Preprocessor,
    pub ood_group: String,
    pub masked_features: Vec<MaskedFeature>,
}

impl ModelArtifact {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path.as_ref())?;
        serde_json::to_writer(std::io::BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingInput {
                path: path.to_path_buf(),
                hint: " (run `train` first)".into(),
            },
            _ => e.into(),
        })?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let found = value
            .get("format_version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| Error::Config("model file has no format_version".into()))?;
        if found != FORMAT_VERSION as u64 {
            return Err(Error::FormatVersion {
                found: found as u32,
                expected: FORMAT_VERSION,
            });
        }
        let artifact: Self = serde_json::from_value(value)?;
        let d = artifact.bnn.spec.input_dim;
        let consistent = artifact.deterministic.spec == artifact.bnn.spec
            && artifact.gbdt.n_features == d
            && artifact.preprocessor.feature_names.len() + artifact.preprocessor.indicator_features.len() == d
            && artifact.bnn.params.shapes() == artifact.bnn.spec.layer_shapes();
        if !consistent {
            return Err(Error::Config(
                "model file components disagree on the input dimension".into(),
            ));
        }
        BnnModel::from_parts(
            artifact.bnn.spec.clone(),
            artifact.bnn.params.clone(),
            artifact.bnn.prior,
        )?;
        DeterministicModel::from_layers(
            artifact.deterministic.spec.clone(),
            artifact.deterministic.layers.clone(),
        )?;
        Ok(artifact)
    }
}
