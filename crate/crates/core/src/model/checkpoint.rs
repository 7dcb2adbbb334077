//! Self-describing JSON checkpoints.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelConfig, VaeRegressor};
use crate::data::Standardization;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const CHECKPOINT_FORMAT: &str = "vaereg-checkpoint/1";

/// A trained model plus everything needed to apply it to raw data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub config: ModelConfig,
    pub seed: u64,
    pub feature_names: Vec<String>,
    pub target_name: String,
    pub standardization: Standardization,
    pub model: VaeRegressor,
}

/// Predictive mean and standard deviation in raw target units.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Checkpoint {
    pub fn new(
        config: ModelConfig,
        seed: u64,
        feature_names: Vec<String>,
        target_name: String,
        standardization: Standardization,
        model: VaeRegressor,
    ) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            config,
            seed,
            feature_names,
            target_name,
            standardization,
            model,
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut bytes = serde_json::to_vec_pretty(self)?;
        bytes.push(b'\n');
        Ok(bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_slice(bytes)?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(Error::Data(format!("unsupported checkpoint format {:?}", ck.format)));
        }
        ck.model.validate()?;
        if ck.feature_names.len() != ck.model.input_dim() || ck.standardization.dim() != ck.model.input_dim() {
            return Err(Error::Data("checkpoint feature metadata does not match the model".into()));
        }
        Ok(ck)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Regressor output for raw features, de-standardized.
    pub fn predict(&self, raw_x: &Tensor) -> Result<Prediction> {
        let x = self.standardization.transform_features(raw_x)?;
        let q = self.model.regress(&x)?;
        let s = &self.standardization;
        Ok(Prediction {
            mean: q.mean.values().iter().map(|&m| s.destandardize_target(m)).collect(),
            std: q.log_var.values().iter().map(|&lv| (0.5 * lv).exp() * s.target_std).collect(),
        })
    }

    /// Posterior means of `q(z|x)` for raw features.
    pub fn latent_means(&self, raw_x: &Tensor) -> Result<Tensor> {
        let x = self.standardization.transform_features(raw_x)?;
        Ok(self.model.encode(&x)?.mean)
    }
}
