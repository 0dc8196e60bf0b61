//! JSON checkpoints for trained parameters.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::lpda::UnfoldingParameters;
use super::mlp::{MlpParameters, HIDDEN_ACTIVATION, OUTPUT_ACTIVATION};
use super::train::TrainConfig;
use crate::{Error, Result};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Activations {
    pub hidden: String,
    pub output: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerRecord {
    /// Row-major `out × in`.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub config: TrainConfig,
    pub epochs: usize,
    pub final_train_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    #[serde(rename = "K")]
    pub k: usize,
    pub layer_dims: Vec<usize>,
    pub activations: Activations,
    pub alphas: Vec<f64>,
    #[serde(rename = "G_max")]
    pub g_max: f64,
    pub layers: Vec<LayerRecord>,
    pub metadata: Option<TrainingMetadata>,
}

impl Checkpoint {
    pub fn new(params: &UnfoldingParameters, metadata: Option<TrainingMetadata>) -> Self {
        Self {
            format_version: CHECKPOINT_FORMAT_VERSION,
            k: params.k(),
            layer_dims: params.mlp.layer_dims.clone(),
            activations: Activations {
                hidden: HIDDEN_ACTIVATION.into(),
                output: OUTPUT_ACTIVATION.into(),
            },
            alphas: params.alphas.clone(),
            g_max: params.g_max,
            layers: params
                .mlp
                .weights
                .iter()
                .zip(&params.mlp.biases)
                .map(|(w, b)| LayerRecord {
                    weights: w.clone(),
                    biases: b.clone(),
                })
                .collect(),
            metadata,
        }
    }

    pub fn parameters(&self) -> Result<UnfoldingParameters> {
        if self.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                found: self.format_version,
                supported: CHECKPOINT_FORMAT_VERSION,
            });
        }
        if self.activations.hidden != HIDDEN_ACTIVATION || self.activations.output != OUTPUT_ACTIVATION {
            return Err(Error::InvalidConfig(format!(
                "unsupported activations {}/{}",
                self.activations.hidden, self.activations.output
            )));
        }
        let params = UnfoldingParameters {
            mlp: MlpParameters {
                layer_dims: self.layer_dims.clone(),
                weights: self.layers.iter().map(|l| l.weights.clone()).collect(),
                biases: self.layers.iter().map(|l| l.biases.clone()).collect(),
            },
            alphas: self.alphas.clone(),
            g_max: self.g_max,
        };
        params.validate()?;
        if params.k() != self.k {
            return Err(Error::KMismatch {
                expected: self.k,
                found: params.k(),
            });
        }
        Ok(params)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).expect("checkpoint serializes");
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Malformed {
            path: path.to_path_buf(),
            line: e.line(),
            msg: e.to_string(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn params() -> UnfoldingParameters {
        let mut rng = stream(1, 0);
        UnfoldingParameters::init(3, &[5, 4], 4, 1e7, &mut rng)
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.json");
        let ck = Checkpoint::new(&params(), None);
        ck.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.parameters().unwrap(), params());
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("\"K\": 3") && text.contains("\"G_max\""));
    }

    #[test]
    fn rejects_other_versions_and_shapes() {
        let mut ck = Checkpoint::new(&params(), None);
        ck.format_version = 9;
        assert!(matches!(ck.parameters(), Err(Error::VersionMismatch { found: 9, .. })));
        let mut ck = Checkpoint::new(&params(), None);
        ck.layers[0].biases.pop();
        assert!(ck.parameters().is_err());
    }

    #[test]
    fn missing_file_names_the_path() {
        let err = Checkpoint::load("/nonexistent/ckpt.json").unwrap_err();
        assert!(err.to_string().contains("/nonexistent/ckpt.json"));
    }
}
