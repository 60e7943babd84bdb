//! Checkpoint container: JSON with the network plan, the training
//! configuration, the shape-model fingerprint and every tensor as
//! base64-encoded little-endian `f32`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TrainConfig;
use crate::error::{Error, Result};
use crate::feature_net::{NetConfig, Network};
use crate::serial::{decode_f32s, encode_f32s};

pub const CHECKPOINT_FORMAT: &str = "pdmnet-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub network: Network<f32>,
    pub train_config: TrainConfig,
    pub shape_model_fingerprint: String,
    /// Epoch (1-based) the weights come from; 0 for an untrained network.
    pub epoch: usize,
    pub validation_error: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct Tensor {
    name: String,
    len: usize,
    data: String,
}

#[derive(Serialize, Deserialize)]
struct Container {
    format: String,
    version: u32,
    network: NetConfig,
    train_config: TrainConfig,
    shape_model_fingerprint: String,
    epoch: usize,
    validation_error: Option<f64>,
    tensors: Vec<Tensor>,
}

impl Checkpoint {
    pub fn to_container_string(&self) -> String {
        let c = Container {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            network: self.network.config().clone(),
            train_config: self.train_config.clone(),
            shape_model_fingerprint: self.shape_model_fingerprint.clone(),
            epoch: self.epoch,
            validation_error: self.validation_error,
            tensors: self
                .network
                .named_params()
                .into_iter()
                .map(|(name, v)| Tensor {
                    name,
                    len: v.len(),
                    data: encode_f32s(v),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&c).expect("checkpoint serializes") + "\n"
    }

    pub fn from_container_str(text: &str) -> Result<Self> {
        let raw: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::parse("checkpoint", e.to_string()))?;
        let version = raw.get("version").and_then(|v| v.as_u64());
        if raw.get("format").and_then(|v| v.as_str()) != Some(CHECKPOINT_FORMAT) {
            return Err(Error::parse("checkpoint.format", format!("expected {CHECKPOINT_FORMAT:?}")));
        }
        if version != Some(CHECKPOINT_VERSION as u64) {
            return Err(Error::Version {
                kind: "checkpoint",
                found: version.unwrap_or(0) as u32,
                expected: CHECKPOINT_VERSION,
            });
        }
        let c: Container = serde_json::from_value(raw).map_err(|e| Error::parse("checkpoint", e.to_string()))?;
        let mut network = Network::<f32>::build(&c.network, 0)?;
        let names: Vec<String> = network.named_params().into_iter().map(|(n, _)| n).collect();
        if names.len() != c.tensors.len() {
            return Err(Error::parse(
                "checkpoint.tensors",
                format!("expected {} tensors, found {}", names.len(), c.tensors.len()),
            ));
        }
        for ((dst, name), t) in network.params_mut().into_iter().zip(&names).zip(&c.tensors) {
            let at = format!("checkpoint.tensors[{}]", t.name);
            if &t.name != name {
                return Err(Error::parse(at, format!("expected tensor {name:?}")));
            }
            let values = decode_f32s(&t.data, &at)?;
            if values.len() != dst.len() || t.len != dst.len() {
                return Err(Error::parse(at, format!("expected {} values, found {}", dst.len(), values.len())));
            }
            *dst = values;
        }
        Ok(Checkpoint {
            network,
            train_config: c.train_config,
            shape_model_fingerprint: c.shape_model_fingerprint,
            epoch: c.epoch,
            validation_error: c.validation_error,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::write_atomic(path, self.to_container_string().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_container_str(&text)
    }
}
