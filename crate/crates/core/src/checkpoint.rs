//! Checkpoint directories: one MXTENSOR file per named tensor plus an
//! `index.json` describing them.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::segnet::{EncoderConfig, ModelParams};
use crate::tensor::{io, Tensor};
use crate::{Error, Result};

pub const INDEX_FILE: &str = "index.json";
const FORMAT: &str = "mixseg-checkpoint-v1";

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    file: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct Index {
    format: String,
    iteration: usize,
    config_hash: String,
    encoder: EncoderConfig,
    params: Vec<TensorEntry>,
    #[serde(default)]
    velocity: Vec<TensorEntry>,
    #[serde(default)]
    train_state: Option<serde_json::Value>,
}

/// Model weights plus whatever is needed to continue training.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub encoder: EncoderConfig,
    pub iteration: usize,
    pub params: ModelParams<f32>,
    /// Optimizer momentum buffers, parallel to `params`; empty for
    /// inference-only checkpoints.
    pub velocity: Vec<Tensor<f32>>,
    pub train_state: Option<serde_json::Value>,
}

fn io_error(path: &Path, e: std::io::Error) -> Error {
    Error::Config(format!("{}: {e}", path.display()))
}

impl Checkpoint {
    pub fn save(&self, dir: &Path) -> Result<()> {
        self.params.check_layout(&self.encoder)?;
        if !self.velocity.is_empty() && self.velocity.len() != self.params.len() {
            return Err(Error::Config("velocity does not match parameters".into()));
        }
        for sub in ["params", "velocity"] {
            fs::create_dir_all(dir.join(sub)).map_err(|e| io_error(dir, e))?;
        }
        let mut params = Vec::new();
        let mut velocity = Vec::new();
        for (k, (name, t)) in self.params.entries().iter().enumerate() {
            let file = format!("params/{name}.mxt");
            io::write(&dir.join(&file), t)?;
            params.push(TensorEntry { name: name.clone(), shape: t.shape().to_vec(), file });
            if let Some(v) = self.velocity.get(k) {
                let file = format!("velocity/{name}.mxt");
                io::write(&dir.join(&file), v)?;
                velocity.push(TensorEntry { name: name.clone(), shape: v.shape().to_vec(), file });
            }
        }
        let index = Index {
            format: FORMAT.into(),
            iteration: self.iteration,
            config_hash: self.encoder.hash(),
            encoder: self.encoder.clone(),
            params,
            velocity,
            train_state: self.train_state.clone(),
        };
        let path = dir.join(INDEX_FILE);
        let json = serde_json::to_vec_pretty(&index).map_err(|e| Error::Config(e.to_string()))?;
        fs::write(&path, json).map_err(|e| io_error(&path, e))
    }

    /// Loads and validates a checkpoint: the stored hash must match the
    /// stored encoder config, and every tensor its declared shape.
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(INDEX_FILE);
        let bytes = fs::read(&path).map_err(|e| io_error(&path, e))?;
        let index: Index = serde_json::from_slice(&bytes)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if index.format != FORMAT {
            return Err(Error::Config(format!("unknown checkpoint format {:?}", index.format)));
        }
        if index.encoder.hash() != index.config_hash {
            return Err(Error::Config("checkpoint config hash does not match its encoder config".into()));
        }
        let read = |entries: &[TensorEntry]| -> Result<Vec<(String, Tensor<f32>)>> {
            entries
                .iter()
                .map(|e| {
                    let t: Tensor<f32> = io::read(&dir.join(&e.file))?;
                    if t.shape() != e.shape.as_slice() {
                        return Err(Error::Config(format!("tensor {} has shape {:?}, index says {:?}", e.name, t.shape(), e.shape)));
                    }
                    Ok((e.name.clone(), t))
                })
                .collect()
        };
        let params = ModelParams::from_entries(read(&index.params)?);
        params.check_layout(&index.encoder)?;
        if !params.all_finite() {
            return Err(Error::Config("checkpoint holds non-finite weights".into()));
        }
        let velocity: Vec<Tensor<f32>> = read(&index.velocity)?.into_iter().map(|(_, t)| t).collect();
        if !velocity.is_empty() && velocity.len() != params.len() {
            return Err(Error::Config("velocity does not match parameters".into()));
        }
        Ok(Self {
            encoder: index.encoder,
            iteration: index.iteration,
            params,
            velocity,
            train_state: index.train_state,
        })
    }

    /// Fails unless this checkpoint was produced for `expected`.
    pub fn check_config(&self, expected: &EncoderConfig) -> Result<()> {
        if self.encoder.hash() != expected.hash() {
            return Err(Error::Config(format!(
                "checkpoint config hash {} does not match {}",
                self.encoder.hash(),
                expected.hash()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::segnet::init_params;

    #[test]
    fn round_trip_is_exact() {
        let enc = EncoderConfig::with_size(32, 32);
        let params = init_params::<f32>(&enc, 3);
        let velocity: Vec<_> = params.tensors().map(|t| t.map(|v| v * 0.5)).collect();
        let ck = Checkpoint {
            encoder: enc.clone(),
            iteration: 17,
            params,
            velocity,
            train_state: Some(serde_json::json!({"cursor": 4})),
        };
        let dir = tempfile::tempdir().unwrap();
        ck.save(dir.path()).unwrap();
        let back = Checkpoint::load(dir.path()).unwrap();
        assert_eq!(back, ck);
        back.check_config(&enc).unwrap();
        assert!(back.check_config(&EncoderConfig::with_size(64, 32)).is_err());
    }

    #[test]
    fn tampered_hash_is_rejected() {
        let enc = EncoderConfig::with_size(32, 32);
        let ck = Checkpoint {
            encoder: enc.clone(),
            iteration: 0,
            params: init_params(&enc, 1),
            velocity: Vec::new(),
            train_state: None,
        };
        let dir = tempfile::tempdir().unwrap();
        ck.save(dir.path()).unwrap();
        let path = dir.path().join(INDEX_FILE);
        let text = fs::read_to_string(&path).unwrap().replace(&enc.hash(), &"0".repeat(64));
        fs::write(&path, text).unwrap();
        assert!(Checkpoint::load(dir.path()).is_err());
    }
}
