use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{AdamState, TrainConfig};
use crate::model::Model;

pub const CHECKPOINT_MAGIC: &str = "flowspeaker-ckpt";
pub const CHECKPOINT_VERSION: u64 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum CheckpointError {
    #[error("{0}")]
    Io(String),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("truncated checkpoint: {0}")]
    Truncated(String),
    #[error("unsupported checkpoint version {0} (this build reads version {CHECKPOINT_VERSION})")]
    UnsupportedVersion(u64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub magic: String,
    pub version: u64,
    pub config: TrainConfig,
    pub model: Model,
    pub optimizer: AdamState,
    pub step: u64,
    pub loss_trace: Vec<f64>,
}

impl Checkpoint {
    pub fn new(config: TrainConfig, model: Model, optimizer: AdamState, loss_trace: Vec<f64>) -> Self {
        Self {
            magic: CHECKPOINT_MAGIC.into(),
            version: CHECKPOINT_VERSION,
            config,
            model,
            step: optimizer.step,
            optimizer,
            loss_trace,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint values are finite")
    }

    pub fn from_json(text: &str) -> Result<Self, CheckpointError> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| {
            if e.is_eof() {
                CheckpointError::Truncated(e.to_string())
            } else {
                CheckpointError::Corrupt(e.to_string())
            }
        })?;
        match value.get("magic").and_then(|m| m.as_str()) {
            Some(CHECKPOINT_MAGIC) => {}
            Some(other) => return Err(CheckpointError::Corrupt(format!("bad magic {other:?}"))),
            None => return Err(CheckpointError::Corrupt("missing magic field".into())),
        }
        let version = value
            .get("version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| CheckpointError::Corrupt("missing or invalid version".into()))?;
        if version != CHECKPOINT_VERSION {
            return Err(CheckpointError::UnsupportedVersion(version));
        }
        let cp: Checkpoint = serde_json::from_value(value).map_err(|e| CheckpointError::Corrupt(e.to_string()))?;
        cp.check()?;
        Ok(cp)
    }

    fn check(&self) -> Result<(), CheckpointError> {
        let n = self.model.params().len();
        if self.optimizer.m.len() != n || self.optimizer.v.len() != n {
            return Err(CheckpointError::Corrupt("optimizer state does not match parameters".into()));
        }
        if !self.model.params().is_finite() {
            return Err(CheckpointError::Corrupt("non-finite parameter".into()));
        }
        if self.step != self.optimizer.step {
            return Err(CheckpointError::Corrupt("step counter disagrees with optimizer".into()));
        }
        Ok(())
    }
}

pub fn save_checkpoint(cp: &Checkpoint, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
    let path = path.as_ref();
    fs::write(path, cp.to_json() + "\n").map_err(|e| CheckpointError::Io(format!("{}: {e}", path.display())))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint, CheckpointError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| CheckpointError::Io(format!("{}: {e}", path.display())))?;
    Checkpoint::from_json(&text)
}
