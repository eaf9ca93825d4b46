//! `SRND1` checkpoint container.
//!
//! ```text
//! b"SRND1"
//! u32 LE  config length, then that many bytes of UTF-8 TOML (CheckpointMeta)
//! u32 LE  tensor count
//! per tensor:
//!   u32 LE name length, UTF-8 name
//!   u32 LE rows, u32 LE cols
//!   rows*cols f32 LE, row-major
//! ```

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::TrainConfig;
use crate::model::{ModelConfig, Serenade, SerenadeParams};
use crate::tensor::Matrix;

pub const FORMAT_TAG: &[u8; 5] = b"SRND1";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("not an SRND1 checkpoint")]
    BadTag,
    #[error("checkpoint truncated at byte {0}")]
    Truncated(usize),
    #[error("invalid UTF-8 in checkpoint")]
    Utf8,
    #[error("bad config block: {0}")]
    Config(String),
    #[error("tensor {0:?} missing from checkpoint")]
    MissingTensor(String),
    #[error("unexpected tensor {0:?}")]
    UnexpectedTensor(String),
    #[error("tensor {name:?} is {got:?}, model expects {want:?}")]
    Shape {
        name: String,
        want: (usize, usize),
        got: (usize, usize),
    },
    #[error("tensor {0:?} holds a non-finite value")]
    NonFinite(String),
    #[error("{0} trailing bytes after the last tensor")]
    TrailingBytes(usize),
}

/// Configuration echo and training history stored with the weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    /// Epoch whose weights are stored.
    pub epoch: usize,
    pub initial_train_loss: f64,
    pub train_loss: Vec<f64>,
    pub validation_loss: Vec<f64>,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl CheckpointMeta {
    pub fn untrained(model: ModelConfig) -> Self {
        CheckpointMeta {
            epoch: 0,
            initial_train_loss: f64::NAN,
            train_loss: Vec::new(),
            validation_loss: Vec::new(),
            model,
            train: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Serenade,
    pub meta: CheckpointMeta,
}

impl Checkpoint {
    /// Rounds every weight to `f32`, the on-disk precision, so a saved
    /// and reloaded checkpoint predicts bit-identically to this one.
    pub fn new(model: Serenade, meta: CheckpointMeta) -> Self {
        let params = model.params.map(|_, m| m.map(|v| v as f32 as f64));
        Checkpoint {
            model: Serenade {
                config: model.config,
                params,
            },
            meta,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut meta = self.meta.clone();
        meta.model = self.model.config;
        let config = toml::to_string(&TomlMeta::from(&meta)).expect("meta serializes");
        let mut out = Vec::new();
        out.extend_from_slice(FORMAT_TAG);
        put_u32(&mut out, config.len());
        out.extend_from_slice(config.as_bytes());
        let named = self.model.params.named();
        put_u32(&mut out, named.len());
        for (name, m) in named {
            put_u32(&mut out, name.len());
            out.extend_from_slice(name.as_bytes());
            put_u32(&mut out, m.rows());
            put_u32(&mut out, m.cols());
            for &v in m.as_slice() {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(FORMAT_TAG.len())? != FORMAT_TAG {
            return Err(CheckpointError::BadTag);
        }
        let len = r.u32()?;
        let text = std::str::from_utf8(r.take(len)?).map_err(|_| CheckpointError::Utf8)?;
        let meta: CheckpointMeta = toml::from_str::<TomlMeta>(text)
            .map_err(|e| CheckpointError::Config(e.to_string()))?
            .into();
        meta.model.validate().map_err(CheckpointError::Config)?;
        let count = r.u32()?;
        let mut tensors = HashMap::with_capacity(count);
        for _ in 0..count {
            let name_len = r.u32()?;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| CheckpointError::Utf8)?
                .to_string();
            let rows = r.u32()?;
            let cols = r.u32()?;
            let raw = r.take(
                rows.checked_mul(cols)
                    .and_then(|n| n.checked_mul(4))
                    .ok_or(CheckpointError::Truncated(r.pos))?,
            )?;
            let data: Vec<f64> = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                .collect();
            let m = Matrix::from_vec(rows, cols, data)
                .map_err(|_| CheckpointError::NonFinite(name.clone()))?;
            tensors.insert(name, m);
        }
        if r.pos != bytes.len() {
            return Err(CheckpointError::TrailingBytes(bytes.len() - r.pos));
        }
        let shapes = SerenadeParams::shapes(&meta.model);
        let mut missing = None;
        let mut wrong = None;
        let params = shapes.map(|name, &want| match tensors.remove(name) {
            Some(m) if m.shape() == want => m,
            Some(m) => {
                wrong.get_or_insert((name.to_string(), want, m.shape()));
                Matrix::zeros(want.0, want.1)
            }
            None => {
                missing.get_or_insert(name.to_string());
                Matrix::zeros(want.0, want.1)
            }
        });
        if let Some(name) = missing {
            return Err(CheckpointError::MissingTensor(name));
        }
        if let Some((name, want, got)) = wrong {
            return Err(CheckpointError::Shape { name, want, got });
        }
        if let Some(name) = tensors.into_keys().min() {
            return Err(CheckpointError::UnexpectedTensor(name));
        }
        Ok(Checkpoint {
            model: Serenade {
                config: meta.model,
                params,
            },
            meta,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CheckpointError> {
        Self::from_bytes(&fs::read(path)?)
    }
}

/// On-disk form of [`CheckpointMeta`]. An untrained checkpoint has no
/// initial loss, which is stored as an absent key rather than NaN.
#[derive(Serialize, Deserialize)]
struct TomlMeta {
    epoch: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    initial_train_loss: Option<f64>,
    #[serde(default)]
    train_loss: Vec<f64>,
    #[serde(default)]
    validation_loss: Vec<f64>,
    model: ModelConfig,
    #[serde(default)]
    train: TrainConfig,
}

impl From<&CheckpointMeta> for TomlMeta {
    fn from(m: &CheckpointMeta) -> Self {
        TomlMeta {
            epoch: m.epoch,
            initial_train_loss: m
                .initial_train_loss
                .is_finite()
                .then_some(m.initial_train_loss),
            train_loss: m.train_loss.clone(),
            validation_loss: m.validation_loss.clone(),
            model: m.model,
            train: m.train,
        }
    }
}

impl From<TomlMeta> for CheckpointMeta {
    fn from(m: TomlMeta) -> Self {
        CheckpointMeta {
            epoch: m.epoch,
            initial_train_loss: m.initial_train_loss.unwrap_or(f64::NAN),
            train_loss: m.train_loss,
            validation_loss: m.validation_loss,
            model: m.model,
            train: m.train,
        }
    }
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    let v = u32::try_from(v).expect("checkpoint field exceeds u32");
    out.extend_from_slice(&v.to_le_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or(CheckpointError::Truncated(self.pos))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<usize, CheckpointError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }
}
