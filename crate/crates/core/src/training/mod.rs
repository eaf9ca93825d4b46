//! Teacher-forced training with Adam, plus checkpoints and corpus I/O.

mod checkpoint;
mod corpus;

pub use checkpoint::{Checkpoint, CheckpointError, CheckpointMeta, FORMAT_TAG};
pub use corpus::{
    excerpt_intervals, load_corpus_dir, load_features, load_track, write_corpus_dir, write_track,
    CorpusError,
};

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::Excerpt;
use crate::model::{extract_bias_graph, ModelConfig, Serenade, SerenadeParams};
use crate::nade::{loss_graph, NadeError};
use crate::tensor::{Graph, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Excerpts per optimizer step.
    pub batch_size: usize,
    pub epochs: usize,
    /// Global L2 norm cap on the batch gradient.
    pub clip_norm: f64,
    pub seed: u64,
    pub excerpt_frames: usize,
    pub validation_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 4,
            epochs: 20,
            clip_norm: 5.0,
            seed: 0,
            excerpt_frames: 64,
            validation_fraction: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let ok = self.learning_rate > 0.0
            && self.batch_size > 0
            && self.epochs > 0
            && self.clip_norm > 0.0
            && self.excerpt_frames > 0
            && (0.0..1.0).contains(&self.validation_fraction);
        if ok {
            Ok(())
        } else {
            Err(TrainError::Config(format!(
                "invalid training config: {self:?}"
            )))
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, TrainError> {
        let config: TrainConfig =
            toml::from_str(text).map_err(|e| TrainError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Reads a TOML file. A `[model]` table, if present, is read by
    /// [`model_config_from_toml`].
    pub fn load(path: impl AsRef<Path>) -> Result<Self, TrainError> {
        let text = std::fs::read_to_string(path).map_err(|e| TrainError::Config(e.to_string()))?;
        #[derive(Deserialize)]
        struct File {
            #[serde(default)]
            train: Option<TrainConfig>,
        }
        let file: File = toml::from_str(&text).map_err(|e| TrainError::Config(e.to_string()))?;
        match file.train {
            Some(c) => {
                c.validate()?;
                Ok(c)
            }
            None => Self::from_toml(&text),
        }
    }
}

/// Optional `[model]` table of a training config file.
pub fn model_config_from_toml(text: &str) -> Result<ModelConfig, TrainError> {
    #[derive(Deserialize)]
    struct File {
        #[serde(default)]
        model: Option<ModelConfig>,
    }
    let file: File = toml::from_str(text).map_err(|e| TrainError::Config(e.to_string()))?;
    let config = file.model.unwrap_or_default();
    config.validate().map_err(TrainError::Config)?;
    Ok(config)
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("{0}")]
    Config(String),
    #[error("loss diverged (non-finite) at epoch {epoch}, step {step}")]
    Divergence { epoch: usize, step: usize },
    #[error(transparent)]
    Nade(#[from] NadeError),
}

/// Teacher-forced loss of one excerpt and its gradient for every tensor.
pub fn loss_and_gradients(
    params: &SerenadeParams<Matrix>,
    config: &ModelConfig,
    excerpt: &Excerpt,
) -> Result<(f64, SerenadeParams<Matrix>), NadeError> {
    let mut g = Graph::new();
    let nodes = params.to_graph(&mut g, true);
    let input = g.constant(excerpt.features.matrix().clone());
    let bias = extract_bias_graph(&mut g, config, &nodes.extractor, input)?;
    let root = loss_graph(&mut g, &bias, &nodes.l2r, &nodes.r2l, &excerpt.labels)?;
    let value = g.value(root).item().expect("scalar loss");
    let mut grads = g.backward(root).map_err(NadeError::from)?;
    let out = nodes.map(|_, &id| {
        let shape = g.value(id).shape();
        grads
            .take(id)
            .unwrap_or_else(|| Matrix::zeros(shape.0, shape.1))
    });
    Ok((value, out))
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    m: SerenadeParams<Matrix>,
    v: SerenadeParams<Matrix>,
}

impl Adam {
    pub fn new(config: &ModelConfig, learning_rate: f64) -> Self {
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            m: SerenadeParams::zeros(config),
            v: SerenadeParams::zeros(config),
        }
    }

    pub fn update(&mut self, params: &mut SerenadeParams<Matrix>, grads: &SerenadeParams<Matrix>) {
        self.step += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.step as i32);
        let c2 = 1.0 - b2.powi(self.step as i32);
        let tensors = params
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut());
        for (((p, g), m), v) in tensors {
            for (((pv, &gv), mv), vv) in p
                .as_mut_slice()
                .iter_mut()
                .zip(g.as_slice())
                .zip(m.as_mut_slice())
                .zip(v.as_mut_slice())
            {
                *mv = b1 * *mv + (1.0 - b1) * gv;
                *vv = b2 * *vv + (1.0 - b2) * gv * gv;
                let m_hat = *mv / c1;
                let v_hat = *vv / c2;
                *pv -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
    }
}

/// Scales `grads` in place so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut SerenadeParams<Matrix>, max_norm: f64) -> f64 {
    let norm = grads
        .named()
        .iter()
        .map(|(_, m)| m.frobenius_norm_sq())
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        let factor = max_norm / norm;
        grads.visit_mut(|_, m| {
            for v in m.as_mut_slice() {
                *v *= factor;
            }
        });
    }
    norm
}

/// Splits excerpt indices into (train, validation) with a seeded shuffle.
pub fn split_indices(
    count: usize,
    validation_fraction: f64,
    seed: u64,
) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..count).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5eed));
    let mut n_val = (validation_fraction * count as f64).round() as usize;
    if validation_fraction > 0.0 && count >= 2 {
        n_val = n_val.clamp(1, count - 1);
    } else {
        n_val = 0;
    }
    let val = idx.split_off(count - n_val);
    (idx, val)
}

/// Mean teacher-forced loss, computed without gradients.
pub fn mean_loss(model: &Serenade, excerpts: &[&Excerpt]) -> Result<f64, NadeError> {
    let losses = excerpts
        .par_iter()
        .map(|e| model.loss(e))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len().max(1) as f64)
}

/// Progress report passed to the training callback after each epoch.
#[derive(Debug, Clone, Copy)]
pub struct EpochSummary {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_loss: Option<f64>,
}

pub fn train(
    corpus: &[Excerpt],
    model_config: &ModelConfig,
    config: &TrainConfig,
) -> Result<Checkpoint, TrainError> {
    train_with_progress(corpus, model_config, config, |s| {
        log::info!(
            "epoch {} train {:.4} validation {}",
            s.epoch,
            s.train_loss,
            s.validation_loss.map_or("-".into(), |v| format!("{v:.4}"))
        )
    })
}

/// Trains from a seeded initialization. Per-excerpt gradients run in
/// parallel but are summed in batch order, so results do not depend on the
/// thread count. The returned checkpoint holds the epoch with the lowest
/// validation loss (training loss when there is no validation split).
pub fn train_with_progress(
    corpus: &[Excerpt],
    model_config: &ModelConfig,
    config: &TrainConfig,
    mut progress: impl FnMut(&EpochSummary),
) -> Result<Checkpoint, TrainError> {
    if corpus.is_empty() {
        return Err(TrainError::EmptyCorpus);
    }
    config.validate()?;
    model_config.validate().map_err(TrainError::Config)?;
    let (train_idx, val_idx) = split_indices(corpus.len(), config.validation_fraction, config.seed);
    let val: Vec<&Excerpt> = val_idx.iter().map(|&i| &corpus[i]).collect();
    let mut model = Serenade::init(*model_config, config.seed);
    let mut adam = Adam::new(model_config, config.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut order = train_idx.clone();
    let train_refs: Vec<&Excerpt> = train_idx.iter().map(|&i| &corpus[i]).collect();
    let initial_loss = mean_loss(&model, &train_refs)?;

    let mut train_history = Vec::with_capacity(config.epochs);
    let mut val_history = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, SerenadeParams<Matrix>)> = None;
    let mut step = 0;
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            let results = batch
                .par_iter()
                .map(|&i| loss_and_gradients(&model.params, model_config, &corpus[i]))
                .collect::<Result<Vec<_>, _>>()?;
            let mut iter = results.into_iter();
            let (first_loss, mut grads) = iter.next().expect("non-empty batch");
            let mut batch_loss = first_loss;
            for (l, g) in iter {
                batch_loss += l;
                for (acc, m) in grads.tensors_mut().into_iter().zip(g.tensors()) {
                    acc.add_assign(m);
                }
            }
            step += 1;
            if !batch_loss.is_finite() {
                return Err(TrainError::Divergence { epoch, step });
            }
            let scale = 1.0 / batch.len() as f64;
            grads.visit_mut(|_, m| {
                for v in m.as_mut_slice() {
                    *v *= scale;
                }
            });
            clip_global_norm(&mut grads, config.clip_norm);
            adam.update(&mut model.params, &grads);
            epoch_loss += batch_loss;
        }
        let train_loss = epoch_loss / order.len() as f64;
        let validation_loss = if val.is_empty() {
            None
        } else {
            Some(mean_loss(&model, &val)?)
        };
        if !validation_loss.unwrap_or(0.0).is_finite() {
            return Err(TrainError::Divergence { epoch, step });
        }
        train_history.push(train_loss);
        if let Some(v) = validation_loss {
            val_history.push(v);
        }
        let score = validation_loss.unwrap_or(train_loss);
        if best.as_ref().is_none_or(|(b, _, _)| score < *b) {
            best = Some((score, epoch, model.params.clone()));
        }
        progress(&EpochSummary {
            epoch,
            train_loss,
            validation_loss,
        });
    }
    let (_, epoch, params) = best.expect("at least one epoch");
    Ok(Checkpoint::new(
        Serenade {
            config: *model_config,
            params,
        },
        CheckpointMeta {
            model: *model_config,
            train: *config,
            epoch,
            initial_train_loss: initial_loss,
            train_loss: train_history,
            validation_loss: val_history,
        },
    ))
}
