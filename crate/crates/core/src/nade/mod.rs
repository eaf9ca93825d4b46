//! Separable bidirectional multiclass NADE.
//!
//! Each direction keeps a time accumulator, updated once per frame from the
//! frame's one-hot label, and a feature accumulator, reset every frame and
//! updated after each of the six sub-labels. Logits read the sigmoid of the
//! feature accumulator. The two directions share the extractor's biases and
//! their logits are averaged at inference.
//!
//! Inference, constrained inference and teacher forcing all run through
//! one sequential pass ([`run_direction`]); they differ only in where each
//! cell's class comes from. Training uses a vectorized graph with the same
//! recurrences ([`loss_graph`]).

mod graph;
mod mask;

pub use graph::{direction_logits_graph, loss, loss_graph};
pub use mask::{OracleCell, OracleMask};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::labels::{compute_droot, HarmonyFrameLabel, PitchClass, SubLabel, VISIBLE_UNITS};
use crate::model::{BiasField, NadeDirectionParams};
use crate::tensor::{add_vec_mat, argmax, ops::sigmoid_scalar, softmax, Matrix, TensorError};

/// Added to the logit of the droot implied by the frame's key and chord roots.
pub const DROOT_NUDGE: f64 = 3.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NadeError {
    #[error("invalid oracle cell: frame {frame}, {sub}, class {class}")]
    InvalidCell {
        frame: usize,
        sub: SubLabel,
        class: usize,
    },
    #[error("drive has {got} frames of targets, pass needs {expected}")]
    TargetLength { expected: usize, got: usize },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    LeftToRight,
    RightToLeft,
}

impl Direction {
    pub fn order(self, frames: usize) -> Box<dyn Iterator<Item = usize>> {
        match self {
            Direction::LeftToRight => Box::new(0..frames),
            Direction::RightToLeft => Box::new((0..frames).rev()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecodeMode {
    #[default]
    Argmax,
    /// Temperature-1 sampling from a seeded generator.
    Sample(u64),
}

/// How oracle cells reach the model state in constrained inference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Propagation {
    /// Oracle classes drive the accumulators (teacher forcing).
    #[default]
    Full,
    /// Oracle classes only overwrite the output; the accumulators see the
    /// model's own choices. Behaves like a non-autoregressive model.
    Frozen,
}

/// Adds `nudge` to the logit at `compute_droot(key, chord)`; no-op when
/// either root class is N.
pub fn apply_droot_nudge(logits: &mut [f64], key_root: usize, chord_root: usize, nudge: f64) {
    if key_root < 12 && chord_root < 12 {
        let d = compute_droot(
            Some(PitchClass::new(key_root as u8)),
            Some(PitchClass::new(chord_root as u8)),
        );
        logits[d] += nudge;
    }
}

/// Where each visited cell's class comes from. Precedence: oracle mask,
/// then targets, then decoding the cell's own logits.
pub struct Drive<'a> {
    targets: Option<&'a [HarmonyFrameLabel]>,
    mask: Option<&'a OracleMask>,
    rng: Option<ChaCha8Rng>,
}

impl<'a> Drive<'a> {
    pub fn free(mode: DecodeMode, stream: u64) -> Self {
        let rng = match mode {
            DecodeMode::Argmax => None,
            DecodeMode::Sample(seed) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(stream);
                Some(rng)
            }
        };
        Drive {
            targets: None,
            mask: None,
            rng,
        }
    }

    pub fn teacher_forced(targets: &'a [HarmonyFrameLabel]) -> Self {
        Drive {
            targets: Some(targets),
            mask: None,
            rng: None,
        }
    }

    pub fn with_mask(mut self, mask: &'a OracleMask) -> Self {
        self.mask = Some(mask);
        self
    }

    fn choose(&mut self, frame: usize, sub: SubLabel, logits: &[f64]) -> usize {
        if let Some(class) = self.mask.and_then(|m| m.get(frame, sub)) {
            return class;
        }
        if let Some(targets) = self.targets {
            return targets[frame].class(sub);
        }
        match &mut self.rng {
            None => argmax(logits),
            Some(rng) => sample(&softmax(logits), rng),
        }
    }
}

fn sample(probs: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let mut x: f64 = rng.random();
    for (i, &p) in probs.iter().enumerate() {
        if x < p {
            return i;
        }
        x -= p;
    }
    probs.len() - 1
}

/// Output of one direction, indexed by original frame order.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionOutput {
    /// `T x 66` logits, after the droot nudge.
    pub logits: Matrix,
    /// Class used for each cell when updating the accumulators.
    pub classes: Vec<[usize; 6]>,
}

fn check_shapes(bias: &BiasField, p: &NadeDirectionParams<Matrix>) -> Result<(), NadeError> {
    let (ht, hf) = (p.label_to_time.cols(), p.time_to_feat.cols());
    let expect = [
        (bias.time.shape(), (bias.frames(), ht)),
        (bias.feat.shape(), (bias.frames(), hf)),
        (p.label_to_time.shape(), (VISIBLE_UNITS, ht)),
        (p.time_to_feat.shape(), (ht, hf)),
    ];
    for (have, want) in expect {
        if have != want {
            return Err(TensorError::shape("nade", want, have).into());
        }
    }
    for sub in SubLabel::ALL {
        let c = sub.cardinality();
        let s = sub.index();
        if p.sub_to_feat[s].shape() != (c, hf) {
            return Err(TensorError::shape("nade", (c, hf), p.sub_to_feat[s].shape()).into());
        }
        if p.feat_to_vis[s].shape() != (hf, c) {
            return Err(TensorError::shape("nade", (hf, c), p.feat_to_vis[s].shape()).into());
        }
    }
    Ok(())
}

/// One directional pass. Frames are visited in `direction` order and
/// sub-labels in [`SubLabel::ALL`] order; each cell's class comes from
/// `drive` and feeds the accumulators.
pub fn run_direction(
    bias: &BiasField,
    p: &NadeDirectionParams<Matrix>,
    direction: Direction,
    drive: &mut Drive<'_>,
    nudge: f64,
) -> Result<DirectionOutput, NadeError> {
    check_shapes(bias, p)?;
    let frames = bias.frames();
    if let Some(targets) = drive.targets {
        if targets.len() != frames {
            return Err(NadeError::TargetLength {
                expected: frames,
                got: targets.len(),
            });
        }
    }
    if let Some(mask) = drive.mask {
        mask.validate(frames)?;
    }
    let ht = p.label_to_time.cols();
    let hf = p.time_to_feat.cols();
    let mut logits = Matrix::zeros(frames, VISIBLE_UNITS);
    let mut classes = vec![[0usize; 6]; frames];
    let mut time_acc = vec![0.0; ht];
    let mut h_time = vec![0.0; ht];
    let mut feat_acc = vec![0.0; hf];
    let mut h_feat = vec![0.0; hf];
    for t in direction.order(frames) {
        for ((h, &b), &a) in h_time.iter_mut().zip(bias.time.row(t)).zip(&time_acc) {
            *h = sigmoid_scalar(b + a);
        }
        feat_acc.copy_from_slice(bias.feat.row(t));
        add_vec_mat(&h_time, &p.time_to_feat, &mut feat_acc);
        let mut chosen = [0usize; 6];
        for sub in SubLabel::ALL {
            let s = sub.index();
            for (h, &a) in h_feat.iter_mut().zip(&feat_acc) {
                *h = sigmoid_scalar(a);
            }
            let (off, c) = (sub.offset(), sub.cardinality());
            let z = &mut logits.row_mut(t)[off..off + c];
            add_vec_mat(&h_feat, &p.feat_to_vis[s], z);
            for (zv, &b) in z.iter_mut().zip(&bias.vis.row(t)[off..off + c]) {
                *zv += b;
            }
            if sub == SubLabel::Droot {
                apply_droot_nudge(z, chosen[0], chosen[2], nudge);
            }
            let class = drive.choose(t, sub, z);
            chosen[s] = class;
            for (a, &w) in feat_acc.iter_mut().zip(p.sub_to_feat[s].row(class)) {
                *a += w;
            }
        }
        for sub in SubLabel::ALL {
            let row = p.label_to_time.row(sub.offset() + chosen[sub.index()]);
            for (a, &w) in time_acc.iter_mut().zip(row) {
                *a += w;
            }
        }
        classes[t] = chosen;
    }
    Ok(DirectionOutput { logits, classes })
}

/// Logits of one direction with every cell driven by `targets`.
pub fn teacher_forced_logits(
    bias: &BiasField,
    p: &NadeDirectionParams<Matrix>,
    direction: Direction,
    targets: &[HarmonyFrameLabel],
) -> Result<Matrix, NadeError> {
    let mut drive = Drive::teacher_forced(targets);
    Ok(run_direction(bias, p, direction, &mut drive, DROOT_NUDGE)?.logits)
}

/// Prediction for one cell after averaging the two directions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellPrediction {
    pub logits: Vec<f64>,
    pub probabilities: Vec<f64>,
    pub class: usize,
    /// Largest averaged probability.
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionResult {
    /// `frames[t][s]` in [`SubLabel::ALL`] order.
    pub frames: Vec<[CellPrediction; 6]>,
}

impl PredictionResult {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn cell(&self, frame: usize, sub: SubLabel) -> &CellPrediction {
        &self.frames[frame][sub.index()]
    }

    pub fn classes(&self, frame: usize) -> [usize; 6] {
        std::array::from_fn(|s| self.frames[frame][s].class)
    }

    /// Chosen classes as frame labels. These need not be consistent (the
    /// droot is predicted, not derived).
    pub fn labels(&self) -> Vec<HarmonyFrameLabel> {
        (0..self.len())
            .map(|t| HarmonyFrameLabel::from_classes(self.classes(t)).expect("classes in range"))
            .collect()
    }

    pub fn confidences(&self) -> Vec<[f64; 6]> {
        self.frames
            .iter()
            .map(|f| std::array::from_fn(|s| f[s].confidence))
            .collect()
    }

    pub fn reversed(&self) -> Self {
        PredictionResult {
            frames: self.frames.iter().rev().cloned().collect(),
        }
    }

    fn combine(
        l2r: &Matrix,
        r2l: &Matrix,
        mode: DecodeMode,
        mask: Option<&OracleMask>,
    ) -> PredictionResult {
        let mut rng = match mode {
            DecodeMode::Argmax => None,
            DecodeMode::Sample(seed) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(2);
                Some(rng)
            }
        };
        let frames = (0..l2r.rows())
            .map(|t| {
                std::array::from_fn(|s| {
                    let sub = SubLabel::ALL[s];
                    let (off, c) = (sub.offset(), sub.cardinality());
                    let logits: Vec<f64> = l2r.row(t)[off..off + c]
                        .iter()
                        .zip(&r2l.row(t)[off..off + c])
                        .map(|(a, b)| 0.5 * (a + b))
                        .collect();
                    let probabilities = softmax(&logits);
                    let confidence = probabilities.iter().copied().fold(f64::MIN, f64::max);
                    let class = match mask.and_then(|m| m.get(t, sub)) {
                        Some(class) => class,
                        None => match &mut rng {
                            None => argmax(&logits),
                            Some(rng) => sample(&probabilities, rng),
                        },
                    };
                    CellPrediction {
                        logits,
                        probabilities,
                        class,
                        confidence,
                    }
                })
            })
            .collect();
        PredictionResult { frames }
    }
}

/// Free-running bidirectional inference.
pub fn infer(
    bias: &BiasField,
    l2r: &NadeDirectionParams<Matrix>,
    r2l: &NadeDirectionParams<Matrix>,
    mode: DecodeMode,
) -> Result<PredictionResult, NadeError> {
    infer_with_nudge(bias, l2r, r2l, mode, DROOT_NUDGE)
}

pub fn infer_with_nudge(
    bias: &BiasField,
    l2r: &NadeDirectionParams<Matrix>,
    r2l: &NadeDirectionParams<Matrix>,
    mode: DecodeMode,
    nudge: f64,
) -> Result<PredictionResult, NadeError> {
    let a = run_direction(
        bias,
        l2r,
        Direction::LeftToRight,
        &mut Drive::free(mode, 0),
        nudge,
    )?;
    let b = run_direction(
        bias,
        r2l,
        Direction::RightToLeft,
        &mut Drive::free(mode, 1),
        nudge,
    )?;
    Ok(PredictionResult::combine(&a.logits, &b.logits, mode, None))
}

/// Inference with oracle cells. Each direction runs independently under the
/// same fixed mask; masked cells report the oracle class.
pub fn infer_constrained(
    bias: &BiasField,
    l2r: &NadeDirectionParams<Matrix>,
    r2l: &NadeDirectionParams<Matrix>,
    mask: &OracleMask,
    mode: DecodeMode,
    propagation: Propagation,
) -> Result<PredictionResult, NadeError> {
    mask.validate(bias.frames())?;
    match propagation {
        Propagation::Full => {
            let mut da = Drive::free(mode, 0).with_mask(mask);
            let a = run_direction(bias, l2r, Direction::LeftToRight, &mut da, DROOT_NUDGE)?;
            let mut db = Drive::free(mode, 1).with_mask(mask);
            let b = run_direction(bias, r2l, Direction::RightToLeft, &mut db, DROOT_NUDGE)?;
            Ok(PredictionResult::combine(
                &a.logits,
                &b.logits,
                mode,
                Some(mask),
            ))
        }
        Propagation::Frozen => {
            let mut out = infer(bias, l2r, r2l, mode)?;
            for cell in mask.iter() {
                out.frames[cell.frame][cell.sub_label.index()].class = cell.class;
            }
            Ok(out)
        }
    }
}
