//! Annotation sessions: a first pass, an append-only log of oracle cells,
//! and a prediction that always reflects the whole log.
//!
//! A persisted session is a directory:
//!
//! ```text
//! session.json          id, checkpoint id, creation time
//! track.treble.chroma   input features
//! track.bass.chroma
//! track.chords.lab      optional ground truth
//! track.keys.lab
//! annotations.jsonl     one AnnotationEntry per line, append-only
//! ```

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::{oracle_cost, EvalError, OracleReport};
use crate::features::{FeatureError, FeatureMatrix};
use crate::labels::{HarmonyFrameLabel, SubLabel, SUBLABEL_COUNT};
use crate::model::{BiasField, Serenade};
use crate::nade::{
    self, DecodeMode, NadeError, OracleCell, OracleMask, PredictionResult, Propagation,
};
use crate::training::{load_features, load_track, write_track, CorpusError};

const TRACK: &str = "track";

#[derive(Debug, Error)]
pub enum SessionError {
    #[error(
        "invalid cell: frame {frame}, {sub_label}, class {class} (excerpt has {frames} frames)"
    )]
    InvalidCell {
        frame: usize,
        sub_label: SubLabel,
        class: usize,
        frames: usize,
    },
    #[error("invalid range {start}..{end} (excerpt has {frames} frames)")]
    InvalidRange {
        start: usize,
        end: usize,
        frames: usize,
    },
    #[error("ground truth has {got} frames, features have {expected}")]
    GroundTruthLength { expected: usize, got: usize },
    #[error(transparent)]
    Nade(#[from] NadeError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Features(#[from] FeatureError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("corrupt session file {path}: {reason}")]
    Corrupt { path: PathBuf, reason: String },
}

/// One logged oracle cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationEntry {
    pub frame: usize,
    pub sub_label: SubLabel,
    pub class: usize,
    /// Milliseconds since the Unix epoch.
    pub timestamp_ms: u64,
}

/// Frame range `start..end` (end exclusive) of one sub-label set to `class`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RangeAnnotation {
    pub start: usize,
    pub end: usize,
    pub sub_label: SubLabel,
    pub class: usize,
}

/// Body of an annotation batch: single cells and ranges, expanded to cells
/// in that order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AnnotationBatch {
    #[serde(default)]
    pub cells: Vec<OracleCell>,
    #[serde(default)]
    pub ranges: Vec<RangeAnnotation>,
}

impl AnnotationBatch {
    pub fn expand(&self, frames: usize) -> Result<Vec<OracleCell>, SessionError> {
        let mut out = self.cells.clone();
        for r in &self.ranges {
            if r.start >= r.end || r.end > frames {
                return Err(SessionError::InvalidRange {
                    start: r.start,
                    end: r.end,
                    frames,
                });
            }
            out.extend((r.start..r.end).map(|frame| OracleCell {
                frame,
                sub_label: r.sub_label,
                class: r.class,
            }));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellChange {
    pub frame: usize,
    pub sub_label: SubLabel,
    pub from: usize,
    pub to: usize,
}

/// Cells whose chosen class changed in one annotation batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaSummary {
    /// Changed cells that the batch annotated.
    pub annotated: Vec<CellChange>,
    /// Changed cells the batch did not touch.
    pub propagated: Vec<CellChange>,
    pub log_len: usize,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionReport {
    pub frames: usize,
    pub log_len: usize,
    /// Distinct annotated cells over `6 * frames`.
    pub cost: f64,
    /// Present when the session has ground truth.
    pub oracle: Option<OracleReport>,
}

/// Compact per-cell view of a prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellView {
    pub class: usize,
    pub label: String,
    pub confidence: f64,
    pub annotated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionView {
    pub frames: usize,
    pub hop: f64,
    pub sub_labels: [SubLabel; SUBLABEL_COUNT],
    /// `cells[t][s]` in `sub_labels` order.
    pub cells: Vec<Vec<CellView>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SessionMeta {
    id: String,
    checkpoint: String,
    created_ms: u64,
}

pub struct Session {
    id: String,
    checkpoint: String,
    model: Arc<Serenade>,
    features: FeatureMatrix,
    bias: BiasField,
    ground_truth: Option<Vec<HarmonyFrameLabel>>,
    log: Vec<AnnotationEntry>,
    mask: OracleMask,
    first_pass: PredictionResult,
    latest: PredictionResult,
    dir: Option<PathBuf>,
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

impl Session {
    /// Runs the argmax first pass.
    pub fn create(
        id: impl Into<String>,
        checkpoint: impl Into<String>,
        model: Arc<Serenade>,
        features: FeatureMatrix,
        ground_truth: Option<Vec<HarmonyFrameLabel>>,
    ) -> Result<Self, SessionError> {
        if let Some(gt) = &ground_truth {
            if gt.len() != features.frames() {
                return Err(SessionError::GroundTruthLength {
                    expected: features.frames(),
                    got: gt.len(),
                });
            }
        }
        let bias = model.bias_fields(&features).map_err(NadeError::from)?;
        let first_pass = nade::infer(
            &bias,
            &model.params.l2r,
            &model.params.r2l,
            DecodeMode::Argmax,
        )?;
        Ok(Session {
            id: id.into(),
            checkpoint: checkpoint.into(),
            model,
            features,
            bias,
            ground_truth,
            log: Vec::new(),
            mask: OracleMask::new(),
            latest: first_pass.clone(),
            first_pass,
            dir: None,
        })
    }

    /// Like [`create`](Self::create), and writes the session directory under
    /// `root`. Later annotations are appended to its log.
    pub fn create_persistent(
        root: impl AsRef<Path>,
        id: impl Into<String>,
        checkpoint: impl Into<String>,
        model: Arc<Serenade>,
        features: FeatureMatrix,
        ground_truth: Option<Vec<HarmonyFrameLabel>>,
    ) -> Result<Self, SessionError> {
        let mut session = Self::create(id, checkpoint, model, features, ground_truth)?;
        let dir = root.as_ref().join(&session.id);
        fs::create_dir_all(&dir)?;
        let meta = SessionMeta {
            id: session.id.clone(),
            checkpoint: session.checkpoint.clone(),
            created_ms: now_ms(),
        };
        fs::write(
            dir.join("session.json"),
            serde_json::to_string_pretty(&meta).expect("meta"),
        )?;
        write_track(
            &dir.join(TRACK),
            &session.features,
            session.ground_truth.as_deref(),
        )?;
        File::create(dir.join("annotations.jsonl"))?;
        session.dir = Some(dir);
        Ok(session)
    }

    /// Checkpoint id stored in a session directory, to pick the model
    /// before [`open`](Self::open).
    pub fn stored_checkpoint(dir: impl AsRef<Path>) -> Result<String, SessionError> {
        Ok(read_meta(dir.as_ref())?.checkpoint)
    }

    /// Rebuilds a persisted session by replaying its log.
    pub fn open(dir: impl AsRef<Path>, model: Arc<Serenade>) -> Result<Self, SessionError> {
        let dir = dir.as_ref();
        let meta = read_meta(dir)?;
        let stem = dir.join(TRACK);
        let (features, ground_truth) = if dir.join(format!("{TRACK}.chords.lab")).exists() {
            let (f, labels) = load_track(&stem)?;
            (f, Some(labels))
        } else {
            (load_features(&stem)?, None)
        };
        let path = dir.join("annotations.jsonl");
        let mut entries = Vec::new();
        for (i, line) in BufReader::new(File::open(&path)?).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let entry = serde_json::from_str(&line).map_err(|e| SessionError::Corrupt {
                path: path.clone(),
                reason: format!("line {}: {e}", i + 1),
            })?;
            entries.push(entry);
        }
        let mut session = Self::create(meta.id, meta.checkpoint, model, features, ground_truth)?;
        session.replay(&entries)?;
        session.dir = Some(dir.to_path_buf());
        Ok(session)
    }

    /// Appends `entries` to the log without persisting them and re-infers.
    pub fn replay(&mut self, entries: &[AnnotationEntry]) -> Result<DeltaSummary, SessionError> {
        let cells: Vec<OracleCell> = entries
            .iter()
            .map(|e| OracleCell {
                frame: e.frame,
                sub_label: e.sub_label,
                class: e.class,
            })
            .collect();
        self.validate(&cells)?;
        self.apply(&cells, entries)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn checkpoint(&self) -> &str {
        &self.checkpoint
    }

    pub fn frames(&self) -> usize {
        self.features.frames()
    }

    pub fn features(&self) -> &FeatureMatrix {
        &self.features
    }

    pub fn ground_truth(&self) -> Option<&[HarmonyFrameLabel]> {
        self.ground_truth.as_deref()
    }

    pub fn log(&self) -> &[AnnotationEntry] {
        &self.log
    }

    pub fn mask(&self) -> &OracleMask {
        &self.mask
    }

    pub fn first_pass(&self) -> &PredictionResult {
        &self.first_pass
    }

    pub fn prediction(&self) -> &PredictionResult {
        &self.latest
    }

    pub fn cost(&self) -> f64 {
        oracle_cost(&self.mask, self.frames())
    }

    fn validate(&self, cells: &[OracleCell]) -> Result<(), SessionError> {
        let frames = self.frames();
        for c in cells {
            if c.frame >= frames || c.class >= c.sub_label.cardinality() {
                return Err(SessionError::InvalidCell {
                    frame: c.frame,
                    sub_label: c.sub_label,
                    class: c.class,
                    frames,
                });
            }
        }
        Ok(())
    }

    /// Validates and logs `cells`, then re-runs constrained inference from
    /// the full log. Nothing is logged if any cell is invalid.
    pub fn annotate(&mut self, cells: &[OracleCell]) -> Result<DeltaSummary, SessionError> {
        self.validate(cells)?;
        let ts = now_ms();
        let entries: Vec<AnnotationEntry> = cells
            .iter()
            .map(|c| AnnotationEntry {
                frame: c.frame,
                sub_label: c.sub_label,
                class: c.class,
                timestamp_ms: ts,
            })
            .collect();
        if let Some(dir) = &self.dir {
            let mut file = OpenOptions::new()
                .append(true)
                .open(dir.join("annotations.jsonl"))?;
            let mut text = String::new();
            for e in &entries {
                text.push_str(&serde_json::to_string(e).expect("entry serializes"));
                text.push('\n');
            }
            file.write_all(text.as_bytes())?;
        }
        self.apply(cells, &entries)
    }

    pub fn annotate_batch(
        &mut self,
        batch: &AnnotationBatch,
    ) -> Result<DeltaSummary, SessionError> {
        let cells = batch.expand(self.frames())?;
        self.annotate(&cells)
    }

    fn apply(
        &mut self,
        cells: &[OracleCell],
        entries: &[AnnotationEntry],
    ) -> Result<DeltaSummary, SessionError> {
        self.log.extend_from_slice(entries);
        for c in cells {
            self.mask.insert(c.frame, c.sub_label, c.class)?;
        }
        let p = &self.model.params;
        let next = nade::infer_constrained(
            &self.bias,
            &p.l2r,
            &p.r2l,
            &self.mask,
            DecodeMode::Argmax,
            Propagation::Full,
        )?;
        let touched: std::collections::HashSet<(usize, SubLabel)> =
            cells.iter().map(|c| (c.frame, c.sub_label)).collect();
        let mut annotated = Vec::new();
        let mut propagated = Vec::new();
        for frame in 0..self.frames() {
            for sub in SubLabel::ALL {
                let from = self.latest.cell(frame, sub).class;
                let to = next.cell(frame, sub).class;
                if from != to {
                    let change = CellChange {
                        frame,
                        sub_label: sub,
                        from,
                        to,
                    };
                    if touched.contains(&(frame, sub)) {
                        annotated.push(change);
                    } else {
                        propagated.push(change);
                    }
                }
            }
        }
        self.latest = next;
        Ok(DeltaSummary {
            annotated,
            propagated,
            log_len: self.log.len(),
            cost: self.cost(),
        })
    }

    pub fn report(&self) -> Result<SessionReport, SessionError> {
        let oracle = match &self.ground_truth {
            Some(gt) => Some(OracleReport::compute(
                gt,
                &self.first_pass,
                &self.latest,
                &self.mask,
            )?),
            None => None,
        };
        Ok(SessionReport {
            frames: self.frames(),
            log_len: self.log.len(),
            cost: self.cost(),
            oracle,
        })
    }

    pub fn view(&self) -> PredictionView {
        let cells = (0..self.frames())
            .map(|t| {
                SubLabel::ALL
                    .iter()
                    .map(|&s| {
                        let c = self.latest.cell(t, s);
                        CellView {
                            class: c.class,
                            label: s.class_name(c.class),
                            confidence: c.confidence,
                            annotated: self.mask.contains(t, s),
                        }
                    })
                    .collect()
            })
            .collect();
        PredictionView {
            frames: self.frames(),
            hop: self.features.hop(),
            sub_labels: SubLabel::ALL,
            cells,
        }
    }
}

fn read_meta(dir: &Path) -> Result<SessionMeta, SessionError> {
    let path = dir.join("session.json");
    let text = fs::read_to_string(&path)?;
    serde_json::from_str(&text).map_err(|e| SessionError::Corrupt {
        path,
        reason: e.to_string(),
    })
}
