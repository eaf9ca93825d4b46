//! Frame-level chord metrics following the reference chord-evaluation
//! comparison rules (root, majmin, sevenths). Frames have equal duration,
//! so frame weighting equals duration weighting.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::labels::{ChordQuality, HarmonyFrameLabel, SubLabel};

/// Root and 12-bit pitch-class bitmap of a frame's chord, with the bass
/// interval folded into the bitmap. `None` is a no-chord frame.
fn chord_encoding(label: &HarmonyFrameLabel) -> Option<(u8, u16)> {
    let root = label.chord_root()?;
    let quality = label.chord_quality();
    if quality == ChordQuality::NoChord {
        return None;
    }
    let bass = label.bass_number().unwrap_or(0);
    Some((root.value(), quality.bitmap() | (1 << bass)))
}

const MAJ: u16 = 0b0000_1001_0001;
const MIN: u16 = 0b0000_1000_1001;
const LOW8: u16 = 0xff;

fn sevenths_vocabulary() -> [u16; 5] {
    [
        ChordQuality::Maj.bitmap(),
        ChordQuality::Min.bitmap(),
        ChordQuality::Maj7.bitmap(),
        ChordQuality::Dom7.bitmap(),
        ChordQuality::Min7.bitmap(),
    ]
}

/// Per-frame outcome: `Some(true/false)` for scored frames, `None` when the
/// reference is outside the metric's vocabulary.
type Comparison = fn(Option<(u8, u16)>, Option<(u8, u16)>) -> Option<bool>;

fn compare_root(r: Option<(u8, u16)>, e: Option<(u8, u16)>) -> Option<bool> {
    Some(r.map(|x| x.0) == e.map(|x| x.0))
}

fn compare_majmin(r: Option<(u8, u16)>, e: Option<(u8, u16)>) -> Option<bool> {
    match (r, e) {
        (None, None) => Some(true),
        (None, Some(_)) => Some(false),
        (Some((rr, rb)), e) => {
            let low = rb & LOW8;
            if low != MAJ && low != MIN {
                return None;
            }
            Some(e.is_some_and(|(er, eb)| er == rr && eb & LOW8 == low))
        }
    }
}

fn compare_sevenths(r: Option<(u8, u16)>, e: Option<(u8, u16)>) -> Option<bool> {
    match (r, e) {
        (None, None) => Some(true),
        (None, Some(_)) => Some(false),
        (Some((rr, rb)), e) => {
            if !sevenths_vocabulary().contains(&rb) {
                return None;
            }
            Some(e == Some((rr, rb)))
        }
    }
}

fn score(
    pred: &[HarmonyFrameLabel],
    gt: &[HarmonyFrameLabel],
    cmp: Comparison,
) -> Result<f64, EvalError> {
    check_lengths(pred.len(), gt.len())?;
    let (mut hit, mut total) = (0usize, 0usize);
    for (p, g) in pred.iter().zip(gt) {
        if let Some(ok) = cmp(chord_encoding(g), chord_encoding(p)) {
            total += 1;
            hit += ok as usize;
        }
    }
    // The reference implementation scores an all-excluded input as 0.
    Ok(if total == 0 {
        0.0
    } else {
        hit as f64 / total as f64
    })
}

pub(crate) fn check_lengths(pred: usize, gt: usize) -> Result<(), EvalError> {
    if pred != gt {
        return Err(EvalError::LengthMismatch { pred, gt });
    }
    Ok(())
}

/// Fraction of frames whose chord roots agree (no-chord counts as a root).
pub fn score_root(pred: &[HarmonyFrameLabel], gt: &[HarmonyFrameLabel]) -> Result<f64, EvalError> {
    score(pred, gt, compare_root)
}

/// Root plus the lower octave of the bitmap, scored on references that are
/// major or minor triads (sevenths included) or no-chord.
pub fn score_majmin(
    pred: &[HarmonyFrameLabel],
    gt: &[HarmonyFrameLabel],
) -> Result<f64, EvalError> {
    score(pred, gt, compare_majmin)
}

/// Root plus the full bitmap, scored on references in
/// {maj, min, maj7, 7, min7, N}.
pub fn score_sevenths(
    pred: &[HarmonyFrameLabel],
    gt: &[HarmonyFrameLabel],
) -> Result<f64, EvalError> {
    score(pred, gt, compare_sevenths)
}

/// Fraction of frames whose `sub` class matches.
pub fn sublabel_accuracy(
    pred: &[HarmonyFrameLabel],
    gt: &[HarmonyFrameLabel],
    sub: SubLabel,
) -> Result<f64, EvalError> {
    check_lengths(pred.len(), gt.len())?;
    if gt.is_empty() {
        return Ok(0.0);
    }
    let hits = pred
        .iter()
        .zip(gt)
        .filter(|(p, g)| p.class(sub) == g.class(sub))
        .count();
    Ok(hits as f64 / gt.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricScores {
    pub root: f64,
    pub majmin: f64,
    pub sevenths: f64,
    pub sublabel_accuracy: BTreeMap<SubLabel, f64>,
}

impl MetricScores {
    pub fn compute(
        pred: &[HarmonyFrameLabel],
        gt: &[HarmonyFrameLabel],
    ) -> Result<Self, EvalError> {
        let mut sublabel = BTreeMap::new();
        for sub in SubLabel::ALL {
            sublabel.insert(sub, sublabel_accuracy(pred, gt, sub)?);
        }
        Ok(MetricScores {
            root: score_root(pred, gt)?,
            majmin: score_majmin(pred, gt)?,
            sevenths: score_sevenths(pred, gt)?,
            sublabel_accuracy: sublabel,
        })
    }
}
