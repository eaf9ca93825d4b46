//! Oracle cost, return on investment, and the simulated-annotator policies.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::metrics::check_lengths;
use super::EvalError;
use crate::labels::{HarmonyFrameLabel, SubLabel, SUBLABEL_COUNT};
use crate::nade::{OracleMask, PredictionResult};

/// Fraction of the `6 * frames` cells supplied by the oracle.
pub fn oracle_cost(mask: &OracleMask, frames: usize) -> f64 {
    if frames == 0 {
        return 0.0;
    }
    mask.len() as f64 / (SUBLABEL_COUNT * frames) as f64
}

/// Accuracy gain per unit of oracle cost.
pub fn oracle_roi(
    accuracy_oracle: f64,
    accuracy_original: f64,
    cost: f64,
) -> Result<f64, EvalError> {
    if cost <= 0.0 {
        return Err(EvalError::ZeroCost);
    }
    Ok((accuracy_oracle - accuracy_original) / cost)
}

/// Exact-match rate over all `6 * T` cells.
pub fn cell_accuracy(pred: &PredictionResult, gt: &[HarmonyFrameLabel]) -> Result<f64, EvalError> {
    check_lengths(pred.len(), gt.len())?;
    if gt.is_empty() {
        return Ok(0.0);
    }
    let hits: usize = gt
        .iter()
        .enumerate()
        .map(|(t, g)| {
            let p = pred.classes(t);
            g.classes().iter().zip(p).filter(|(a, b)| **a == *b).count()
        })
        .sum();
    Ok(hits as f64 / (SUBLABEL_COUNT * gt.len()) as f64)
}

fn sublabel_cell_accuracy(pred: &PredictionResult, gt: &[HarmonyFrameLabel], sub: SubLabel) -> f64 {
    let hits = gt
        .iter()
        .enumerate()
        .filter(|(t, g)| pred.cell(*t, sub).class == g.class(sub))
        .count();
    hits as f64 / gt.len().max(1) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub cost: f64,
    pub accuracy_original: f64,
    pub accuracy_oracle: f64,
    /// Absent when the cost is zero.
    pub roi: Option<f64>,
    pub sublabel_delta: BTreeMap<SubLabel, f64>,
}

impl OracleReport {
    pub fn compute(
        gt: &[HarmonyFrameLabel],
        first_pass: &PredictionResult,
        second_pass: &PredictionResult,
        mask: &OracleMask,
    ) -> Result<Self, EvalError> {
        check_lengths(second_pass.len(), gt.len())?;
        let cost = oracle_cost(mask, gt.len());
        let accuracy_original = cell_accuracy(first_pass, gt)?;
        let accuracy_oracle = cell_accuracy(second_pass, gt)?;
        let sublabel_delta = SubLabel::ALL
            .iter()
            .map(|&s| {
                let d = sublabel_cell_accuracy(second_pass, gt, s)
                    - sublabel_cell_accuracy(first_pass, gt, s);
                (s, d)
            })
            .collect();
        Ok(OracleReport {
            cost,
            accuracy_original,
            accuracy_oracle,
            roi: oracle_roi(accuracy_oracle, accuracy_original, cost).ok(),
            sublabel_delta,
        })
    }

    /// Pools per-excerpt reports by frame count, as if the excerpts were one
    /// sequence.
    pub fn pooled(parts: &[(usize, OracleReport)]) -> Option<Self> {
        let frames: usize = parts.iter().map(|(t, _)| t).sum();
        if frames == 0 {
            return None;
        }
        let w = |f: &dyn Fn(&OracleReport) -> f64| {
            parts.iter().map(|(t, r)| *t as f64 * f(r)).sum::<f64>() / frames as f64
        };
        let cost = w(&|r| r.cost);
        let accuracy_original = w(&|r| r.accuracy_original);
        let accuracy_oracle = w(&|r| r.accuracy_oracle);
        let sublabel_delta = SubLabel::ALL
            .iter()
            .map(|&s| (s, w(&|r| r.sublabel_delta[&s])))
            .collect();
        Some(OracleReport {
            cost,
            accuracy_original,
            accuracy_oracle,
            roi: oracle_roi(accuracy_oracle, accuracy_original, cost).ok(),
            sublabel_delta,
        })
    }
}

/// Every frame of each listed sub-label.
pub fn policy_full_sublabel(gt: &[HarmonyFrameLabel], sublabels: &[SubLabel]) -> OracleMask {
    let mut mask = OracleMask::new();
    for (t, label) in gt.iter().enumerate() {
        for &sub in sublabels {
            mask.insert(t, sub, label.class(sub))
                .expect("ground-truth class in range");
        }
    }
    mask
}

/// Uniformly samples `ceil(fraction * W)` of the `W` wrong first-pass cells
/// among `sublabels`.
pub fn policy_wrong_subset(
    gt: &[HarmonyFrameLabel],
    first_pass: &PredictionResult,
    fraction: f64,
    sublabels: &[SubLabel],
    seed: u64,
) -> Result<OracleMask, EvalError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(EvalError::Fraction(fraction));
    }
    check_lengths(first_pass.len(), gt.len())?;
    let mut wrong = Vec::new();
    for (t, label) in gt.iter().enumerate() {
        for &sub in sublabels {
            if first_pass.cell(t, sub).class != label.class(sub) {
                wrong.push((t, sub));
            }
        }
    }
    let take = ((fraction * wrong.len() as f64).ceil() as usize).min(wrong.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mask = OracleMask::new();
    for i in sample(&mut rng, wrong.len(), take) {
        let (t, sub) = wrong[i];
        mask.insert(t, sub, gt[t].class(sub))
            .expect("ground-truth class in range");
    }
    Ok(mask)
}

/// Cells whose first-pass confidence is below `t`.
pub fn low_confidence_cells(first_pass: &PredictionResult, t: f64) -> Vec<(usize, SubLabel)> {
    let mut out = Vec::new();
    for frame in 0..first_pass.len() {
        for sub in SubLabel::ALL {
            if first_pass.cell(frame, sub).confidence < t {
                out.push((frame, sub));
            }
        }
    }
    out
}

/// [`low_confidence_cells`] filled with ground-truth classes.
pub fn policy_confidence_threshold(
    gt: &[HarmonyFrameLabel],
    first_pass: &PredictionResult,
    t: f64,
) -> OracleMask {
    let mut mask = OracleMask::new();
    for (frame, sub) in low_confidence_cells(first_pass, t) {
        mask.insert(frame, sub, gt[frame].class(sub))
            .expect("ground-truth class in range");
    }
    mask
}

/// Sub-labels a "wrong subset" oracle corrects: chord root, quality and bass.
pub const WRONG_SUBSET_SUBLABELS: [SubLabel; 3] = [
    SubLabel::ChordRoot,
    SubLabel::ChordQuality,
    SubLabel::BassNumber,
];

/// Oracle policy as named on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "policy")]
pub enum OraclePolicy {
    /// Key root and key quality at every frame.
    Key,
    /// Droot at every frame.
    Droot,
    /// A fraction of the wrong chord root, quality and bass cells.
    Wrong { fraction: f64 },
    /// Every cell below a confidence threshold.
    Confidence { threshold: f64 },
}

impl OraclePolicy {
    pub fn mask(
        &self,
        gt: &[HarmonyFrameLabel],
        first_pass: &PredictionResult,
        seed: u64,
    ) -> Result<OracleMask, EvalError> {
        match *self {
            OraclePolicy::Key => Ok(policy_full_sublabel(
                gt,
                &[SubLabel::KeyRoot, SubLabel::KeyQuality],
            )),
            OraclePolicy::Droot => Ok(policy_full_sublabel(gt, &[SubLabel::Droot])),
            OraclePolicy::Wrong { fraction } => {
                policy_wrong_subset(gt, first_pass, fraction, &WRONG_SUBSET_SUBLABELS, seed)
            }
            OraclePolicy::Confidence { threshold } => {
                Ok(policy_confidence_threshold(gt, first_pass, threshold))
            }
        }
    }
}

impl fmt::Display for OraclePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OraclePolicy::Key => f.write_str("key"),
            OraclePolicy::Droot => f.write_str("droot"),
            OraclePolicy::Wrong { fraction } => write!(f, "wrong:{fraction}"),
            OraclePolicy::Confidence { threshold } => write!(f, "conf:{threshold}"),
        }
    }
}

impl FromStr for OraclePolicy {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || EvalError::Policy(s.to_string());
        let number = |v: &str| v.parse::<f64>().map_err(|_| bad());
        match s.split_once(':') {
            None if s == "key" => Ok(OraclePolicy::Key),
            None if s == "droot" => Ok(OraclePolicy::Droot),
            Some(("wrong", v)) => {
                let fraction = number(v)?;
                if !(fraction > 0.0 && fraction <= 1.0) {
                    return Err(EvalError::Fraction(fraction));
                }
                Ok(OraclePolicy::Wrong { fraction })
            }
            Some(("conf", v)) => {
                let threshold = number(v)?;
                if !(0.0..=1.0).contains(&threshold) {
                    return Err(bad());
                }
                Ok(OraclePolicy::Confidence { threshold })
            }
            _ => Err(bad()),
        }
    }
}
