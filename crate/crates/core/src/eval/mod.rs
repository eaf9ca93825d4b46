//! Chord metrics, oracle policies and cost/ROI accounting.
//!
//! "Accuracy" in every ROI figure is the exact-match rate over all `6 * T`
//! sub-label cells, not a chord metric.

mod metrics;
mod oracle;
mod sweep;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use metrics::{score_majmin, score_root, score_sevenths, sublabel_accuracy, MetricScores};
pub use oracle::{
    cell_accuracy, low_confidence_cells, oracle_cost, oracle_roi, policy_confidence_threshold,
    policy_full_sublabel, policy_wrong_subset, OraclePolicy, OracleReport, WRONG_SUBSET_SUBLABELS,
};
pub use sweep::{parse_sweep_range, roi_sweep, SweepEntry, SweepRow, SweepTable};

use crate::features::Excerpt;
use crate::labels::HarmonyFrameLabel;
use crate::model::Serenade;
use crate::nade::{self, DecodeMode, NadeError, OracleMask, PredictionResult, Propagation};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("prediction has {pred} frames, ground truth {gt}")]
    LengthMismatch { pred: usize, gt: usize },
    #[error("ROI is undefined at zero oracle cost")]
    ZeroCost,
    #[error("fraction must lie in (0, 1], got {0}")]
    Fraction(f64),
    #[error("unknown oracle policy {0:?} (key, droot, wrong:FRAC, conf:T)")]
    Policy(String),
    #[error("bad sweep range {0:?}, expected t0:t1:steps")]
    Sweep(String),
    #[error(transparent)]
    Nade(#[from] NadeError),
}

/// First pass, oracle mask and constrained second pass for one excerpt.
#[derive(Debug, Clone)]
pub struct OracleRun {
    pub first_pass: PredictionResult,
    pub mask: OracleMask,
    pub second_pass: PredictionResult,
    pub report: OracleReport,
}

/// Runs the two-phase oracle loop on one labelled excerpt: argmax first
/// pass, mask from `policy`, constrained argmax second pass.
pub fn run_oracle(
    model: &Serenade,
    excerpt: &Excerpt,
    policy: &OraclePolicy,
    propagation: Propagation,
    seed: u64,
) -> Result<OracleRun, EvalError> {
    let bias = model
        .bias_fields(&excerpt.features)
        .map_err(NadeError::from)?;
    let (l2r, r2l) = (&model.params.l2r, &model.params.r2l);
    let first_pass = nade::infer(&bias, l2r, r2l, DecodeMode::Argmax)?;
    let mask = policy.mask(&excerpt.labels, &first_pass, seed)?;
    let second_pass =
        nade::infer_constrained(&bias, l2r, r2l, &mask, DecodeMode::Argmax, propagation)?;
    let report = OracleReport::compute(&excerpt.labels, &first_pass, &second_pass, &mask)?;
    Ok(OracleRun {
        first_pass,
        mask,
        second_pass,
        report,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcerptReport {
    pub id: String,
    pub frames: usize,
    pub report: OracleReport,
}

/// Corpus-level evaluation output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub excerpts: usize,
    pub frames: usize,
    /// Scores of the unassisted first pass.
    pub metrics: MetricScores,
    pub policy: Option<OraclePolicy>,
    /// Scores of the oracle-assisted second pass.
    pub metrics_oracle: Option<MetricScores>,
    /// Frame-weighted pooling of the per-excerpt reports.
    pub oracle: Option<OracleReport>,
    pub per_excerpt: Vec<ExcerptReport>,
}

impl EvalReport {
    /// Plain-text summary for terminals.
    pub fn summary(&self) -> String {
        let mut out = format!("{} excerpts, {} frames\n", self.excerpts, self.frames);
        let metrics = |out: &mut String, name: &str, m: &MetricScores| {
            out.push_str(&format!(
                "{name:<8} root {:.4}  majmin {:.4}  sevenths {:.4}\n",
                m.root, m.majmin, m.sevenths
            ));
            for (sub, acc) in &m.sublabel_accuracy {
                out.push_str(&format!("         {:<14} {acc:.4}\n", sub.name()));
            }
        };
        metrics(&mut out, "first", &self.metrics);
        if let (Some(policy), Some(m), Some(r)) = (&self.policy, &self.metrics_oracle, &self.oracle)
        {
            metrics(&mut out, "oracle", m);
            out.push_str(&format!(
                "policy {policy}: cost {:.4}  accuracy {:.4} -> {:.4}  roi {}\n",
                r.cost,
                r.accuracy_original,
                r.accuracy_oracle,
                r.roi.map_or("undefined".to_string(), |v| format!("{v:.4}"))
            ));
        }
        out
    }
}

/// Scores `model` on `corpus`, optionally with a simulated oracle. Excerpt
/// `i` seeds its wrong-subset sampling with `seed + i`.
pub fn evaluate(
    model: &Serenade,
    corpus: &[Excerpt],
    policy: Option<OraclePolicy>,
    propagation: Propagation,
    seed: u64,
) -> Result<EvalReport, EvalError> {
    let gt: Vec<HarmonyFrameLabel> = corpus
        .iter()
        .flat_map(|e| e.labels.iter().copied())
        .collect();
    let Some(policy) = policy else {
        let first = corpus
            .par_iter()
            .map(|ex| Ok(model.predict(&ex.features, DecodeMode::Argmax)?.labels()))
            .collect::<Result<Vec<_>, EvalError>>()?;
        return Ok(EvalReport {
            excerpts: corpus.len(),
            frames: gt.len(),
            metrics: MetricScores::compute(&first.concat(), &gt)?,
            policy: None,
            metrics_oracle: None,
            oracle: None,
            per_excerpt: Vec::new(),
        });
    };
    let runs = corpus
        .par_iter()
        .enumerate()
        .map(|(i, ex)| run_oracle(model, ex, &policy, propagation, seed.wrapping_add(i as u64)))
        .collect::<Result<Vec<_>, _>>()?;
    let first: Vec<HarmonyFrameLabel> = runs.iter().flat_map(|r| r.first_pass.labels()).collect();
    let second: Vec<HarmonyFrameLabel> = runs.iter().flat_map(|r| r.second_pass.labels()).collect();
    let per_excerpt: Vec<ExcerptReport> = corpus
        .iter()
        .zip(&runs)
        .map(|(ex, r)| ExcerptReport {
            id: ex.id.clone(),
            frames: ex.frames(),
            report: r.report.clone(),
        })
        .collect();
    let parts: Vec<(usize, OracleReport)> = per_excerpt
        .iter()
        .map(|e| (e.frames, e.report.clone()))
        .collect();
    Ok(EvalReport {
        excerpts: corpus.len(),
        frames: gt.len(),
        metrics: MetricScores::compute(&first, &gt)?,
        policy: Some(policy),
        metrics_oracle: Some(MetricScores::compute(&second, &gt)?),
        oracle: OracleReport::pooled(&parts),
        per_excerpt,
    })
}
