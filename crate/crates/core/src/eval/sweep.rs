//! Confidence-threshold sweep: the distribution of per-excerpt ROI as the
//! oracle threshold rises.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{policy_confidence_threshold, EvalError, OracleReport};
use crate::features::Excerpt;
use crate::model::Serenade;
use crate::nade::{self, DecodeMode, NadeError, Propagation};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub excerpt: String,
    pub cost: f64,
    pub roi: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub threshold: f64,
    pub entries: Vec<SweepEntry>,
    /// Mean over excerpts where the oracle was used.
    pub mean_roi: Option<f64>,
    /// No excerpt had a cell below the threshold.
    pub unused: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    /// `threshold,excerpt,cost,roi`, one line per (threshold, excerpt); an
    /// undefined ROI is an empty field.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("threshold,excerpt,cost,roi\n");
        for row in &self.rows {
            for e in &row.entries {
                let roi = e.roi.map_or(String::new(), |r| format!("{r:.6}"));
                writeln!(
                    out,
                    "{:.4},{},{:.6},{}",
                    row.threshold, e.excerpt, e.cost, roi
                )
                .unwrap();
            }
        }
        out
    }
}

/// Parses `t0:t1:steps` into `steps` evenly spaced thresholds.
pub fn parse_sweep_range(s: &str) -> Result<Vec<f64>, EvalError> {
    let bad = || EvalError::Sweep(s.to_string());
    let parts: Vec<&str> = s.split(':').collect();
    let [t0, t1, steps] = parts[..] else {
        return Err(bad());
    };
    let t0: f64 = t0.parse().map_err(|_| bad())?;
    let t1: f64 = t1.parse().map_err(|_| bad())?;
    let steps: usize = steps.parse().map_err(|_| bad())?;
    if steps == 0 || !(0.0..=1.0).contains(&t0) || !(t0..=1.0).contains(&t1) {
        return Err(bad());
    }
    if steps == 1 {
        return Ok(vec![t0]);
    }
    Ok((0..steps)
        .map(|i| t0 + (t1 - t0) * i as f64 / (steps - 1) as f64)
        .collect())
}

/// For each threshold: first pass, mask every cell below it, constrained
/// second pass, per-excerpt report. The first pass is shared across
/// thresholds.
pub fn roi_sweep(
    model: &Serenade,
    corpus: &[Excerpt],
    thresholds: &[f64],
    propagation: Propagation,
) -> Result<SweepTable, EvalError> {
    let (l2r, r2l) = (&model.params.l2r, &model.params.r2l);
    let per_excerpt = corpus
        .par_iter()
        .map(|ex| -> Result<Vec<SweepEntry>, EvalError> {
            let bias = model.bias_fields(&ex.features).map_err(NadeError::from)?;
            let first = nade::infer(&bias, l2r, r2l, DecodeMode::Argmax)?;
            thresholds
                .iter()
                .map(|&t| {
                    let mask = policy_confidence_threshold(&ex.labels, &first, t);
                    let second = if mask.is_empty() {
                        first.clone()
                    } else {
                        nade::infer_constrained(
                            &bias,
                            l2r,
                            r2l,
                            &mask,
                            DecodeMode::Argmax,
                            propagation,
                        )?
                    };
                    let r = OracleReport::compute(&ex.labels, &first, &second, &mask)?;
                    Ok(SweepEntry {
                        excerpt: ex.id.clone(),
                        cost: r.cost,
                        roi: r.roi,
                    })
                })
                .collect()
        })
        .collect::<Result<Vec<_>, _>>()?;
    let rows = thresholds
        .iter()
        .enumerate()
        .map(|(i, &threshold)| {
            let entries: Vec<SweepEntry> = per_excerpt.iter().map(|e| e[i].clone()).collect();
            let rois: Vec<f64> = entries.iter().filter_map(|e| e.roi).collect();
            SweepRow {
                threshold,
                mean_roi: (!rois.is_empty()).then(|| rois.iter().sum::<f64>() / rois.len() as f64),
                unused: rois.is_empty(),
                entries,
            }
        })
        .collect();
    Ok(SweepTable { rows })
}
