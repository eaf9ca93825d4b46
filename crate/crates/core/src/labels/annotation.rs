//! Time-aligned annotation files and their conversion to frame labels.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    infer_key_quality, parse_chord_label, parse_key_label, reduce_quality, HarmonyFrameLabel,
    KeyQuality, LabelError,
};

/// Half-open interval `[start, end)` in seconds with a text label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalAnnotation {
    pub start: f64,
    pub end: f64,
    pub label: String,
}

/// Parses `start<TAB>end<TAB>label` lines (any whitespace separates the two
/// times). Blank lines and `#` comments are skipped. Intervals must be
/// non-empty, ordered and non-overlapping.
pub fn parse_lab(text: &str) -> Result<Vec<IntervalAnnotation>, LabelError> {
    let mut out: Vec<IntervalAnnotation> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |reason: &str| LabelError::LabFormat {
            line: line_no,
            reason: reason.to_string(),
        };
        let mut parts = line.splitn(3, char::is_whitespace);
        let start: f64 = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| err("bad start time"))?;
        let rest = parts.next().ok_or_else(|| err("missing end time"))?;
        let end: f64 = rest.parse().map_err(|_| err("bad end time"))?;
        let label = parts
            .next()
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .ok_or_else(|| err("missing label"))?;
        if !(start.is_finite() && end.is_finite() && start < end) {
            return Err(err("interval must satisfy start < end"));
        }
        if let Some(prev) = out.last() {
            if start < prev.end - 1e-9 {
                return Err(err("interval overlaps the previous one"));
            }
        }
        out.push(IntervalAnnotation {
            start,
            end,
            label: label.to_string(),
        });
    }
    Ok(out)
}

pub fn read_lab_file(path: impl AsRef<Path>) -> Result<Vec<IntervalAnnotation>, LabelError> {
    parse_lab(&fs::read_to_string(path)?)
}

pub fn write_lab_file(
    path: impl AsRef<Path>,
    intervals: &[IntervalAnnotation],
) -> Result<(), LabelError> {
    let mut text = String::new();
    for iv in intervals {
        text.push_str(&format!("{:.6}\t{:.6}\t{}\n", iv.start, iv.end, iv.label));
    }
    fs::write(path, text)?;
    Ok(())
}

/// Index of the interval containing `time`, if any.
fn covering(intervals: &[IntervalAnnotation], time: f64) -> Option<usize> {
    let idx = intervals.partition_point(|iv| iv.start <= time);
    let candidate = idx.checked_sub(1)?;
    (time < intervals[candidate].end).then_some(candidate)
}

/// Samples chord and key annotations at each frame's center time
/// `t * hop + hop / 2`. Uncovered frames get the all-N label. Key regions
/// annotated without a quality get one inferred from their tonic chords,
/// falling back to major (with a warning) when there are none.
pub fn frames_from_intervals(
    chords: &[IntervalAnnotation],
    keys: &[IntervalAnnotation],
    hop: f64,
    frames: usize,
) -> Result<Vec<HarmonyFrameLabel>, LabelError> {
    assert!(hop > 0.0, "hop must be positive");
    let parsed_chords = chords
        .iter()
        .map(|iv| {
            let p = parse_chord_label(&iv.label)?;
            let quality = reduce_quality(&p.quality)?;
            Ok(p.root.map(|root| (root, quality, p.bass_interval)))
        })
        .collect::<Result<Vec<_>, LabelError>>()?;
    let parsed_keys = keys
        .iter()
        .map(|iv| parse_key_label(&iv.label))
        .collect::<Result<Vec<_>, _>>()?;

    let mut labels = Vec::with_capacity(frames);
    let mut key_region = Vec::with_capacity(frames);
    for t in 0..frames {
        let center = t as f64 * hop + hop / 2.0;
        let chord = covering(chords, center).and_then(|i| parsed_chords[i]);
        let key_idx = covering(keys, center);
        let key = key_idx.and_then(|i| {
            let k = parsed_keys[i];
            // Placeholder quality until inference below.
            k.root.map(|r| (r, k.quality.unwrap_or(KeyQuality::Major)))
        });
        let label = match chord {
            Some(c) => HarmonyFrameLabel::new(key, Some(c)),
            None => HarmonyFrameLabel::new(key, None),
        };
        labels.push(label);
        key_region.push(key_idx);
    }

    for (i, key) in parsed_keys.iter().enumerate() {
        if key.root.is_none() || key.quality.is_some() {
            continue;
        }
        let members: Vec<usize> = (0..frames).filter(|&t| key_region[t] == Some(i)).collect();
        if members.is_empty() {
            continue;
        }
        let region: Vec<HarmonyFrameLabel> = members.iter().map(|&t| labels[t]).collect();
        let quality = infer_key_quality(&region).unwrap_or_else(|_| {
            log::warn!(
                "key region {:.3}-{:.3}s has no tonic chords; assuming major",
                keys[i].start,
                keys[i].end
            );
            KeyQuality::Major
        });
        for t in members {
            labels[t] = labels[t].with_class(super::SubLabel::KeyQuality, quality.class())?;
        }
    }
    Ok(labels)
}
