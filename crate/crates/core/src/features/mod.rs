//! Model input: treble and bass chromagrams plus 24 key-profile scores,
//! laid out as a `T x 48` matrix.

mod synth;

pub use synth::{
    generate_progression, synth_corpus, synth_excerpt, synth_excerpt_with, ProgressionConfig,
    SynthConfig, SynthOptions,
};

use std::fmt::{self, Write as _};
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::labels::HarmonyFrameLabel;
use crate::tensor::Matrix;

/// 2048 samples at 44.1 kHz.
pub const DEFAULT_HOP: f64 = 0.04644;
pub const CHROMA_BINS: usize = 12;
pub const INPUT_FEATURES: usize = 48;
pub const PROFILE_OFFSET: usize = 24;

/// Temperley (1999) major key profile, tonic first.
pub const TEMPERLEY_MAJOR: [f64; 12] = [5.0, 2.0, 3.5, 2.0, 4.5, 4.0, 2.0, 4.5, 2.0, 3.5, 1.5, 4.0];
/// Temperley (1999) minor key profile, tonic first.
pub const TEMPERLEY_MINOR: [f64; 12] = [5.0, 2.0, 3.5, 4.5, 2.0, 4.0, 2.0, 4.5, 3.5, 2.0, 1.5, 4.0];

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {reason}")]
    Format { line: usize, reason: String },
    #[error("negative or non-finite chroma value at frame {frame}, bin {bin}")]
    BadValue { frame: usize, bin: usize },
    #[error("frame counts differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("hop sizes differ: {0} vs {1}")]
    HopMismatch(f64, f64),
    #[error("expected {expected} columns, got {got}")]
    Columns { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChromaKind {
    Treble,
    Bass,
}

impl fmt::Display for ChromaKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ChromaKind::Treble => "treble",
            ChromaKind::Bass => "bass",
        })
    }
}

impl FromStr for ChromaKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "treble" => Ok(ChromaKind::Treble),
            "bass" => Ok(ChromaKind::Bass),
            other => Err(format!("unknown chroma kind {other:?}")),
        }
    }
}

/// `T x 12` non-negative chroma frames.
#[derive(Debug, Clone, PartialEq)]
pub struct Chromagram {
    kind: ChromaKind,
    hop: f64,
    frames: Matrix,
}

impl Chromagram {
    pub fn new(kind: ChromaKind, hop: f64, frames: Matrix) -> Result<Self, FeatureError> {
        if frames.cols() != CHROMA_BINS {
            return Err(FeatureError::Columns {
                expected: CHROMA_BINS,
                got: frames.cols(),
            });
        }
        if let Some(i) = frames
            .as_slice()
            .iter()
            .position(|&v| !(v >= 0.0 && v.is_finite()))
        {
            return Err(FeatureError::BadValue {
                frame: i / CHROMA_BINS,
                bin: i % CHROMA_BINS,
            });
        }
        if !(hop > 0.0 && hop.is_finite()) {
            return Err(FeatureError::Format {
                line: 1,
                reason: format!("hop must be positive, got {hop}"),
            });
        }
        Ok(Chromagram { kind, hop, frames })
    }

    pub fn kind(&self) -> ChromaKind {
        self.kind
    }

    pub fn hop(&self) -> f64 {
        self.hop
    }

    pub fn frames(&self) -> usize {
        self.frames.rows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.frames
    }

    /// Serializes in the `CHRO1` text format. Values use the shortest
    /// representation that parses back to the same `f64`.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "CHRO1 kind={} hop={} frames={}\n",
            self.kind,
            self.hop,
            self.frames()
        );
        for t in 0..self.frames() {
            let row = self.frames.row(t);
            for (i, v) in row.iter().enumerate() {
                if i > 0 {
                    out.push(' ');
                }
                let _ = write!(out, "{v}");
            }
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, FeatureError> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let format_err = |line: usize, reason: String| FeatureError::Format {
            line: line + 1,
            reason,
        };
        let (_, header) = lines
            .next()
            .ok_or_else(|| format_err(0, "empty file".into()))?;
        let mut fields = header.split_whitespace();
        if fields.next() != Some("CHRO1") {
            return Err(format_err(0, "missing CHRO1 tag".into()));
        }
        let mut kind = None;
        let mut hop = None;
        let mut count = None;
        for field in fields {
            let (key, value) = field
                .split_once('=')
                .ok_or_else(|| format_err(0, format!("bad header field {field:?}")))?;
            match key {
                "kind" => kind = Some(value.parse::<ChromaKind>().map_err(|e| format_err(0, e))?),
                "hop" => {
                    hop = Some(
                        value
                            .parse::<f64>()
                            .map_err(|_| format_err(0, format!("bad hop {value:?}")))?,
                    )
                }
                "frames" => {
                    count = Some(
                        value
                            .parse::<usize>()
                            .map_err(|_| format_err(0, format!("bad frame count {value:?}")))?,
                    )
                }
                other => return Err(format_err(0, format!("unknown header field {other:?}"))),
            }
        }
        let (Some(kind), Some(hop), Some(count)) = (kind, hop, count) else {
            return Err(format_err(0, "header needs kind, hop and frames".into()));
        };
        let mut data = Vec::with_capacity(count * CHROMA_BINS);
        let mut rows = 0;
        for (line, text) in lines {
            let values = text
                .split_whitespace()
                .map(|v| v.parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| format_err(line, e.to_string()))?;
            if values.len() != CHROMA_BINS {
                return Err(format_err(
                    line,
                    format!("expected {CHROMA_BINS} values, got {}", values.len()),
                ));
            }
            data.extend(values);
            rows += 1;
        }
        if rows != count {
            return Err(format_err(
                0,
                format!("header says {count} frames, file has {rows}"),
            ));
        }
        if let Some(i) = data.iter().position(|&v| !(v >= 0.0 && v.is_finite())) {
            return Err(FeatureError::BadValue {
                frame: i / CHROMA_BINS,
                bin: i % CHROMA_BINS,
            });
        }
        let frames =
            Matrix::from_vec(rows, CHROMA_BINS, data).map_err(|e| format_err(0, e.to_string()))?;
        Chromagram::new(kind, hop, frames)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), FeatureError> {
        fs::write(path, self.to_text())?;
        Ok(())
    }
}

pub fn load_chromagram(path: impl AsRef<Path>) -> Result<Chromagram, FeatureError> {
    Chromagram::parse(&fs::read_to_string(path)?)
}

fn mean_chroma(frames: &Matrix) -> [f64; 12] {
    let mut mean = [0.0; 12];
    let t = frames.rows();
    if t == 0 {
        return mean;
    }
    for r in 0..t {
        for (m, v) in mean.iter_mut().zip(frames.row(r)) {
            *m += v;
        }
    }
    mean.map(|m| m / t as f64)
}

fn profile_scores_from_mean(mean: &[f64; 12]) -> [f64; 24] {
    let mut scores = [0.0; 24];
    for key in 0..12 {
        for pc in 0..12 {
            let degree = (pc + 12 - key) % 12;
            scores[key] += mean[pc] * TEMPERLEY_MAJOR[degree];
            scores[12 + key] += mean[pc] * TEMPERLEY_MINOR[degree];
        }
    }
    scores
}

/// Inner products of the excerpt's mean treble chroma with the 24 rotated
/// key profiles: 12 major keys (C..B) followed by 12 minor keys.
pub fn pitch_profile_scores(treble: &Chromagram) -> [f64; 24] {
    profile_scores_from_mean(&mean_chroma(treble.matrix()))
}

/// `T x 48` input: treble chroma, bass chroma, then the profile scores
/// repeated on every row.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    data: Matrix,
    hop: f64,
}

impl FeatureMatrix {
    /// Wraps a `T x 48` matrix; the profile block is recomputed from the
    /// treble columns so the constant-block invariant always holds.
    pub fn from_chroma_block(chroma: &Matrix, hop: f64) -> Result<Self, FeatureError> {
        if chroma.cols() != 2 * CHROMA_BINS && chroma.cols() != INPUT_FEATURES {
            return Err(FeatureError::Columns {
                expected: INPUT_FEATURES,
                got: chroma.cols(),
            });
        }
        let t = chroma.rows();
        let treble = chroma.slice_cols(0, CHROMA_BINS).expect("width checked");
        let scores = profile_scores_from_mean(&mean_chroma(&treble));
        let mut data = Matrix::zeros(t, INPUT_FEATURES);
        for r in 0..t {
            let row = data.row_mut(r);
            row[..2 * CHROMA_BINS].copy_from_slice(&chroma.row(r)[..2 * CHROMA_BINS]);
            row[PROFILE_OFFSET..].copy_from_slice(&scores);
        }
        Ok(FeatureMatrix { data, hop })
    }

    pub fn frames(&self) -> usize {
        self.data.rows()
    }

    pub fn hop(&self) -> f64 {
        self.hop
    }

    pub fn matrix(&self) -> &Matrix {
        &self.data
    }

    pub fn treble(&self) -> Chromagram {
        self.chroma(ChromaKind::Treble)
    }

    pub fn bass(&self) -> Chromagram {
        self.chroma(ChromaKind::Bass)
    }

    fn chroma(&self, kind: ChromaKind) -> Chromagram {
        let start = match kind {
            ChromaKind::Treble => 0,
            ChromaKind::Bass => CHROMA_BINS,
        };
        let frames = self
            .data
            .slice_cols(start, CHROMA_BINS)
            .expect("48 columns");
        Chromagram {
            kind,
            hop: self.hop,
            frames,
        }
    }

    /// Frames `[start, start + len)` with the profile block recomputed.
    pub fn window(&self, start: usize, len: usize) -> FeatureMatrix {
        let rows = self
            .data
            .slice_rows(start, len)
            .expect("window within range");
        FeatureMatrix::from_chroma_block(&rows, self.hop).expect("48 columns")
    }

    /// Same frames in reverse order. The profile block is order-invariant.
    pub fn reversed(&self) -> FeatureMatrix {
        FeatureMatrix {
            data: self.data.reverse_rows(),
            hop: self.hop,
        }
    }
}

pub fn assemble_input(
    treble: &Chromagram,
    bass: &Chromagram,
) -> Result<FeatureMatrix, FeatureError> {
    if treble.frames() != bass.frames() {
        return Err(FeatureError::LengthMismatch(treble.frames(), bass.frames()));
    }
    if treble.hop() != bass.hop() {
        return Err(FeatureError::HopMismatch(treble.hop(), bass.hop()));
    }
    let block = Matrix::concat_cols(&[treble.matrix(), bass.matrix()]).expect("same row count");
    FeatureMatrix::from_chroma_block(&block, treble.hop())
}

/// A feature matrix with its frame labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Excerpt {
    pub id: String,
    pub features: FeatureMatrix,
    pub labels: Vec<HarmonyFrameLabel>,
}

impl Excerpt {
    pub fn frames(&self) -> usize {
        self.features.frames()
    }
}

/// Consecutive non-overlapping windows of `excerpt_frames`. A trailing
/// remainder is kept when it is at least half a window long.
pub fn segment_excerpts(
    fm: &FeatureMatrix,
    labels: &[HarmonyFrameLabel],
    excerpt_frames: usize,
) -> Result<Vec<(FeatureMatrix, Vec<HarmonyFrameLabel>)>, FeatureError> {
    assert!(excerpt_frames >= 1, "excerpt_frames must be positive");
    if labels.len() != fm.frames() {
        return Err(FeatureError::LengthMismatch(fm.frames(), labels.len()));
    }
    let total = fm.frames();
    let mut out = Vec::new();
    let mut start = 0;
    while start < total {
        let len = excerpt_frames.min(total - start);
        if len < excerpt_frames && 2 * len < excerpt_frames {
            break;
        }
        out.push((fm.window(start, len), labels[start..start + len].to_vec()));
        start += len;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn chroma(kind: ChromaKind, rows: Vec<Vec<f64>>) -> Chromagram {
        Chromagram::new(kind, DEFAULT_HOP, Matrix::from_rows(&rows).unwrap()).unwrap()
    }

    #[test]
    fn chro1_round_trip_is_bit_exact() {
        let c = chroma(
            ChromaKind::Bass,
            vec![
                vec![
                    0.1,
                    1.0 / 3.0,
                    0.0,
                    2.5e-7,
                    1e10,
                    0.3,
                    0.7,
                    0.0,
                    0.0,
                    0.0,
                    0.0,
                    1.0
                ];
                4
            ],
        );
        let back = Chromagram::parse(&c.to_text()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.frames(), 4);
        for (a, b) in back.matrix().as_slice().iter().zip(c.matrix().as_slice()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn chro1_rejects_bad_input() {
        let eleven = "CHRO1 kind=treble hop=0.1 frames=1\n0 0 0 0 0 0 0 0 0 0 0\n";
        assert!(matches!(
            Chromagram::parse(eleven),
            Err(FeatureError::Format { line: 2, .. })
        ));
        let negative = "CHRO1 kind=treble hop=0.1 frames=1\n0 0 0 0 0 -1 0 0 0 0 0 0\n";
        assert!(matches!(
            Chromagram::parse(negative),
            Err(FeatureError::BadValue { frame: 0, bin: 5 })
        ));
        assert!(Chromagram::parse("CHRO2 kind=treble hop=0.1 frames=0\n").is_err());
        assert!(Chromagram::parse("CHRO1 kind=alto hop=0.1 frames=0\n").is_err());
        assert!(
            Chromagram::parse("CHRO1 kind=bass hop=0.1 frames=2\n1 1 1 1 1 1 1 1 1 1 1 1\n")
                .is_err()
        );
        assert!(load_chromagram("/nonexistent/file.chroma").is_err());
    }

    #[test]
    fn profile_scores_of_zero_and_uniform_chroma() {
        let zero = chroma(ChromaKind::Treble, vec![vec![0.0; 12]; 3]);
        assert_eq!(pitch_profile_scores(&zero), [0.0; 24]);
        let ones = chroma(ChromaKind::Treble, vec![vec![1.0; 12]; 3]);
        let s = pitch_profile_scores(&ones);
        let major_sum: f64 = TEMPERLEY_MAJOR.iter().sum();
        let minor_sum: f64 = TEMPERLEY_MINOR.iter().sum();
        assert!(s[..12].iter().all(|&v| (v - major_sum).abs() < 1e-12));
        assert!(s[12..].iter().all(|&v| (v - minor_sum).abs() < 1e-12));
    }

    #[test]
    fn c_major_triad_scores_highest_for_c_major() {
        let mut row = vec![0.0; 12];
        for pc in [0, 4, 7] {
            row[pc] = 1.0;
        }
        let s = pitch_profile_scores(&chroma(ChromaKind::Treble, vec![row]));
        let best = crate::tensor::argmax(&s);
        assert_eq!(best, 0);
        // 5 + 4.5 + 4.5
        assert_eq!(s[0], 14.0);
    }

    #[test]
    fn assemble_layout_and_errors() {
        let t = chroma(ChromaKind::Treble, vec![vec![0.5; 12]]);
        let b = chroma(ChromaKind::Bass, vec![vec![0.25; 12]]);
        let fm = assemble_input(&t, &b).unwrap();
        assert_eq!(fm.matrix().shape(), (1, 48));
        assert_eq!(&fm.matrix().row(0)[..12], t.matrix().row(0));
        assert_eq!(&fm.matrix().row(0)[12..24], b.matrix().row(0));
        let b2 = chroma(ChromaKind::Bass, vec![vec![0.25; 12]; 2]);
        assert!(matches!(
            assemble_input(&t, &b2),
            Err(FeatureError::LengthMismatch(1, 2))
        ));
        let b3 = Chromagram::new(ChromaKind::Bass, 0.5, b.matrix().clone()).unwrap();
        assert!(matches!(
            assemble_input(&t, &b3),
            Err(FeatureError::HopMismatch(..))
        ));
    }

    #[test]
    fn segmentation_counts() {
        let make = |t: usize| {
            let m = Matrix::filled(t, 24, 0.5);
            FeatureMatrix::from_chroma_block(&m, DEFAULT_HOP).unwrap()
        };
        let labels = |t: usize| vec![HarmonyFrameLabel::none(); t];
        assert_eq!(
            segment_excerpts(&make(2584), &labels(2584), 1292)
                .unwrap()
                .len(),
            2
        );
        assert_eq!(
            segment_excerpts(&make(100), &labels(100), 1292)
                .unwrap()
                .len(),
            0
        );
        assert_eq!(
            segment_excerpts(&make(96), &labels(96), 64).unwrap().len(),
            2
        );
        assert_eq!(
            segment_excerpts(&make(95), &labels(95), 64).unwrap().len(),
            1
        );
        let fm = make(64);
        let one = segment_excerpts(&fm, &labels(64), 64).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].0, fm);
        assert!(segment_excerpts(&fm, &labels(3), 64).is_err());
    }

    #[test]
    fn segments_recompute_profiles() {
        let mut m = Matrix::zeros(4, 24);
        m.set(0, 0, 1.0);
        m.set(3, 7, 1.0);
        let fm = FeatureMatrix::from_chroma_block(&m, DEFAULT_HOP).unwrap();
        let parts = segment_excerpts(&fm, &[HarmonyFrameLabel::none(); 4], 2).unwrap();
        assert_eq!(
            parts[1].0.matrix().get(0, PROFILE_OFFSET),
            0.0 + 0.5 * TEMPERLEY_MAJOR[7]
        );
        assert_eq!(
            parts[0].0.matrix().get(1, PROFILE_OFFSET),
            0.5 * TEMPERLEY_MAJOR[0]
        );
    }

    proptest! {
        #[test]
        fn profile_scores_rotate_with_chroma(
            values in proptest::collection::vec(0.0f64..2.0, 12),
            k in 0usize..12,
        ) {
            let rotated: Vec<f64> = (0..12).map(|pc| values[(pc + 12 - k) % 12]).collect();
            let a = pitch_profile_scores(&chroma(ChromaKind::Treble, vec![values.clone()]));
            let b = pitch_profile_scores(&chroma(ChromaKind::Treble, vec![rotated]));
            for key in 0..12 {
                prop_assert!((b[(key + k) % 12] - a[key]).abs() < 1e-9);
                prop_assert!((b[12 + (key + k) % 12] - a[12 + key]).abs() < 1e-9);
            }
        }

        #[test]
        fn profile_scores_ignore_frame_order(
            rows in proptest::collection::vec(proptest::collection::vec(0.0f64..1.0, 12), 1..6),
        ) {
            let mut rev = rows.clone();
            rev.reverse();
            let a = pitch_profile_scores(&chroma(ChromaKind::Treble, rows));
            let b = pitch_profile_scores(&chroma(ChromaKind::Treble, rev));
            for (x, y) in a.iter().zip(b.iter()) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }

        #[test]
        fn assemble_keeps_chroma_bits_and_constant_profiles(
            rows in proptest::collection::vec(proptest::collection::vec(0.0f64..3.0, 12), 1..6),
        ) {
            let t = chroma(ChromaKind::Treble, rows.clone());
            let b = chroma(ChromaKind::Bass, rows.iter().rev().cloned().collect());
            let fm = assemble_input(&t, &b).unwrap();
            for r in 0..fm.frames() {
                prop_assert_eq!(&fm.matrix().row(r)[..12], t.matrix().row(r));
                prop_assert_eq!(&fm.matrix().row(r)[12..24], b.matrix().row(r));
                prop_assert_eq!(&fm.matrix().row(r)[24..], &fm.matrix().row(0)[24..]);
            }
        }
    }
}
