//! Corpus directories: one track per file stem.
//!
//! ```text
//! <stem>.treble.chroma   CHRO1 treble chromagram
//! <stem>.bass.chroma     CHRO1 bass chromagram
//! <stem>.chords.lab      chord intervals (Harte syntax)
//! <stem>.keys.lab        key intervals
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::features::{
    assemble_input, load_chromagram, segment_excerpts, Chromagram, Excerpt, FeatureError,
    FeatureMatrix,
};
use crate::labels::{
    frames_from_intervals, read_lab_file, write_lab_file, HarmonyFrameLabel, IntervalAnnotation,
    LabelError, SubLabel,
};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Features {
        path: PathBuf,
        #[source]
        source: FeatureError,
    },
    #[error("{path}: {source}")]
    Labels {
        path: PathBuf,
        #[source]
        source: LabelError,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("no tracks found in {0}")]
    Empty(PathBuf),
}

fn with_suffix(stem: &Path, suffix: &str) -> PathBuf {
    let mut s = stem.as_os_str().to_os_string();
    s.push(suffix);
    PathBuf::from(s)
}

/// Reads `<stem>.treble.chroma` and `<stem>.bass.chroma` into a feature matrix.
pub fn load_features(stem: &Path) -> Result<FeatureMatrix, CorpusError> {
    let read = |suffix: &str| {
        let path = with_suffix(stem, suffix);
        load_chromagram(&path).map_err(|source| CorpusError::Features { path, source })
    };
    let treble = read(".treble.chroma")?;
    let bass = read(".bass.chroma")?;
    assemble_input(&treble, &bass).map_err(|source| CorpusError::Features {
        path: stem.to_path_buf(),
        source,
    })
}

fn read_lab(path: PathBuf) -> Result<Vec<IntervalAnnotation>, CorpusError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    read_lab_file(&path).map_err(|source| CorpusError::Labels { path, source })
}

/// Loads a labelled track and its frame labels.
pub fn load_track(stem: &Path) -> Result<(FeatureMatrix, Vec<HarmonyFrameLabel>), CorpusError> {
    let features = load_features(stem)?;
    let chords = read_lab(with_suffix(stem, ".chords.lab"))?;
    let keys = read_lab(with_suffix(stem, ".keys.lab"))?;
    let labels = frames_from_intervals(&chords, &keys, features.hop(), features.frames()).map_err(
        |source| CorpusError::Labels {
            path: stem.to_path_buf(),
            source,
        },
    )?;
    Ok((features, labels))
}

/// Every track in `dir`, segmented into excerpts of `excerpt_frames`
/// (ids `<stem>#<index>`), in file-name order.
pub fn load_corpus_dir(
    dir: impl AsRef<Path>,
    excerpt_frames: usize,
) -> Result<Vec<Excerpt>, CorpusError> {
    let dir = dir.as_ref();
    let mut stems: Vec<String> = fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .filter_map(|e| {
            e.file_name()
                .to_str()
                .and_then(|n| n.strip_suffix(".treble.chroma"))
                .map(str::to_string)
        })
        .collect();
    stems.sort();
    if stems.is_empty() {
        return Err(CorpusError::Empty(dir.to_path_buf()));
    }
    let mut out = Vec::new();
    for stem in stems {
        let (features, labels) = load_track(&dir.join(&stem))?;
        let parts = segment_excerpts(&features, &labels, excerpt_frames).map_err(|source| {
            CorpusError::Features {
                path: dir.join(&stem),
                source,
            }
        })?;
        for (i, (features, labels)) in parts.into_iter().enumerate() {
            out.push(Excerpt {
                id: format!("{stem}#{i}"),
                features,
                labels,
            });
        }
    }
    Ok(out)
}

/// Runs of equal values as `[start, end)` intervals in seconds.
fn runs(values: &[String], hop: f64) -> Vec<IntervalAnnotation> {
    let mut out: Vec<IntervalAnnotation> = Vec::new();
    for (t, v) in values.iter().enumerate() {
        match out.last_mut() {
            Some(last) if last.label == *v => last.end = (t + 1) as f64 * hop,
            _ => out.push(IntervalAnnotation {
                start: t as f64 * hop,
                end: (t + 1) as f64 * hop,
                label: v.clone(),
            }),
        }
    }
    out
}

/// Chord and key intervals of a label sequence, merging identical frames.
pub fn excerpt_intervals(
    labels: &[HarmonyFrameLabel],
    hop: f64,
) -> (Vec<IntervalAnnotation>, Vec<IntervalAnnotation>) {
    let chords: Vec<String> = labels.iter().map(|l| l.chord_label()).collect();
    let keys: Vec<String> = labels
        .iter()
        .map(|l| match l.key_root() {
            None => "N".to_string(),
            Some(root) => format!(
                "{}:{}",
                root,
                SubLabel::KeyQuality.class_name(l.class(SubLabel::KeyQuality))
            ),
        })
        .collect();
    (runs(&chords, hop), runs(&keys, hop))
}

/// Writes `<stem>.treble.chroma`, `<stem>.bass.chroma` and, with labels,
/// interval-merged `<stem>.chords.lab` and `<stem>.keys.lab`.
pub fn write_track(
    stem: &Path,
    features: &FeatureMatrix,
    labels: Option<&[HarmonyFrameLabel]>,
) -> Result<(), CorpusError> {
    let save = |c: Chromagram, suffix: &str| {
        let path = with_suffix(stem, suffix);
        c.save(&path)
            .map_err(|source| CorpusError::Features { path, source })
    };
    save(features.treble(), ".treble.chroma")?;
    save(features.bass(), ".bass.chroma")?;
    if let Some(labels) = labels {
        let (chords, keys) = excerpt_intervals(labels, features.hop());
        for (suffix, intervals) in [(".chords.lab", chords), (".keys.lab", keys)] {
            let path = with_suffix(stem, suffix);
            write_lab_file(&path, &intervals)
                .map_err(|source| CorpusError::Labels { path, source })?;
        }
    }
    Ok(())
}

/// Writes each excerpt as a track named after its id.
pub fn write_corpus_dir(dir: impl AsRef<Path>, excerpts: &[Excerpt]) -> Result<(), CorpusError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    for ex in excerpts {
        write_track(&dir.join(&ex.id), &ex.features, Some(&ex.labels))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{synth_corpus, SynthConfig, SynthOptions};

    #[test]
    fn synthetic_corpus_survives_a_directory_round_trip() {
        let corpus = synth_corpus(
            &SynthConfig {
                excerpts: 3,
                frames: 40,
                features: SynthOptions {
                    noise_sd: 0.3,
                    tone_dropout: 0.0,
                },
                ..SynthConfig::default()
            },
            7,
        );
        let dir = tempfile::tempdir().unwrap();
        write_corpus_dir(dir.path(), &corpus).unwrap();
        let back = load_corpus_dir(dir.path(), 40).unwrap();
        assert_eq!(back.len(), 3);
        for (a, b) in corpus.iter().zip(&back) {
            assert_eq!(b.id, format!("{}#0", a.id));
            assert_eq!(a.labels, b.labels);
            assert_eq!(a.features, b.features);
        }
    }

    #[test]
    fn empty_directory_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_corpus_dir(dir.path(), 64),
            Err(CorpusError::Empty(_))
        ));
    }
}
