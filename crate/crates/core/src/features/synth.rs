//! Synthetic excerpts with known harmony, for training sanity checks and
//! oracle experiments.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Excerpt, FeatureMatrix, CHROMA_BINS, DEFAULT_HOP};
use crate::labels::{ChordQuality, HarmonyFrameLabel, KeyQuality, PitchClass};
use crate::tensor::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthOptions {
    /// Standard deviation of the additive Gaussian noise (clipped at 0).
    pub noise_sd: f64,
    /// Probability that a non-root chord tone is missing for a whole chord
    /// segment, which makes the quality ambiguous from the chroma alone.
    pub tone_dropout: f64,
}

impl Default for SynthOptions {
    fn default() -> Self {
        SynthOptions {
            noise_sd: 0.0,
            tone_dropout: 0.0,
        }
    }
}

/// Treble chroma is the chord template, bass chroma a one-hot at the bass
/// pitch class, both plus clipped Gaussian noise. N frames are silent
/// before noise.
pub fn synth_excerpt(
    labels: &[HarmonyFrameLabel],
    noise_sd: f64,
    seed: u64,
) -> (FeatureMatrix, Vec<HarmonyFrameLabel>) {
    synth_excerpt_with(
        labels,
        &SynthOptions {
            noise_sd,
            tone_dropout: 0.0,
        },
        seed,
    )
}

pub fn synth_excerpt_with(
    labels: &[HarmonyFrameLabel],
    options: &SynthOptions,
    seed: u64,
) -> (FeatureMatrix, Vec<HarmonyFrameLabel>) {
    assert!(options.noise_sd >= 0.0, "noise_sd must be non-negative");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t = labels.len();
    let mut block = Matrix::zeros(t, 2 * CHROMA_BINS);
    let mut dropped: Vec<u8> = Vec::new();
    for (i, label) in labels.iter().enumerate() {
        let chord_changed = i == 0 || labels[i - 1] != *label;
        let Some(root) = label.chord_root() else {
            continue;
        };
        let quality = label.chord_quality();
        if chord_changed {
            dropped.clear();
            if options.tone_dropout > 0.0 {
                for &interval in &quality.intervals()[1..] {
                    if rng.random::<f64>() < options.tone_dropout {
                        dropped.push(interval);
                    }
                }
            }
        }
        let row = block.row_mut(i);
        for &interval in quality.intervals() {
            if !dropped.contains(&interval) {
                row[root.transpose(interval as i32).index()] = 1.0;
            }
        }
        let bass = root.transpose(label.bass_number().unwrap_or(0) as i32);
        row[CHROMA_BINS + bass.index()] = 1.0;
    }
    if options.noise_sd > 0.0 {
        let normal = Normal::new(0.0, options.noise_sd).expect("finite sd");
        for v in block.as_mut_slice() {
            *v = (*v + normal.sample(&mut rng)).max(0.0);
        }
    }
    let fm = FeatureMatrix::from_chroma_block(&block, DEFAULT_HOP).expect("24 columns");
    (fm, labels.to_vec())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProgressionConfig {
    pub min_chord_frames: usize,
    pub max_chord_frames: usize,
    pub major_key_prob: f64,
    pub inversion_prob: f64,
    pub no_chord_prob: f64,
}

impl Default for ProgressionConfig {
    fn default() -> Self {
        ProgressionConfig {
            min_chord_frames: 4,
            max_chord_frames: 12,
            major_key_prob: 0.6,
            inversion_prob: 0.15,
            no_chord_prob: 0.05,
        }
    }
}

/// Scale degrees (semitones above the tonic), the quality each degree
/// always takes, and its sampling weight. Quality is a deterministic
/// function of key quality and droot.
const MAJOR_DEGREES: [(u8, ChordQuality, f64); 6] = [
    (0, ChordQuality::Maj, 3.0),
    (5, ChordQuality::Maj, 2.0),
    (7, ChordQuality::Dom7, 2.0),
    (9, ChordQuality::Min, 1.5),
    (2, ChordQuality::Min, 1.0),
    (4, ChordQuality::Min, 0.5),
];

const MINOR_DEGREES: [(u8, ChordQuality, f64); 6] = [
    (0, ChordQuality::Min, 3.0),
    (5, ChordQuality::Min, 2.0),
    (7, ChordQuality::Dom7, 2.0),
    (8, ChordQuality::Maj, 1.5),
    (3, ChordQuality::Maj, 1.0),
    (10, ChordQuality::Maj, 1.0),
];

fn pick_degree<R: Rng>(rng: &mut R, table: &[(u8, ChordQuality, f64)]) -> usize {
    let total: f64 = table.iter().map(|d| d.2).sum();
    let mut x = rng.random::<f64>() * total;
    for (i, d) in table.iter().enumerate() {
        if x < d.2 {
            return i;
        }
        x -= d.2;
    }
    table.len() - 1
}

/// One key per excerpt, diatonic chord segments with random durations.
pub fn generate_progression<R: Rng>(
    frames: usize,
    config: &ProgressionConfig,
    rng: &mut R,
) -> Vec<HarmonyFrameLabel> {
    assert!(config.min_chord_frames >= 1 && config.min_chord_frames <= config.max_chord_frames);
    let key_root = PitchClass::new(rng.random_range(0..12));
    let key_quality = if rng.random::<f64>() < config.major_key_prob {
        KeyQuality::Major
    } else {
        KeyQuality::Minor
    };
    let table: &[(u8, ChordQuality, f64)] = match key_quality {
        KeyQuality::Major => &MAJOR_DEGREES,
        KeyQuality::Minor => &MINOR_DEGREES,
    };
    let key = Some((key_root, key_quality));
    let mut out = Vec::with_capacity(frames);
    let mut previous = usize::MAX;
    while out.len() < frames {
        let len = rng.random_range(config.min_chord_frames..=config.max_chord_frames);
        let label = if rng.random::<f64>() < config.no_chord_prob {
            previous = usize::MAX;
            HarmonyFrameLabel::new(key, None)
        } else {
            let mut degree = pick_degree(rng, table);
            if degree == previous {
                degree = pick_degree(rng, table);
            }
            previous = degree;
            let (offset, quality, _) = table[degree];
            let bass = if rng.random::<f64>() < config.inversion_prob {
                quality.intervals()[1]
            } else {
                0
            };
            HarmonyFrameLabel::new(
                key,
                Some((key_root.transpose(offset as i32), quality, bass)),
            )
        };
        let take = len.min(frames - out.len());
        out.extend(std::iter::repeat_n(label, take));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub excerpts: usize,
    pub frames: usize,
    pub progression: ProgressionConfig,
    pub features: SynthOptions,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            excerpts: 230,
            frames: 64,
            progression: ProgressionConfig::default(),
            features: SynthOptions::default(),
        }
    }
}

/// Deterministic synthetic corpus; excerpt `i` is named `synth-{i:04}`.
pub fn synth_corpus(config: &SynthConfig, seed: u64) -> Vec<Excerpt> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..config.excerpts)
        .map(|i| {
            let labels = generate_progression(config.frames, &config.progression, &mut rng);
            let (features, labels) = synth_excerpt_with(&labels, &config.features, rng.random());
            Excerpt {
                id: format!("synth-{i:04}"),
                features,
                labels,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labels::SubLabel;

    fn c_major_chord() -> HarmonyFrameLabel {
        let c = PitchClass::new(0);
        HarmonyFrameLabel::new(
            Some((c, KeyQuality::Major)),
            Some((c, ChordQuality::Maj, 0)),
        )
    }

    #[test]
    fn noise_free_template() {
        let (fm, _) = synth_excerpt(&[c_major_chord()], 0.0, 1);
        let row = fm.matrix().row(0);
        let active: Vec<usize> = (0..12).filter(|&i| row[i] > 0.0).collect();
        assert_eq!(active, vec![0, 4, 7]);
        assert_eq!(row[12], 1.0);
        assert_eq!(row[12..24].iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn inversion_moves_bass() {
        let g = PitchClass::new(7);
        let label = HarmonyFrameLabel::new(None, Some((g, ChordQuality::Dom7, 4)));
        let (fm, _) = synth_excerpt(&[label], 0.0, 1);
        assert_eq!(fm.matrix().get(0, 12 + 11), 1.0);
    }

    #[test]
    fn no_chord_is_silent() {
        let (fm, _) = synth_excerpt(&[HarmonyFrameLabel::none()], 0.0, 3);
        assert!(fm.matrix().row(0)[..24].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn same_seed_same_features() {
        let labels = vec![c_major_chord(); 8];
        let a = synth_excerpt(&labels, 0.4, 9);
        let b = synth_excerpt(&labels, 0.4, 9);
        assert_eq!(a, b);
        assert!(a.0.matrix().as_slice().iter().all(|&v| v >= 0.0));
        let c = synth_excerpt(&labels, 0.4, 10);
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn progressions_are_consistent_and_correlated() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let labels = generate_progression(64, &ProgressionConfig::default(), &mut rng);
            assert_eq!(labels.len(), 64);
            for l in &labels {
                assert!(l.is_consistent());
                if l.droot() == Some(7) {
                    assert_eq!(l.chord_quality(), ChordQuality::Dom7);
                }
            }
            assert!(labels
                .windows(2)
                .all(|w| w[0].class(SubLabel::KeyRoot) == w[1].class(SubLabel::KeyRoot)));
        }
    }

    #[test]
    fn noise_free_corpus_is_template_classifiable() {
        let corpus = synth_corpus(
            &SynthConfig {
                excerpts: 10,
                ..SynthConfig::default()
            },
            2,
        );
        for ex in &corpus {
            for (t, label) in ex.labels.iter().enumerate() {
                let row = ex.features.matrix().row(t);
                let active: u16 = (0..12)
                    .filter(|&i| row[i] > 0.0)
                    .fold(0, |acc, i| acc | 1 << i);
                let matches: Vec<(usize, ChordQuality)> = (0..12)
                    .flat_map(|r| ChordQuality::ALL[..10].iter().map(move |&q| (r, q)))
                    .filter(|&(r, q)| {
                        let bits = q.bitmap();
                        let rotated = ((bits << r) | (bits >> (12 - r))) & 0xfff;
                        rotated == active
                    })
                    .collect();
                match label.chord_root() {
                    None => assert!(matches.is_empty()),
                    Some(root) => {
                        assert_eq!(matches, vec![(root.index(), label.chord_quality())])
                    }
                }
            }
        }
    }
}
