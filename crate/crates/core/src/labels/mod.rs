//! Harmony labels: pitch classes, chord qualities, and the six-part frame
//! encoding used as the NADE's visible layer.
//!
//! | sub-label     | classes | index of N |
//! |---------------|---------|------------|
//! | key root      | 13      | 12         |
//! | key quality   | 3       | 2          |
//! | chord root    | 13      | 12         |
//! | droot         | 13      | 12         |
//! | chord quality | 11      | 10         |
//! | bass number   | 13      | 12         |

mod annotation;
mod chord;
mod key;

pub use annotation::{
    frames_from_intervals, parse_lab, read_lab_file, write_lab_file, IntervalAnnotation,
};
pub use chord::{
    format_chord_label, parse_chord_label, reduce_quality, reduce_quality_with, ChordQuality,
    ExtendedQuality, ParsedChord, QualityFallback,
};
pub use key::{compute_droot, infer_key_quality, parse_key_label, KeyLabel, KeyQuality};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone)]
pub enum LabelError {
    #[error("malformed chord label {label:?}: bad token {token:?}")]
    MalformedChord { label: String, token: String },
    #[error("malformed key label {0:?}")]
    MalformedKey(String),
    #[error("unknown pitch name {0:?}")]
    UnknownPitch(String),
    #[error("chord quality {0:?} has no reduction")]
    UnknownQuality(String),
    #[error("no tonic chords to infer the key quality from")]
    NoTonicChords,
    #[error("class {class} out of range for {sub}")]
    ClassOutOfRange { sub: SubLabel, class: usize },
    #[error("inconsistent frame label: {0}")]
    Inconsistent(&'static str),
    #[error("line {line}: {reason}")]
    LabFormat { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::sync::Arc<std::io::Error>),
}

impl From<std::io::Error> for LabelError {
    fn from(e: std::io::Error) -> Self {
        LabelError::Io(std::sync::Arc::new(e))
    }
}

/// Pitch class, C = 0 through B = 11.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PitchClass(u8);

const SHARP_NAMES: [&str; 12] = [
    "C", "C#", "D", "D#", "E", "F", "F#", "G", "G#", "A", "A#", "B",
];

impl PitchClass {
    pub fn new(value: u8) -> Self {
        PitchClass(value % 12)
    }

    pub fn value(self) -> u8 {
        self.0
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn transpose(self, semitones: i32) -> Self {
        PitchClass((self.0 as i32 + semitones).rem_euclid(12) as u8)
    }

    pub fn name(self) -> &'static str {
        SHARP_NAMES[self.0 as usize]
    }
}

impl fmt::Display for PitchClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PitchClass {
    type Err = LabelError;

    /// Letter name followed by any number of `#` / `b` modifiers;
    /// enharmonic spellings collapse.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut chars = s.chars();
        let base: i32 = match chars.next() {
            Some('C') => 0,
            Some('D') => 2,
            Some('E') => 4,
            Some('F') => 5,
            Some('G') => 7,
            Some('A') => 9,
            Some('B') => 11,
            _ => return Err(LabelError::UnknownPitch(s.to_string())),
        };
        let mut offset = 0;
        for c in chars {
            match c {
                '#' => offset += 1,
                'b' => offset -= 1,
                _ => return Err(LabelError::UnknownPitch(s.to_string())),
            }
        }
        Ok(PitchClass::new(0).transpose(base + offset))
    }
}

/// One of the six per-frame sub-labels, in visiting order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubLabel {
    KeyRoot,
    KeyQuality,
    ChordRoot,
    Droot,
    ChordQuality,
    BassNumber,
}

pub const CARDINALITIES: [usize; 6] = [13, 3, 13, 13, 11, 13];
/// Total one-hot width of a frame label.
pub const VISIBLE_UNITS: usize = 66;
pub const SUBLABEL_COUNT: usize = 6;

impl SubLabel {
    pub const ALL: [SubLabel; 6] = [
        SubLabel::KeyRoot,
        SubLabel::KeyQuality,
        SubLabel::ChordRoot,
        SubLabel::Droot,
        SubLabel::ChordQuality,
        SubLabel::BassNumber,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<SubLabel> {
        Self::ALL.get(i).copied()
    }

    pub fn cardinality(self) -> usize {
        CARDINALITIES[self.index()]
    }

    /// Offset of this sub-label's segment in the 66-unit visible layer.
    pub fn offset(self) -> usize {
        CARDINALITIES[..self.index()].iter().sum()
    }

    /// Class index meaning "no annotation".
    pub fn none_class(self) -> usize {
        self.cardinality() - 1
    }

    pub fn name(self) -> &'static str {
        match self {
            SubLabel::KeyRoot => "key_root",
            SubLabel::KeyQuality => "key_quality",
            SubLabel::ChordRoot => "chord_root",
            SubLabel::Droot => "droot",
            SubLabel::ChordQuality => "chord_quality",
            SubLabel::BassNumber => "bass_number",
        }
    }

    /// Human-readable class name, e.g. `"F#"`, `"minor"`, `"maj7"`, `"-1"`.
    pub fn class_name(self, class: usize) -> String {
        match self {
            SubLabel::KeyRoot | SubLabel::ChordRoot => match class {
                0..=11 => SHARP_NAMES[class].to_string(),
                _ => "N".to_string(),
            },
            SubLabel::KeyQuality => match class {
                0 => "major".into(),
                1 => "minor".into(),
                _ => "N".into(),
            },
            SubLabel::Droot | SubLabel::BassNumber => match class {
                0..=11 => class.to_string(),
                _ => "-1".into(),
            },
            SubLabel::ChordQuality => ChordQuality::from_class(class)
                .map_or_else(|| "?".into(), |q| q.harte().to_string()),
        }
    }
}

impl fmt::Display for SubLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SubLabel {
    type Err = LabelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SubLabel::ALL
            .into_iter()
            .find(|sub| sub.name() == s)
            .ok_or_else(|| LabelError::MalformedKey(s.to_string()))
    }
}

/// Class indices for the six sub-labels of one frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HarmonyFrameLabel([u8; 6]);

impl HarmonyFrameLabel {
    /// All six sub-labels set to their N class.
    pub fn none() -> Self {
        HarmonyFrameLabel([12, 2, 12, 12, 10, 12])
    }

    /// Builds a label from its musical parts; the droot is derived.
    pub fn new(
        key: Option<(PitchClass, KeyQuality)>,
        chord: Option<(PitchClass, ChordQuality, u8)>,
    ) -> Self {
        let mut label = Self::none();
        if let Some((root, quality)) = key {
            label.0[0] = root.value();
            label.0[1] = quality.class() as u8;
        }
        if let Some((root, quality, bass)) = chord {
            if quality != ChordQuality::NoChord {
                label.0[2] = root.value();
                label.0[4] = quality.class() as u8;
                label.0[5] = bass % 12;
            }
        }
        label.0[3] = compute_droot(label.key_root(), label.chord_root()) as u8;
        label
    }

    /// Validates class ranges only; see [`is_consistent`](Self::is_consistent).
    pub fn from_classes(classes: [usize; 6]) -> Result<Self, LabelError> {
        let mut out = [0u8; 6];
        for sub in SubLabel::ALL {
            let class = classes[sub.index()];
            if class >= sub.cardinality() {
                return Err(LabelError::ClassOutOfRange { sub, class });
            }
            out[sub.index()] = class as u8;
        }
        Ok(HarmonyFrameLabel(out))
    }

    pub fn classes(&self) -> [usize; 6] {
        self.0.map(usize::from)
    }

    pub fn class(&self, sub: SubLabel) -> usize {
        self.0[sub.index()] as usize
    }

    pub fn with_class(mut self, sub: SubLabel, class: usize) -> Result<Self, LabelError> {
        if class >= sub.cardinality() {
            return Err(LabelError::ClassOutOfRange { sub, class });
        }
        self.0[sub.index()] = class as u8;
        Ok(self)
    }

    pub fn key_root(&self) -> Option<PitchClass> {
        (self.0[0] < 12).then(|| PitchClass(self.0[0]))
    }

    pub fn key_quality(&self) -> Option<KeyQuality> {
        KeyQuality::from_class(self.0[1] as usize)
    }

    pub fn chord_root(&self) -> Option<PitchClass> {
        (self.0[2] < 12).then(|| PitchClass(self.0[2]))
    }

    pub fn droot(&self) -> Option<u8> {
        (self.0[3] < 12).then_some(self.0[3])
    }

    pub fn chord_quality(&self) -> ChordQuality {
        ChordQuality::from_class(self.0[4] as usize).unwrap_or(ChordQuality::NoChord)
    }

    pub fn bass_number(&self) -> Option<u8> {
        (self.0[5] < 12).then_some(self.0[5])
    }

    /// Checks the cross-sub-label invariants: droot agrees with the roots,
    /// and a no-chord quality comes with N root and N bass (and vice versa).
    pub fn is_consistent(&self) -> bool {
        let expected_droot = compute_droot(self.key_root(), self.chord_root());
        let no_chord = self.chord_quality() == ChordQuality::NoChord;
        let key_ok = self.key_root().is_some() == self.key_quality().is_some();
        self.class(SubLabel::Droot) == expected_droot
            && no_chord == self.chord_root().is_none()
            && no_chord == self.bass_number().is_none()
            && key_ok
    }

    /// 66-unit one-hot encoding.
    pub fn one_hot(&self) -> [f64; VISIBLE_UNITS] {
        let mut out = [0.0; VISIBLE_UNITS];
        for sub in SubLabel::ALL {
            out[sub.offset() + self.class(sub)] = 1.0;
        }
        out
    }

    /// Inverse of [`one_hot`](Self::one_hot); each segment must hold exactly
    /// one unit set to 1.
    pub fn from_one_hot(units: &[f64]) -> Result<Self, LabelError> {
        if units.len() != VISIBLE_UNITS {
            return Err(LabelError::Inconsistent("one-hot width must be 66"));
        }
        let mut classes = [0usize; 6];
        for sub in SubLabel::ALL {
            let seg = &units[sub.offset()..sub.offset() + sub.cardinality()];
            let ones: Vec<usize> = seg
                .iter()
                .enumerate()
                .filter(|(_, &v)| v == 1.0)
                .map(|(i, _)| i)
                .collect();
            if ones.len() != 1 || seg.iter().any(|&v| v != 0.0 && v != 1.0) {
                return Err(LabelError::Inconsistent("segment is not one-hot"));
            }
            classes[sub.index()] = ones[0];
        }
        Self::from_classes(classes)
    }

    /// Chord part in Harte syntax, `"N"` when there is no chord.
    pub fn chord_label(&self) -> String {
        match self.chord_root() {
            Some(root) => {
                format_chord_label(root, self.chord_quality(), self.bass_number().unwrap_or(0))
            }
            None => "N".to_string(),
        }
    }
}

impl Default for HarmonyFrameLabel {
    fn default() -> Self {
        Self::none()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cardinalities_match_the_label_table() {
        let cards: Vec<usize> = SubLabel::ALL.iter().map(|s| s.cardinality()).collect();
        assert_eq!(cards, vec![13, 3, 13, 13, 11, 13]);
        assert_eq!(CARDINALITIES.iter().sum::<usize>(), VISIBLE_UNITS);
        assert_eq!(SubLabel::BassNumber.offset(), 53);
    }

    #[test]
    fn pitch_names_collapse_enharmonics() {
        for (name, pc) in [
            ("C", 0),
            ("B#", 0),
            ("Db", 1),
            ("C#", 1),
            ("Cb", 11),
            ("F##", 7),
            ("Abb", 7),
        ] {
            assert_eq!(name.parse::<PitchClass>().unwrap().value(), pc, "{name}");
        }
        assert!("H".parse::<PitchClass>().is_err());
        assert!("Cx".parse::<PitchClass>().is_err());
    }

    #[test]
    fn one_hot_round_trip_over_every_legal_label() {
        let mut count = 0;
        for key_root in 0..13 {
            for key_quality in 0..3 {
                for chord_root in 0..13 {
                    for quality in 0..11 {
                        for bass in 0..13 {
                            let droot = compute_droot(
                                (key_root < 12).then(|| PitchClass::new(key_root as u8)),
                                (chord_root < 12).then(|| PitchClass::new(chord_root as u8)),
                            );
                            let label = HarmonyFrameLabel::from_classes([
                                key_root,
                                key_quality,
                                chord_root,
                                droot,
                                quality,
                                bass,
                            ])
                            .unwrap();
                            let back = HarmonyFrameLabel::from_one_hot(&label.one_hot()).unwrap();
                            assert_eq!(back, label);
                            count += 1;
                        }
                    }
                }
            }
        }
        assert_eq!(count, 13 * 3 * 13 * 11 * 13);
    }

    #[test]
    fn new_derives_droot_and_n_classes() {
        let c = PitchClass::new(0);
        let g = PitchClass::new(7);
        let label = HarmonyFrameLabel::new(
            Some((c, KeyQuality::Major)),
            Some((g, ChordQuality::Dom7, 4)),
        );
        assert_eq!(label.classes(), [0, 0, 7, 7, 4, 4]);
        assert!(label.is_consistent());
        let silent = HarmonyFrameLabel::new(Some((c, KeyQuality::Major)), None);
        assert_eq!(silent.classes(), [0, 0, 12, 12, 10, 12]);
        assert!(silent.is_consistent());
        assert!(HarmonyFrameLabel::none().is_consistent());
        let bad = HarmonyFrameLabel::from_classes([0, 0, 7, 3, 0, 0]).unwrap();
        assert!(!bad.is_consistent());
        assert!(HarmonyFrameLabel::from_classes([0, 3, 0, 0, 0, 0]).is_err());
    }

    #[test]
    fn class_names() {
        assert_eq!(SubLabel::KeyRoot.class_name(6), "F#");
        assert_eq!(SubLabel::KeyQuality.class_name(1), "minor");
        assert_eq!(SubLabel::Droot.class_name(12), "-1");
        assert_eq!(SubLabel::ChordQuality.class_name(4), "7");
        assert_eq!(
            "chord_quality".parse::<SubLabel>().unwrap(),
            SubLabel::ChordQuality
        );
    }
}
