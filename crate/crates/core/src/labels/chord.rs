//! Harte-syntax chord labels and the 11-class quality vocabulary.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::{LabelError, PitchClass};

/// Reduced chord quality, in class-index order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ChordQuality {
    Maj,
    Min,
    Dim,
    Aug,
    Dom7,
    Maj7,
    Min7,
    Power,
    Single,
    Sus4,
    NoChord,
}

impl ChordQuality {
    pub const ALL: [ChordQuality; 11] = [
        ChordQuality::Maj,
        ChordQuality::Min,
        ChordQuality::Dim,
        ChordQuality::Aug,
        ChordQuality::Dom7,
        ChordQuality::Maj7,
        ChordQuality::Min7,
        ChordQuality::Power,
        ChordQuality::Single,
        ChordQuality::Sus4,
        ChordQuality::NoChord,
    ];

    pub fn class(self) -> usize {
        self as usize
    }

    pub fn from_class(class: usize) -> Option<ChordQuality> {
        Self::ALL.get(class).copied()
    }

    pub fn harte(self) -> &'static str {
        match self {
            ChordQuality::Maj => "maj",
            ChordQuality::Min => "min",
            ChordQuality::Dim => "dim",
            ChordQuality::Aug => "aug",
            ChordQuality::Dom7 => "7",
            ChordQuality::Maj7 => "maj7",
            ChordQuality::Min7 => "min7",
            ChordQuality::Power => "5",
            ChordQuality::Single => "1",
            ChordQuality::Sus4 => "sus4",
            ChordQuality::NoChord => "N",
        }
    }

    /// Root-position chord tones in semitones above the root.
    pub fn intervals(self) -> &'static [u8] {
        match self {
            ChordQuality::Maj => &[0, 4, 7],
            ChordQuality::Min => &[0, 3, 7],
            ChordQuality::Dim => &[0, 3, 6],
            ChordQuality::Aug => &[0, 4, 8],
            ChordQuality::Dom7 => &[0, 4, 7, 10],
            ChordQuality::Maj7 => &[0, 4, 7, 11],
            ChordQuality::Min7 => &[0, 3, 7, 10],
            ChordQuality::Power => &[0, 7],
            ChordQuality::Single => &[0],
            ChordQuality::Sus4 => &[0, 5, 7],
            ChordQuality::NoChord => &[],
        }
    }

    /// 12-bit pitch-class set relative to the root (bit `i` = `i` semitones).
    pub fn bitmap(self) -> u16 {
        self.intervals().iter().fold(0, |acc, &i| acc | (1 << i))
    }

    fn extended(self) -> ExtendedQuality {
        match self {
            ChordQuality::Maj => ExtendedQuality::Maj,
            ChordQuality::Min => ExtendedQuality::Min,
            ChordQuality::Dim => ExtendedQuality::Dim,
            ChordQuality::Aug => ExtendedQuality::Aug,
            ChordQuality::Dom7 => ExtendedQuality::Dom7,
            ChordQuality::Maj7 => ExtendedQuality::Maj7,
            ChordQuality::Min7 => ExtendedQuality::Min7,
            ChordQuality::Power => ExtendedQuality::Power,
            ChordQuality::Single => ExtendedQuality::Single,
            ChordQuality::Sus4 => ExtendedQuality::Sus4,
            ChordQuality::NoChord => ExtendedQuality::NoChord,
        }
    }
}

impl fmt::Display for ChordQuality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.harte())
    }
}

/// Harte shorthand qualities before reduction.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ExtendedQuality {
    Maj,
    Min,
    Dim,
    Aug,
    Maj7,
    Min7,
    Dom7,
    Dim7,
    HalfDim7,
    MinMaj7,
    Maj6,
    Min6,
    Dom9,
    Maj9,
    Min9,
    Dom11,
    Min11,
    Dom13,
    Maj13,
    Min13,
    Sus2,
    Sus4,
    Power,
    Single,
    NoChord,
    /// Syntactically valid shorthand outside the known vocabulary.
    Other(String),
}

const SHORTHANDS: [(&str, ExtendedQuality); 24] = [
    ("maj", ExtendedQuality::Maj),
    ("min", ExtendedQuality::Min),
    ("dim", ExtendedQuality::Dim),
    ("aug", ExtendedQuality::Aug),
    ("maj7", ExtendedQuality::Maj7),
    ("min7", ExtendedQuality::Min7),
    ("7", ExtendedQuality::Dom7),
    ("dim7", ExtendedQuality::Dim7),
    ("hdim7", ExtendedQuality::HalfDim7),
    ("minmaj7", ExtendedQuality::MinMaj7),
    ("maj6", ExtendedQuality::Maj6),
    ("min6", ExtendedQuality::Min6),
    ("9", ExtendedQuality::Dom9),
    ("maj9", ExtendedQuality::Maj9),
    ("min9", ExtendedQuality::Min9),
    ("11", ExtendedQuality::Dom11),
    ("min11", ExtendedQuality::Min11),
    ("13", ExtendedQuality::Dom13),
    ("maj13", ExtendedQuality::Maj13),
    ("min13", ExtendedQuality::Min13),
    ("sus2", ExtendedQuality::Sus2),
    ("sus4", ExtendedQuality::Sus4),
    ("5", ExtendedQuality::Power),
    ("1", ExtendedQuality::Single),
];

impl ExtendedQuality {
    pub fn from_shorthand(s: &str) -> ExtendedQuality {
        SHORTHANDS
            .iter()
            .find(|(name, _)| *name == s)
            .map_or_else(|| ExtendedQuality::Other(s.to_string()), |(_, q)| q.clone())
    }

    /// Chord tones as `(degree, semitones)`; a bare bass degree that names
    /// one of these resolves to the chord's own tone.
    fn degree_tones(&self) -> &'static [(u8, u8)] {
        use ExtendedQuality::*;
        match self {
            Maj | Other(_) => &[(1, 0), (3, 4), (5, 7)],
            Maj6 => &[(1, 0), (3, 4), (5, 7), (6, 9)],
            Sus2 => &[(1, 0), (2, 2), (5, 7)],
            Sus4 => &[(1, 0), (4, 5), (5, 7)],
            Power => &[(1, 0), (5, 7)],
            Single | NoChord => &[(1, 0)],
            Min => &[(1, 0), (3, 3), (5, 7)],
            Dim => &[(1, 0), (3, 3), (5, 6)],
            Aug => &[(1, 0), (3, 4), (5, 8)],
            Maj7 => &[(1, 0), (3, 4), (5, 7), (7, 11)],
            Min7 => &[(1, 0), (3, 3), (5, 7), (7, 10)],
            Dom7 => &[(1, 0), (3, 4), (5, 7), (7, 10)],
            Dim7 => &[(1, 0), (3, 3), (5, 6), (7, 9)],
            HalfDim7 => &[(1, 0), (3, 3), (5, 6), (7, 10)],
            MinMaj7 => &[(1, 0), (3, 3), (5, 7), (7, 11)],
            Min6 => &[(1, 0), (3, 3), (5, 7), (6, 9)],
            Dom9 => &[(1, 0), (3, 4), (5, 7), (7, 10), (9, 2)],
            Maj9 => &[(1, 0), (3, 4), (5, 7), (7, 11), (9, 2)],
            Min9 => &[(1, 0), (3, 3), (5, 7), (7, 10), (9, 2)],
            Dom11 => &[(1, 0), (3, 4), (5, 7), (7, 10), (9, 2), (11, 5)],
            Min11 => &[(1, 0), (3, 3), (5, 7), (7, 10), (9, 2), (11, 5)],
            Dom13 => &[(1, 0), (3, 4), (5, 7), (7, 10), (9, 2), (11, 5), (13, 9)],
            Maj13 => &[(1, 0), (3, 4), (5, 7), (7, 11), (9, 2), (11, 5), (13, 9)],
            Min13 => &[(1, 0), (3, 3), (5, 7), (7, 10), (9, 2), (11, 5), (13, 9)],
        }
    }
}

/// How [`reduce_quality_with`] treats shorthands outside the vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum QualityFallback {
    #[default]
    Error,
    Major,
}

/// Maps an extended quality onto the 11-class vocabulary; unknown
/// qualities are an error.
pub fn reduce_quality(quality: &ExtendedQuality) -> Result<ChordQuality, LabelError> {
    reduce_quality_with(quality, QualityFallback::Error)
}

pub fn reduce_quality_with(
    quality: &ExtendedQuality,
    fallback: QualityFallback,
) -> Result<ChordQuality, LabelError> {
    use ExtendedQuality as E;
    Ok(match quality {
        E::Maj | E::Maj6 | E::Dom9 | E::Dom11 | E::Dom13 | E::Maj9 | E::Maj13 | E::Sus2 => {
            ChordQuality::Maj
        }
        E::Min | E::Min6 | E::MinMaj7 | E::Min9 | E::Min11 | E::Min13 => ChordQuality::Min,
        E::Dim | E::Dim7 | E::HalfDim7 => ChordQuality::Dim,
        E::Aug => ChordQuality::Aug,
        E::Dom7 => ChordQuality::Dom7,
        E::Maj7 => ChordQuality::Maj7,
        E::Min7 => ChordQuality::Min7,
        E::Power => ChordQuality::Power,
        E::Single => ChordQuality::Single,
        E::Sus4 => ChordQuality::Sus4,
        E::NoChord => ChordQuality::NoChord,
        E::Other(name) => match fallback {
            QualityFallback::Error => return Err(LabelError::UnknownQuality(name.clone())),
            QualityFallback::Major => ChordQuality::Maj,
        },
    })
}

/// Result of parsing one Harte chord label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedChord {
    /// `None` for the no-chord label.
    pub root: Option<PitchClass>,
    pub quality: ExtendedQuality,
    /// Bass note in semitones above the root, 0-11.
    pub bass_interval: u8,
}

impl ParsedChord {
    pub fn no_chord() -> Self {
        ParsedChord {
            root: None,
            quality: ExtendedQuality::NoChord,
            bass_interval: 0,
        }
    }

    pub fn is_no_chord(&self) -> bool {
        self.root.is_none()
    }
}

const MAJOR_SCALE: [i32; 7] = [0, 2, 4, 5, 7, 9, 11];

/// Parses `root[:quality][(ext,...)][/degree]`, `N`, or `X` (treated as no
/// chord).
pub fn parse_chord_label(text: &str) -> Result<ParsedChord, LabelError> {
    let text = text.trim();
    if text == "N" || text == "X" {
        return Ok(ParsedChord::no_chord());
    }
    let malformed = |token: &str| LabelError::MalformedChord {
        label: text.to_string(),
        token: token.to_string(),
    };

    let (body, bass) = match text.split_once('/') {
        Some((body, bass)) => (body, Some(bass)),
        None => (text, None),
    };
    let (root_str, quality_str) = match body.split_once(':') {
        Some((r, q)) => (r, Some(q)),
        None => (body, None),
    };
    let root: PitchClass = root_str.parse().map_err(|_| malformed(root_str))?;

    let quality = match quality_str {
        None => ExtendedQuality::Maj,
        Some(q) => {
            let (shorthand, degrees) = match q.find('(') {
                Some(open) => {
                    let list = q[open..]
                        .strip_prefix('(')
                        .and_then(|s| s.strip_suffix(')'))
                        .ok_or_else(|| malformed(&q[open..]))?;
                    (&q[..open], Some(list))
                }
                None => (q, None),
            };
            if let Some(list) = degrees {
                for item in list.split(',') {
                    let item = item.trim().trim_start_matches('*');
                    parse_degree(item).ok_or_else(|| malformed(item))?;
                }
            }
            if shorthand.is_empty() {
                quality_from_degree_list(degrees.unwrap_or(""))
            } else if shorthand.chars().all(|c| c.is_ascii_alphanumeric()) {
                ExtendedQuality::from_shorthand(shorthand)
            } else {
                return Err(malformed(shorthand));
            }
        }
    };

    let bass_interval = match bass {
        None => 0,
        Some(degree) => degree_to_semitone(degree, &quality).ok_or_else(|| malformed(degree))?,
    };
    Ok(ParsedChord {
        root: Some(root),
        quality,
        bass_interval,
    })
}

/// `(sharps - flats, degree number)`.
fn parse_degree(s: &str) -> Option<(i32, u8)> {
    let digits_at = s.find(|c: char| c.is_ascii_digit())?;
    let (accidentals, number) = s.split_at(digits_at);
    let mut shift = 0;
    for c in accidentals.chars() {
        match c {
            '#' => shift += 1,
            'b' => shift -= 1,
            _ => return None,
        }
    }
    let n: u8 = number.parse().ok()?;
    (1..=13).contains(&n).then_some((shift, n))
}

fn major_scale_semitone(n: u8) -> i32 {
    let i = (n - 1) as usize;
    MAJOR_SCALE[i % 7] + 12 * (i / 7) as i32
}

/// A bare degree resolves through the chord's own tones when the quality
/// has that degree (so `min/3` is the minor third); otherwise degrees are
/// counted on the major scale.
fn degree_to_semitone(s: &str, quality: &ExtendedQuality) -> Option<u8> {
    let (shift, n) = parse_degree(s)?;
    let base = if shift == 0 {
        quality
            .degree_tones()
            .iter()
            .find(|(d, _)| *d == n)
            .map_or_else(|| major_scale_semitone(n), |&(_, st)| st as i32)
    } else {
        major_scale_semitone(n)
    };
    Some((base + shift).rem_euclid(12) as u8)
}

fn quality_from_degree_list(list: &str) -> ExtendedQuality {
    let mut bits: u16 = 1;
    for item in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let omit = item.starts_with('*');
        let Some((shift, n)) = parse_degree(item.trim_start_matches('*')) else {
            continue;
        };
        let st = (major_scale_semitone(n) + shift).rem_euclid(12);
        if omit {
            bits &= !(1 << st);
        } else {
            bits |= 1 << st;
        }
    }
    ChordQuality::ALL
        .into_iter()
        .filter(|q| *q != ChordQuality::NoChord)
        .find(|q| q.bitmap() == bits)
        .map_or_else(
            || ExtendedQuality::Other(format!("({list})")),
            ChordQuality::extended,
        )
}

/// Spells `root:quality[/degree]`. The bass degree is chosen so that both
/// this module's parser and strict major-scale readers recover the same
/// interval.
pub fn format_chord_label(root: PitchClass, quality: ChordQuality, bass_interval: u8) -> String {
    if quality == ChordQuality::NoChord {
        return "N".to_string();
    }
    let mut label = format!("{}:{}", root.name(), quality.harte());
    let bass = bass_interval % 12;
    if bass != 0 {
        label.push('/');
        label.push_str(&bass_degree_spelling(bass, &quality.extended()));
    }
    label
}

fn bass_degree_spelling(bass: u8, quality: &ExtendedQuality) -> String {
    const SPELLINGS: [[&str; 2]; 12] = [
        ["1", "bb2"],
        ["b2", "#1"],
        ["2", "bb3"],
        ["b3", "#2"],
        ["3", "b4"],
        ["4", "#3"],
        ["b5", "#4"],
        ["5", "bb6"],
        ["b6", "#5"],
        ["6", "bb7"],
        ["b7", "#6"],
        ["7", "b8"],
    ];
    // The second spelling always carries an accidental, so it never
    // resolves through the chord template.
    let [plain, accidental] = SPELLINGS[bass as usize];
    if degree_to_semitone(plain, quality) == Some(bass) {
        plain.to_string()
    } else {
        accidental.to_string()
    }
}
