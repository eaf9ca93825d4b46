use serde::{Deserialize, Serialize};

use super::{ChordQuality, HarmonyFrameLabel, LabelError, PitchClass};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum KeyQuality {
    Major,
    Minor,
}

impl KeyQuality {
    pub fn class(self) -> usize {
        match self {
            KeyQuality::Major => 0,
            KeyQuality::Minor => 1,
        }
    }

    pub fn from_class(class: usize) -> Option<KeyQuality> {
        match class {
            0 => Some(KeyQuality::Major),
            1 => Some(KeyQuality::Minor),
            _ => None,
        }
    }
}

/// A key annotation; the quality may be missing from the source data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyLabel {
    pub root: Option<PitchClass>,
    pub quality: Option<KeyQuality>,
}

/// Accepts `N`, a bare root (`"Eb"`, quality unknown), or `root:mode` with
/// mode in `major|maj|minor|min`.
pub fn parse_key_label(text: &str) -> Result<KeyLabel, LabelError> {
    let text = text.trim();
    if text == "N" {
        return Ok(KeyLabel {
            root: None,
            quality: None,
        });
    }
    let (root, mode) = match text.split_once(':') {
        Some((r, m)) => (r, Some(m)),
        None => (text, None),
    };
    let root: PitchClass = root
        .parse()
        .map_err(|_| LabelError::MalformedKey(text.to_string()))?;
    let quality = match mode {
        None => None,
        Some("major" | "maj") => Some(KeyQuality::Major),
        Some("minor" | "min") => Some(KeyQuality::Minor),
        Some(_) => return Err(LabelError::MalformedKey(text.to_string())),
    };
    Ok(KeyLabel {
        root: Some(root),
        quality,
    })
}

/// Droot class: `(chord_root - key_root) mod 12`, or 12 when either root
/// is undefined.
pub fn compute_droot(key_root: Option<PitchClass>, chord_root: Option<PitchClass>) -> usize {
    match (key_root, chord_root) {
        (Some(k), Some(c)) => (c.value() as usize + 12 - k.value() as usize) % 12,
        _ => 12,
    }
}

/// Majority vote over tonic frames (chord root equal to key root): minor
/// when `min`/`min7` tonics outnumber the rest, major otherwise. A tie
/// resolves to major.
pub fn infer_key_quality(frames: &[HarmonyFrameLabel]) -> Result<KeyQuality, LabelError> {
    let mut minor = 0usize;
    let mut major = 0usize;
    for frame in frames {
        let (Some(key), Some(root)) = (frame.key_root(), frame.chord_root()) else {
            continue;
        };
        if key != root {
            continue;
        }
        match frame.chord_quality() {
            ChordQuality::Min | ChordQuality::Min7 => minor += 1,
            ChordQuality::NoChord => {}
            // Everything else, including power chords and sus4 which have
            // no third, counts toward major.
            _ => major += 1,
        }
    }
    if minor + major == 0 {
        return Err(LabelError::NoTonicChords);
    }
    Ok(if minor > major {
        KeyQuality::Minor
    } else {
        KeyQuality::Major
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tonic(quality: ChordQuality) -> HarmonyFrameLabel {
        let c = PitchClass::new(0);
        HarmonyFrameLabel::new(Some((c, KeyQuality::Major)), Some((c, quality, 0)))
    }

    #[test]
    fn droot_examples() {
        let pc = |v| Some(PitchClass::new(v));
        assert_eq!(compute_droot(pc(0), pc(0)), 0);
        assert_eq!(compute_droot(pc(0), pc(7)), 7);
        assert_eq!(compute_droot(pc(6), pc(9)), 3);
        assert_eq!(compute_droot(pc(9), pc(6)), 9);
        assert_eq!(compute_droot(None, pc(6)), 12);
        assert_eq!(compute_droot(pc(1), None), 12);
    }

    #[test]
    fn droot_plus_key_is_chord_root() {
        for k in 0..12u8 {
            for c in 0..12u8 {
                let d = compute_droot(Some(PitchClass::new(k)), Some(PitchClass::new(c)));
                assert_eq!((d + k as usize) % 12, c as usize);
            }
        }
    }

    #[test]
    fn key_quality_majority() {
        let mut frames = vec![tonic(ChordQuality::Min); 80];
        frames.extend(vec![tonic(ChordQuality::Maj); 20]);
        assert_eq!(infer_key_quality(&frames).unwrap(), KeyQuality::Minor);
        let frames = vec![tonic(ChordQuality::Maj); 10];
        assert_eq!(infer_key_quality(&frames).unwrap(), KeyQuality::Major);
        let mut frames = vec![tonic(ChordQuality::Min7); 50];
        frames.extend(vec![tonic(ChordQuality::Dom7); 50]);
        assert_eq!(infer_key_quality(&frames).unwrap(), KeyQuality::Major);
    }

    #[test]
    fn key_quality_needs_tonic_chords() {
        let c = PitchClass::new(0);
        let g = PitchClass::new(7);
        let frames = vec![HarmonyFrameLabel::new(
            Some((c, KeyQuality::Major)),
            Some((g, ChordQuality::Maj, 0)),
        )];
        assert!(matches!(
            infer_key_quality(&frames),
            Err(LabelError::NoTonicChords)
        ));
        assert!(infer_key_quality(&[]).is_err());
    }

    #[test]
    fn key_labels() {
        let k = parse_key_label("F#:minor").unwrap();
        assert_eq!(k.root, Some(PitchClass::new(6)));
        assert_eq!(k.quality, Some(KeyQuality::Minor));
        assert_eq!(parse_key_label("Eb").unwrap().quality, None);
        assert_eq!(parse_key_label("N").unwrap().root, None);
        assert!(parse_key_label("C:dorian").is_err());
    }
}
