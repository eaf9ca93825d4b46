use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::NadeError;
use crate::labels::{HarmonyFrameLabel, SubLabel};

/// One oracle-supplied cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleCell {
    pub frame: usize,
    pub sub_label: SubLabel,
    pub class: usize,
}

/// Ground-truth overrides for a sparse set of (frame, sub-label) cells.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OracleMask {
    cells: BTreeMap<(usize, usize), usize>,
}

impl OracleMask {
    pub fn new() -> Self {
        Self::default()
    }

    /// Every cell of `labels`.
    pub fn full(labels: &[HarmonyFrameLabel]) -> Self {
        let mut mask = Self::new();
        for (t, label) in labels.iter().enumerate() {
            for sub in SubLabel::ALL {
                mask.cells.insert((t, sub.index()), label.class(sub));
            }
        }
        mask
    }

    /// Inserts or replaces a cell, returning the previous class.
    pub fn insert(
        &mut self,
        frame: usize,
        sub: SubLabel,
        class: usize,
    ) -> Result<Option<usize>, NadeError> {
        if class >= sub.cardinality() {
            return Err(NadeError::InvalidCell { frame, sub, class });
        }
        Ok(self.cells.insert((frame, sub.index()), class))
    }

    pub fn get(&self, frame: usize, sub: SubLabel) -> Option<usize> {
        self.cells.get(&(frame, sub.index())).copied()
    }

    pub fn contains(&self, frame: usize, sub: SubLabel) -> bool {
        self.cells.contains_key(&(frame, sub.index()))
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Cells in (frame, sub-label) order.
    pub fn iter(&self) -> impl Iterator<Item = OracleCell> + '_ {
        self.cells.iter().map(|(&(frame, s), &class)| OracleCell {
            frame,
            sub_label: SubLabel::ALL[s],
            class,
        })
    }

    /// Fails on the first cell whose frame is outside `0..frames`.
    pub fn validate(&self, frames: usize) -> Result<(), NadeError> {
        match self.iter().find(|c| c.frame >= frames) {
            Some(c) => Err(NadeError::InvalidCell {
                frame: c.frame,
                sub: c.sub_label,
                class: c.class,
            }),
            None => Ok(()),
        }
    }

    /// Mask with frame indices mirrored for a sequence of length `frames`.
    pub fn reversed(&self, frames: usize) -> Self {
        OracleMask {
            cells: self
                .cells
                .iter()
                .map(|(&(t, s), &c)| ((frames - 1 - t, s), c))
                .collect(),
        }
    }
}

impl FromIterator<OracleCell> for OracleMask {
    /// Later cells replace earlier ones. Class ranges are not checked here;
    /// use [`OracleMask::insert`] for validated construction.
    fn from_iter<I: IntoIterator<Item = OracleCell>>(iter: I) -> Self {
        OracleMask {
            cells: iter
                .into_iter()
                .map(|c| ((c.frame, c.sub_label.index()), c.class))
                .collect(),
        }
    }
}

impl Serialize for OracleMask {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(self.iter())
    }
}

impl<'de> Deserialize<'de> for OracleMask {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let cells = Vec::<OracleCell>::deserialize(d)?;
        let mut mask = OracleMask::new();
        for c in cells {
            mask.insert(c.frame, c.sub_label, c.class)
                .map_err(serde::de::Error::custom)?;
        }
        Ok(mask)
    }
}
