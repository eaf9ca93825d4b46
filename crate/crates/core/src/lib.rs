//! Frame-level harmony analysis with a separable, bidirectional multiclass
//! NADE, and an oracle protocol for correcting its output by hand.
//!
//! Each frame carries six sub-labels (key root, key quality, chord root,
//! droot, chord quality, bass number). A 1D DenseNet turns treble and bass
//! chromagrams into per-frame biases; two autoregressive NADEs, one per time
//! direction, predict the sub-labels from those biases and from the labels
//! already visited. Oracle cells fixed by an annotator steer every later
//! cell of both passes.
//!
//! ```no_run
//! use serenade::nade::{DecodeMode, OracleMask, Propagation};
//! use serenade::labels::SubLabel;
//! use serenade::training::{load_features, Checkpoint};
//!
//! let ck = Checkpoint::load("model.srnd")?;
//! let input = load_features("corpus/track01".as_ref())?;
//! let first = ck.model.predict(&input, DecodeMode::Argmax)?;
//! let mut mask = OracleMask::new();
//! mask.insert(0, SubLabel::KeyRoot, 7)?;
//! let second = ck.model.predict_constrained(&input, &mask, DecodeMode::Argmax, Propagation::Full)?;
//! # Ok::<(), Box<dyn std::error::Error>>(())
//! ```

pub mod eval;
pub mod features;
pub mod labels;
pub mod model;
pub mod nade;
pub mod service;
pub mod session;
pub mod tensor;
pub mod training;
