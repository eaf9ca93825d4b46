//! Bidirectional inference, with and without oracle cells.
//!
//! cargo run --release --example inference -- [CHECKPOINT]
//!
//! Without a checkpoint a small model is trained on synthetic data first.

use serenade::features::{synth_corpus, SynthConfig, SynthOptions};
use serenade::labels::SubLabel;
use serenade::model::{ModelConfig, Serenade};
use serenade::nade::{DecodeMode, OracleMask, Propagation};
use serenade::training::{train, Checkpoint, TrainConfig};

fn main() {
    let corpus = synth_corpus(
        &SynthConfig {
            excerpts: 81,
            features: SynthOptions {
                noise_sd: 0.1,
                tone_dropout: 0.2,
            },
            ..SynthConfig::default()
        },
        0,
    );
    let model: Serenade = match std::env::args().nth(1) {
        Some(path) => Checkpoint::load(path).expect("checkpoint").model,
        None => {
            let config = TrainConfig {
                epochs: 10,
                ..TrainConfig::default()
            };
            train(&corpus[..80], &ModelConfig::default(), &config)
                .expect("training")
                .model
        }
    };
    let ex = &corpus[80];
    let first = model.predict(&ex.features, DecodeMode::Argmax).unwrap();

    println!("frame  predicted    conf   truth");
    for t in (0..first.len()).step_by(4) {
        let label = first.labels()[t];
        let conf = first.cell(t, SubLabel::ChordQuality).confidence;
        println!(
            "{t:>5}  {:<12} {conf:.2}   {}",
            label.chord_label(),
            ex.labels[t].chord_label()
        );
    }

    // Correct the key root at frame 0 and compare what the two propagation
    // modes do with it.
    let mut mask = OracleMask::new();
    mask.insert(0, SubLabel::KeyRoot, ex.labels[0].class(SubLabel::KeyRoot))
        .unwrap();
    for propagation in [Propagation::Full, Propagation::Frozen] {
        let out = model
            .predict_constrained(&ex.features, &mask, DecodeMode::Argmax, propagation)
            .unwrap();
        let changed = (0..out.len())
            .flat_map(|t| SubLabel::ALL.map(|s| (t, s)))
            .filter(|&(t, s)| out.cell(t, s).class != first.cell(t, s).class)
            .count();
        println!("{propagation:?}: {changed} cells differ from the first pass");
    }

    let sampled = model.predict(&ex.features, DecodeMode::Sample(3)).unwrap();
    let agree = (0..sampled.len())
        .filter(|&t| sampled.classes(t) == first.classes(t))
        .count();
    println!(
        "a temperature-1 sample agrees with argmax on {agree}/{} frames",
        sampled.len()
    );
}
