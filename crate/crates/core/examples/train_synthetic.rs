//! Trains the default model on the synthetic corpus and reports held-out
//! chord-root and quality accuracy.
//!
//! cargo run --release --example train_synthetic -- [epochs] [out.srnd]

use std::time::Instant;

use serenade::features::{synth_corpus, SynthConfig};
use serenade::labels::SubLabel;
use serenade::model::ModelConfig;
use serenade::nade::DecodeMode;
use serenade::training::{train_with_progress, TrainConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let epochs = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(20);
    let corpus = synth_corpus(&SynthConfig::default(), 1);
    let (train, test) = corpus.split_at(200);
    let config = TrainConfig {
        epochs,
        seed: 1,
        ..TrainConfig::default()
    };
    let start = Instant::now();
    let ck = train_with_progress(train, &ModelConfig::default(), &config, |s| {
        println!(
            "epoch {:>3}  train {:.4}  val {:.4}  {:.0}s",
            s.epoch,
            s.train_loss,
            s.validation_loss.unwrap_or(f64::NAN),
            start.elapsed().as_secs_f64()
        );
    })
    .expect("training");
    let mut hits = [0usize; 6];
    let mut frames = 0;
    for ex in test {
        let pred = ck.model.predict(&ex.features, DecodeMode::Argmax).unwrap();
        for (p, y) in pred.labels().iter().zip(&ex.labels) {
            for sub in SubLabel::ALL {
                hits[sub.index()] += (p.class(sub) == y.class(sub)) as usize;
            }
        }
        frames += ex.labels.len();
    }
    for sub in SubLabel::ALL {
        println!(
            "{:<14} {:.3}",
            sub.name(),
            hits[sub.index()] as f64 / frames as f64
        );
    }
    if let Some(out) = args.get(2) {
        ck.save(out).expect("save");
    }
}
