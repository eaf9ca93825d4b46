//! Confidence-threshold ROI sweep and the fixed oracle policies on held-out
//! synthetic excerpts.
//!
//! cargo run --release --example oracle_sweep -- [CHECKPOINT]
//!
//! Without a checkpoint, trains the default model for 60 epochs on the
//! first 200 excerpts (about 1.5 min on one core).

use serenade::eval::{evaluate, roi_sweep, OraclePolicy};
use serenade::features::{synth_corpus, SynthConfig, SynthOptions};
use serenade::model::ModelConfig;
use serenade::nade::Propagation;
use serenade::training::{train, Checkpoint, TrainConfig};

fn main() {
    let corpus = synth_corpus(
        &SynthConfig {
            excerpts: 240,
            features: SynthOptions {
                noise_sd: 0.1,
                tone_dropout: 0.2,
            },
            ..SynthConfig::default()
        },
        0,
    );
    let (train_set, test) = corpus.split_at(200);
    let model = match std::env::args().nth(1) {
        Some(path) => Checkpoint::load(path).expect("checkpoint").model,
        None => {
            let config = TrainConfig {
                epochs: 60,
                ..TrainConfig::default()
            };
            train(train_set, &ModelConfig::default(), &config)
                .expect("training")
                .model
        }
    };
    let thresholds: Vec<f64> = (1..=19).map(|i| 0.05 * i as f64).collect();
    for propagation in [Propagation::Full, Propagation::Frozen] {
        let table = roi_sweep(&model, test, &thresholds, propagation).expect("sweep");
        println!("{propagation:?}");
        for row in &table.rows {
            let cost = row.entries.iter().map(|e| e.cost).sum::<f64>() / row.entries.len() as f64;
            let used = row.entries.iter().filter(|e| e.roi.is_some()).count();
            println!(
                "  t={:.2}  used {:>2}/{}  mean cost {:.4}  mean roi {}",
                row.threshold,
                used,
                row.entries.len(),
                cost,
                row.mean_roi.map_or("unused".into(), |r| format!("{r:.3}"))
            );
        }
    }
    for policy in ["key", "droot", "wrong:0.1"] {
        let policy: OraclePolicy = policy.parse().unwrap();
        let r = evaluate(&model, test, Some(policy), Propagation::Full, 0).expect("eval");
        print!("{}", r.summary());
    }
}
