//! A simulated annotator: each round corrects the least confident wrong
//! cells of the current prediction and the session re-infers.
//!
//! cargo run --release --example annotation_session -- [CHECKPOINT]

use std::sync::Arc;

use serenade::features::{synth_corpus, SynthConfig, SynthOptions};
use serenade::labels::SubLabel;
use serenade::model::ModelConfig;
use serenade::nade::OracleCell;
use serenade::session::Session;
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
    let model = match std::env::args().nth(1) {
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
    let dir = tempfile::tempdir().unwrap();
    let mut session = Session::create_persistent(
        dir.path(),
        "demo",
        "local",
        Arc::new(model.clone()),
        ex.features.clone(),
        Some(ex.labels.clone()),
    )
    .unwrap();

    for round in 1..=5 {
        let view = session.view();
        let mut wrong: Vec<(f64, OracleCell)> = Vec::new();
        for (t, cells) in view.cells.iter().enumerate() {
            for (s, cell) in cells.iter().enumerate() {
                let sub = SubLabel::ALL[s];
                let truth = ex.labels[t].class(sub);
                if cell.class != truth {
                    let fix = OracleCell {
                        frame: t,
                        sub_label: sub,
                        class: truth,
                    };
                    wrong.push((cell.confidence, fix));
                }
            }
        }
        if wrong.is_empty() {
            println!("round {round}: nothing left to correct");
            break;
        }
        wrong.sort_by(|a, b| a.0.total_cmp(&b.0));
        let batch: Vec<OracleCell> = wrong.iter().take(3).map(|w| w.1).collect();
        let delta = session.annotate(&batch).unwrap();
        let report = session.report().unwrap();
        let oracle = report.oracle.unwrap();
        println!(
            "round {round}: {} wrong, fixed {}, {} propagated changes, cost {:.4}, accuracy {:.4} -> {:.4}",
            wrong.len(),
            batch.len(),
            delta.propagated.len(),
            delta.cost,
            oracle.accuracy_original,
            oracle.accuracy_oracle
        );
    }

    let reopened = Session::open(dir.path().join("demo"), Arc::new(model)).unwrap();
    println!(
        "reopened from {} log entries, same prediction: {}",
        reopened.log().len(),
        reopened.prediction() == session.prediction()
    );
}
