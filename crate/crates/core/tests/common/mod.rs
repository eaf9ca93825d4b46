//! Helpers shared by the integration tests and the acceptance runner.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use serenade::features::{generate_progression, Excerpt, FeatureMatrix, ProgressionConfig};
use serenade::labels::{HarmonyFrameLabel, VISIBLE_UNITS};
use serenade::model::{BiasField, ExtractorConfig, ModelConfig, Serenade, SerenadeParams};
use serenade::tensor::Matrix;
use serenade::training::loss_and_gradients;

pub const FD_STEP: f64 = 1e-5;
/// Gradients smaller than this are compared in absolute terms.
pub const FD_FLOOR: f64 = 1e-4;

pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FD_FLOOR)
}

pub fn random_matrix(rows: usize, cols: usize, scale: f64, rng: &mut ChaCha8Rng) -> Matrix {
    let data = (0..rows * cols)
        .map(|_| rng.random_range(-scale..scale))
        .collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

/// Random small configuration: hidden sizes in 1..=6, a shallow extractor.
pub fn toy_config(rng: &mut ChaCha8Rng) -> ModelConfig {
    ModelConfig {
        extractor: ExtractorConfig {
            initial_channels: rng.random_range(1..=4),
            dense_blocks: rng.random_range(0..=2),
            layers_per_block: rng.random_range(1..=2),
            growth: rng.random_range(1..=3),
            kernel_width: [1, 3][rng.random_range(0..2)],
        },
        h_time: rng.random_range(1..=6),
        h_feat: rng.random_range(1..=6),
    }
}

/// Random non-negative chroma with labels from the synthetic generator.
pub fn toy_excerpt(frames: usize, rng: &mut ChaCha8Rng) -> Excerpt {
    let chroma = Matrix::from_vec(
        frames,
        24,
        (0..frames * 24).map(|_| rng.random::<f64>()).collect(),
    )
    .unwrap();
    let progression = ProgressionConfig {
        min_chord_frames: 1,
        max_chord_frames: 3,
        no_chord_prob: 0.2,
        ..ProgressionConfig::default()
    };
    Excerpt {
        id: "toy".into(),
        features: FeatureMatrix::from_chroma_block(&chroma, 0.05).unwrap(),
        labels: generate_progression(frames, &progression, rng),
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub checked: usize,
}

/// Central differences of the full teacher-forced loss against the
/// analytic gradient, for every scalar of a random toy model.
pub fn gradcheck_full_loss(seed: u64) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let config = toy_config(&mut rng);
    let frames = rng.random_range(1..=8);
    let excerpt = toy_excerpt(frames, &mut rng);
    let params = SerenadeParams::random_uniform(&config, 0.6, seed ^ 0x5eed);
    let (_, grads) = loss_and_gradients(&params, &config, &excerpt).unwrap();
    let mut model = Serenade::new(config, params).unwrap();
    let analytic: Vec<Matrix> = grads.tensors().into_iter().cloned().collect();
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for (k, g) in analytic.iter().enumerate() {
        for i in 0..g.len() {
            let eval = |model: &mut Serenade, delta: f64| {
                model.params.tensors_mut()[k].as_mut_slice()[i] += delta;
                let l = model.loss(&excerpt).unwrap();
                model.params.tensors_mut()[k].as_mut_slice()[i] -= delta;
                l
            };
            let plus = eval(&mut model, FD_STEP);
            let minus = eval(&mut model, -FD_STEP);
            let numeric = (plus - minus) / (2.0 * FD_STEP);
            worst = worst.max(rel_error(g.as_slice()[i], numeric));
            checked += 1;
        }
    }
    GradCheck {
        max_rel_error: worst,
        checked,
    }
}

pub fn random_bias(
    frames: usize,
    config: &ModelConfig,
    scale: f64,
    rng: &mut ChaCha8Rng,
) -> BiasField {
    BiasField {
        time: random_matrix(frames, config.h_time, scale, rng),
        feat: random_matrix(frames, config.h_feat, scale, rng),
        vis: random_matrix(frames, VISIBLE_UNITS, scale, rng),
    }
}

/// A small random model with its bias field and a label sequence, for
/// exercising the NADE without running the extractor.
pub struct NadeCase {
    pub config: ModelConfig,
    pub params: SerenadeParams<Matrix>,
    pub bias: BiasField,
    pub labels: Vec<HarmonyFrameLabel>,
}

pub fn nade_case(frames: usize, seed: u64) -> NadeCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let config = toy_config(&mut rng);
    let params = SerenadeParams::random_uniform(&config, 1.0, seed ^ 0xa11ce);
    let bias = random_bias(frames, &config, 1.5, &mut rng);
    let labels = toy_excerpt(frames, &mut rng).labels;
    NadeCase {
        config,
        params,
        bias,
        labels,
    }
}
