//! Model configuration and the full parameter set (extractor plus the two
//! directional NADE weight sets).

mod extractor;
mod serenade;

pub use extractor::{
    densenet_block, extract_bias_fields, extract_bias_graph, BiasField, BiasNodes,
};
pub use serenade::Serenade;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::features::{INPUT_FEATURES, PROFILE_OFFSET};
use crate::labels::{SubLabel, CARDINALITIES, VISIBLE_UNITS};
use crate::tensor::{Graph, Matrix, NodeId, TensorError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractorConfig {
    /// Width of the 1x1 stem convolution.
    pub initial_channels: usize,
    pub dense_blocks: usize,
    pub layers_per_block: usize,
    pub growth: usize,
    /// Odd temporal kernel width of the dense layers.
    pub kernel_width: usize,
}

impl Default for ExtractorConfig {
    fn default() -> Self {
        ExtractorConfig {
            initial_channels: 32,
            dense_blocks: 2,
            layers_per_block: 3,
            growth: 24,
            kernel_width: 9,
        }
    }
}

impl ExtractorConfig {
    /// Frames on each side that can influence one output frame.
    pub fn receptive_radius(&self) -> usize {
        self.dense_blocks * self.layers_per_block * (self.kernel_width / 2)
    }

    pub fn output_channels(&self) -> usize {
        self.initial_channels + self.dense_blocks * self.layers_per_block * self.growth
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub extractor: ExtractorConfig,
    pub h_time: usize,
    pub h_feat: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            extractor: ExtractorConfig::default(),
            h_time: 48,
            h_feat: 48,
        }
    }
}

impl ModelConfig {
    /// Width of the bias projection: time biases, feature biases, visible biases.
    pub fn bias_width(&self) -> usize {
        self.h_time + self.h_feat + VISIBLE_UNITS
    }

    /// Number of trainable scalars.
    pub fn param_count(&self) -> usize {
        SerenadeParams::shapes(self)
            .named()
            .iter()
            .map(|(_, &(r, c))| r * c)
            .sum()
    }

    pub fn validate(&self) -> Result<(), String> {
        let e = &self.extractor;
        if e.kernel_width.is_multiple_of(2) {
            return Err(format!("kernel_width must be odd, got {}", e.kernel_width));
        }
        if e.initial_channels == 0 || self.h_time == 0 || self.h_feat == 0 {
            return Err("channel and hidden sizes must be positive".into());
        }
        if e.layers_per_block > 0 && e.growth == 0 {
            return Err("growth must be positive".into());
        }
        Ok(())
    }
}

/// Weight and bias of one convolution. The weight is `(k * C_in) x C_out`
/// over an unfolded input; the bias is `1 x C_out`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams<T> {
    pub weight: T,
    pub bias: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtractorParams<T> {
    pub stem: ConvParams<T>,
    pub blocks: Vec<Vec<ConvParams<T>>>,
    pub projection: ConvParams<T>,
}

/// Weights of one NADE direction, stored for row-vector products
/// (`state · W`): `label_to_time` is `66 x H_time`, `time_to_feat` is
/// `H_time x H_feat`, `sub_to_feat[s]` is `C_s x H_feat` and
/// `feat_to_vis[s]` is `H_feat x C_s`.
#[derive(Debug, Clone, PartialEq)]
pub struct NadeDirectionParams<T> {
    pub label_to_time: T,
    pub time_to_feat: T,
    pub sub_to_feat: [T; 6],
    pub feat_to_vis: [T; 6],
}

#[derive(Debug, Clone, PartialEq)]
pub struct SerenadeParams<T> {
    pub extractor: ExtractorParams<T>,
    pub l2r: NadeDirectionParams<T>,
    pub r2l: NadeDirectionParams<T>,
}

impl<T> ConvParams<T> {
    fn map<'a, U>(&'a self, prefix: &str, f: &mut impl FnMut(&str, &'a T) -> U) -> ConvParams<U> {
        ConvParams {
            weight: f(&format!("{prefix}.weight"), &self.weight),
            bias: f(&format!("{prefix}.bias"), &self.bias),
        }
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut impl FnMut(&str, &'a mut T)) {
        f(&format!("{prefix}.weight"), &mut self.weight);
        f(&format!("{prefix}.bias"), &mut self.bias);
    }
}

impl<T> NadeDirectionParams<T> {
    fn map<'a, U>(
        &'a self,
        prefix: &str,
        f: &mut impl FnMut(&str, &'a T) -> U,
    ) -> NadeDirectionParams<U> {
        let label_to_time = f(&format!("{prefix}.label_to_time"), &self.label_to_time);
        let time_to_feat = f(&format!("{prefix}.time_to_feat"), &self.time_to_feat);
        let sub_to_feat = std::array::from_fn(|s| {
            let name = format!("{prefix}.sub_to_feat.{}", SubLabel::ALL[s].name());
            f(&name, &self.sub_to_feat[s])
        });
        let feat_to_vis = std::array::from_fn(|s| {
            let name = format!("{prefix}.feat_to_vis.{}", SubLabel::ALL[s].name());
            f(&name, &self.feat_to_vis[s])
        });
        NadeDirectionParams {
            label_to_time,
            time_to_feat,
            sub_to_feat,
            feat_to_vis,
        }
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut impl FnMut(&str, &'a mut T)) {
        f(&format!("{prefix}.label_to_time"), &mut self.label_to_time);
        f(&format!("{prefix}.time_to_feat"), &mut self.time_to_feat);
        for (s, t) in self.sub_to_feat.iter_mut().enumerate() {
            f(
                &format!("{prefix}.sub_to_feat.{}", SubLabel::ALL[s].name()),
                t,
            );
        }
        for (s, t) in self.feat_to_vis.iter_mut().enumerate() {
            f(
                &format!("{prefix}.feat_to_vis.{}", SubLabel::ALL[s].name()),
                t,
            );
        }
    }
}

impl<T> SerenadeParams<T> {
    /// Applies `f` to every tensor in a fixed order, passing its name.
    pub fn map<'a, U>(&'a self, mut f: impl FnMut(&str, &'a T) -> U) -> SerenadeParams<U> {
        let e = &self.extractor;
        let stem = e.stem.map("extractor.stem", &mut f);
        let blocks = e
            .blocks
            .iter()
            .enumerate()
            .map(|(b, layers)| {
                layers
                    .iter()
                    .enumerate()
                    .map(|(l, p)| p.map(&format!("extractor.block{b}.layer{l}"), &mut f))
                    .collect()
            })
            .collect();
        let projection = e.projection.map("extractor.projection", &mut f);
        let l2r = self.l2r.map("nade.l2r", &mut f);
        let r2l = self.r2l.map("nade.r2l", &mut f);
        SerenadeParams {
            extractor: ExtractorParams {
                stem,
                blocks,
                projection,
            },
            l2r,
            r2l,
        }
    }

    /// Mutable visit in the same order as [`map`](Self::map).
    pub fn visit_mut<'a>(&'a mut self, mut f: impl FnMut(&str, &'a mut T)) {
        let e = &mut self.extractor;
        e.stem.visit_mut("extractor.stem", &mut f);
        for (b, layers) in e.blocks.iter_mut().enumerate() {
            for (l, p) in layers.iter_mut().enumerate() {
                p.visit_mut(&format!("extractor.block{b}.layer{l}"), &mut f);
            }
        }
        e.projection.visit_mut("extractor.projection", &mut f);
        self.l2r.visit_mut("nade.l2r", &mut f);
        self.r2l.visit_mut("nade.r2l", &mut f);
    }

    pub fn tensors(&self) -> Vec<&T> {
        let mut out = Vec::new();
        self.map(|_, t| out.push(t));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut T> {
        let mut out = Vec::new();
        self.visit_mut(|_, t| out.push(t));
        out
    }

    /// Tensors with their names, in canonical order.
    pub fn named(&self) -> Vec<(String, &T)> {
        let mut out = Vec::new();
        self.map(|name, t| out.push((name.to_string(), t)));
        out
    }
}

impl SerenadeParams<(usize, usize)> {
    pub fn shapes(config: &ModelConfig) -> Self {
        let e = &config.extractor;
        let mut channels = e.initial_channels;
        let stem = ConvParams {
            weight: (INPUT_FEATURES, e.initial_channels),
            bias: (1, e.initial_channels),
        };
        let mut blocks = Vec::with_capacity(e.dense_blocks);
        for _ in 0..e.dense_blocks {
            let mut layers = Vec::with_capacity(e.layers_per_block);
            for _ in 0..e.layers_per_block {
                layers.push(ConvParams {
                    weight: (e.kernel_width * channels, e.growth),
                    bias: (1, e.growth),
                });
                channels += e.growth;
            }
            blocks.push(layers);
        }
        let projection = ConvParams {
            weight: (channels, config.bias_width()),
            bias: (1, config.bias_width()),
        };
        let direction = || NadeDirectionParams {
            label_to_time: (VISIBLE_UNITS, config.h_time),
            time_to_feat: (config.h_time, config.h_feat),
            sub_to_feat: CARDINALITIES.map(|c| (c, config.h_feat)),
            feat_to_vis: CARDINALITIES.map(|c| (config.h_feat, c)),
        };
        SerenadeParams {
            extractor: ExtractorParams {
                stem,
                blocks,
                projection,
            },
            l2r: direction(),
            r2l: direction(),
        }
    }
}

/// Typical magnitude of the key-profile inputs relative to chroma; the stem
/// weights reading them start proportionally smaller.
const PROFILE_INPUT_SCALE: f64 = 10.0;

impl SerenadeParams<Matrix> {
    pub fn zeros(config: &ModelConfig) -> Self {
        SerenadeParams::shapes(config).map(|_, &(r, c)| Matrix::zeros(r, c))
    }

    /// He-normal convolutions, zero biases, small NADE weights.
    pub fn init(config: &ModelConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        SerenadeParams::shapes(config).map(|name, &(rows, cols)| {
            if name.ends_with(".bias") {
                return Matrix::zeros(rows, cols);
            }
            let sd = if name.starts_with("extractor.projection") {
                (1.0 / rows as f64).sqrt()
            } else if name.starts_with("extractor.") {
                (2.0 / rows as f64).sqrt()
            } else if name.ends_with("label_to_time") {
                0.01
            } else {
                (1.0 / rows as f64).sqrt()
            };
            let normal = Normal::new(0.0, sd).expect("finite sd");
            let mut m = Matrix::zeros(rows, cols);
            for r in 0..rows {
                let scale = if name == "extractor.stem.weight" && r >= PROFILE_OFFSET {
                    1.0 / PROFILE_INPUT_SCALE
                } else {
                    1.0
                };
                for v in m.row_mut(r) {
                    *v = normal.sample(&mut rng) * scale;
                }
            }
            m
        })
    }

    /// Small uniform values everywhere, for gradient and property checks.
    pub fn random_uniform(config: &ModelConfig, scale: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        SerenadeParams::shapes(config).map(|_, &(rows, cols)| {
            let data = (0..rows * cols)
                .map(|_| rng.random_range(-scale..scale))
                .collect();
            Matrix::from_vec(rows, cols, data).expect("sized")
        })
    }

    pub fn param_count(&self) -> usize {
        self.named().iter().map(|(_, m)| m.len()).sum()
    }

    /// Checks every tensor against the shapes implied by `config`.
    pub fn check_shapes(&self, config: &ModelConfig) -> Result<(), TensorError> {
        let expected = SerenadeParams::shapes(config);
        let want = expected.named();
        let have = self.named();
        if want.len() != have.len() {
            return Err(TensorError::DataLength {
                rows: want.len(),
                cols: 1,
                len: have.len(),
            });
        }
        for ((_, &shape), (_, m)) in want.iter().zip(&have) {
            if m.shape() != shape {
                return Err(TensorError::shape("check_shapes", shape, m.shape()));
            }
        }
        Ok(())
    }

    /// Copy with both NADE weight sets zeroed, leaving only the
    /// extractor's biases to drive predictions.
    pub fn biases_only(&self) -> Self {
        self.map(|name, m| {
            if name.starts_with("nade.") {
                Matrix::zeros(m.rows(), m.cols())
            } else {
                m.clone()
            }
        })
    }

    /// Leaves every tensor in `graph`; `trainable` picks leaf vs constant.
    pub fn to_graph(&self, graph: &mut Graph, trainable: bool) -> SerenadeParams<NodeId> {
        self.map(|_, m| {
            if trainable {
                graph.leaf(m.clone())
            } else {
                graph.constant(m.clone())
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_param_count_is_near_published_size() {
        let n = SerenadeParams::zeros(&ModelConfig::default()).param_count();
        assert_eq!(n, 173_234);
        assert!((140_000..=210_000).contains(&n));
    }

    #[test]
    fn names_are_unique_and_ordered() {
        let p = SerenadeParams::zeros(&ModelConfig::default());
        let names: Vec<String> = p.named().into_iter().map(|(n, _)| n).collect();
        let mut sorted = names.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), names.len());
        assert_eq!(names[0], "extractor.stem.weight");
        assert_eq!(names.last().unwrap(), "nade.r2l.feat_to_vis.bass_number");
    }

    #[test]
    fn init_is_seeded_and_shaped() {
        let c = ModelConfig::default();
        let a = SerenadeParams::init(&c, 1);
        assert_eq!(a, SerenadeParams::init(&c, 1));
        assert_ne!(a, SerenadeParams::init(&c, 2));
        a.check_shapes(&c).unwrap();
        let small = ModelConfig { h_time: 4, ..c };
        assert!(a.check_shapes(&small).is_err());
    }

    #[test]
    fn receptive_radius() {
        assert_eq!(ExtractorConfig::default().receptive_radius(), 24);
        assert_eq!(ExtractorConfig::default().output_channels(), 176);
    }
}
