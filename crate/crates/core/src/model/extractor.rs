//! 1D DenseNet mapping the `T x 48` input to per-frame NADE biases.

use super::{ConvParams, ExtractorParams, ModelConfig, SerenadeParams};
use crate::features::FeatureMatrix;
use crate::labels::VISIBLE_UNITS;
use crate::tensor::{Graph, Matrix, NodeId, TensorError};

/// Per-frame biases shared by both NADE directions.
#[derive(Debug, Clone, PartialEq)]
pub struct BiasField {
    /// `T x H_time`
    pub time: Matrix,
    /// `T x H_feat`
    pub feat: Matrix,
    /// `T x 66`, six sub-label segments.
    pub vis: Matrix,
}

impl BiasField {
    pub fn frames(&self) -> usize {
        self.vis.rows()
    }

    pub fn zeros(frames: usize, h_time: usize, h_feat: usize) -> Self {
        BiasField {
            time: Matrix::zeros(frames, h_time),
            feat: Matrix::zeros(frames, h_feat),
            vis: Matrix::zeros(frames, VISIBLE_UNITS),
        }
    }

    pub fn reversed(&self) -> Self {
        BiasField {
            time: self.time.reverse_rows(),
            feat: self.feat.reverse_rows(),
            vis: self.vis.reverse_rows(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BiasNodes {
    pub time: NodeId,
    pub feat: NodeId,
    pub vis: NodeId,
}

fn conv(
    g: &mut Graph,
    x: NodeId,
    p: &ConvParams<NodeId>,
    width: usize,
) -> Result<NodeId, TensorError> {
    let x = if width == 1 { x } else { g.unfold(x, width)? };
    let y = g.matmul(x, p.weight)?;
    g.add_bias(y, p.bias)
}

/// Each layer convolves the concatenation of the block input and all
/// earlier layer outputs, then applies ReLU. Returns that concatenation
/// after the last layer.
pub fn densenet_block(
    g: &mut Graph,
    x: NodeId,
    layers: &[ConvParams<NodeId>],
    kernel_width: usize,
) -> Result<NodeId, TensorError> {
    let mut parts = vec![x];
    let mut current = x;
    for layer in layers {
        let y = conv(g, current, layer, kernel_width)?;
        let y = g.relu(y);
        parts.push(y);
        current = g.concat_cols(&parts)?;
    }
    Ok(current)
}

pub fn extract_bias_graph(
    g: &mut Graph,
    config: &ModelConfig,
    params: &ExtractorParams<NodeId>,
    input: NodeId,
) -> Result<BiasNodes, TensorError> {
    let stem = conv(g, input, &params.stem, 1)?;
    let mut x = g.relu(stem);
    for block in &params.blocks {
        x = densenet_block(g, x, block, config.extractor.kernel_width)?;
    }
    let out = conv(g, x, &params.projection, 1)?;
    Ok(BiasNodes {
        time: g.slice_cols(out, 0, config.h_time)?,
        feat: g.slice_cols(out, config.h_time, config.h_feat)?,
        vis: g.slice_cols(out, config.h_time + config.h_feat, VISIBLE_UNITS)?,
    })
}

/// Forward pass without gradient bookkeeping.
pub fn extract_bias_fields(
    input: &FeatureMatrix,
    params: &SerenadeParams<Matrix>,
    config: &ModelConfig,
) -> Result<BiasField, TensorError> {
    let mut g = Graph::new();
    let p = params.extractor.map_constants(&mut g);
    let x = g.constant(input.matrix().clone());
    let nodes = extract_bias_graph(&mut g, config, &p, x)?;
    Ok(BiasField {
        time: g.value(nodes.time).clone(),
        feat: g.value(nodes.feat).clone(),
        vis: g.value(nodes.vis).clone(),
    })
}

impl ExtractorParams<Matrix> {
    fn map_constants(&self, g: &mut Graph) -> ExtractorParams<NodeId> {
        let mut c = |p: &ConvParams<Matrix>| ConvParams {
            weight: g.constant(p.weight.clone()),
            bias: g.constant(p.bias.clone()),
        };
        ExtractorParams {
            stem: c(&self.stem),
            blocks: self
                .blocks
                .iter()
                .map(|layers| layers.iter().map(&mut c).collect())
                .collect(),
            projection: c(&self.projection),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ExtractorConfig;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_config() -> ModelConfig {
        ModelConfig {
            extractor: ExtractorConfig {
                initial_channels: 4,
                dense_blocks: 2,
                layers_per_block: 2,
                growth: 3,
                kernel_width: 3,
            },
            h_time: 3,
            h_feat: 2,
        }
    }

    fn random_input(t: usize, seed: u64) -> FeatureMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..t * 24).map(|_| rng.random_range(0.0..1.0)).collect();
        FeatureMatrix::from_chroma_block(&Matrix::from_vec(t, 24, data).unwrap(), 0.1).unwrap()
    }

    #[test]
    fn one_frame_in_one_frame_out() {
        let c = ModelConfig::default();
        let p = SerenadeParams::init(&c, 0);
        let b = extract_bias_fields(&random_input(1, 0), &p, &c).unwrap();
        assert_eq!(b.frames(), 1);
        assert_eq!(b.time.shape(), (1, 48));
        assert_eq!(b.vis.shape(), (1, 66));
    }

    #[test]
    fn zero_params_give_zero_biases() {
        let c = small_config();
        let b = extract_bias_fields(&random_input(5, 1), &SerenadeParams::zeros(&c), &c).unwrap();
        assert_eq!(b, BiasField::zeros(5, 3, 2));
    }

    #[test]
    fn frame_count_is_preserved() {
        let c = small_config();
        let p = SerenadeParams::random_uniform(&c, 0.5, 3);
        for t in [1, 2, 7, 14] {
            assert_eq!(
                extract_bias_fields(&random_input(t, 2), &p, &c)
                    .unwrap()
                    .frames(),
                t
            );
        }
    }

    #[test]
    fn dense_block_widths_and_identity() {
        let mut g = Graph::new();
        let x = g.constant(Matrix::filled(5, 8, 0.5));
        let layers: Vec<ConvParams<NodeId>> = (0..2)
            .map(|l| ConvParams {
                weight: g.leaf(Matrix::zeros(3 * (8 + 4 * l), 4)),
                bias: g.leaf(Matrix::zeros(1, 4)),
            })
            .collect();
        let y = densenet_block(&mut g, x, &layers, 3).unwrap();
        assert_eq!(g.value(y).shape(), (5, 16));
        for r in 0..5 {
            assert_eq!(&g.value(y).row(r)[..8], &[0.5; 8]);
            assert_eq!(&g.value(y).row(r)[8..], &[0.0; 8]);
        }
    }

    #[test]
    fn perturbations_stay_within_receptive_field() {
        let c = small_config();
        let radius = c.extractor.receptive_radius();
        let p = SerenadeParams::random_uniform(&c, 0.5, 4);
        let input = random_input(16, 5);
        let base = extract_bias_fields(&input, &p, &c).unwrap();
        let mut chroma = input.matrix().slice_cols(0, 24).unwrap();
        // Bass chroma does not feed the profile block, so only frame 8 moves.
        let v = chroma.get(8, 15);
        chroma.set(8, 15, v + 1.0);
        let moved = FeatureMatrix::from_chroma_block(&chroma, 0.1).unwrap();
        let out = extract_bias_fields(&moved, &p, &c).unwrap();
        for t in 0..16 {
            let same = base.vis.row(t) == out.vis.row(t) && base.time.row(t) == out.time.row(t);
            if t.abs_diff(8) > radius {
                assert!(same, "frame {t} changed outside the receptive field");
            }
        }
        assert_ne!(base.vis.row(8), out.vis.row(8));
    }
}
