//! Teacher-forced NADE as a differentiable graph, vectorized over frames.
//!
//! Under teacher forcing every accumulator is a known function of the
//! targets: the time accumulator is an exclusive prefix sum of
//! `onehot(y[t']) · W_label_to_time` over earlier frames (a strictly
//! triangular matrix product), and the feature accumulator before
//! sub-label `s` adds the rows of `W_sub_to_feat` picked by the targets of
//! the preceding sub-labels.

use super::{apply_droot_nudge, Direction, NadeError, DROOT_NUDGE};
use crate::labels::{HarmonyFrameLabel, SubLabel, VISIBLE_UNITS};
use crate::model::{BiasField, BiasNodes, NadeDirectionParams};
use crate::tensor::{Graph, Matrix, NodeId};

fn one_hot(targets: &[HarmonyFrameLabel]) -> Matrix {
    let mut m = Matrix::zeros(targets.len(), VISIBLE_UNITS);
    for (t, label) in targets.iter().enumerate() {
        m.row_mut(t).copy_from_slice(&label.one_hot());
    }
    m
}

/// `S[t][t'] = 1` when `t'` is visited before `t`.
fn prefix_matrix(frames: usize, direction: Direction) -> Matrix {
    let mut m = Matrix::zeros(frames, frames);
    for t in 0..frames {
        for u in 0..frames {
            let earlier = match direction {
                Direction::LeftToRight => u < t,
                Direction::RightToLeft => u > t,
            };
            if earlier {
                m.set(t, u, 1.0);
            }
        }
    }
    m
}

fn nudge_matrix(targets: &[HarmonyFrameLabel], nudge: f64) -> Matrix {
    let mut m = Matrix::zeros(targets.len(), SubLabel::Droot.cardinality());
    for (t, label) in targets.iter().enumerate() {
        let c = label.classes();
        apply_droot_nudge(m.row_mut(t), c[0], c[2], nudge);
    }
    m
}

/// Per-sub-label `T x C_s` logit nodes of one teacher-forced direction.
pub fn direction_logits_graph(
    g: &mut Graph,
    bias: &BiasNodes,
    p: &NadeDirectionParams<NodeId>,
    direction: Direction,
    targets: &[HarmonyFrameLabel],
    nudge: f64,
) -> Result<[NodeId; 6], NadeError> {
    let frames = g.value(bias.vis).rows();
    if targets.len() != frames {
        return Err(NadeError::TargetLength {
            expected: frames,
            got: targets.len(),
        });
    }
    let y = one_hot(targets);
    let y_node = g.constant(y.clone());
    let contributions = g.matmul(y_node, p.label_to_time)?;
    let shift = g.constant(prefix_matrix(frames, direction));
    let acc = g.matmul(shift, contributions)?;
    let pre_time = g.add(bias.time, acc)?;
    let h_time = g.sigmoid(pre_time);
    let from_time = g.matmul(h_time, p.time_to_feat)?;
    let mut feat = g.add(bias.feat, from_time)?;
    let mut out = [feat; 6];
    for sub in SubLabel::ALL {
        let s = sub.index();
        let (off, c) = (sub.offset(), sub.cardinality());
        let h = g.sigmoid(feat);
        let z = g.matmul(h, p.feat_to_vis[s])?;
        let b = g.slice_cols(bias.vis, off, c)?;
        let mut z = g.add(z, b)?;
        if sub == SubLabel::Droot && nudge != 0.0 {
            let n = g.constant(nudge_matrix(targets, nudge));
            z = g.add(z, n)?;
        }
        out[s] = z;
        if sub != SubLabel::BassNumber {
            let ys = g.constant(y.slice_cols(off, c)?);
            let step = g.matmul(ys, p.sub_to_feat[s])?;
            feat = g.add(feat, step)?;
        }
    }
    Ok(out)
}

/// Mean cross-entropy over frames, sub-labels and both directions, each
/// direction teacher-forced on `targets`.
pub fn loss_graph(
    g: &mut Graph,
    bias: &BiasNodes,
    l2r: &NadeDirectionParams<NodeId>,
    r2l: &NadeDirectionParams<NodeId>,
    targets: &[HarmonyFrameLabel],
) -> Result<NodeId, NadeError> {
    let mut total: Option<NodeId> = None;
    for (p, direction) in [(l2r, Direction::LeftToRight), (r2l, Direction::RightToLeft)] {
        let logits = direction_logits_graph(g, bias, p, direction, targets, DROOT_NUDGE)?;
        for sub in SubLabel::ALL {
            let classes: Vec<usize> = targets.iter().map(|l| l.class(sub)).collect();
            let ce = g.softmax_cross_entropy(logits[sub.index()], &classes)?;
            total = Some(match total {
                None => ce,
                Some(acc) => g.add(acc, ce)?,
            });
        }
    }
    let cells = 2 * SubLabel::ALL.len() * targets.len().max(1);
    Ok(g.scale(total.expect("twelve terms"), 1.0 / cells as f64))
}

/// Value of [`loss_graph`] for fixed biases and weights.
pub fn loss(
    bias: &BiasField,
    l2r: &NadeDirectionParams<crate::tensor::Matrix>,
    r2l: &NadeDirectionParams<crate::tensor::Matrix>,
    targets: &[HarmonyFrameLabel],
) -> Result<f64, NadeError> {
    let mut g = Graph::new();
    let nodes = BiasNodes {
        time: g.constant(bias.time.clone()),
        feat: g.constant(bias.feat.clone()),
        vis: g.constant(bias.vis.clone()),
    };
    let mut constants = |p: &NadeDirectionParams<Matrix>| NadeDirectionParams {
        label_to_time: g.constant(p.label_to_time.clone()),
        time_to_feat: g.constant(p.time_to_feat.clone()),
        sub_to_feat: std::array::from_fn(|s| g.constant(p.sub_to_feat[s].clone())),
        feat_to_vis: std::array::from_fn(|s| g.constant(p.feat_to_vis[s].clone())),
    };
    let (a, b) = (constants(l2r), constants(r2l));
    let root = loss_graph(&mut g, &nodes, &a, &b, targets)?;
    Ok(g.value(root).item().expect("scalar"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labels::{ChordQuality, KeyQuality, PitchClass};
    use crate::model::{ModelConfig, SerenadeParams};
    use crate::nade::teacher_forced_logits;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_labels(frames: usize, rng: &mut ChaCha8Rng) -> Vec<HarmonyFrameLabel> {
        (0..frames)
            .map(|_| {
                let key = (rng.random::<f64>() < 0.9)
                    .then(|| (PitchClass::new(rng.random_range(0..12)), KeyQuality::Minor));
                let chord = (rng.random::<f64>() < 0.9).then(|| {
                    let q = ChordQuality::from_class(rng.random_range(0..10)).unwrap();
                    (
                        PitchClass::new(rng.random_range(0..12)),
                        q,
                        rng.random_range(0..12),
                    )
                });
                HarmonyFrameLabel::new(key, chord)
            })
            .collect()
    }

    fn random_bias(frames: usize, ht: usize, hf: usize, rng: &mut ChaCha8Rng) -> BiasField {
        let mut m = |c: usize| {
            let data = (0..frames * c)
                .map(|_| rng.random_range(-1.0..1.0))
                .collect();
            Matrix::from_vec(frames, c, data).unwrap()
        };
        BiasField {
            time: m(ht),
            feat: m(hf),
            vis: m(VISIBLE_UNITS),
        }
    }

    #[test]
    fn graph_matches_sequential_pass() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let c = ModelConfig {
            h_time: 5,
            h_feat: 6,
            ..ModelConfig::default()
        };
        let params = SerenadeParams::random_uniform(&c, 0.7, 9);
        for frames in [1, 2, 9] {
            let targets = random_labels(frames, &mut rng);
            let bias = random_bias(frames, 5, 6, &mut rng);
            for (p, direction) in [
                (&params.l2r, Direction::LeftToRight),
                (&params.r2l, Direction::RightToLeft),
            ] {
                let seq = teacher_forced_logits(&bias, p, direction, &targets).unwrap();
                let mut g = Graph::new();
                let nodes = BiasNodes {
                    time: g.constant(bias.time.clone()),
                    feat: g.constant(bias.feat.clone()),
                    vis: g.constant(bias.vis.clone()),
                };
                let pn = params.map(|_, m| g.constant(m.clone()));
                let pn = match direction {
                    Direction::LeftToRight => pn.l2r,
                    Direction::RightToLeft => pn.r2l,
                };
                let z =
                    direction_logits_graph(&mut g, &nodes, &pn, direction, &targets, DROOT_NUDGE)
                        .unwrap();
                for sub in SubLabel::ALL {
                    let got = g.value(z[sub.index()]);
                    for t in 0..frames {
                        for k in 0..sub.cardinality() {
                            let want = seq.get(t, sub.offset() + k);
                            assert!((got.get(t, k) - want).abs() < 1e-10);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn zero_params_loss_is_uniform_closed_form() {
        let c = ModelConfig::default();
        let p = SerenadeParams::zeros(&c);
        let bias = BiasField::zeros(5, c.h_time, c.h_feat);
        // Key N leaves the droot nudge inactive, so every cell is uniform.
        let c_maj = Some((PitchClass::new(0), ChordQuality::Maj, 0));
        let targets = vec![HarmonyFrameLabel::new(None, c_maj); 5];
        let got = loss(&bias, &p.l2r, &p.r2l, &targets).unwrap();
        let want = (4.0 * 13f64.ln() + 3f64.ln() + 11f64.ln()) / 6.0;
        assert!((got - want).abs() < 1e-12);
        assert!((got - 2.292).abs() < 1e-3);
    }
}
