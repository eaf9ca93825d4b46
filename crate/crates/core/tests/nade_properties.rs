//! Structural properties of the bidirectional NADE on random toy models.

mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use serenade::eval::OracleReport;
use serenade::labels::{compute_droot, SubLabel};
use serenade::nade::{
    infer, infer_constrained, run_direction, teacher_forced_logits, DecodeMode, Direction, Drive,
    OracleMask, Propagation, DROOT_NUDGE,
};
use serenade::tensor::softmax;

use common::{nade_case, random_matrix};

fn random_mask(case: &common::NadeCase, cells: usize, rng: &mut ChaCha8Rng) -> OracleMask {
    let mut mask = OracleMask::new();
    let frames = case.labels.len();
    for _ in 0..cells {
        let t = rng.random_range(0..frames);
        let sub = SubLabel::ALL[rng.random_range(0..6)];
        mask.insert(t, sub, case.labels[t].class(sub)).unwrap();
    }
    mask
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn left_to_right_logits_ignore_the_future(seed in any::<u64>(), frames in 2usize..10, cut in 0usize..9) {
        let case = nade_case(frames, seed);
        let cut = cut % (frames - 1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut bias = case.bias.clone();
        let mut labels = case.labels.clone();
        for t in cut + 1..frames {
            labels[t] = common::toy_excerpt(1, &mut rng).labels[0];
            let noise = random_matrix(1, bias.vis.cols(), 3.0, &mut rng);
            bias.vis.row_mut(t).copy_from_slice(noise.row(0));
            let noise = random_matrix(1, bias.time.cols(), 3.0, &mut rng);
            bias.time.row_mut(t).copy_from_slice(noise.row(0));
        }
        let p = &case.params.l2r;
        let a = teacher_forced_logits(&case.bias, p, Direction::LeftToRight, &case.labels).unwrap();
        let b = teacher_forced_logits(&bias, p, Direction::LeftToRight, &labels).unwrap();
        for t in 0..=cut {
            prop_assert_eq!(a.row(t), b.row(t));
        }
    }

    #[test]
    fn right_to_left_is_left_to_right_on_reversed_time(seed in any::<u64>(), frames in 1usize..10) {
        let case = nade_case(frames, seed);
        let p = &case.params.r2l;
        let forward = teacher_forced_logits(&case.bias, p, Direction::RightToLeft, &case.labels).unwrap();
        let reversed: Vec<_> = case.labels.iter().rev().copied().collect();
        let backward = teacher_forced_logits(&case.bias.reversed(), p, Direction::LeftToRight, &reversed).unwrap();
        prop_assert_eq!(forward, backward.reverse_rows());
    }

    #[test]
    fn empty_mask_reproduces_free_inference(seed in any::<u64>(), frames in 1usize..10) {
        let case = nade_case(frames, seed);
        let (l2r, r2l) = (&case.params.l2r, &case.params.r2l);
        let free = infer(&case.bias, l2r, r2l, DecodeMode::Argmax).unwrap();
        let empty = OracleMask::new();
        for propagation in [Propagation::Full, Propagation::Frozen] {
            let out = infer_constrained(&case.bias, l2r, r2l, &empty, DecodeMode::Argmax, propagation).unwrap();
            prop_assert_eq!(&out, &free);
        }
    }

    #[test]
    fn full_mask_returns_the_oracle_labels(seed in any::<u64>(), frames in 1usize..10, sample in any::<bool>()) {
        let case = nade_case(frames, seed);
        let mask = OracleMask::full(&case.labels);
        let mode = if sample { DecodeMode::Sample(seed) } else { DecodeMode::Argmax };
        for propagation in [Propagation::Full, Propagation::Frozen] {
            let out = infer_constrained(&case.bias, &case.params.l2r, &case.params.r2l, &mask, mode, propagation).unwrap();
            prop_assert_eq!(out.labels(), case.labels.clone());
        }
    }

    #[test]
    fn masked_cells_report_the_oracle_class(seed in any::<u64>(), frames in 1usize..10, cells in 1usize..20) {
        let case = nade_case(frames, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let mask = random_mask(&case, cells, &mut rng);
        for propagation in [Propagation::Full, Propagation::Frozen] {
            let out = infer_constrained(&case.bias, &case.params.l2r, &case.params.r2l, &mask, DecodeMode::Argmax, propagation).unwrap();
            for cell in mask.iter() {
                prop_assert_eq!(out.cell(cell.frame, cell.sub_label).class, cell.class);
            }
        }
    }

    #[test]
    fn frozen_roi_is_between_zero_and_one(seed in any::<u64>(), frames in 1usize..10, cells in 1usize..30) {
        let case = nade_case(frames, seed);
        let (l2r, r2l) = (&case.params.l2r, &case.params.r2l);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 2);
        let mask = random_mask(&case, cells, &mut rng);
        let first = infer(&case.bias, l2r, r2l, DecodeMode::Argmax).unwrap();
        let second = infer_constrained(&case.bias, l2r, r2l, &mask, DecodeMode::Argmax, Propagation::Frozen).unwrap();
        let report = OracleReport::compute(&case.labels, &first, &second, &mask).unwrap();
        let roi = report.roi.unwrap();
        prop_assert!((-1e-12..=1.0 + 1e-12).contains(&roi), "roi {}", roi);
    }

    #[test]
    fn nudge_never_lowers_the_implied_droot(seed in any::<u64>(), frames in 1usize..10, low in 0.0f64..3.0, extra in 0.0f64..3.0) {
        let case = nade_case(frames, seed);
        let run = |nudge: f64| {
            let mut drive = Drive::teacher_forced(&case.labels);
            run_direction(&case.bias, &case.params.l2r, Direction::LeftToRight, &mut drive, nudge).unwrap().logits
        };
        let (a, b) = (run(low), run(low + extra));
        let d = SubLabel::Droot;
        for (t, label) in case.labels.iter().enumerate() {
            let (Some(key), Some(chord)) = (label.key_root(), label.chord_root()) else { continue };
            let k = compute_droot(Some(key), Some(chord));
            let pa = softmax(&a.row(t)[d.offset()..d.offset() + d.cardinality()])[k];
            let pb = softmax(&b.row(t)[d.offset()..d.offset() + d.cardinality()])[k];
            prop_assert!(pb >= pa - 1e-15, "frame {}: {} -> {}", t, pa, pb);
        }
    }
}

#[test]
fn default_nudge_is_added_to_the_implied_droot_only() {
    let case = nade_case(5, 9);
    let run = |nudge: f64| {
        let mut drive = Drive::teacher_forced(&case.labels);
        run_direction(
            &case.bias,
            &case.params.l2r,
            Direction::LeftToRight,
            &mut drive,
            nudge,
        )
        .unwrap()
        .logits
    };
    let (plain, nudged) = (run(0.0), run(DROOT_NUDGE));
    let d = SubLabel::Droot;
    for (t, label) in case.labels.iter().enumerate() {
        let implied = match (label.key_root(), label.chord_root()) {
            (Some(k), Some(c)) => Some(compute_droot(Some(k), Some(c))),
            _ => None,
        };
        for c in 0..d.cardinality() {
            let diff = nudged.get(t, d.offset() + c) - plain.get(t, d.offset() + c);
            let want = if Some(c) == implied { DROOT_NUDGE } else { 0.0 };
            assert!((diff - want).abs() < 1e-12, "frame {t} class {c}: {diff}");
        }
    }
}
