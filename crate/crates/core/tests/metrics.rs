//! Chord metrics against scores produced by mir_eval (see
//! `fixtures/make_metric_fixture.py`).

use serde::Deserialize;

use serenade::eval::{score_majmin, score_root, score_sevenths};
use serenade::labels::{frames_from_intervals, HarmonyFrameLabel, IntervalAnnotation};

#[derive(Deserialize)]
struct Case {
    seed: u64,
    reference: Vec<String>,
    estimate: Vec<String>,
    root: f64,
    majmin: f64,
    sevenths: f64,
}

#[derive(Deserialize)]
struct Fixture {
    cases: Vec<Case>,
}

const TOL: f64 = 1e-4;

fn frames(labels: &[String]) -> Vec<HarmonyFrameLabel> {
    let hop = 0.1;
    let intervals: Vec<IntervalAnnotation> = labels
        .iter()
        .enumerate()
        .map(|(i, l)| IntervalAnnotation {
            start: i as f64 * hop,
            end: (i + 1) as f64 * hop,
            label: l.clone(),
        })
        .collect();
    frames_from_intervals(&intervals, &[], hop, labels.len()).unwrap()
}

#[test]
fn scores_match_mir_eval() {
    let fixture: Fixture = serde_json::from_str(include_str!("fixtures/metrics_20.json")).unwrap();
    assert!(!fixture.cases.is_empty());
    for case in &fixture.cases {
        let gt = frames(&case.reference);
        let pred = frames(&case.estimate);
        let root = score_root(&pred, &gt).unwrap();
        let majmin = score_majmin(&pred, &gt).unwrap();
        let sevenths = score_sevenths(&pred, &gt).unwrap();
        assert!(
            (root - case.root).abs() < TOL,
            "seed {}: root {root} vs {}",
            case.seed,
            case.root
        );
        assert!(
            (majmin - case.majmin).abs() < TOL,
            "seed {}: majmin {majmin} vs {}",
            case.seed,
            case.majmin
        );
        assert!(
            (sevenths - case.sevenths).abs() < TOL,
            "seed {}: sevenths {sevenths} vs {}",
            case.seed,
            case.sevenths
        );
    }
}

#[test]
fn inversions_and_sevenths_follow_mir_eval_rules() {
    let s = |v: &[&str]| frames(&v.iter().map(|x| x.to_string()).collect::<Vec<_>>());
    // An inverted reference is outside the majmin vocabulary.
    assert_eq!(
        score_majmin(&s(&["C:maj", "C:maj"]), &s(&["C:maj/3", "C:maj"])).unwrap(),
        1.0
    );
    // A seventh estimate still matches a triad reference on majmin.
    assert_eq!(score_majmin(&s(&["C:7"]), &s(&["C:maj"])).unwrap(), 1.0);
    assert_eq!(score_sevenths(&s(&["C:7"]), &s(&["C:maj"])).unwrap(), 0.0);
    assert_eq!(
        score_root(&s(&["N", "C:min"]), &s(&["N", "C:maj"])).unwrap(),
        1.0
    );
}
