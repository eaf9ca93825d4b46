//! The annotation service's HTTP+JSON API, driven in-process.

use std::path::Path;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use serenade::features::{synth_corpus, SynthConfig};
use serenade::model::{ExtractorConfig, ModelConfig, Serenade};
use serenade::service::{router, AppState, ServiceConfig};
use serenade::training::{excerpt_intervals, write_corpus_dir, Checkpoint, CheckpointMeta};

struct Fixture {
    _dir: tempfile::TempDir,
    config: ServiceConfig,
}

fn toy_model() -> ModelConfig {
    ModelConfig {
        extractor: ExtractorConfig {
            initial_channels: 4,
            dense_blocks: 1,
            layers_per_block: 1,
            growth: 2,
            kernel_width: 3,
        },
        h_time: 6,
        h_feat: 6,
    }
}

fn fixture() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let config = toy_model();
    let ck = Checkpoint::new(Serenade::init(config, 3), CheckpointMeta::untrained(config));
    std::fs::create_dir_all(root.join("ck")).unwrap();
    ck.save(root.join("ck/toy.srnd")).unwrap();
    let corpus = synth_corpus(
        &SynthConfig {
            excerpts: 2,
            frames: 24,
            ..SynthConfig::default()
        },
        5,
    );
    write_corpus_dir(root.join("corpus"), &corpus).unwrap();
    Fixture {
        config: ServiceConfig {
            checkpoint_dir: root.join("ck"),
            corpus_dir: Some(root.join("corpus")),
            session_dir: Some(root.join("sessions")),
            ..ServiceConfig::default()
        },
        _dir: dir,
    }
}

fn first_track(config: &ServiceConfig) -> String {
    let dir = config.corpus_dir.as_ref().unwrap();
    let mut names: Vec<String> = std::fs::read_dir(dir)
        .unwrap()
        .filter_map(|e| {
            e.unwrap()
                .file_name()
                .to_str()
                .and_then(|n| n.strip_suffix(".treble.chroma"))
                .map(str::to_string)
        })
        .collect();
    names.sort();
    names.remove(0)
}

async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json");
    let req = match body {
        Some(v) => req.body(Body::from(v.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes)
            .unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()))
    };
    (status, value)
}

fn app(config: &ServiceConfig) -> (Router, Arc<AppState>) {
    let state = Arc::new(AppState::new(config.clone()));
    (router(state.clone()), state)
}

#[tokio::test]
async fn checkpoints_are_listed() {
    let f = fixture();
    let (app, _) = app(&f.config);
    let (status, body) = call(&app, Method::GET, "/checkpoints", None).await;
    assert_eq!(status, StatusCode::OK);
    let list = body.as_array().unwrap();
    assert_eq!(list.len(), 1);
    assert_eq!(list[0]["id"], "toy");
    assert_eq!(list[0]["epoch"], 0);
    assert_eq!(list[0]["params"], toy_model().param_count());
}

#[tokio::test]
async fn annotation_round_trip_on_a_corpus_track() {
    let f = fixture();
    let (app, _) = app(&f.config);
    let track = first_track(&f.config);
    let (status, created) = call(
        &app,
        Method::POST,
        "/sessions",
        Some(json!({"checkpoint": "toy", "track": track})),
    )
    .await;
    assert_eq!(status, StatusCode::CREATED, "{created}");
    assert_eq!(created["frames"], 24);
    assert_eq!(created["has_ground_truth"], true);
    let id = created["id"].as_str().unwrap().to_string();
    let cells = created["prediction"]["cells"].as_array().unwrap();
    assert_eq!(cells.len(), 24);
    assert_eq!(cells[0].as_array().unwrap().len(), 6);
    assert_eq!(created["prediction"]["sub_labels"][0], "key_root");

    let (status, prediction) = call(
        &app,
        Method::GET,
        &format!("/sessions/{id}/prediction"),
        None,
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(prediction, created["prediction"]);

    let batch = json!({
        "cells": [{"frame": 0, "sub_label": "key_root", "class": 3}],
        "ranges": [{"start": 4, "end": 8, "sub_label": "chord_quality", "class": 1}],
    });
    let (status, delta) = call(
        &app,
        Method::POST,
        &format!("/sessions/{id}/annotations"),
        Some(batch),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{delta}");
    assert_eq!(delta["log_len"], 5);
    assert!((delta["cost"].as_f64().unwrap() - 5.0 / 144.0).abs() < 1e-12);

    let (_, prediction) = call(
        &app,
        Method::GET,
        &format!("/sessions/{id}/prediction"),
        None,
    )
    .await;
    let cells = prediction["cells"].as_array().unwrap();
    assert_eq!(cells[0][0]["class"], 3);
    assert_eq!(cells[0][0]["annotated"], true);
    for frame in &cells[4..8] {
        assert_eq!(frame[4]["class"], 1);
        assert_eq!(frame[4]["annotated"], true);
    }
    assert_eq!(cells[10][4]["annotated"], false);

    let (status, report) = call(&app, Method::GET, &format!("/sessions/{id}/report"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(report["log_len"], 5);
    let oracle = &report["oracle"];
    assert!(oracle.is_object(), "{report}");
    assert!((oracle["cost"].as_f64().unwrap() - 5.0 / 144.0).abs() < 1e-12);

    // A fresh service over the same directories replays the session.
    let (app2, state2) = self::app(&f.config);
    assert_eq!(state2.restore_sessions().unwrap(), 1);
    let (status, replayed) = call(
        &app2,
        Method::GET,
        &format!("/sessions/{id}/prediction"),
        None,
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(replayed, prediction);
}

#[tokio::test]
async fn uploaded_features_with_ground_truth() {
    let f = fixture();
    let (app, _) = app(&f.config);
    let ex = &synth_corpus(
        &SynthConfig {
            excerpts: 1,
            frames: 16,
            ..SynthConfig::default()
        },
        9,
    )[0];
    let (chords, keys) = excerpt_intervals(&ex.labels, ex.features.hop());
    let lab = |ivs: &[serenade::labels::IntervalAnnotation]| {
        ivs.iter()
            .map(|iv| format!("{:.6} {:.6} {}\n", iv.start, iv.end, iv.label))
            .collect::<String>()
    };
    let body = json!({
        "checkpoint": "toy",
        "features": {"treble": ex.features.treble().to_text(), "bass": ex.features.bass().to_text()},
        "ground_truth": {"chords": lab(&chords), "keys": lab(&keys)},
    });
    let (status, created) = call(&app, Method::POST, "/sessions", Some(body)).await;
    assert_eq!(status, StatusCode::CREATED, "{created}");
    assert_eq!(created["frames"], 16);
    assert_eq!(created["has_ground_truth"], true);

    // Without ground truth the report has no oracle section.
    let body = json!({
        "checkpoint": "toy",
        "features": {"treble": ex.features.treble().to_text(), "bass": ex.features.bass().to_text()},
    });
    let (_, created) = call(&app, Method::POST, "/sessions", Some(body)).await;
    let id = created["id"].as_str().unwrap();
    let (status, report) = call(&app, Method::GET, &format!("/sessions/{id}/report"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(report["oracle"], Value::Null);
    assert_eq!(report["cost"], 0.0);
}

#[tokio::test]
async fn errors_map_to_status_codes() {
    let f = fixture();
    let (app, _) = app(&f.config);
    let track = first_track(&f.config);

    let (status, body) = call(&app, Method::GET, "/sessions/nope/prediction", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert!(body["error"].is_string());
    let (status, _) = call(&app, Method::GET, "/sessions/nope/report", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = call(
        &app,
        Method::POST,
        "/sessions/nope/annotations",
        Some(json!({"cells": []})),
    )
    .await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    let (status, _) = call(
        &app,
        Method::POST,
        "/sessions",
        Some(json!({"checkpoint": "missing", "track": track})),
    )
    .await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = call(
        &app,
        Method::POST,
        "/sessions",
        Some(json!({"checkpoint": "toy", "track": "missing"})),
    )
    .await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = call(
        &app,
        Method::POST,
        "/sessions",
        Some(json!({"checkpoint": "toy", "track": "../x"})),
    )
    .await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = call(
        &app,
        Method::POST,
        "/sessions",
        Some(json!({"checkpoint": "toy"})),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = call(
        &app,
        Method::POST,
        "/sessions",
        Some(json!({"checkpoint": "toy", "features": {"treble": "garbage", "bass": "garbage"}})),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    let (_, created) = call(
        &app,
        Method::POST,
        "/sessions",
        Some(json!({"checkpoint": "toy", "track": track})),
    )
    .await;
    let id = created["id"].as_str().unwrap();
    let uri = format!("/sessions/{id}/annotations");
    for bad in [
        json!({"cells": [{"frame": 24, "sub_label": "key_root", "class": 0}]}),
        json!({"cells": [{"frame": 0, "sub_label": "key_quality", "class": 3}]}),
        json!({"ranges": [{"start": 5, "end": 5, "sub_label": "droot", "class": 0}]}),
        json!({"ranges": [{"start": 20, "end": 30, "sub_label": "droot", "class": 0}]}),
    ] {
        let (status, body) = call(&app, Method::POST, &uri, Some(bad.clone())).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{bad} -> {body}");
    }
    // Rejected batches leave no trace.
    let (_, report) = call(&app, Method::GET, &format!("/sessions/{id}/report"), None).await;
    assert_eq!(report["log_len"], 0);

    let (status, _) = call(
        &app,
        Method::POST,
        &uri,
        Some(json!({"cells": [{"frame": 0}]})),
    )
    .await;
    assert!(status.is_client_error());
}

#[test]
fn checkpoint_ids_come_from_file_names() {
    let f = fixture();
    let store = serenade::service::CheckpointStore::new(&f.config.checkpoint_dir);
    assert_eq!(store.ids().unwrap(), vec!["toy".to_string()]);
    assert!(Path::new(&f.config.checkpoint_dir)
        .join("toy.srnd")
        .is_file());
}
