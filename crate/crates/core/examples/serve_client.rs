//! Runs the annotation service on a local port and talks to it over plain
//! HTTP/1.1, the way the browser front end does.
//!
//! cargo run --example serve_client

use std::io::{Read, Write};
use std::net::TcpStream;
use std::sync::Arc;

use serde_json::{json, Value};

use serenade::features::{synth_corpus, SynthConfig};
use serenade::model::{ModelConfig, Serenade};
use serenade::service::{router, AppState, ServiceConfig};
use serenade::training::{write_corpus_dir, Checkpoint, CheckpointMeta};

fn request(addr: &str, method: &str, path: &str, body: Option<&Value>) -> (u16, Value) {
    let body = body.map(Value::to_string).unwrap_or_default();
    let mut stream = TcpStream::connect(addr).unwrap();
    write!(
        stream,
        "{method} {path} HTTP/1.1\r\nHost: {addr}\r\nContent-Type: application/json\r\n\
         Content-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    )
    .unwrap();
    let mut raw = String::new();
    stream.read_to_string(&mut raw).unwrap();
    let (head, payload) = raw.split_once("\r\n\r\n").unwrap();
    let status = head.split(' ').nth(1).unwrap().parse().unwrap();
    (status, serde_json::from_str(payload).unwrap_or(Value::Null))
}

fn main() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let config = ModelConfig::default();
    std::fs::create_dir_all(root.join("checkpoints")).unwrap();
    Checkpoint::new(Serenade::init(config, 0), CheckpointMeta::untrained(config))
        .save(root.join("checkpoints/untrained.srnd"))
        .unwrap();
    let corpus = synth_corpus(
        &SynthConfig {
            excerpts: 1,
            frames: 32,
            ..SynthConfig::default()
        },
        2,
    );
    write_corpus_dir(root.join("corpus"), &corpus).unwrap();
    let service = ServiceConfig {
        checkpoint_dir: root.join("checkpoints"),
        corpus_dir: Some(root.join("corpus")),
        session_dir: Some(root.join("sessions")),
        ..ServiceConfig::default()
    };

    let runtime = tokio::runtime::Runtime::new().unwrap();
    let listener = runtime
        .block_on(tokio::net::TcpListener::bind("127.0.0.1:0"))
        .unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    let app = router(Arc::new(AppState::new(service)));
    runtime.spawn(async move { axum::serve(listener, app).await.unwrap() });
    println!("serving on {addr}");

    let (status, list) = request(&addr, "GET", "/checkpoints", None);
    println!("GET /checkpoints -> {status} {list}");

    let track = corpus[0].id.clone();
    let create = json!({"checkpoint": "untrained", "track": track});
    let (status, created) = request(&addr, "POST", "/sessions", Some(&create));
    let id = created["id"].as_str().unwrap().to_string();
    println!(
        "POST /sessions -> {status}, session {id}, {} frames",
        created["frames"]
    );

    let batch = json!({
        "cells": [{"frame": 0, "sub_label": "key_root", "class": corpus[0].labels[0].classes()[0]}],
        "ranges": [{"start": 0, "end": 8, "sub_label": "chord_quality", "class": 0}],
    });
    let (status, delta) = request(
        &addr,
        "POST",
        &format!("/sessions/{id}/annotations"),
        Some(&batch),
    );
    println!(
        "POST annotations -> {status}, {} annotated and {} propagated changes, cost {}",
        delta["annotated"].as_array().map_or(0, Vec::len),
        delta["propagated"].as_array().map_or(0, Vec::len),
        delta["cost"]
    );

    let (status, report) = request(&addr, "GET", &format!("/sessions/{id}/report"), None);
    println!(
        "GET report -> {status} {}",
        serde_json::to_string_pretty(&report).unwrap()
    );

    let (status, err) = request(&addr, "GET", "/sessions/missing/prediction", None);
    println!("GET unknown session -> {status} {err}");
}
