use std::path::Path;
use std::process::Command;

use oasis_core::fixtures::{self, Style};
use serde_json::Value;

fn oasis(root: &Path, args: &[&str]) -> (bool, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_oasis"))
        .arg("--data-root")
        .arg(root)
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap();
    (
        out.status.success(),
        String::from_utf8(out.stdout).unwrap(),
        String::from_utf8(out.stderr).unwrap(),
    )
}

fn json(root: &Path, args: &[&str]) -> Value {
    let (ok, stdout, stderr) = oasis(root, args);
    assert!(ok, "oasis {args:?} failed: {stderr}");
    serde_json::from_str(&stdout).unwrap_or_else(|e| panic!("{e}: {stdout}"))
}

#[test]
fn command_line_flow() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("data");
    let mut docs = fixtures::documents(Style::Web, 120, 3, "w");
    docs.extend((0..20).map(|i| oasis_core::Document::new(format!("s{i}"), fixtures::paragraph(Style::Web, 1, i))));
    let input = dir.path().join("in.jsonl");
    std::fs::write(&input, fixtures::to_jsonl(&docs)).unwrap();
    let pipeline = dir.path().join("p.json");
    std::fs::write(
        &pipeline,
        r#"{"name": "p", "cells": [{"kind": "min_word_count", "mode": "drop", "params": {"min": 40}}]}"#,
    )
    .unwrap();
    let p = pipeline.to_str().unwrap();

    let ingested = json(&root, &["corpus", "ingest", "--path", input.to_str().unwrap(), "--name", "raw"]);
    assert_eq!(ingested["corpus"]["doc_count"], 140);
    assert_eq!(json(&root, &["corpus", "list"]).as_array().unwrap().len(), 1);

    let preview = json(&root, &["rule", "preview", "--corpus", "raw", "--pipeline", p]);
    assert_eq!(preview["cells"][0]["stats"]["hits"], 20);
    let run = json(&root, &["rule", "run", "--corpus", "raw", "--pipeline", p, "--out", "clean"]);
    assert_eq!(run["output"], "clean");
    assert_eq!(run["result"]["corpus"]["doc_count"], 120);
    let shown = json(&root, &["corpus", "show", "clean"]);
    assert_eq!(shown["lineage"].as_array().unwrap().len(), 1);

    let plan = json(&root, &["dedup", "plan", "--corpus", "clean", "--memory", "100000"]);
    assert!(plan["estimated_bytes"].as_u64().unwrap() <= 100_000);

    json(&root, &["lm", "train", "--corpus", "clean", "--out", "m", "--order", "3"]);
    json(&root, &["lm", "score", "--corpus", "raw", "--model", "m"]);
    let q = json(&root, &["lm", "quantile", "--model", "m", "--corpus", "raw", "--q", "0.5"]);
    assert_eq!(q["scored"], 140);

    json(
        &root,
        &[
            "assess", "rate", "--corpus", "clean", "--doc", "w-00001", "--rating", "high", "--rater", "cli",
        ],
    );
    let summary = json(&root, &["assess", "ratings", "--corpus", "clean"]);
    assert_eq!(summary["high"], 1);

    // failures exit non-zero with a message
    let (ok, _, stderr) = oasis(&root, &["rule", "run", "--corpus", "raw", "--pipeline", p, "--out", "clean"]);
    assert!(!ok);
    assert!(stderr.contains("clean"), "{stderr}");
    let (ok, _, _) = oasis(&root, &["corpus", "show", "nope"]);
    assert!(!ok);
}
