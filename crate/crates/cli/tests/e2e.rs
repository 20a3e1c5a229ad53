//! End-to-end runs over the fixture corpus.
//!
//! `regenerate_fixtures` is ignored by default. Run it with
//! `cargo test -p patchsieve --test e2e -- --ignored regenerate_fixtures`
//! after changing prompts, fixture cases or anything that feeds a digest.

mod support;

use std::fs;
use std::path::Path;

use support::*;

fn record(ws: &Path, cassette: &Path, extra: &[&str]) -> Corpus {
    let corpus = build_corpus(ws);
    let argv = run_all_args(ws, &corpus, "record", cassette, extra);
    let transport = FixtureModel::new(corpus.cases.clone()).transport();
    assert_eq!(patchsieve::run(&argv, Some(transport)), 0, "record run failed");
    corpus
}

#[test]
#[ignore]
fn regenerate_fixtures() {
    let cassette = cassette_dir();
    if cassette.exists() {
        fs::remove_dir_all(&cassette).unwrap();
    }
    let a = tempfile::tempdir().unwrap();
    record(a.path(), &cassette, &[]);
    let b = tempfile::tempdir().unwrap();
    record(b.path(), &cassette, &["--restrict-tools"]);
    let g = Golden { content_hash: content_hash(a.path()), restricted_content_hash: content_hash(b.path()) };
    let mut text = serde_json::to_string_pretty(&g).unwrap();
    text.push('\n');
    fs::write(fixtures_dir().join("golden.json"), text).unwrap();
}

#[test]
fn replay_reproduces_golden_in_process() {
    let ws = tempfile::tempdir().unwrap();
    let corpus = build_corpus(ws.path());
    let argv = run_all_args(ws.path(), &corpus, "replay", &cassette_dir(), &[]);
    assert_eq!(patchsieve::run(&argv, None), 0);
    assert_eq!(content_hash(ws.path()), golden().content_hash);
}

#[test]
fn replay_miss_fails_the_stage() {
    let ws = tempfile::tempdir().unwrap();
    let corpus = build_corpus(ws.path());
    let empty = tempfile::tempdir().unwrap();
    fs::write(empty.path().join("cassette.jsonl"), "").unwrap();
    let argv = run_all_args(ws.path(), &corpus, "replay", empty.path(), &[]);
    assert_eq!(patchsieve::run(&argv, None), 1);
}

#[test]
fn stages_run_individually() {
    let ws = tempfile::tempdir().unwrap();
    let corpus = build_corpus(ws.path());
    let base = |cmd: &[&str]| {
        let mut v = strings(&["patchsieve"]);
        v.extend(strings(cmd));
        v.extend(strings(&["--mode", "replay", "--workspace"]));
        v.push(ws.path().display().to_string());
        v.push("--cassette-dir".into());
        v.push(cassette_dir().display().to_string());
        v
    };
    let feed = corpus.feed.display().to_string();
    assert_eq!(patchsieve::run(&base(&["ingest", "--feed", &feed, "--strict"]), None), 0);
    assert_eq!(patchsieve::run(&base(&["classify"]), None), 0);
    let gate: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(ws.path().join("out/gate.json")).unwrap()).unwrap();
    let kept: Vec<&str> = gate["kept"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    assert!(!kept.contains(&"CVE-2031-0011"), "0.85 must not pass the 0.9 gate");
    assert!(!kept.contains(&"CVE-2031-0008"));
    assert!(kept.contains(&"CVE-2031-0005"));
    assert_eq!(patchsieve::run(&base(&["analyze"]), None), 0);
    assert_eq!(patchsieve::run(&base(&["build-dataset"]), None), 0);
    assert_eq!(content_hash(ws.path()), golden().content_hash);
    assert_eq!(patchsieve::run(&base(&["eval", "--no-context"]), None), 0);
    assert_eq!(patchsieve::run(&base(&["report"]), None), 0);
    let report = fs::read_to_string(ws.path().join("out/report.txt")).unwrap();
    assert!(report.contains("patch classification"));
    assert!(report.contains("detection without context"));
}
