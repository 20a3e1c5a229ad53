#![allow(dead_code, unused_imports)]

pub mod corpus;
pub mod model;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde::{Deserialize, Serialize};

pub use corpus::{build_corpus, fixtures_dir, load_cases, Case, Corpus};
pub use model::FixtureModel;

/// Pinned results of the recorded fixture runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Golden {
    pub content_hash: String,
    pub restricted_content_hash: String,
}

pub fn cassette_dir() -> PathBuf {
    fixtures_dir().join("cassette")
}

pub fn golden() -> Golden {
    let text = fs::read_to_string(fixtures_dir().join("golden.json")).expect("golden.json; regenerate the fixtures");
    serde_json::from_str(&text).unwrap()
}

pub fn strings(args: &[&str]) -> Vec<String> {
    args.iter().map(|s| s.to_string()).collect()
}

/// argv for `run-all` over a corpus workspace.
pub fn run_all_args(ws: &Path, corpus: &Corpus, mode: &str, cassette: &Path, extra: &[&str]) -> Vec<String> {
    let mut v = strings(&["patchsieve", "run-all", "--mode", mode]);
    v.push("--workspace".into());
    v.push(ws.display().to_string());
    v.push("--cassette-dir".into());
    v.push(cassette.display().to_string());
    v.push("--feed".into());
    v.push(corpus.feed.display().to_string());
    v.extend(extra.iter().map(|s| s.to_string()));
    v
}

/// Runs the built binary with a scrubbed environment.
pub fn run_binary(args: &[String]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_patchsieve"));
    cmd.args(&args[1..]);
    for (k, _) in std::env::vars() {
        if k.starts_with("PATCHSIEVE_") || k.starts_with("LLM_") {
            cmd.env_remove(k);
        }
    }
    cmd.env("LLM_BASE_URL", "http://127.0.0.1:9");
    cmd.output().expect("binary runs")
}

pub fn manifest(ws: &Path) -> serde_json::Value {
    let text = fs::read_to_string(ws.join("out/dataset.jsonl.manifest")).unwrap();
    serde_json::from_str(&text).unwrap()
}

pub fn content_hash(ws: &Path) -> String {
    manifest(ws)["content_hash"].as_str().unwrap().to_string()
}

pub fn read_jsonl(path: &Path) -> Vec<serde_json::Value> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}
