//! Builds the end-to-end corpus: one git repository per fixture case, the
//! feed derived from it, advisories and discussion cache entries.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use patchsieve_core::codeindex::build_index_dir;
use patchsieve_core::ingest::Language;
use serde::Deserialize;
use serde_json::json;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Case {
    pub cve_id: String,
    pub cwe_ids: Vec<String>,
    pub description: String,
    pub commit_message: String,
    pub root_cause: String,
    pub root_key: String,
    pub final_confidence: f64,
    #[serde(default)]
    pub undecidable: Option<String>,
    #[serde(default)]
    pub stuck_gap: Option<String>,
    #[serde(default)]
    pub stuck_reason: Option<String>,
    pub patches: Vec<CasePatch>,
    #[serde(default)]
    pub needs: Vec<Need>,
    #[serde(default)]
    pub detect: BTreeMap<String, DetectSpec>,
    #[serde(skip)]
    pub slug: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CasePatch {
    pub file: String,
    pub function: String,
    pub language: String,
    pub category: String,
    pub confidence: f64,
    #[serde(default)]
    pub fix_marker: Option<String>,
    #[serde(default)]
    pub discussion: Vec<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Need {
    pub kind: String,
    pub target: String,
    pub evidence: String,
    pub gap: String,
    pub break_point: String,
    #[serde(default)]
    pub scope: Option<String>,
    #[serde(default)]
    pub query: Option<String>,
    /// Needs sharing a step surface together; defaults to the list position.
    #[serde(default)]
    pub step: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectSpec {
    pub pre: String,
    pub post: String,
    pub aligned: bool,
}

impl Case {
    pub fn step_of(&self, i: usize) -> usize {
        self.needs[i].step.unwrap_or(i)
    }

    pub fn repo_id(&self) -> String {
        format!("fixture/{}", self.slug)
    }
}

pub fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/e2e")
}

pub fn load_cases() -> Vec<Case> {
    let dir = fixtures_dir().join("cases");
    let mut slugs: Vec<String> = fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    slugs.sort();
    slugs
        .into_iter()
        .map(|slug| {
            let text = fs::read_to_string(dir.join(&slug).join("case.toml")).unwrap();
            let mut c: Case = toml::from_str(&text).unwrap_or_else(|e| panic!("{slug}: {e}"));
            c.slug = slug;
            c
        })
        .collect()
}

fn git(repo: &Path, args: &[&str]) -> String {
    let out = Command::new("git")
        .arg("-C")
        .arg(repo)
        .args(["-c", "core.autocrlf=false", "-c", "commit.gpgsign=false"])
        .args(args)
        .env("GIT_CONFIG_GLOBAL", "/dev/null")
        .env("GIT_CONFIG_NOSYSTEM", "1")
        .env("GIT_AUTHOR_NAME", "Fixture Author")
        .env("GIT_AUTHOR_EMAIL", "author@fixture.invalid")
        .env("GIT_AUTHOR_DATE", "2031-01-01T00:00:00+0000")
        .env("GIT_COMMITTER_NAME", "Fixture Author")
        .env("GIT_COMMITTER_EMAIL", "author@fixture.invalid")
        .env("GIT_COMMITTER_DATE", "2031-01-01T00:00:00+0000")
        .output()
        .expect("git runs");
    assert!(out.status.success(), "git {args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn copy_tree(from: &Path, to: &Path) {
    for entry in fs::read_dir(from).unwrap() {
        let entry = entry.unwrap();
        let dest = to.join(entry.file_name());
        if entry.file_type().unwrap().is_dir() {
            fs::create_dir_all(&dest).unwrap();
            copy_tree(&entry.path(), &dest);
        } else {
            fs::copy(entry.path(), &dest).unwrap();
        }
    }
}

fn clear_worktree(repo: &Path) {
    for entry in fs::read_dir(repo).unwrap() {
        let entry = entry.unwrap();
        if entry.file_name() == ".git" {
            continue;
        }
        if entry.file_type().unwrap().is_dir() {
            fs::remove_dir_all(entry.path()).unwrap();
        } else {
            fs::remove_file(entry.path()).unwrap();
        }
    }
}

fn function_text(root: &Path, file: &str, name: &str) -> String {
    let langs = [Language::C, Language::Cpp, Language::Java];
    let idx = build_index_dir(root, &langs).unwrap();
    let defs = idx.func_info(name, Some(file));
    let d = defs.first().unwrap_or_else(|| panic!("{name} not found in {file}"));
    let text = fs::read_to_string(root.join(file)).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    let mut out = lines[d.start_line as usize - 1..d.end_line as usize].join("\n");
    out.push('\n');
    out
}

/// Everything a pipeline run needs, laid out under one workspace.
pub struct Corpus {
    pub feed: PathBuf,
    pub cases: Vec<Case>,
}

/// Creates clones, feed, advisories and discussions under `ws`.
pub fn build_corpus(ws: &Path) -> Corpus {
    let cases = load_cases();
    let src = fixtures_dir().join("cases");
    let mut feed = String::new();
    let mut advisories = String::new();
    fs::create_dir_all(ws.join("discussions")).unwrap();
    for case in &cases {
        let repo = ws.join("clones").join(case.repo_id());
        fs::create_dir_all(&repo).unwrap();
        git(&repo, &["init", "-q"]);
        copy_tree(&src.join(&case.slug).join("pre"), &repo);
        git(&repo, &["add", "-A"]);
        git(&repo, &["commit", "-q", "-m", "import"]);
        let parent = git(&repo, &["rev-parse", "HEAD"]).trim().to_string();
        let pre_root = src.join(&case.slug).join("pre");
        let post_root = src.join(&case.slug).join("post");
        clear_worktree(&repo);
        copy_tree(&post_root, &repo);
        git(&repo, &["add", "-A"]);
        git(&repo, &["commit", "-q", "-m", &case.commit_message]);
        let commit = git(&repo, &["rev-parse", "HEAD"]).trim().to_string();

        for p in &case.patches {
            let diff = git(&repo, &["diff", "--no-color", &parent, &commit, "--", &p.file]);
            assert!(!diff.is_empty(), "{}: no change in {}", case.slug, p.file);
            let line = json!({
                "cve_id": case.cve_id,
                "cwe_ids": case.cwe_ids,
                "repo_id": case.repo_id(),
                "commit_hash": commit,
                "parent_hash": parent,
                "file_path": p.file,
                "language": p.language,
                "func_before": function_text(&pre_root, &p.file, &p.function),
                "func_after": function_text(&post_root, &p.file, &p.function),
                "diff": diff,
                "commit_message": case.commit_message,
            });
            feed.push_str(&serde_json::to_string(&line).unwrap());
            feed.push('\n');
            if !p.discussion.is_empty() {
                let entry = json!({
                    "source": "pull_request",
                    "url": format!("https://git.fixture.invalid/{}/pull/1", case.repo_id()),
                    "bodies": p.discussion,
                });
                let key = format!("{}_{}.disc", case.repo_id().replace('/', "_"), commit);
                fs::write(ws.join("discussions").join(key), entry.to_string()).unwrap();
            }
        }
        advisories.push_str(&json!({ "cve_id": case.cve_id, "description": case.description }).to_string());
        advisories.push('\n');
    }
    let feed_path = ws.join("feed.jsonl");
    fs::write(&feed_path, feed).unwrap();
    fs::write(ws.join("cves.jsonl"), advisories).unwrap();
    Corpus { feed: feed_path, cases }
}
