//! Offline discussion cache: one JSON file per record, never fetched live.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{IngestError, PatchRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscussionSource {
    PullRequest,
    Issue,
    None,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Discussion {
    pub source: DiscussionSource,
    pub url: String,
    pub body_texts: Vec<String>,
    pub total_words: usize,
}

impl Discussion {
    pub fn none() -> Self {
        Discussion { source: DiscussionSource::None, url: String::new(), body_texts: Vec::new(), total_words: 0 }
    }

    pub fn new(source: DiscussionSource, url: impl Into<String>, body_texts: Vec<String>) -> Self {
        let total_words = body_texts.iter().map(|b| b.split_whitespace().count()).sum();
        Discussion { source, url: url.into(), body_texts, total_words }
    }

    pub fn is_empty(&self) -> bool {
        self.source == DiscussionSource::None || self.body_texts.iter().all(|b| b.trim().is_empty())
    }
}

/// Result of a cache lookup that never fails the pipeline.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiscussionLookup {
    pub discussion: Discussion,
    /// Set when a cache entry existed but could not be read.
    pub corrupt: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CacheFile {
    source: DiscussionSource,
    #[serde(default)]
    url: String,
    bodies: Vec<String>,
}

/// `<repo_id>_<commit_hash>.disc`, with `/` in the repo id replaced by `_`.
pub fn discussion_cache_key(record: &PatchRecord) -> String {
    format!("{}_{}.disc", record.repo_id.replace('/', "_"), record.commit_hash)
}

fn cache_path(record: &PatchRecord, cache_dir: &Path) -> PathBuf {
    cache_dir.join(discussion_cache_key(record))
}

/// Strict lookup: a missing entry is `source = none`, a damaged one is an error.
pub fn fetch_discussion(record: &PatchRecord, cache_dir: &Path) -> Result<Discussion, IngestError> {
    let path = cache_path(record, cache_dir);
    let bytes = match fs::read(&path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Discussion::none()),
        Err(e) => return Err(IngestError::CorruptCacheEntry { path, reason: e.to_string() }),
    };
    let file: CacheFile = serde_json::from_slice(&bytes)
        .map_err(|e| IngestError::CorruptCacheEntry { path: path.clone(), reason: e.to_string() })?;
    if file.source == DiscussionSource::None {
        return Ok(Discussion::none());
    }
    Ok(Discussion::new(file.source, file.url, file.bodies))
}

/// Lenient lookup used by the pipeline: corruption is logged and reported
/// alongside a `source = none` result.
pub fn lookup_discussion(record: &PatchRecord, cache_dir: &Path) -> DiscussionLookup {
    match fetch_discussion(record, cache_dir) {
        Ok(discussion) => DiscussionLookup { discussion, corrupt: None },
        Err(e) => {
            log::warn!("{e}");
            DiscussionLookup { discussion: Discussion::none(), corrupt: Some(e.to_string()) }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::Language;

    fn rec() -> PatchRecord {
        PatchRecord {
            cve_id: "CVE-2021-1".into(),
            cwe_ids: vec![],
            repo_id: "acme/widget".into(),
            commit_hash: "b".repeat(40),
            parent_hash: "a".repeat(40),
            file_path: "w.c".into(),
            language: Language::C,
            func_before: String::new(),
            func_after: String::new(),
            diff_hunks: vec![],
            commit_message: String::new(),
        }
    }

    #[test]
    fn no_entry_is_none() {
        let dir = tempfile::tempdir().unwrap();
        let d = fetch_discussion(&rec(), dir.path()).unwrap();
        assert_eq!(d.source, DiscussionSource::None);
        assert_eq!(d.total_words, 0);
    }

    #[test]
    fn pull_request_word_count() {
        let dir = tempfile::tempdir().unwrap();
        let body = r#"{"source":"pull_request","url":"https://example.org/pr/1","bodies":["LGTM","this fixes the overflow"]}"#;
        fs::write(dir.path().join(discussion_cache_key(&rec())), body).unwrap();
        let d = fetch_discussion(&rec(), dir.path()).unwrap();
        assert_eq!(d.source, DiscussionSource::PullRequest);
        assert_eq!(d.total_words, 5);
    }

    #[test]
    fn truncated_entry_degrades_to_none() {
        let dir = tempfile::tempdir().unwrap();
        let body = r#"{"source":"issue","url":"u","bodies":["a b c"]}"#;
        let path = dir.path().join(discussion_cache_key(&rec()));
        fs::write(&path, &body[..body.len() / 2]).unwrap();
        assert!(matches!(fetch_discussion(&rec(), dir.path()), Err(IngestError::CorruptCacheEntry { .. })));
        let lookup = lookup_discussion(&rec(), dir.path());
        assert_eq!(lookup.discussion, Discussion::none());
        assert!(lookup.corrupt.is_some());
    }

    #[test]
    fn key_flattens_repo_id() {
        assert_eq!(discussion_cache_key(&rec()), format!("acme_widget_{}.disc", "b".repeat(40)));
    }
}
