//! Patch records, repository snapshots and cached discussion text.

mod diff;
mod discussion;
mod feed;
mod snapshot;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use diff::{parse_unified_diff, render_unified_diff, DiffError, Hunk};
pub use discussion::{
    discussion_cache_key, fetch_discussion, lookup_discussion, Discussion, DiscussionLookup, DiscussionSource,
};
pub use feed::{emit_feed_line, load_patch_records, FeedLoad, Reject};
pub use snapshot::{clone_dir, make_writable, materialize_snapshot, snapshot_dir, Side, SnapshotRef};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Language {
    C,
    Cpp,
    Java,
    Other,
}

impl Language {
    pub const ALL: [Language; 4] = [Language::C, Language::Cpp, Language::Java, Language::Other];

    pub fn as_str(self) -> &'static str {
        match self {
            Language::C => "c",
            Language::Cpp => "cpp",
            Language::Java => "java",
            Language::Other => "other",
        }
    }

    /// Whether stage two can build a code index for this language.
    pub fn is_indexable(self) -> bool {
        !matches!(self, Language::Other)
    }
}

impl FromStr for Language {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "c" => Ok(Language::C),
            "cpp" => Ok(Language::Cpp),
            "java" => Ok(Language::Java),
            "other" => Ok(Language::Other),
            _ => Err(format!("unknown language `{s}`")),
        }
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One file-level patch of one commit of one CVE.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchRecord {
    pub cve_id: String,
    pub cwe_ids: Vec<String>,
    pub repo_id: String,
    pub commit_hash: String,
    pub parent_hash: String,
    pub file_path: String,
    pub language: Language,
    pub func_before: String,
    pub func_after: String,
    pub diff_hunks: Vec<Hunk>,
    pub commit_message: String,
}

impl PatchRecord {
    /// Stable identifier: `<cve>:<commit[..12]>:<path>`.
    pub fn patch_ref(&self) -> String {
        let short = &self.commit_hash[..self.commit_hash.len().min(12)];
        format!("{}:{}:{}", self.cve_id, short, self.file_path)
    }

    pub fn diff_text(&self) -> String {
        render_unified_diff(&self.file_path, &self.diff_hunks)
    }
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    UnreadableFile {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line_no}: field `{field}`: {reason}")]
    SchemaViolation { line_no: usize, field: String, reason: String },
    #[error("no local clone for {repo_id} at {path}")]
    MissingClone { repo_id: String, path: PathBuf },
    #[error("commit {commit} not found in clone of {repo_id}")]
    MissingCommit { repo_id: String, commit: String },
    #[error("snapshot directory {0} exists but was not produced by a completed materialization")]
    DirtyWorkspace(PathBuf),
    #[error("git failed: {0}")]
    Git(String),
    #[error("corrupt discussion cache entry {path}: {reason}")]
    CorruptCacheEntry { path: PathBuf, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
