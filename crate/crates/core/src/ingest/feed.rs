use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::{parse_unified_diff, IngestError, Language, PatchRecord};

const FEED_KEYS: [&str; 11] = [
    "cve_id",
    "cwe_ids",
    "repo_id",
    "commit_hash",
    "parent_hash",
    "file_path",
    "language",
    "func_before",
    "func_after",
    "diff",
    "commit_message",
];

/// A feed line that could not become a [`PatchRecord`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reject {
    pub line_no: usize,
    pub field: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FeedLoad {
    pub records: Vec<PatchRecord>,
    pub rejects: Vec<Reject>,
}

/// Loads a line-delimited feed. Records keep input order; every malformed
/// line becomes a [`Reject`] naming the first offending field.
pub fn load_patch_records(path: &Path) -> Result<FeedLoad, IngestError> {
    let text = fs::read_to_string(path)
        .map_err(|source| IngestError::UnreadableFile { path: path.to_path_buf(), source })?;
    Ok(parse_feed(&text))
}

pub(crate) fn parse_feed(text: &str) -> FeedLoad {
    let mut load = FeedLoad::default();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match parse_line(line) {
            Ok(r) => load.records.push(r),
            Err((field, reason)) => load.rejects.push(Reject { line_no: idx + 1, field, reason }),
        }
    }
    load
}

type FieldError = (String, String);

fn err(field: &str, reason: impl Into<String>) -> FieldError {
    (field.to_string(), reason.into())
}

fn string_field(obj: &Map<String, Value>, key: &str) -> Result<String, FieldError> {
    match obj.get(key) {
        None => Err(err(key, "missing")),
        Some(Value::String(s)) => Ok(s.clone()),
        Some(_) => Err(err(key, "expected a string")),
    }
}

fn non_empty(obj: &Map<String, Value>, key: &str) -> Result<String, FieldError> {
    let s = string_field(obj, key)?;
    if s.trim().is_empty() {
        return Err(err(key, "must not be empty"));
    }
    Ok(s)
}

fn hex_field(obj: &Map<String, Value>, key: &str) -> Result<String, FieldError> {
    let s = string_field(obj, key)?;
    if s.len() < 7 || s.len() > 64 || !s.bytes().all(|b| b.is_ascii_hexdigit()) {
        return Err(err(key, "expected a 7-64 digit hex commit id"));
    }
    Ok(s.to_ascii_lowercase())
}

fn parse_line(line: &str) -> Result<PatchRecord, FieldError> {
    let value: Value = serde_json::from_str(line).map_err(|e| err("<line>", format!("invalid JSON: {e}")))?;
    let Value::Object(obj) = value else {
        return Err(err("<line>", "expected a JSON object"));
    };
    for key in FEED_KEYS {
        if !obj.contains_key(key) {
            return Err(err(key, "missing"));
        }
    }
    if let Some(extra) = obj.keys().find(|k| !FEED_KEYS.contains(&k.as_str())) {
        return Err(err(extra, "unexpected key"));
    }

    let cve_id = non_empty(&obj, "cve_id")?;
    let cwe_ids = match obj.get("cwe_ids") {
        Some(Value::Array(items)) => items
            .iter()
            .map(|v| v.as_str().map(str::to_string).ok_or_else(|| err("cwe_ids", "expected strings")))
            .collect::<Result<Vec<_>, _>>()?,
        _ => return Err(err("cwe_ids", "expected an array of strings")),
    };
    let repo_id = non_empty(&obj, "repo_id")?;
    let commit_hash = hex_field(&obj, "commit_hash")?;
    let parent_hash = hex_field(&obj, "parent_hash")?;
    if commit_hash == parent_hash {
        return Err(err("parent_hash", "equals commit_hash"));
    }
    let file_path = non_empty(&obj, "file_path")?;
    if file_path.starts_with('/') || file_path.split('/').any(|c| c == "..") {
        return Err(err("file_path", "must be repository-relative"));
    }
    let language: Language = string_field(&obj, "language")?.parse().map_err(|e: String| err("language", e))?;
    let func_before = string_field(&obj, "func_before")?;
    let func_after = string_field(&obj, "func_after")?;
    let diff = string_field(&obj, "diff")?;
    let diff_hunks = parse_unified_diff(&diff).map_err(|e| err("diff", e.to_string()))?;
    let commit_message = string_field(&obj, "commit_message")?;

    Ok(PatchRecord {
        cve_id,
        cwe_ids,
        repo_id,
        commit_hash,
        parent_hash,
        file_path,
        language,
        func_before,
        func_after,
        diff_hunks,
        commit_message,
    })
}

/// Serializes a record as one feed line (no trailing newline).
pub fn emit_feed_line(record: &PatchRecord) -> String {
    let mut obj = Map::new();
    obj.insert("cve_id".into(), Value::String(record.cve_id.clone()));
    obj.insert(
        "cwe_ids".into(),
        Value::Array(record.cwe_ids.iter().cloned().map(Value::String).collect()),
    );
    obj.insert("repo_id".into(), Value::String(record.repo_id.clone()));
    obj.insert("commit_hash".into(), Value::String(record.commit_hash.clone()));
    obj.insert("parent_hash".into(), Value::String(record.parent_hash.clone()));
    obj.insert("file_path".into(), Value::String(record.file_path.clone()));
    obj.insert("language".into(), Value::String(record.language.as_str().into()));
    obj.insert("func_before".into(), Value::String(record.func_before.clone()));
    obj.insert("func_after".into(), Value::String(record.func_after.clone()));
    obj.insert("diff".into(), Value::String(record.diff_text()));
    obj.insert("commit_message".into(), Value::String(record.commit_message.clone()));
    Value::Object(obj).to_string()
}
