//! The CVE-indexed dataset: consolidation, validation and byte-stable output.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use once_cell::sync::Lazy;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agentloop::{AnalysisOutcome, ContextFulfillment, OutcomeStatus, UndecidableReason};
use crate::classify::{ClassificationResult, PatchCategory};
use crate::ingest::{Language, PatchRecord};
use crate::util::{sha256_hex, write_atomic};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasicInfo {
    pub repo_id: String,
    pub commit_hashes: Vec<String>,
    pub parent_hashes: Vec<String>,
    pub language: Language,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub cve_id: String,
    pub status: OutcomeStatus,
    pub root_cause: Option<String>,
    pub final_confidence: f64,
    pub undecidable_reason: Option<UndecidableReason>,
    pub cwe_ids: Vec<String>,
    pub file_paths: Vec<String>,
    /// sha256 of each raw pre-patch file, when the snapshot was available.
    #[serde(default)]
    pub file_hashes: BTreeMap<String, String>,
    pub basic_info: BasicInfo,
    pub classification: Vec<ClassificationResult>,
    pub contexts: Vec<ContextFulfillment>,
    pub iterations_used: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub field: String,
    pub rule: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.field, self.rule)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub schema_version: u32,
    pub format: String,
    pub record_count: usize,
    pub per_status: BTreeMap<String, usize>,
    pub per_cwe: BTreeMap<String, usize>,
    pub content_hash: String,
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("duplicate CVE {0}")]
    DuplicateCve(String),
    #[error("no classification for {0}")]
    MissingClassification(String),
    #[error("no patch records for {0}")]
    MissingPatches(String),
    #[error("record {cve_id} fails validation: {violation}")]
    ValidationFailed { cve_id: String, violation: Violation },
    #[error("cannot write {path}: {source}")]
    UnwritablePath {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot read dataset {path}: {reason}")]
    Unreadable { path: PathBuf, reason: String },
}

/// One record per outcome, joined with its classifications and patches.
pub fn consolidate(
    outcomes: &[AnalysisOutcome],
    classifications: &BTreeMap<String, Vec<ClassificationResult>>,
    patches: &BTreeMap<String, Vec<PatchRecord>>,
) -> Result<Vec<DatasetRecord>, DatasetError> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(outcomes.len());
    for o in outcomes {
        if !seen.insert(o.cve_id.clone()) {
            return Err(DatasetError::DuplicateCve(o.cve_id.clone()));
        }
        let mut cls = classifications
            .get(&o.cve_id)
            .filter(|c| !c.is_empty())
            .cloned()
            .ok_or_else(|| DatasetError::MissingClassification(o.cve_id.clone()))?;
        cls.sort_by(|a, b| a.patch_ref.cmp(&b.patch_ref));
        let recs = patches
            .get(&o.cve_id)
            .filter(|p| !p.is_empty())
            .ok_or_else(|| DatasetError::MissingPatches(o.cve_id.clone()))?;
        let sorted = |f: &dyn Fn(&PatchRecord) -> Vec<String>| -> Vec<String> {
            let s: BTreeSet<String> = recs.iter().flat_map(f).collect();
            s.into_iter().collect()
        };
        out.push(DatasetRecord {
            cve_id: o.cve_id.clone(),
            status: o.status,
            root_cause: o.root_cause.clone(),
            final_confidence: o.final_confidence,
            undecidable_reason: o.undecidable_reason,
            cwe_ids: sorted(&|p| p.cwe_ids.clone()),
            file_paths: sorted(&|p| vec![p.file_path.clone()]),
            file_hashes: BTreeMap::new(),
            basic_info: BasicInfo {
                repo_id: recs[0].repo_id.clone(),
                commit_hashes: sorted(&|p| vec![p.commit_hash.clone()]),
                parent_hashes: sorted(&|p| vec![p.parent_hash.clone()]),
                language: recs[0].language,
            },
            classification: cls,
            contexts: o.contexts.clone(),
            iterations_used: o.iterations_used,
        });
    }
    out.sort_by(|a, b| a.cve_id.cmp(&b.cve_id));
    Ok(out)
}

static CVE_RE: Lazy<Regex> = Lazy::new(|| Regex::new(r"^CVE-\d{4}-\d{4,}$").unwrap());
static CWE_RE: Lazy<Regex> = Lazy::new(|| Regex::new(r"^(CWE-\d+|NVD-CWE-Other|NVD-CWE-noinfo)$").unwrap());
static HEX_RE: Lazy<Regex> = Lazy::new(|| Regex::new(r"^[0-9a-f]{7,64}$").unwrap());

pub fn validate_record(r: &DatasetRecord) -> Vec<Violation> {
    let mut v = Vec::new();
    let mut bad = |field: &str, rule: String| v.push(Violation { field: field.to_string(), rule });
    if !CVE_RE.is_match(&r.cve_id) {
        bad("cve_id", format!("`{}` is not a CVE identifier", r.cve_id));
    }
    if !(r.final_confidence.is_finite() && (0.0..=1.0).contains(&r.final_confidence)) {
        bad("final_confidence", format!("{} outside [0, 1]", r.final_confidence));
    }
    let has_root = r.root_cause.as_deref().is_some_and(|s| !s.trim().is_empty());
    match r.status {
        OutcomeStatus::Resolved if !has_root => bad("root_cause", "required when status is resolved".into()),
        OutcomeStatus::Resolved | OutcomeStatus::Error if r.undecidable_reason.is_some() => {
            bad("undecidable_reason", "only allowed when status is undecidable".into())
        }
        OutcomeStatus::Undecidable if r.undecidable_reason.is_none() => {
            bad("undecidable_reason", "required when status is undecidable".into())
        }
        _ => {}
    }
    if r.classification.is_empty() {
        bad("classification", "at least one classification result is required".into());
    }
    for c in &r.classification {
        if c.cve_id != r.cve_id {
            bad("classification", format!("result {} belongs to {}", c.patch_ref, c.cve_id));
        }
        if !(0.0..=1.0).contains(&c.confidence) {
            bad("classification", format!("confidence {} of {} outside [0, 1]", c.confidence, c.patch_ref));
        }
        if (c.category == PatchCategory::Security) == c.boundary_assessment.trim().is_empty() {
            bad("classification", format!("boundary assessment of {} does not match its category", c.patch_ref));
        }
    }
    for cwe in &r.cwe_ids {
        if !CWE_RE.is_match(cwe) {
            bad("cwe_ids", format!("`{cwe}` is not a CWE identifier"));
        }
    }
    if r.file_paths.is_empty() {
        bad("file_paths", "at least one path is required".into());
    }
    for p in &r.file_paths {
        if p.starts_with('/') || p.split('/').any(|s| s == "..") || p.is_empty() {
            bad("file_paths", format!("`{p}` is not a repository-relative path"));
        }
    }
    for h in r.basic_info.commit_hashes.iter().chain(&r.basic_info.parent_hashes) {
        if !HEX_RE.is_match(h) {
            bad("basic_info", format!("`{h}` is not a lowercase hex commit id"));
        }
    }
    if r.basic_info.commit_hashes.is_empty() {
        bad("basic_info", "at least one commit is required".into());
    }
    let keys: BTreeSet<&str> = r.contexts.iter().map(|c| c.request.normalized_key.as_str()).collect();
    if keys.len() != r.contexts.len() {
        bad("contexts", "two contexts share a normalized request key".into());
    }
    v
}

/// Removes undecidable records, for datasets that only keep traced CVEs.
pub fn drop_undecidable(records: Vec<DatasetRecord>) -> Vec<DatasetRecord> {
    records.into_iter().filter(|r| r.status != OutcomeStatus::Undecidable).collect()
}

/// The exact bytes `emit` writes: one JSON object per line, sorted by CVE.
pub fn render_jsonl(records: &[DatasetRecord]) -> Vec<u8> {
    let mut sorted: Vec<&DatasetRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.cve_id.cmp(&b.cve_id));
    let mut out = Vec::new();
    for r in sorted {
        out.extend(serde_json::to_vec(r).expect("records serialize"));
        out.push(b'\n');
    }
    out
}

pub fn manifest_for(records: &[DatasetRecord], bytes: &[u8]) -> DatasetManifest {
    let mut per_status: BTreeMap<String, usize> = [OutcomeStatus::Resolved, OutcomeStatus::Undecidable, OutcomeStatus::Error]
        .iter()
        .map(|s| (s.as_str().to_string(), 0))
        .collect();
    let mut per_cwe: BTreeMap<String, usize> = BTreeMap::new();
    for r in records {
        *per_status.get_mut(r.status.as_str()).unwrap() += 1;
        for c in &r.cwe_ids {
            *per_cwe.entry(c.clone()).or_default() += 1;
        }
    }
    DatasetManifest {
        schema_version: SCHEMA_VERSION,
        format: "jsonl".into(),
        record_count: records.len(),
        per_status,
        per_cwe,
        content_hash: sha256_hex(bytes),
    }
}

pub fn manifest_path(out_path: &Path) -> PathBuf {
    let mut name = out_path.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest");
    out_path.with_file_name(name)
}

/// Validates every record, then writes `out_path` and `<out_path>.manifest`.
pub fn emit(records: &[DatasetRecord], out_path: &Path) -> Result<DatasetManifest, DatasetError> {
    let mut seen = BTreeSet::new();
    for r in records {
        if !seen.insert(&r.cve_id) {
            return Err(DatasetError::DuplicateCve(r.cve_id.clone()));
        }
        if let Some(v) = validate_record(r).into_iter().next() {
            return Err(DatasetError::ValidationFailed { cve_id: r.cve_id.clone(), violation: v });
        }
    }
    let bytes = render_jsonl(records);
    let manifest = manifest_for(records, &bytes);
    let unwritable = |path: &Path| {
        let path = path.to_path_buf();
        move |source| DatasetError::UnwritablePath { path, source }
    };
    write_atomic(out_path, &bytes).map_err(unwritable(out_path))?;
    let mpath = manifest_path(out_path);
    let mut mbytes = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    mbytes.push(b'\n');
    write_atomic(&mpath, &mbytes).map_err(unwritable(&mpath))?;
    Ok(manifest)
}

pub fn load_dataset(path: &Path) -> Result<Vec<DatasetRecord>, DatasetError> {
    let text = fs::read_to_string(path)
        .map_err(|e| DatasetError::Unreadable { path: path.to_path_buf(), reason: e.to_string() })?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| DatasetError::Unreadable {
                path: path.to_path_buf(),
                reason: format!("line {}: {e}", i + 1),
            })
        })
        .collect()
}
