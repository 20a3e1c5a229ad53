use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{Completion, GatewayError, ModelConfig, TokenCounts};

pub const CASSETTE_FILE: &str = "cassette.jsonl";
pub const CASSETTE_META_FILE: &str = "cassette.meta.json";

/// One recorded answer. Field order here is the on-disk key order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CassetteEntry {
    pub digest: String,
    pub model: String,
    pub response_text: String,
    pub token_counts: TokenCounts,
}

impl CassetteEntry {
    pub(crate) fn into_completion(self, from_cassette: bool) -> Completion {
        Completion {
            text: self.response_text,
            model: self.model,
            digest: self.digest,
            token_counts: self.token_counts,
            from_cassette,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CassetteMetadata {
    pub created_at_unix: u64,
    pub models: ModelConfig,
    /// Decoding parameters sent with every request.
    pub decoding: BTreeMap<String, serde_json::Value>,
}

/// Digest-keyed response store, optionally backed by a directory holding
/// `cassette.jsonl` (append-only) and `cassette.meta.json`.
#[derive(Debug)]
pub struct Cassette {
    dir: Option<PathBuf>,
    inner: Mutex<Inner>,
}

#[derive(Debug, Default)]
struct Inner {
    entries: HashMap<String, CassetteEntry>,
    writer: Option<File>,
}

impl Cassette {
    pub fn in_memory() -> Self {
        Self { dir: None, inner: Mutex::new(Inner::default()) }
    }

    /// Loads `dir/cassette.jsonl` if present. New entries are appended to it.
    pub fn open(dir: &Path) -> Result<Self, GatewayError> {
        fs::create_dir_all(dir)?;
        let path = dir.join(CASSETTE_FILE);
        let mut entries = HashMap::new();
        if path.exists() {
            let reader = BufReader::new(File::open(&path)?);
            for (idx, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let entry: CassetteEntry = serde_json::from_str(&line).map_err(|e| {
                    GatewayError::CorruptCassette {
                        path: path.display().to_string(),
                        line: idx + 1,
                        reason: e.to_string(),
                    }
                })?;
                // first answer wins, matching record-mode semantics
                entries.entry(entry.digest.clone()).or_insert(entry);
            }
        }
        Ok(Self { dir: Some(dir.to_path_buf()), inner: Mutex::new(Inner { entries, writer: None }) })
    }

    /// Opens a cassette that must already exist (replay).
    pub fn open_existing(dir: &Path) -> Result<Self, GatewayError> {
        if !dir.join(CASSETTE_FILE).exists() {
            return Err(GatewayError::Config(format!(
                "no {CASSETTE_FILE} in cassette directory {}",
                dir.display()
            )));
        }
        Self::open(dir)
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub fn get(&self, digest: &str) -> Option<CassetteEntry> {
        self.lock().entries.get(digest).cloned()
    }

    pub fn len(&self) -> usize {
        self.lock().entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Inserts unless the digest is already present; returns the stored entry.
    /// The line append happens under the lock as a single write.
    pub fn insert(&self, entry: CassetteEntry) -> Result<CassetteEntry, GatewayError> {
        let mut inner = self.lock();
        if let Some(existing) = inner.entries.get(&entry.digest) {
            return Ok(existing.clone());
        }
        if let Some(dir) = &self.dir {
            if inner.writer.is_none() {
                let f = OpenOptions::new().create(true).append(true).open(dir.join(CASSETTE_FILE))?;
                inner.writer = Some(f);
            }
            let mut line = serde_json::to_string(&entry).expect("cassette entry serializes");
            line.push('\n');
            let writer = inner.writer.as_mut().expect("writer opened above");
            writer.write_all(line.as_bytes())?;
            writer.flush()?;
        }
        inner.entries.insert(entry.digest.clone(), entry.clone());
        Ok(entry)
    }

    /// All entries sorted by digest.
    pub fn entries_sorted(&self) -> Vec<CassetteEntry> {
        let mut v: Vec<_> = self.lock().entries.values().cloned().collect();
        v.sort_by(|a, b| a.digest.cmp(&b.digest));
        v
    }

    /// Rewrites the backing file in digest order so committed cassettes diff
    /// cleanly regardless of the scheduling that produced them.
    pub fn normalize(&self) -> Result<(), GatewayError> {
        let Some(dir) = &self.dir else { return Ok(()) };
        let entries = self.entries_sorted();
        let mut inner = self.lock();
        inner.writer = None;
        let mut buf = String::new();
        for e in &entries {
            buf.push_str(&serde_json::to_string(e).expect("cassette entry serializes"));
            buf.push('\n');
        }
        let tmp = dir.join(format!("{CASSETTE_FILE}.tmp"));
        fs::write(&tmp, buf)?;
        fs::rename(tmp, dir.join(CASSETTE_FILE))?;
        Ok(())
    }

    pub fn write_metadata(&self, meta: &CassetteMetadata) -> Result<(), GatewayError> {
        let Some(dir) = &self.dir else { return Ok(()) };
        let text = serde_json::to_string_pretty(meta).expect("metadata serializes");
        fs::write(dir.join(CASSETTE_META_FILE), text + "\n")?;
        Ok(())
    }

    pub fn read_metadata(dir: &Path) -> Option<CassetteMetadata> {
        let text = fs::read_to_string(dir.join(CASSETTE_META_FILE)).ok()?;
        serde_json::from_str(&text).ok()
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }
}
