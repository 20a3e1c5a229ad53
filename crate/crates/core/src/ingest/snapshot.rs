//! Read-only checkouts of one commit of a local clone.
//!
//! Layout under the workspace:
//!
//! ```text
//! clones/<repo_id>/                 existing git clone (input)
//! snapshots/<repo_key>/<hash>/      extracted tree, read-only
//! snapshots/<repo_key>/<hash>.done  completion marker holding the file count
//! ```
//!
//! Extraction goes to `<hash>.partial` first and is renamed into place, so a
//! directory without its marker means something else wrote there.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::{Arc, Mutex};

use once_cell::sync::Lazy;
use serde::{Deserialize, Serialize};

use super::{IngestError, PatchRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Pre,
    Post,
}

impl Side {
    pub fn as_str(self) -> &'static str {
        match self {
            Side::Pre => "pre",
            Side::Post => "post",
        }
    }
}

impl std::fmt::Display for Side {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnapshotRef {
    pub repo_id: String,
    pub commit_hash: String,
    pub side: Side,
    pub root_dir: PathBuf,
    pub file_count: usize,
}

static REPO_LOCKS: Lazy<Mutex<HashMap<PathBuf, Arc<Mutex<()>>>>> = Lazy::new(Default::default);

fn repo_lock(clone: &Path) -> Arc<Mutex<()>> {
    let mut locks = REPO_LOCKS.lock().unwrap_or_else(|p| p.into_inner());
    locks.entry(clone.to_path_buf()).or_default().clone()
}

pub fn clone_dir(workspace: &Path, repo_id: &str) -> PathBuf {
    workspace.join("clones").join(repo_id)
}

pub fn snapshot_dir(workspace: &Path, repo_id: &str, commit: &str) -> PathBuf {
    workspace.join("snapshots").join(repo_id.replace('/', "_")).join(commit)
}

fn marker_path(dir: &Path) -> PathBuf {
    dir.with_extension("done")
}

/// Materializes the parent (pre) or the commit itself (post) of `record`.
/// Repeated calls return the same `root_dir` without touching it again.
pub fn materialize_snapshot(record: &PatchRecord, side: Side, workspace: &Path) -> Result<SnapshotRef, IngestError> {
    let commit = match side {
        Side::Pre => &record.parent_hash,
        Side::Post => &record.commit_hash,
    };
    let file_count = materialize_commit(workspace, &record.repo_id, commit)?;
    Ok(SnapshotRef {
        repo_id: record.repo_id.clone(),
        commit_hash: commit.clone(),
        side,
        root_dir: snapshot_dir(workspace, &record.repo_id, commit),
        file_count,
    })
}

fn materialize_commit(workspace: &Path, repo_id: &str, commit: &str) -> Result<usize, IngestError> {
    let clone = clone_dir(workspace, repo_id);
    if !clone.is_dir() {
        return Err(IngestError::MissingClone { repo_id: repo_id.to_string(), path: clone });
    }
    let lock = repo_lock(&clone);
    let _guard = lock.lock().unwrap_or_else(|p| p.into_inner());

    let target = snapshot_dir(workspace, repo_id, commit);
    let marker = marker_path(&target);
    if target.exists() {
        if let Some(count) = read_marker(&marker) {
            return Ok(count);
        }
        return Err(IngestError::DirtyWorkspace(target));
    }

    let status = Command::new("git")
        .arg("-C")
        .arg(&clone)
        .args(["cat-file", "-e", &format!("{commit}^{{commit}}")])
        .stderr(Stdio::null())
        .status()
        .map_err(|e| IngestError::Git(format!("cannot run git: {e}")))?;
    if !status.success() {
        return Err(IngestError::MissingCommit { repo_id: repo_id.to_string(), commit: commit.to_string() });
    }

    let partial = target.with_extension("partial");
    if partial.exists() {
        make_writable(&partial)?;
        fs::remove_dir_all(&partial)?;
    }
    fs::create_dir_all(&partial)?;
    extract_tree(&clone, commit, &partial)?;
    let count = count_files(&partial)?;
    seal(&partial)?;
    fs::rename(&partial, &target)?;
    fs::write(&marker, count.to_string())?;
    Ok(count)
}

fn read_marker(marker: &Path) -> Option<usize> {
    fs::read_to_string(marker).ok()?.trim().parse().ok()
}

fn extract_tree(clone: &Path, commit: &str, dest: &Path) -> Result<(), IngestError> {
    let mut archive = Command::new("git")
        .arg("-C")
        .arg(clone)
        .args(["archive", "--format=tar", commit])
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| IngestError::Git(format!("cannot run git archive: {e}")))?;
    let stdout = archive.stdout.take().expect("piped stdout");
    let tar = Command::new("tar")
        .arg("-x")
        .arg("-C")
        .arg(dest)
        .stdin(stdout)
        .stderr(Stdio::piped())
        .output()
        .map_err(|e| IngestError::Git(format!("cannot run tar: {e}")))?;
    let archived = archive.wait_with_output()?;
    if !archived.status.success() {
        return Err(IngestError::Git(String::from_utf8_lossy(&archived.stderr).trim().to_string()));
    }
    if !tar.status.success() {
        return Err(IngestError::Git(format!("tar: {}", String::from_utf8_lossy(&tar.stderr).trim())));
    }
    Ok(())
}

fn count_files(dir: &Path) -> std::io::Result<usize> {
    let mut n = 0;
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        let ty = entry.file_type()?;
        if ty.is_dir() {
            n += count_files(&entry.path())?;
        } else if ty.is_file() {
            n += 1;
        }
    }
    Ok(n)
}

#[cfg(unix)]
fn set_mode(path: &Path, mode: u32) -> std::io::Result<()> {
    use std::os::unix::fs::PermissionsExt;
    fs::set_permissions(path, fs::Permissions::from_mode(mode))
}

#[cfg(not(unix))]
fn set_mode(path: &Path, mode: u32) -> std::io::Result<()> {
    let mut perms = fs::metadata(path)?.permissions();
    perms.set_readonly(mode & 0o200 == 0);
    fs::set_permissions(path, perms)
}

// children first: a sealed directory can no longer be modified
fn seal(dir: &Path) -> std::io::Result<()> {
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        let ty = entry.file_type()?;
        if ty.is_dir() {
            seal(&entry.path())?;
        } else if ty.is_file() {
            set_mode(&entry.path(), 0o444)?;
        }
    }
    set_mode(dir, 0o555)
}

/// Undoes the read-only sealing so a snapshot tree can be deleted.
pub fn make_writable(dir: &Path) -> std::io::Result<()> {
    set_mode(dir, 0o755)?;
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        let ty = entry.file_type()?;
        if ty.is_dir() {
            make_writable(&entry.path())?;
        } else if ty.is_file() {
            set_mode(&entry.path(), 0o644)?;
        }
    }
    Ok(())
}
