//! Unified-diff hunk parsing.
//!
//! Context lines are dropped. A `@@` hunk whose changes are separated by
//! context is split into one [`Hunk`] per contiguous change group, so every
//! hunk's `old_lines`/`new_lines` equal the number of removed/added lines and
//! its start positions point at the first changed line.

use once_cell::sync::Lazy;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

static HUNK_HEADER: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"^@@ -(\d+)(?:,(\d+))? \+(\d+)(?:,(\d+))? @@").unwrap());

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Hunk {
    pub old_start: u32,
    pub old_lines: u32,
    pub new_start: u32,
    pub new_lines: u32,
    pub removed: Vec<String>,
    pub added: Vec<String>,
}

impl Hunk {
    pub fn check(&self) -> Result<(), String> {
        if self.old_lines as usize != self.removed.len() {
            return Err(format!("old_lines {} != {} removed lines", self.old_lines, self.removed.len()));
        }
        if self.new_lines as usize != self.added.len() {
            return Err(format!("new_lines {} != {} added lines", self.new_lines, self.added.len()));
        }
        if self.removed.is_empty() && self.added.is_empty() {
            return Err("hunk changes no lines".into());
        }
        if self.old_start == 0 || self.new_start == 0 {
            return Err("line numbers are 1-based".into());
        }
        Ok(())
    }

    /// Line in the new file most representative of this hunk.
    pub fn anchor_line(&self) -> u32 {
        self.new_start
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("diff line {line}: {reason}")]
pub struct DiffError {
    pub line: usize,
    pub reason: String,
}

struct Group {
    old_start: u32,
    new_start: u32,
    removed: Vec<String>,
    added: Vec<String>,
}

impl Group {
    fn into_hunk(self) -> Hunk {
        Hunk {
            old_start: self.old_start,
            old_lines: self.removed.len() as u32,
            new_start: self.new_start,
            new_lines: self.added.len() as u32,
            removed: self.removed,
            added: self.added,
        }
    }
}

fn is_file_header(line: &str) -> bool {
    const PREFIXES: &[&str] = &[
        "diff ", "index ", "--- ", "+++ ", "new file mode", "deleted file mode", "old mode", "new mode",
        "similarity index", "dissimilarity index", "rename from", "rename to", "copy from", "copy to",
        "Binary files",
    ];
    PREFIXES.iter().any(|p| line.starts_with(p))
}

// GNU convention: a zero-length range names the line *before* the change.
fn cursor_from_header(start: u32, count: u32) -> u32 {
    if count == 0 {
        start + 1
    } else {
        start
    }
}

fn header_from_cursor(start: u32, count: u32) -> u32 {
    if count == 0 {
        start.saturating_sub(1)
    } else {
        start
    }
}

pub fn parse_unified_diff(text: &str) -> Result<Vec<Hunk>, DiffError> {
    let lines: Vec<&str> = text.lines().collect();
    let mut hunks = Vec::new();
    let mut i = 0;
    while i < lines.len() {
        let line = lines[i];
        let Some(caps) = HUNK_HEADER.captures(line) else {
            if line.trim().is_empty() || is_file_header(line) {
                i += 1;
                continue;
            }
            return Err(DiffError { line: i + 1, reason: format!("unexpected line outside hunk: {line:?}") });
        };
        let num = |idx: usize, default: u32| -> Result<u32, DiffError> {
            caps.get(idx).map_or(Ok(default), |m| {
                m.as_str().parse().map_err(|_| DiffError { line: i + 1, reason: "bad hunk header number".into() })
            })
        };
        let (old_start, old_count) = (num(1, 0)?, num(2, 1)?);
        let (new_start, new_count) = (num(3, 0)?, num(4, 1)?);
        let header_line = i + 1;
        i += 1;

        let mut old_cursor = cursor_from_header(old_start, old_count);
        let mut new_cursor = cursor_from_header(new_start, new_count);
        let (mut old_seen, mut new_seen) = (0u32, 0u32);
        let mut group: Option<Group> = None;
        while (old_seen < old_count || new_seen < new_count) && i < lines.len() {
            let body = lines[i];
            let (tag, content) = match body.chars().next() {
                Some(c @ (' ' | '-' | '+' | '\\')) => (c, &body[1..]),
                // some tools strip the leading space of empty context lines
                None => (' ', ""),
                Some(_) => break,
            };
            match tag {
                '\\' => {}
                ' ' => {
                    if let Some(g) = group.take() {
                        hunks.push(g.into_hunk());
                    }
                    old_cursor += 1;
                    new_cursor += 1;
                    old_seen += 1;
                    new_seen += 1;
                }
                '-' => {
                    let g = group.get_or_insert_with(|| Group {
                        old_start: old_cursor,
                        new_start: new_cursor,
                        removed: Vec::new(),
                        added: Vec::new(),
                    });
                    g.removed.push(content.to_string());
                    old_cursor += 1;
                    old_seen += 1;
                }
                _ => {
                    let g = group.get_or_insert_with(|| Group {
                        old_start: old_cursor,
                        new_start: new_cursor,
                        removed: Vec::new(),
                        added: Vec::new(),
                    });
                    g.added.push(content.to_string());
                    new_cursor += 1;
                    new_seen += 1;
                }
            }
            i += 1;
        }
        // trailing "\ No newline at end of file"
        while i < lines.len() && lines[i].starts_with('\\') {
            i += 1;
        }
        if let Some(g) = group.take() {
            hunks.push(g.into_hunk());
        }
        if old_seen != old_count || new_seen != new_count {
            return Err(DiffError {
                line: header_line,
                reason: format!(
                    "hunk body has -{old_seen}/+{new_seen} lines, header promised -{old_count}/+{new_count}"
                ),
            });
        }
    }
    Ok(hunks)
}

/// Renders hunks as a context-free unified diff for `path`. Parsing the
/// result yields the same hunks.
pub fn render_unified_diff(path: &str, hunks: &[Hunk]) -> String {
    let mut out = format!("--- a/{path}\n+++ b/{path}\n");
    for h in hunks {
        out.push_str(&format!(
            "@@ -{},{} +{},{} @@\n",
            header_from_cursor(h.old_start, h.old_lines),
            h.old_lines,
            header_from_cursor(h.new_start, h.new_lines),
            h.new_lines
        ));
        for l in &h.removed {
            out.push('-');
            out.push_str(l);
            out.push('\n');
        }
        for l in &h.added {
            out.push('+');
            out.push_str(l);
            out.push('\n');
        }
    }
    out
}
