//! The lookup tools and their text renderings.

use serde::{Deserialize, Serialize};

use super::{CallSite, CodeIndex, FunctionDef, IndexError, UsageSite};

/// Rendered tool results are cut after this many lines.
pub const MAX_TOOL_LINES: usize = 200;

const RESOLUTION_NOTE: &str =
    "note: calls are resolved by name only; macro expansions, function pointers and virtual dispatch are not followed";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueKind {
    Variable,
    Member,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeSnippet {
    pub file: String,
    pub start: u32,
    pub end: u32,
    /// Verbatim bytes of the lines, newlines included.
    pub text: String,
    pub clamp_note: Option<String>,
}

impl CodeSnippet {
    pub fn render(&self) -> String {
        let mut out = format!("{}:{}-{}\n", self.file, self.start, self.end);
        for (i, line) in self.text.lines().enumerate() {
            out.push_str(&format!("{:>5} | {}\n", self.start as usize + i, line));
        }
        if let Some(note) = &self.clamp_note {
            out.push_str(&format!("note: {note}\n"));
        }
        out
    }
}

/// Keeps the first [`MAX_TOOL_LINES`] lines and appends a truncation marker.
pub fn cap_lines(text: &str) -> String {
    let total = text.lines().count();
    if total <= MAX_TOOL_LINES {
        return text.to_string();
    }
    let mut out: String = text.lines().take(MAX_TOOL_LINES).flat_map(|l| [l, "\n"]).collect();
    out.push_str(&format!("[truncated: {} more lines]\n", total - MAX_TOOL_LINES));
    out
}

fn last_segment(name: &str) -> &str {
    let name = name.rsplit("::").next().unwrap_or(name);
    name.rsplit('.').next().unwrap_or(name)
}

impl CodeIndex {
    /// Definitions named `name` (plain or qualified); those in `file_hint`
    /// come first.
    pub fn func_info(&self, name: &str, file_hint: Option<&str>) -> Vec<FunctionDef> {
        let name = name.trim();
        let key = last_segment(name);
        let mut out: Vec<FunctionDef> = self
            .functions
            .get(key)
            .into_iter()
            .flatten()
            .filter(|f| f.name == name || f.qualified_name == name || key != name && f.qualified_name.ends_with(name))
            .cloned()
            .collect();
        out.sort_by(|a, b| {
            let ha = file_hint.is_some_and(|h| a.file == h);
            let hb = file_hint.is_some_and(|h| b.file == h);
            hb.cmp(&ha).then_with(|| (&a.file, a.start_line).cmp(&(&b.file, b.start_line)))
        });
        out
    }

    pub fn caller_info(&self, name: &str) -> Vec<CallSite> {
        self.calls.get(last_segment(name.trim())).cloned().unwrap_or_default()
    }

    /// Lines `start..=end` of `file`, clamped to the file length.
    pub fn code_info(&self, file: &str, start: u32, end: u32) -> Result<CodeSnippet, IndexError> {
        if start > end {
            return Err(IndexError::InvalidRange { start, end });
        }
        let src = self.files.get(file).ok_or_else(|| IndexError::UnknownFile(file.to_string()))?;
        let n = src.line_count();
        let (s, e) = (start.max(1), end.min(n));
        let mut notes = Vec::new();
        if start == 0 {
            notes.push("start clamped to line 1".to_string());
        }
        if end > n {
            notes.push(format!("end clamped to line {n} (end of file)"));
        }
        let (s, e, text) = if s > n { (n.max(1), n, String::new()) } else { (s, e, src.span(s, e).to_string()) };
        Ok(CodeSnippet {
            file: file.to_string(),
            start: s,
            end: e,
            text,
            clamp_note: if notes.is_empty() { None } else { Some(notes.join("; ")) },
        })
    }

    /// Usage sites of a variable (`name`) or member (`field`, `Owner.field`,
    /// `base.field` or `base->field`), optionally limited to one function.
    pub fn value_info(&self, symbol: &str, kind: ValueKind, scope_hint: Option<&str>) -> Vec<UsageSite> {
        let symbol: String = symbol.split_whitespace().collect::<String>().replace("->", ".");
        let in_scope = |u: &UsageSite| match scope_hint {
            None => true,
            Some(h) => u
                .enclosing_function
                .as_deref()
                .is_some_and(|f| f == h || last_segment(f) == h),
        };
        match kind {
            ValueKind::Variable => {
                self.variables.get(&symbol).into_iter().flatten().filter(|u| in_scope(u)).cloned().collect()
            }
            ValueKind::Member => {
                let (left, field) = match symbol.rsplit_once('.') {
                    Some((l, f)) => (Some(l.rsplit('.').next().unwrap_or(l)), f),
                    None => (None, symbol.as_str()),
                };
                self.members
                    .get(field)
                    .into_iter()
                    .flatten()
                    .filter(|u| match left {
                        None => true,
                        Some(l) => u.symbol == format!("{l}.{field}") || u.base.as_deref() == Some(l),
                    })
                    .filter(|u| in_scope(u))
                    .cloned()
                    .collect()
            }
        }
    }

    pub fn render_functions(&self, name: &str, defs: &[FunctionDef]) -> String {
        if defs.is_empty() {
            return format!("no definition found for `{name}`\n");
        }
        let mut out = String::new();
        for d in defs {
            out.push_str(&format!("== {} ({}:{}-{})\n", d.qualified_name, d.file, d.start_line, d.end_line));
            for (i, line) in d.body.lines().enumerate() {
                out.push_str(&format!("{:>5} | {}\n", d.start_line as usize + i, line));
            }
        }
        cap_lines(&out)
    }

    pub fn render_calls(&self, name: &str, sites: &[CallSite]) -> String {
        if sites.is_empty() {
            return format!("no call sites found for `{name}`\n{RESOLUTION_NOTE}\n");
        }
        let mut out = String::new();
        for s in sites {
            let src = self.files.get(&s.file).map_or("", |f| f.line(s.line)).trim();
            out.push_str(&format!("{}:{}: in {}: {}\n", s.file, s.line, s.caller, src));
        }
        out.push_str(RESOLUTION_NOTE);
        out.push('\n');
        cap_lines(&out)
    }

    pub fn render_usages(&self, symbol: &str, sites: &[UsageSite]) -> String {
        if sites.is_empty() {
            return format!("no usage sites found for `{symbol}`\n");
        }
        let mut out = String::new();
        for s in sites {
            let src = self.files.get(&s.file).map_or("", |f| f.line(s.line)).trim();
            let scope = s.enclosing_function.as_deref().unwrap_or("<file scope>");
            out.push_str(&format!("{}:{}: {} {} in {}: {}\n", s.file, s.line, s.kind.as_str(), s.symbol, scope, src));
        }
        cap_lines(&out)
    }
}
