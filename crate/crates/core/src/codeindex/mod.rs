//! Immutable syntactic index over a snapshot: function definitions,
//! name-resolved call sites and lexical use/def sites, plus the five tools
//! the context agent dispatches.
//!
//! Resolution is purely by name. Function pointers, virtual dispatch and
//! macro-expanded calls are not followed; macro bodies are not indexed.

mod lexer;
mod parser;
mod query;
mod tools;
mod wildcard;

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{Language, SnapshotRef};

pub use query::{parse_query, QueryField, QUERY_GRAMMAR, QueryKind, QueryMatch, QueryResult, QuerySpec};
pub use tools::{cap_lines, CodeSnippet, ValueKind, MAX_TOOL_LINES};
pub use wildcard::wildcard_match;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FunctionDef {
    pub name: String,
    pub qualified_name: String,
    pub file: String,
    pub start_line: u32,
    pub end_line: u32,
    pub signature: String,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CallSite {
    pub caller: String,
    pub callee_name: String,
    pub file: String,
    pub line: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UsageKind {
    Definition,
    Initialization,
    Read,
    Write,
    MemberAccess,
}

impl UsageKind {
    pub fn as_str(self) -> &'static str {
        match self {
            UsageKind::Definition => "definition",
            UsageKind::Initialization => "initialization",
            UsageKind::Read => "read",
            UsageKind::Write => "write",
            UsageKind::MemberAccess => "member_access",
        }
    }
}

/// One lexical occurrence of a variable or member.
///
/// Member sites carry `field` and `base`; their `symbol` is `Owner.field`
/// when the base's declared type is known and `base.field` otherwise.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct UsageSite {
    pub symbol: String,
    pub kind: UsageKind,
    pub file: String,
    pub line: u32,
    pub enclosing_function: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base: Option<String>,
}

impl UsageSite {
    pub fn is_member(&self) -> bool {
        self.field.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseFailure {
    pub file: String,
    pub reason: String,
}

/// File text with line offsets; line numbers are 1-based.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceFile {
    text: String,
    line_starts: Vec<usize>,
}

impl SourceFile {
    pub fn new(text: String) -> Self {
        let mut line_starts = vec![0];
        line_starts.extend(text.match_indices('\n').map(|(i, _)| i + 1).filter(|&i| i < text.len()));
        if text.is_empty() {
            line_starts.clear();
        }
        SourceFile { text, line_starts }
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn line_count(&self) -> u32 {
        self.line_starts.len() as u32
    }

    /// Exact bytes of lines `start..=end`, newlines included.
    pub fn span(&self, start: u32, end: u32) -> &str {
        if start == 0 || start > end || start > self.line_count() {
            return "";
        }
        let from = self.line_starts[start as usize - 1];
        let to = self.line_starts.get(end as usize).copied().unwrap_or(self.text.len());
        &self.text[from..to]
    }

    pub fn line(&self, n: u32) -> &str {
        self.span(n, n).trim_end_matches('\n').trim_end_matches('\r')
    }
}

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("no parsable source files under {0}")]
    NoParsableFiles(PathBuf),
    #[error("unknown file `{0}`")]
    UnknownFile(String),
    #[error("malformed query at position {position}: expected {expected}")]
    MalformedQuery { position: usize, expected: String },
    #[error("invalid range {start}..{end}")]
    InvalidRange { start: u32, end: u32 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Source dialects the parser understands. The script and C# dialects are
/// only admitted with the `extra-languages` feature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SrcLang {
    C,
    Cpp,
    Java,
    CSharp,
    JavaScript,
    TypeScript,
}

impl SrcLang {
    fn scope_separator(self) -> &'static str {
        match self {
            SrcLang::C | SrcLang::Cpp => "::",
            _ => ".",
        }
    }

    fn is_script(self) -> bool {
        matches!(self, SrcLang::JavaScript | SrcLang::TypeScript)
    }
}

fn detect_lang(path: &str, text: &str, languages: &[Language]) -> Option<SrcLang> {
    let ext = path.rsplit_once('.').map(|(_, e)| e.to_ascii_lowercase())?;
    let has = |l| languages.contains(&l);
    match ext.as_str() {
        "c" if has(Language::C) => Some(SrcLang::C),
        "cc" | "cpp" | "cxx" | "c++" | "hpp" | "hh" | "hxx" | "ipp" if has(Language::Cpp) => Some(SrcLang::Cpp),
        "h" => {
            let cppish = ["class ", "namespace ", "template", "public:", "private:"].iter().any(|m| text.contains(m));
            if has(Language::Cpp) && (cppish || !has(Language::C)) {
                Some(SrcLang::Cpp)
            } else if has(Language::C) {
                Some(SrcLang::C)
            } else {
                None
            }
        }
        "java" if has(Language::Java) => Some(SrcLang::Java),
        #[cfg(feature = "extra-languages")]
        "cs" => Some(SrcLang::CSharp),
        #[cfg(feature = "extra-languages")]
        "js" | "mjs" | "cjs" => Some(SrcLang::JavaScript),
        #[cfg(feature = "extra-languages")]
        "ts" => Some(SrcLang::TypeScript),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeIndex {
    root: PathBuf,
    snapshot: Option<SnapshotRef>,
    functions: BTreeMap<String, Vec<FunctionDef>>,
    calls: BTreeMap<String, Vec<CallSite>>,
    variables: BTreeMap<String, Vec<UsageSite>>,
    members: BTreeMap<String, Vec<UsageSite>>,
    files: BTreeMap<String, SourceFile>,
    parse_failures: Vec<ParseFailure>,
}

/// Indexes a materialized snapshot.
pub fn build_index(snapshot: &SnapshotRef, languages: &[Language]) -> Result<CodeIndex, IndexError> {
    let mut index = build_index_dir(&snapshot.root_dir, languages)?;
    index.snapshot = Some(snapshot.clone());
    Ok(index)
}

/// Indexes an arbitrary directory tree.
pub fn build_index_dir(root: &Path, languages: &[Language]) -> Result<CodeIndex, IndexError> {
    let mut paths = Vec::new();
    walk(root, root, &mut paths)?;
    paths.sort();
    let mut sources = Vec::new();
    for rel in paths {
        let bytes = fs::read(root.join(&rel))?;
        let text = String::from_utf8_lossy(&bytes).into_owned();
        if let Some(lang) = detect_lang(&rel, &text, languages) {
            sources.push((rel, lang, text));
        }
    }

    let parsed: Vec<_> = sources.par_iter().map(|(_, lang, text)| parser::parse_file(text, *lang)).collect();

    let mut tables = parser::Tables::default();
    let mut parse_failures = Vec::new();
    let mut ok_files = 0;
    for ((rel, _, _), p) in sources.iter().zip(&parsed) {
        match p {
            Ok(p) => {
                tables.absorb(&p.syntax);
                ok_files += 1;
            }
            Err(reason) => parse_failures.push(ParseFailure { file: rel.clone(), reason: reason.clone() }),
        }
    }
    if ok_files == 0 {
        return Err(IndexError::NoParsableFiles(root.to_path_buf()));
    }

    let per_file: Vec<_> = sources
        .par_iter()
        .zip(parsed.par_iter())
        .map(|((rel, lang, text), p)| {
            let Ok(p) = p else {
                return (Vec::new(), Vec::new(), Vec::new());
            };
            let file_globals: HashMap<String, String> = p
                .syntax
                .decls
                .iter()
                .filter(|d| d.owner.is_none())
                .map(|d| (d.name.clone(), d.ty.clone()))
                .collect();
            let an = parser::FnAnalyzer {
                toks: &p.tokens,
                pairs: &p.pairs,
                lang: *lang,
                file: rel,
                tables: &tables,
                file_globals: &file_globals,
            };
            let source = SourceFile::new(text.clone());
            let mut defs = Vec::new();
            let mut calls = Vec::new();
            let mut uses = parser::decl_sites(rel, &p.syntax);
            for f in &p.syntax.functions {
                defs.push(FunctionDef {
                    name: f.name.clone(),
                    qualified_name: f.qualified_name.clone(),
                    file: rel.clone(),
                    start_line: f.start_line,
                    end_line: f.end_line,
                    signature: f.signature.clone(),
                    body: source.span(f.start_line, f.end_line).to_string(),
                });
                let (c, u) = an.analyze(f);
                calls.extend(c);
                uses.extend(u);
            }
            calls.sort_by_key(|c| c.0);
            uses.sort_by_key(|u| u.0);
            (
                defs,
                calls.into_iter().map(|c| c.1).collect::<Vec<_>>(),
                uses.into_iter().map(|u| u.1).collect::<Vec<_>>(),
            )
        })
        .collect();

    let mut index = CodeIndex {
        root: root.to_path_buf(),
        snapshot: None,
        functions: BTreeMap::new(),
        calls: BTreeMap::new(),
        variables: BTreeMap::new(),
        members: BTreeMap::new(),
        files: BTreeMap::new(),
        parse_failures,
    };
    for ((rel, _, text), (defs, calls, uses)) in sources.into_iter().zip(per_file) {
        for d in defs {
            index.functions.entry(d.name.clone()).or_default().push(d);
        }
        for c in calls {
            index.calls.entry(c.callee_name.clone()).or_default().push(c);
        }
        for u in uses {
            match &u.field {
                Some(f) => index.members.entry(f.clone()).or_default().push(u),
                None => index.variables.entry(u.symbol.clone()).or_default().push(u),
            }
        }
        index.files.insert(rel, SourceFile::new(text));
    }
    Ok(index)
}

fn walk(root: &Path, dir: &Path, out: &mut Vec<String>) -> std::io::Result<()> {
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        let name = entry.file_name();
        if name.to_string_lossy().starts_with('.') {
            continue;
        }
        let ty = entry.file_type()?;
        let path = entry.path();
        if ty.is_dir() {
            walk(root, &path, out)?;
        } else if ty.is_file() {
            let rel = path.strip_prefix(root).expect("below root");
            out.push(rel.to_string_lossy().replace('\\', "/"));
        }
    }
    Ok(())
}

impl CodeIndex {
    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn snapshot(&self) -> Option<&SnapshotRef> {
        self.snapshot.as_ref()
    }

    pub fn functions(&self) -> &BTreeMap<String, Vec<FunctionDef>> {
        &self.functions
    }

    pub fn calls(&self) -> &BTreeMap<String, Vec<CallSite>> {
        &self.calls
    }

    /// Variable sites keyed by identifier.
    pub fn variables(&self) -> &BTreeMap<String, Vec<UsageSite>> {
        &self.variables
    }

    /// Member sites keyed by field name.
    pub fn members(&self) -> &BTreeMap<String, Vec<UsageSite>> {
        &self.members
    }

    pub fn files(&self) -> &BTreeMap<String, SourceFile> {
        &self.files
    }

    pub fn parse_failures(&self) -> &[ParseFailure] {
        &self.parse_failures
    }

    /// Every function, ordered by file then start line.
    pub fn all_functions(&self) -> Vec<&FunctionDef> {
        let mut all: Vec<_> = self.functions.values().flatten().collect();
        all.sort_by(|a, b| (&a.file, a.start_line, &a.qualified_name).cmp(&(&b.file, b.start_line, &b.qualified_name)));
        all
    }

    pub fn all_usages(&self) -> impl Iterator<Item = &UsageSite> {
        self.variables.values().flatten().chain(self.members.values().flatten())
    }

    pub fn all_calls(&self) -> impl Iterator<Item = &CallSite> {
        self.calls.values().flatten()
    }

    /// The innermost indexed function whose span covers `file:line`.
    pub fn function_at(&self, file: &str, line: u32) -> Option<&FunctionDef> {
        self.functions
            .values()
            .flatten()
            .filter(|f| f.file == file && f.start_line <= line && line <= f.end_line)
            .min_by_key(|f| f.end_line - f.start_line)
    }
}
