//! Compares a built index with the text-scan oracle over one mini-repo.

#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::Path;

use patchsieve_core::codeindex::{build_index_dir, CodeIndex, ValueKind};
use patchsieve_core::ingest::Language;

use super::text_oracle::{OCall, OUse, Oracle};

pub const LANGS: [Language; 3] = [Language::C, Language::Cpp, Language::Java];

fn calls_of(idx: &CodeIndex, name: &str) -> Vec<OCall> {
    let mut v: Vec<OCall> = idx
        .caller_info(name)
        .into_iter()
        .map(|c| OCall { caller: c.caller, callee: c.callee_name, file: c.file, line: c.line })
        .collect();
    v.sort();
    v
}

fn uses_of(idx: &CodeIndex, symbol: &str, kind: ValueKind) -> Vec<OUse> {
    let mut v: Vec<OUse> = idx
        .value_info(symbol, kind, None)
        .into_iter()
        .map(|u| OUse {
            symbol: u.symbol,
            kind: u.kind.as_str(),
            file: u.file,
            line: u.line,
            enclosing: u.enclosing_function,
            field: u.field,
            base: u.base,
        })
        .collect();
    v.sort();
    v
}

pub struct Report {
    pub functions: usize,
    pub queries: usize,
    pub mismatches: Vec<String>,
}

/// Runs caller_info for every called or defined name and value_info for
/// every declared variable and `Owner.field`; returns all disagreements.
pub fn check_repo(root: &Path) -> Report {
    let idx = build_index_dir(root, &LANGS).expect("fixture indexes");
    let oracle = Oracle::scan(root);
    let mut mismatches = Vec::new();
    let mut queries = 0;

    let mut names: BTreeSet<String> = oracle.callee_names().into_iter().collect();
    names.extend(idx.calls().keys().cloned());
    for name in &names {
        queries += 1;
        let (got, want) = (calls_of(&idx, name), oracle.callers(name));
        if got != want {
            mismatches.push(format!("caller_info({name}):\n  index:  {got:?}\n  oracle: {want:?}"));
        }
    }

    let mut vars: BTreeSet<String> = oracle.variables.iter().cloned().collect();
    vars.extend(idx.variables().keys().cloned());
    for v in &vars {
        queries += 1;
        let (got, want) = (uses_of(&idx, v, ValueKind::Variable), oracle.variable_uses(v));
        if got != want {
            mismatches.push(format!("value_info({v}):\n  index:  {got:?}\n  oracle: {want:?}"));
        }
    }

    for (owner, field) in &oracle.fields {
        queries += 1;
        let sym = format!("{owner}.{field}");
        let (got, want) = (uses_of(&idx, &sym, ValueKind::Member), oracle.member_uses(owner, field));
        if got != want {
            mismatches.push(format!("value_info({sym}):\n  index:  {got:?}\n  oracle: {want:?}"));
        }
    }

    let mut got_fns: Vec<(String, String)> =
        idx.all_functions().into_iter().map(|f| (f.qualified_name.clone(), f.file.clone())).collect();
    let mut want_fns = oracle.functions.clone();
    got_fns.sort();
    want_fns.sort();
    if got_fns != want_fns {
        mismatches.push(format!("functions:\n  index:  {got_fns:?}\n  oracle: {want_fns:?}"));
    }
    Report { functions: got_fns.len(), queries, mismatches }
}

pub fn minirepos_dir() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/minirepos")
}

pub fn minirepos() -> Vec<std::path::PathBuf> {
    let mut v: Vec<_> = std::fs::read_dir(minirepos_dir())
        .expect("fixtures/minirepos")
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_dir())
        .collect();
    v.sort();
    v
}
