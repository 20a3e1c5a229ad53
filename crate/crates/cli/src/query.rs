//! `patchsieve query`: one index tool, results as line-delimited JSON.

use std::io::Write;
use std::path::Path;

use patchsieve_core::codeindex::{build_index_dir, parse_query, ValueKind};
use patchsieve_core::ingest::Language;
use serde::Serialize;

fn line<T: Serialize>(out: &mut impl Write, v: &T) -> Result<(), String> {
    let s = serde_json::to_string(v).map_err(|e| e.to_string())?;
    writeln!(out, "{s}").map_err(|e| e.to_string())
}

fn lines<T: Serialize>(items: &[T]) -> Result<(), String> {
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for i in items {
        line(&mut out, i)?;
    }
    Ok(())
}

pub fn run(snapshot: &Path, op: &str, args: &[String], languages: Option<&[Language]>) -> Result<(), String> {
    if !snapshot.is_dir() {
        return Err(format!("snapshot directory {} does not exist", snapshot.display()));
    }
    let langs = languages.unwrap_or(&[Language::C, Language::Cpp, Language::Java]);
    let index = build_index_dir(snapshot, langs).map_err(|e| e.to_string())?;
    let arg = |i: usize, what: &str| args.get(i).map(String::as_str).ok_or_else(|| format!("{op}: missing {what}"));
    let line_no = |i: usize, what: &str| -> Result<u32, String> {
        arg(i, what)?.parse().map_err(|_| format!("{op}: {what} must be a line number"))
    };
    match op {
        "func" => lines(&index.func_info(arg(0, "NAME")?, args.get(1).map(String::as_str))),
        "callers" => lines(&index.caller_info(arg(0, "NAME")?)),
        "code" => {
            let snip = index
                .code_info(arg(0, "FILE")?, line_no(1, "START")?, line_no(2, "END")?)
                .map_err(|e| e.to_string())?;
            lines(&[snip])
        }
        "value" => {
            let symbol = arg(0, "SYMBOL")?;
            let kind = match args.get(1).map(String::as_str) {
                Some("member") => ValueKind::Member,
                Some("variable") => ValueKind::Variable,
                None if symbol.contains('.') || symbol.contains("->") => ValueKind::Member,
                None => ValueKind::Variable,
                Some(other) => return Err(format!("value: kind must be variable or member, not `{other}`")),
            };
            lines(&index.value_info(symbol, kind, args.get(2).map(String::as_str)))
        }
        "query" => {
            let spec = parse_query(&args.join(" ")).map_err(|e| e.to_string())?;
            lines(&index.query_info(&spec).matches)
        }
        other => Err(format!("unknown op `{other}`")),
    }
}
