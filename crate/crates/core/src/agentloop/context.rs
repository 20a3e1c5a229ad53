//! The context agent: one request, one tool call.

use std::collections::{BTreeMap, BTreeSet};

use serde::Deserialize;
use thiserror::Error;

use super::{ContextFulfillment, ContextRequest, RequestKind, ToolId};
use crate::codeindex::{parse_query, CodeIndex, QueryMatch, ValueKind, QUERY_GRAMMAR};
use crate::llmgateway::{ask_structured, render_prompt, Exchange, Gateway, GatewayError, StepError};

pub fn tool_for(kind: RequestKind) -> ToolId {
    match kind {
        RequestKind::Function => ToolId::FuncInfo,
        RequestKind::Caller => ToolId::CallerInfo,
        RequestKind::Code => ToolId::CodeInfo,
        RequestKind::Variable => ToolId::ValueInfo,
        RequestKind::Query => ToolId::QueryInfo,
    }
}

fn signature(tool: ToolId) -> &'static str {
    match tool {
        ToolId::FuncInfo => "name (function name, required), file_hint (path, optional)",
        ToolId::CallerInfo => "name (function name, required)",
        ToolId::CodeInfo => "file (repository-relative path, required), start (line, required), end (line, required)",
        ToolId::ValueInfo => {
            "symbol (variable name, or base->member / Type.member, required), symbol_kind (variable or member), scope (enclosing function, optional)"
        }
        ToolId::QueryInfo => "query (one query in the language below, required)",
    }
}

#[derive(Debug, Error)]
pub enum FulfillError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("malformed model output for {template_id}: {reason}")]
    MalformedModelOutput { template_id: String, reason: String },
    #[error("{tool} failed: {cause}")]
    ToolFailure { tool: ToolId, cause: String, exchanges: Vec<Exchange> },
}

impl FulfillError {
    pub(super) fn exchanges(&self) -> Vec<Exchange> {
        match self {
            FulfillError::ToolFailure { exchanges, .. } => exchanges.clone(),
            _ => Vec::new(),
        }
    }
}

impl From<StepError> for FulfillError {
    fn from(e: StepError) -> Self {
        match e {
            StepError::Gateway(g) => FulfillError::Gateway(g),
            StepError::Malformed { template_id, reason } => FulfillError::MalformedModelOutput { template_id, reason },
        }
    }
}

/// An empty fulfillment standing in for a request the tools could not serve.
pub(super) fn failed(req: &ContextRequest, err: &FulfillError) -> ContextFulfillment {
    ContextFulfillment {
        request: req.clone(),
        tool_used: tool_for(req.kind),
        payload: format!("request could not be served: {err}\n"),
        empty: true,
        files: Vec::new(),
        failure: Some(err.to_string()),
    }
}

#[derive(Debug, Default, Deserialize)]
struct Params {
    name: Option<String>,
    file_hint: Option<String>,
    file: Option<String>,
    start: Option<i64>,
    end: Option<i64>,
    symbol: Option<String>,
    symbol_kind: Option<String>,
    scope: Option<String>,
    query: Option<String>,
}

fn present(v: &Option<String>) -> Option<&str> {
    v.as_deref().map(str::trim).filter(|s| !s.is_empty())
}

fn validate(tool: ToolId, p: &Params) -> Result<(), String> {
    let need = |v: &Option<String>, what: &str| present(v).map(|_| ()).ok_or_else(|| format!("`{what}` is required"));
    match tool {
        ToolId::FuncInfo | ToolId::CallerInfo => need(&p.name, "name"),
        ToolId::CodeInfo => {
            need(&p.file, "file")?;
            match (p.start, p.end) {
                (Some(s), Some(e)) if s >= 0 && e >= 0 => Ok(()),
                _ => Err("`start` and `end` must be non-negative line numbers".into()),
            }
        }
        ToolId::ValueInfo => {
            need(&p.symbol, "symbol")?;
            match present(&p.symbol_kind) {
                None | Some("variable") | Some("member") => Ok(()),
                Some(other) => Err(format!("`symbol_kind` must be variable or member, not `{other}`")),
            }
        }
        ToolId::QueryInfo => need(&p.query, "query"),
    }
}

fn line_cap(v: i64) -> u32 {
    v.clamp(0, u32::MAX as i64) as u32
}

/// Asks the context agent for tool parameters, runs the tool and wraps its
/// rendered output.
pub fn fulfill_request(
    request: &ContextRequest,
    index: &CodeIndex,
    gateway: &Gateway,
) -> Result<(ContextFulfillment, Vec<Exchange>), FulfillError> {
    let tool = tool_for(request.kind);
    let mut vars = BTreeMap::new();
    vars.insert("kind".to_string(), request.kind.as_str().to_string());
    vars.insert("target".to_string(), request.target.clone());
    vars.insert("rationale".to_string(), request.rationale.clone());
    vars.insert("tool".to_string(), tool.as_str().to_string());
    vars.insert("tool_signature".to_string(), signature(tool).to_string());
    vars.insert(
        "query_grammar".to_string(),
        if tool == ToolId::QueryInfo { QUERY_GRAMMAR.to_string() } else { "(not used)".to_string() },
    );
    let env = render_prompt("context.params.v1", &vars)?;
    let (p, ex): (Params, _) = ask_structured(gateway, &env, |p: &Params| validate(tool, p))?;

    let mut files = BTreeSet::new();
    let (payload, empty) = match tool {
        ToolId::FuncInfo => {
            let name = present(&p.name).unwrap_or_default();
            let defs = index.func_info(name, present(&p.file_hint));
            files.extend(defs.iter().map(|d| d.file.clone()));
            (index.render_functions(name, &defs), defs.is_empty())
        }
        ToolId::CallerInfo => {
            let name = present(&p.name).unwrap_or_default();
            let sites = index.caller_info(name);
            files.extend(sites.iter().map(|s| s.file.clone()));
            (index.render_calls(name, &sites), sites.is_empty())
        }
        ToolId::CodeInfo => {
            let file = present(&p.file).unwrap_or_default();
            let snip = index
                .code_info(file, line_cap(p.start.unwrap_or(0)), line_cap(p.end.unwrap_or(0)))
                .map_err(|e| FulfillError::ToolFailure { tool, cause: e.to_string(), exchanges: ex.clone() })?;
            files.insert(snip.file.clone());
            (snip.render(), snip.text.is_empty())
        }
        ToolId::ValueInfo => {
            let symbol = present(&p.symbol).unwrap_or_default();
            let kind = match present(&p.symbol_kind) {
                Some("member") => ValueKind::Member,
                Some("variable") => ValueKind::Variable,
                _ if symbol.contains('.') || symbol.contains("->") => ValueKind::Member,
                _ => ValueKind::Variable,
            };
            let sites = index.value_info(symbol, kind, present(&p.scope));
            files.extend(sites.iter().map(|s| s.file.clone()));
            (index.render_usages(symbol, &sites), sites.is_empty())
        }
        ToolId::QueryInfo => {
            let text = present(&p.query).unwrap_or_default();
            let spec = parse_query(text)
                .map_err(|e| FulfillError::ToolFailure { tool, cause: e.to_string(), exchanges: ex.clone() })?;
            let result = index.query_info(&spec);
            for m in &result.matches {
                files.insert(match m {
                    QueryMatch::Function(f) => f.file.clone(),
                    QueryMatch::Call(c) => c.file.clone(),
                    QueryMatch::Usage(u) => u.file.clone(),
                });
            }
            (index.render_query(text, &result), result.matches.is_empty())
        }
    };
    Ok((
        ContextFulfillment {
            request: request.clone(),
            tool_used: tool,
            payload,
            empty,
            files: files.into_iter().collect(),
            failure: None,
        },
        ex,
    ))
}
