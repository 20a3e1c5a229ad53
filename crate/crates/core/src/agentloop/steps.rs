//! The analysis agent's prompts and their validation rules.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{AgentError, AnalysisState, ContextRequest, Gap, LoopConfig, RequestKind, UndecidableReason};
use crate::classify::clamp_confidence;
use crate::llmgateway::{ask_structured, render_prompt, Exchange, Gateway};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HunkNote {
    pub hunk: u32,
    pub file: String,
    pub line: u32,
    pub explanation: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchReview {
    pub vulnerability_category: String,
    pub hunks: Vec<HunkNote>,
    #[serde(default)]
    pub summary: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Citation {
    pub file: String,
    pub line: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GapReport {
    pub root_cause: String,
    #[serde(default)]
    pub citations: Vec<Citation>,
    #[serde(default)]
    pub gaps: Vec<Gap>,
}

fn base_vars(state: &AnalysisState, config: &LoopConfig) -> BTreeMap<String, String> {
    let mut v = BTreeMap::new();
    v.insert("cve_id".to_string(), state.cve_id.clone());
    v.insert("iteration".to_string(), state.iteration.to_string());
    v.insert("max_iter".to_string(), config.max_iter.to_string());
    v.insert("cve_hint".to_string(), cve_hint(state, config));
    v
}

fn cve_hint(state: &AnalysisState, config: &LoopConfig) -> String {
    match &state.bundle.description {
        Some(d) if config.include_cve_text && !d.trim().is_empty() => format!(
            "Untrusted hint from the advisory. It may be vague or misleading; verify every claim against the code.\n{}",
            d.trim()
        ),
        _ => "No advisory text is provided.".to_string(),
    }
}

/// (file, hunk) pairs in bundle order; hunks are numbered from 1.
fn hunk_files(state: &AnalysisState) -> Vec<&str> {
    state
        .bundle
        .patches
        .iter()
        .flat_map(|p| p.diff_hunks.iter().map(move |_| p.file_path.as_str()))
        .collect()
}

fn render_patches(state: &AnalysisState) -> String {
    let mut out = String::new();
    let mut n = 0;
    for p in &state.bundle.patches {
        let short = &p.commit_hash[..p.commit_hash.len().min(12)];
        out.push_str(&format!("=== {} ({}, commit {})\n", p.file_path, p.language, short));
        for h in &p.diff_hunks {
            n += 1;
            out.push_str(&format!(
                "Hunk {n} @@ -{},{} +{},{} @@\n",
                h.old_start, h.old_lines, h.new_start, h.new_lines
            ));
            for (i, l) in h.removed.iter().enumerate() {
                out.push_str(&format!("- {:>5} | {}\n", h.old_start as usize + i, l));
            }
            for (i, l) in h.added.iter().enumerate() {
                out.push_str(&format!("+ {:>5} | {}\n", h.new_start as usize + i, l));
            }
        }
        if !p.func_before.trim().is_empty() {
            out.push_str("Function before the change:\n");
            out.push_str(p.func_before.trim_end());
            out.push('\n');
        }
    }
    out
}

fn render_review(review: Option<&PatchReview>) -> String {
    let Some(r) = review else { return "(none)".into() };
    let mut out = format!("Category: {}\n", r.vulnerability_category);
    for h in &r.hunks {
        out.push_str(&format!("Hunk {} ({}:{}): {}\n", h.hunk, h.file, h.line, h.explanation));
    }
    if !r.summary.is_empty() {
        out.push_str(&format!("Summary: {}\n", r.summary));
    }
    out
}

fn render_gaps(gaps: &[Gap]) -> String {
    if gaps.is_empty() {
        return "(none)".into();
    }
    gaps.iter()
        .enumerate()
        .map(|(i, g)| format!("GAP {}: {} | break point: {} | reason: {}\n", i + 1, g.description, g.break_point, g.reason))
        .collect()
}

fn render_requests(reqs: &[ContextRequest]) -> String {
    if reqs.is_empty() {
        return "(none)".into();
    }
    reqs.iter().map(|r| format!("{} {}: {}\n", r.kind, r.target, r.rationale)).collect()
}

fn render_contexts(state: &AnalysisState) -> String {
    if state.collected_contexts.is_empty() {
        return "(none)".into();
    }
    let mut out = String::new();
    for (i, c) in state.collected_contexts.iter().enumerate() {
        let status = match (&c.failure, c.empty) {
            (Some(f), _) => format!("failed: {f}"),
            (None, true) => "empty".to_string(),
            (None, false) => "ok".to_string(),
        };
        out.push_str(&format!(
            "[context {}] {} `{}` via {} ({status})\n{}\n",
            i + 1,
            c.request.kind,
            c.request.target,
            c.tool_used,
            c.payload.trim_end()
        ));
    }
    out
}

fn check_text(what: &str, s: &str) -> Result<(), String> {
    if s.trim().is_empty() {
        Err(format!("`{what}` is empty"))
    } else {
        Ok(())
    }
}

/// Iteration 0: category plus one cited explanation per hunk, in hunk order.
pub fn review_patch(
    state: &AnalysisState,
    gateway: &Gateway,
    config: &LoopConfig,
) -> Result<(PatchReview, Vec<Exchange>), AgentError> {
    if state.iteration != 0 {
        return Err(AgentError::Precondition(format!("review at iteration {}", state.iteration)));
    }
    let files = hunk_files(state);
    let mut vars = base_vars(state, config);
    vars.insert("hunk_count".to_string(), files.len().to_string());
    vars.insert("patches".to_string(), render_patches(state));
    let env = render_prompt("analysis.review.v1", &vars)?;
    let validate = |r: &PatchReview| -> Result<(), String> {
        check_text("vulnerability_category", &r.vulnerability_category)?;
        if r.hunks.len() != files.len() {
            return Err(format!("expected {} hunk explanations, got {}", files.len(), r.hunks.len()));
        }
        for (i, h) in r.hunks.iter().enumerate() {
            if h.hunk as usize != i + 1 {
                return Err(format!("explanation {} is for hunk {}; hunks must be in order", i + 1, h.hunk));
            }
            if h.file != files[i] {
                return Err(format!("hunk {} cites `{}`, which is not the patched file `{}`", h.hunk, h.file, files[i]));
            }
            if h.line == 0 {
                return Err(format!("hunk {} cites line 0", h.hunk));
            }
            check_text("explanation", &h.explanation)?;
        }
        Ok(())
    };
    Ok(ask_structured(gateway, &env, validate)?)
}

/// Root-cause narrative plus the gaps that are still open.
pub fn trace_and_gap(
    state: &AnalysisState,
    gateway: &Gateway,
    config: &LoopConfig,
) -> Result<(GapReport, Vec<Exchange>), AgentError> {
    if state.review.is_none() {
        return Err(AgentError::Precondition("trace before review".into()));
    }
    let citable = state.citable_files();
    let mut vars = base_vars(state, config);
    vars.insert("patches".to_string(), render_patches(state));
    vars.insert("review".to_string(), render_review(state.review.as_ref()));
    let prev = if state.root_cause.is_empty() { "(none yet)".to_string() } else { state.root_cause.clone() };
    vars.insert("root_cause".to_string(), prev);
    vars.insert("previous_gaps".to_string(), render_gaps(&state.gaps));
    vars.insert("contexts".to_string(), render_contexts(state));
    let env = render_prompt("analysis.trace.v1", &vars)?;
    let validate = |r: &GapReport| -> Result<(), String> {
        check_text("root_cause", &r.root_cause)?;
        for c in &r.citations {
            if !citable.contains(&c.file) {
                return Err(format!("citation of `{}` which is neither patched nor in collected context", c.file));
            }
        }
        for g in &r.gaps {
            check_text("gap description", &g.description)?;
            check_text("gap reason", &g.reason)?;
        }
        Ok(())
    };
    Ok(ask_structured(gateway, &env, validate)?)
}

#[derive(Deserialize)]
struct RawRequest {
    kind: String,
    target: String,
    #[serde(default)]
    rationale: String,
}

#[derive(Deserialize)]
struct RawRequests {
    requests: Vec<RawRequest>,
}

/// New requests for the open gaps. Returns (kept, dropped): repeats of a
/// fulfilled request, kinds outside the allowed set and anything over the
/// per-iteration budget are dropped.
pub fn formulate_requests(
    state: &AnalysisState,
    gateway: &Gateway,
    config: &LoopConfig,
) -> Result<(Vec<ContextRequest>, Vec<ContextRequest>, Vec<Exchange>), AgentError> {
    if state.gaps.is_empty() {
        return Err(AgentError::Precondition("no open gap to request context for".into()));
    }
    let allowed = config.allowed_kinds();
    let mut vars = base_vars(state, config);
    vars.insert("gaps".to_string(), render_gaps(&state.gaps));
    let prior: String = state
        .collected_contexts
        .iter()
        .map(|c| {
            let status = if c.failure.is_some() || c.empty { "came back empty" } else { "fulfilled" };
            format!("{} `{}` ({status})\n", c.request.kind, c.request.target)
        })
        .collect();
    vars.insert("prior_requests".to_string(), if prior.is_empty() { "(none)".into() } else { prior });
    vars.insert(
        "allowed_kinds".to_string(),
        allowed.iter().map(|k| k.as_str()).collect::<Vec<_>>().join(", "),
    );
    vars.insert("request_budget".to_string(), config.request_budget.to_string());
    let env = render_prompt("analysis.requests.v1", &vars)?;
    let (raw, ex): (RawRequests, _) = ask_structured(gateway, &env, |r: &RawRequests| {
        for q in &r.requests {
            q.kind.parse::<RequestKind>()?;
            check_text("target", &q.target)?;
        }
        Ok(())
    })?;

    let fulfilled = state.fulfilled_keys();
    let mut seen: BTreeSet<String> = BTreeSet::new();
    let (mut kept, mut dropped) = (Vec::new(), Vec::new());
    for q in raw.requests {
        let req = ContextRequest::new(q.kind.parse().expect("validated"), &q.target, &q.rationale);
        let repeat = fulfilled.contains(req.normalized_key.as_str()) || !seen.insert(req.normalized_key.clone());
        if repeat || !allowed.contains(&req.kind) || kept.len() >= config.request_budget {
            dropped.push(req);
        } else {
            kept.push(req);
        }
    }
    Ok((kept, dropped, ex))
}

#[derive(Deserialize)]
struct RawScore {
    confidence: f64,
    #[serde(default)]
    #[allow(dead_code)]
    rationale: String,
}

/// The model's confidence in the evidence chain, clamped to [0, 1].
pub fn score_confidence(
    state: &AnalysisState,
    gateway: &Gateway,
    config: &LoopConfig,
) -> Result<(f64, Option<String>, Vec<Exchange>), AgentError> {
    let mut vars = base_vars(state, config);
    vars.insert("root_cause".to_string(), state.root_cause.clone());
    vars.insert("gaps".to_string(), render_gaps(&state.gaps));
    vars.insert("pending".to_string(), render_requests(&state.pending));
    let env = render_prompt("analysis.score.v1", &vars)?;
    let (raw, ex): (RawScore, _) = ask_structured(gateway, &env, |s: &RawScore| {
        if s.confidence.is_finite() {
            Ok(())
        } else {
            Err("`confidence` is not a finite number".into())
        }
    })?;
    let (c, note) = clamp_confidence(raw.confidence);
    Ok((c, note, ex))
}

#[derive(Deserialize)]
struct RawLabel {
    reason: String,
    justification: String,
}

/// Share of fulfillments that failed or came back empty above which the
/// tools, not the patch, are blamed.
fn tool_limited(state: &AnalysisState) -> Option<String> {
    let n = state.collected_contexts.len();
    let bad = state.collected_contexts.iter().filter(|c| c.failure.is_some() || c.empty).count();
    (bad >= 2 && bad * 2 > n).then(|| format!("{bad} of {n} context requests failed or returned nothing"))
}

fn render_transcript(state: &AnalysisState) -> String {
    let mut out = format!("Final root-cause narrative: {}\n", state.root_cause);
    out.push_str(&format!("Open gaps:\n{}", render_gaps(&state.gaps)));
    out.push_str(&format!("\nConfidence: {}\nContext requests:\n", state.confidence));
    if state.collected_contexts.is_empty() {
        out.push_str("(none)\n");
    }
    for c in &state.collected_contexts {
        let status = if c.failure.is_some() { "failed" } else if c.empty { "empty" } else { "ok" };
        out.push_str(&format!("- {} `{}` via {}: {status}\n", c.request.kind, c.request.target, c.tool_used));
    }
    out
}

/// Why an undecidable CVE could not be traced.
pub fn label_undecidable(
    state: &AnalysisState,
    gateway: &Gateway,
) -> Result<(UndecidableReason, String, Vec<Exchange>), AgentError> {
    if let Some(j) = tool_limited(state) {
        return Ok((UndecidableReason::ToolLimited, j, Vec::new()));
    }
    let mut vars = BTreeMap::new();
    vars.insert("cve_id".to_string(), state.cve_id.clone());
    vars.insert("transcript".to_string(), render_transcript(state));
    let env = render_prompt("analysis.undecidable.v1", &vars)?;
    let (raw, ex): (RawLabel, _) = ask_structured(gateway, &env, |l: &RawLabel| {
        l.reason.parse::<UndecidableReason>()?;
        check_text("justification", &l.justification)
    })?;
    Ok((raw.reason.parse().expect("validated"), raw.justification, ex))
}
