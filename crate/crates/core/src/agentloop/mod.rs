//! Stage two: the analysis agent and context agent loop.
//!
//! One loop runs per CVE over all of its gated patches. Iteration 0 is the
//! patch review. Every later iteration traces the root cause, records GAPs,
//! turns open gaps into context requests, scores confidence and then checks
//! termination. Requests still pending after a `continue` decision are
//! handed to the context agent before the next iteration starts.

mod context;
mod steps;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codeindex::CodeIndex;
use crate::ingest::PatchRecord;
use crate::llmgateway::{Exchange, Gateway, GatewayError, StepError};

pub use context::{fulfill_request, tool_for, FulfillError};
pub use steps::{
    formulate_requests, label_undecidable, review_patch, score_confidence, trace_and_gap, GapReport, HunkNote,
    PatchReview,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopConfig {
    pub max_iter: u32,
    pub term_threshold: f64,
    /// Limits the context agent to definitions and call sites.
    pub restrict_tools: bool,
    /// When false the advisory text is withheld from every prompt.
    pub include_cve_text: bool,
    pub request_budget: usize,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self { max_iter: 8, term_threshold: 0.9, restrict_tools: false, include_cve_text: true, request_budget: 3 }
    }
}

impl LoopConfig {
    pub fn allowed_kinds(&self) -> &'static [RequestKind] {
        if self.restrict_tools {
            &[RequestKind::Function, RequestKind::Caller]
        } else {
            &RequestKind::ALL
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequestKind {
    Function,
    Code,
    Caller,
    Variable,
    Query,
}

impl RequestKind {
    pub const ALL: [RequestKind; 5] =
        [RequestKind::Function, RequestKind::Code, RequestKind::Caller, RequestKind::Variable, RequestKind::Query];

    pub fn as_str(self) -> &'static str {
        match self {
            RequestKind::Function => "function",
            RequestKind::Code => "code",
            RequestKind::Caller => "caller",
            RequestKind::Variable => "variable",
            RequestKind::Query => "query",
        }
    }
}

impl FromStr for RequestKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RequestKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s.trim())
            .ok_or_else(|| format!("unknown request kind `{s}`"))
    }
}

impl fmt::Display for RequestKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolId {
    FuncInfo,
    CallerInfo,
    CodeInfo,
    ValueInfo,
    QueryInfo,
}

impl ToolId {
    pub fn as_str(self) -> &'static str {
        match self {
            ToolId::FuncInfo => "func_info",
            ToolId::CallerInfo => "caller_info",
            ToolId::CodeInfo => "code_info",
            ToolId::ValueInfo => "value_info",
            ToolId::QueryInfo => "query_info",
        }
    }
}

impl fmt::Display for ToolId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Gap {
    pub description: String,
    pub break_point: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextRequest {
    pub kind: RequestKind,
    pub target: String,
    pub rationale: String,
    pub normalized_key: String,
}

impl ContextRequest {
    pub fn new(kind: RequestKind, target: &str, rationale: &str) -> Self {
        Self {
            kind,
            target: target.trim().to_string(),
            rationale: rationale.trim().to_string(),
            normalized_key: normalized_key(kind, target),
        }
    }
}

/// `kind:target` with whitespace collapsed, `->` folded to `.`, a trailing
/// `()` dropped and surrounding quotes or backticks removed.
pub fn normalized_key(kind: RequestKind, target: &str) -> String {
    let t = target.trim().trim_matches(|c| c == '`' || c == '"' || c == '\'');
    let mut t: String = t.split_whitespace().collect::<Vec<_>>().join(" ");
    t = t.replace("->", ".").replace(" . ", ".");
    if kind != RequestKind::Query {
        t = t.replace(' ', "");
        while let Some(s) = t.strip_suffix("()") {
            t = s.to_string();
        }
    }
    format!("{}:{}", kind.as_str(), t)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextFulfillment {
    pub request: ContextRequest,
    pub tool_used: ToolId,
    pub payload: String,
    /// True when the tool returned no sites, definitions or lines.
    pub empty: bool,
    /// Files the payload cites.
    #[serde(default)]
    pub files: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UndecidableReason {
    RuntimeHighLevel,
    LogicDependent,
    AmbiguousDefensive,
    ExternalKnowledge,
    MisclassifiedFunctional,
    ToolLimited,
}

impl UndecidableReason {
    pub const ALL: [UndecidableReason; 6] = [
        UndecidableReason::RuntimeHighLevel,
        UndecidableReason::LogicDependent,
        UndecidableReason::AmbiguousDefensive,
        UndecidableReason::ExternalKnowledge,
        UndecidableReason::MisclassifiedFunctional,
        UndecidableReason::ToolLimited,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            UndecidableReason::RuntimeHighLevel => "runtime_high_level",
            UndecidableReason::LogicDependent => "logic_dependent",
            UndecidableReason::AmbiguousDefensive => "ambiguous_defensive",
            UndecidableReason::ExternalKnowledge => "external_knowledge",
            UndecidableReason::MisclassifiedFunctional => "misclassified_functional",
            UndecidableReason::ToolLimited => "tool_limited",
        }
    }
}

impl FromStr for UndecidableReason {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        UndecidableReason::ALL
            .into_iter()
            .find(|r| r.as_str() == s.trim())
            .ok_or_else(|| format!("unknown undecidable reason `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeStatus {
    Resolved,
    Undecidable,
    Error,
}

impl OutcomeStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            OutcomeStatus::Resolved => "resolved",
            OutcomeStatus::Undecidable => "undecidable",
            OutcomeStatus::Error => "error",
        }
    }
}

/// One recorded step of a loop run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptStep {
    pub iteration: u32,
    pub step: String,
    pub detail: serde_json::Value,
    #[serde(default)]
    pub exchanges: Vec<Exchange>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisOutcome {
    pub cve_id: String,
    pub status: OutcomeStatus,
    pub root_cause: Option<String>,
    pub final_confidence: f64,
    pub contexts: Vec<ContextFulfillment>,
    pub undecidable_reason: Option<UndecidableReason>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub undecidable_justification: Option<String>,
    pub iterations_used: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub transcript: Vec<TranscriptStep>,
}

/// Everything stage two needs to know about one CVE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CveBundle {
    pub cve_id: String,
    pub patches: Vec<PatchRecord>,
    /// Advisory text, shown to the analysis agent as an untrusted hint.
    pub description: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisState {
    pub cve_id: String,
    pub bundle: CveBundle,
    pub review: Option<PatchReview>,
    pub root_cause: String,
    pub collected_contexts: Vec<ContextFulfillment>,
    pub gaps: Vec<Gap>,
    pub pending: Vec<ContextRequest>,
    pub dropped: Vec<ContextRequest>,
    pub iteration: u32,
    pub confidence: f64,
    pub transcript: Vec<TranscriptStep>,
}

impl AnalysisState {
    pub fn new(bundle: CveBundle) -> Self {
        Self {
            cve_id: bundle.cve_id.clone(),
            bundle,
            review: None,
            root_cause: String::new(),
            collected_contexts: Vec::new(),
            gaps: Vec::new(),
            pending: Vec::new(),
            dropped: Vec::new(),
            iteration: 0,
            confidence: 0.0,
            transcript: Vec::new(),
        }
    }

    /// Keys of every request that already went to the context agent.
    pub fn fulfilled_keys(&self) -> BTreeSet<&str> {
        self.collected_contexts.iter().map(|c| c.request.normalized_key.as_str()).collect()
    }

    /// Files a narrative may cite: patched files plus files in collected context.
    pub fn citable_files(&self) -> BTreeSet<String> {
        let mut s: BTreeSet<String> = self.bundle.patches.iter().map(|p| p.file_path.clone()).collect();
        for c in &self.collected_contexts {
            s.extend(c.files.iter().cloned());
        }
        s
    }

    fn record(&mut self, step: &str, detail: serde_json::Value, exchanges: Vec<Exchange>) {
        self.transcript.push(TranscriptStep { iteration: self.iteration, step: step.to_string(), detail, exchanges });
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationDecision {
    Resolved,
    Undecidable,
    Continue,
}

/// Resolved needs high confidence and nothing pending; otherwise the cap
/// makes the CVE undecidable.
pub fn check_termination(state: &AnalysisState, config: &LoopConfig) -> TerminationDecision {
    decide(state.confidence, state.pending.len(), state.iteration, config)
}

pub fn decide(confidence: f64, pending: usize, iteration: u32, config: &LoopConfig) -> TerminationDecision {
    if confidence >= config.term_threshold && pending == 0 {
        TerminationDecision::Resolved
    } else if iteration >= config.max_iter {
        TerminationDecision::Undecidable
    } else {
        TerminationDecision::Continue
    }
}

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("malformed model output for {template_id}: {reason}")]
    MalformedModelOutput { template_id: String, reason: String },
    #[error("step precondition failed: {0}")]
    Precondition(String),
}

impl From<StepError> for AgentError {
    fn from(e: StepError) -> Self {
        match e {
            StepError::Gateway(g) => AgentError::Gateway(g),
            StepError::Malformed { template_id, reason } => AgentError::MalformedModelOutput { template_id, reason },
        }
    }
}

/// Runs the loop for one CVE. Failures end in `status=error` with the
/// transcript so far; they are never dropped.
pub fn analyze_cve(bundle: &CveBundle, index: &CodeIndex, gateway: &Gateway, config: &LoopConfig) -> AnalysisOutcome {
    let mut state = AnalysisState::new(bundle.clone());
    match run_loop(&mut state, index, gateway, config) {
        Ok((status, reason, justification)) => AnalysisOutcome {
            cve_id: state.cve_id.clone(),
            status,
            root_cause: (status == OutcomeStatus::Resolved).then(|| state.root_cause.clone()),
            final_confidence: state.confidence,
            contexts: state.collected_contexts,
            undecidable_reason: reason,
            undecidable_justification: justification,
            iterations_used: state.iteration,
            error: None,
            transcript: state.transcript,
        },
        Err(e) => {
            let msg = e.to_string();
            state.record("error", serde_json::json!({ "error": msg }), Vec::new());
            AnalysisOutcome {
                cve_id: state.cve_id.clone(),
                status: OutcomeStatus::Error,
                root_cause: None,
                final_confidence: state.confidence,
                contexts: state.collected_contexts,
                undecidable_reason: None,
                undecidable_justification: None,
                iterations_used: state.iteration,
                error: Some(msg),
                transcript: state.transcript,
            }
        }
    }
}

type LoopEnd = (OutcomeStatus, Option<UndecidableReason>, Option<String>);

fn run_loop(
    state: &mut AnalysisState,
    index: &CodeIndex,
    gateway: &Gateway,
    config: &LoopConfig,
) -> Result<LoopEnd, AgentError> {
    if config.max_iter == 0 {
        return Err(AgentError::Precondition("max_iter must be at least 1".into()));
    }
    let (review, ex) = review_patch(state, gateway, config)?;
    state.record("review", serde_json::to_value(&review).unwrap_or_default(), ex);
    state.review = Some(review);

    loop {
        state.iteration += 1;

        let (report, ex) = trace_and_gap(state, gateway, config)?;
        state.root_cause = report.root_cause.clone();
        state.gaps = report.gaps.clone();
        state.record("trace", serde_json::to_value(&report).unwrap_or_default(), ex);

        state.pending.clear();
        if !state.gaps.is_empty() {
            let (kept, dropped, ex) = formulate_requests(state, gateway, config)?;
            state.record(
                "requests",
                serde_json::json!({ "requests": kept, "dropped": dropped }),
                ex,
            );
            state.pending = kept;
            state.dropped.extend(dropped);
        }

        let (confidence, note, ex) = score_confidence(state, gateway, config)?;
        state.confidence = confidence;
        state.record("score", serde_json::json!({ "confidence": confidence, "clamp_note": note }), ex);

        let decision = check_termination(state, config);
        state.record(
            "termination",
            serde_json::json!({ "decision": decision, "pending": state.pending.len() }),
            Vec::new(),
        );
        match decision {
            TerminationDecision::Resolved => {
                if state.root_cause.trim().is_empty() {
                    return Err(AgentError::MalformedModelOutput {
                        template_id: "analysis.trace.v1".into(),
                        reason: "resolved without a root-cause narrative".into(),
                    });
                }
                return Ok((OutcomeStatus::Resolved, None, None));
            }
            TerminationDecision::Undecidable => {
                let (reason, justification, ex) = label_undecidable(state, gateway)?;
                state.record(
                    "label",
                    serde_json::json!({ "reason": reason, "justification": justification }),
                    ex,
                );
                return Ok((OutcomeStatus::Undecidable, Some(reason), Some(justification)));
            }
            TerminationDecision::Continue => {
                let pending = std::mem::take(&mut state.pending);
                for req in pending {
                    let (f, ex) = match fulfill_request(&req, index, gateway) {
                        Ok(ok) => ok,
                        Err(FulfillError::Gateway(g)) => return Err(AgentError::Gateway(g)),
                        Err(other) => (context::failed(&req, &other), other.exchanges()),
                    };
                    state.record("fulfill", serde_json::to_value(&f).unwrap_or_default(), ex);
                    state.collected_contexts.push(f);
                }
            }
        }
    }
}
