//! Paired detection evaluation: detect on both sides of a fix, judge the
//! claimed root cause, score against the outcome table and aggregate.

pub mod cwe;
mod metrics;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agentloop::{ContextFulfillment, OutcomeStatus};
use crate::datasetout::DatasetRecord;
pub use crate::ingest::Side;
use crate::ingest::PatchRecord;
use crate::llmgateway::{
    ask_structured, render_prompt, repair_envelope, Exchange, Gateway, GatewayError, PromptEnvelope, StepError,
};

pub use cwe::{cwe_group, group_ids, group_label, task_description};
pub use metrics::{aggregate, render_svg, GroupMetrics, MetricsReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "VUL")]
    Vul,
    #[serde(rename = "NO_VUL")]
    NoVul,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Vul => "VUL",
            Label::NoVul => "NO_VUL",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JudgeVerdict {
    Match,
    NoMatch,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub cve_description: String,
    pub cwe_ids: Vec<String>,
    pub patch: String,
    pub root_cause: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalPair {
    pub cve_id: String,
    pub cwe_group: String,
    pub pre_code: String,
    pub post_code: String,
    pub context: Option<Vec<ContextFulfillment>>,
    pub ground_truth: GroundTruth,
}

impl EvalPair {
    pub fn check(&self) -> Result<(), String> {
        if self.pre_code == self.post_code {
            return Err(format!("{}: pre and post code are identical", self.cve_id));
        }
        if !cwe::is_known_group(&self.cwe_group) {
            return Err(format!("{}: unknown CWE group `{}`", self.cve_id, self.cwe_group));
        }
        Ok(())
    }

    pub fn code(&self, side: Side) -> &str {
        match side {
            Side::Pre => &self.pre_code,
            Side::Post => &self.post_code,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectionVerdict {
    pub side: Side,
    pub label: Label,
    pub analysis: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PreResult {
    TP,
    FN,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PostResult {
    TN,
    FP,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairOutcome {
    pub cve_id: String,
    pub pre_result: PreResult,
    pub post_result: PostResult,
    pub pair_correct: bool,
}

impl PairOutcome {
    pub fn new(cve_id: impl Into<String>, pre_result: PreResult, post_result: PostResult) -> Self {
        PairOutcome {
            cve_id: cve_id.into(),
            pre_result,
            post_result,
            pair_correct: pre_result == PreResult::TP && post_result == PostResult::TN,
        }
    }
}

/// One side's detection label and, for VUL, the judge's verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SideJudgement {
    pub label: Label,
    pub judge: Option<JudgeVerdict>,
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("malformed model output for {template_id}: {reason}")]
    MalformedModelOutput { template_id: String, reason: String },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("{0} side answered VUL but has no judge verdict")]
    MissingJudge(Side),
    #[error("invalid pair: {0}")]
    InvalidPair(String),
    #[error("cannot read pairs file {path}: {reason}")]
    Unreadable { path: String, reason: String },
}

impl From<StepError> for EvalError {
    fn from(e: StepError) -> Self {
        match e {
            StepError::Gateway(g) => EvalError::Gateway(g),
            StepError::Malformed { template_id, reason } => EvalError::MalformedModelOutput { template_id, reason },
        }
    }
}

/// Reads the verdict from the final non-empty line. Markdown emphasis and a
/// trailing period around the token are tolerated.
pub fn parse_verdict(text: &str) -> Result<(Label, String), String> {
    let lines: Vec<&str> = text.lines().collect();
    let Some(last) = lines.iter().rposition(|l| !l.trim().is_empty()) else {
        return Err("empty answer".into());
    };
    let token = lines[last].trim().trim_matches(|c: char| c == '*' || c == '`' || c == '.' || c.is_whitespace());
    let label = match token {
        "VUL" => Label::Vul,
        "NO_VUL" => Label::NoVul,
        other => return Err(format!("final line is `{}`, expected VUL or NO_VUL", other.chars().take(60).collect::<String>())),
    };
    Ok((label, lines[..last].join("\n").trim().to_string()))
}

fn render_context(ctx: Option<&[ContextFulfillment]>) -> String {
    let blocks: Vec<String> = ctx
        .unwrap_or_default()
        .iter()
        .filter(|c| !c.empty)
        .map(|c| format!("[{} {}]\n{}", c.request.kind.as_str(), c.request.target, c.payload.trim_end()))
        .collect();
    if blocks.is_empty() {
        "(no additional context)".to_string()
    } else {
        blocks.join("\n\n")
    }
}

/// The detection prompt. The two variants differ only in the context block.
pub fn detection_envelope(pair: &EvalPair, side: Side, with_context: bool) -> Result<PromptEnvelope, GatewayError> {
    let mut vars = BTreeMap::new();
    vars.insert("task_description".to_string(), task_description(&pair.ground_truth.cwe_ids));
    vars.insert("code".to_string(), pair.code(side).to_string());
    if with_context {
        vars.insert("context".to_string(), render_context(pair.context.as_deref()));
        render_prompt("detect_ctx.v1", &vars)
    } else {
        render_prompt("detect.v1", &vars)
    }
}

pub fn run_detection(
    pair: &EvalPair,
    side: Side,
    with_context: bool,
    gateway: &Gateway,
) -> Result<(DetectionVerdict, Vec<Exchange>), EvalError> {
    let env = detection_envelope(pair, side, with_context)?;
    let first = gateway.complete(&env)?;
    let mut ex = vec![Exchange { template_id: env.template_id.clone(), digest: env.request_digest.clone(), response: first.text.clone() }];
    let problem = match parse_verdict(&first.text) {
        Ok((label, analysis)) => return Ok((DetectionVerdict { side, label, analysis }, ex)),
        Err(p) => p,
    };
    let repair = repair_envelope(&env, &first.text, &problem, "repair_verdict.v1")?;
    let second = gateway.complete(&repair)?;
    ex.push(Exchange { template_id: repair.template_id.clone(), digest: repair.request_digest.clone(), response: second.text.clone() });
    match parse_verdict(&second.text) {
        Ok((label, analysis)) => Ok((DetectionVerdict { side, label, analysis }, ex)),
        Err(reason) => Err(EvalError::MalformedModelOutput {
            template_id: env.template_id,
            reason: format!("{reason} (after repair; first attempt: {problem})"),
        }),
    }
}

#[derive(Debug, Deserialize)]
struct JudgeAnswer {
    verdict: JudgeVerdict,
    #[serde(default)]
    #[allow(dead_code)]
    rationale: String,
}

pub fn judge_root_cause(
    verdict: &DetectionVerdict,
    pair: &EvalPair,
    gateway: &Gateway,
) -> Result<(JudgeVerdict, Vec<Exchange>), EvalError> {
    if verdict.label != Label::Vul {
        return Err(EvalError::Precondition(format!(
            "judging a {} verdict on the {} side of {}",
            verdict.label, verdict.side, pair.cve_id
        )));
    }
    let gt = &pair.ground_truth;
    let mut vars = BTreeMap::new();
    vars.insert("cve_id".to_string(), pair.cve_id.clone());
    vars.insert("cve_description".to_string(), gt.cve_description.clone());
    vars.insert("cwe_ids".to_string(), gt.cwe_ids.join(", "));
    vars.insert("root_cause".to_string(), gt.root_cause.clone());
    vars.insert("patch".to_string(), gt.patch.clone());
    vars.insert(
        "side".to_string(),
        match verdict.side {
            Side::Pre => "pre-patch (vulnerable)".to_string(),
            Side::Post => "post-patch (fixed)".to_string(),
        },
    );
    vars.insert("code".to_string(), pair.code(verdict.side).to_string());
    vars.insert("analysis".to_string(), verdict.analysis.clone());
    let env = render_prompt("judge.v1", &vars)?;
    let (a, ex): (JudgeAnswer, _) = ask_structured(gateway, &env, |_| Ok(()))?;
    Ok((a.verdict, ex))
}

/// The outcome table. A judge verdict attached to a NO_VUL side is ignored.
pub fn score_pair(cve_id: &str, pre: SideJudgement, post: SideJudgement) -> Result<PairOutcome, EvalError> {
    let pre_result = match (pre.label, pre.judge) {
        (Label::Vul, Some(JudgeVerdict::Match)) => PreResult::TP,
        (Label::Vul, Some(JudgeVerdict::NoMatch)) => PreResult::FN,
        (Label::NoVul, _) => PreResult::FN,
        (Label::Vul, None) => return Err(EvalError::MissingJudge(Side::Pre)),
    };
    let post_result = match (post.label, post.judge) {
        (Label::Vul, Some(JudgeVerdict::NoMatch)) => PostResult::TN,
        (Label::Vul, Some(JudgeVerdict::Match)) => PostResult::FP,
        (Label::NoVul, _) => PostResult::TN,
        (Label::Vul, None) => return Err(EvalError::MissingJudge(Side::Post)),
    };
    Ok(PairOutcome::new(cve_id, pre_result, post_result))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairEvaluation {
    pub cve_id: String,
    pub cwe_group: String,
    pub pre: DetectionVerdict,
    pub pre_judge: Option<JudgeVerdict>,
    pub post: DetectionVerdict,
    pub post_judge: Option<JudgeVerdict>,
    pub outcome: PairOutcome,
    pub exchanges: Vec<Exchange>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairFailure {
    pub cve_id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRun {
    pub with_context: bool,
    pub evaluations: Vec<PairEvaluation>,
    pub failures: Vec<PairFailure>,
    pub metrics: MetricsReport,
}

pub fn evaluate_pair(pair: &EvalPair, with_context: bool, gateway: &Gateway) -> Result<PairEvaluation, EvalError> {
    pair.check().map_err(EvalError::InvalidPair)?;
    let mut exchanges = Vec::new();
    let mut side = |s: Side| -> Result<(DetectionVerdict, Option<JudgeVerdict>), EvalError> {
        let (v, ex) = run_detection(pair, s, with_context, gateway)?;
        exchanges.extend(ex);
        let judge = if v.label == Label::Vul {
            let (j, ex) = judge_root_cause(&v, pair, gateway)?;
            exchanges.extend(ex);
            Some(j)
        } else {
            None
        };
        Ok((v, judge))
    };
    let (pre, pre_judge) = side(Side::Pre)?;
    let (post, post_judge) = side(Side::Post)?;
    let outcome = score_pair(
        &pair.cve_id,
        SideJudgement { label: pre.label, judge: pre_judge },
        SideJudgement { label: post.label, judge: post_judge },
    )?;
    Ok(PairEvaluation { cve_id: pair.cve_id.clone(), cwe_group: pair.cwe_group.clone(), pre, pre_judge, post, post_judge, outcome, exchanges })
}

/// Evaluates pairs on the current rayon pool. Results keep the input order;
/// failed pairs are listed and left out of the metrics.
pub fn evaluate(pairs: &[EvalPair], with_context: bool, gateway: &Gateway) -> EvalRun {
    let results: Vec<Result<PairEvaluation, PairFailure>> = pairs
        .par_iter()
        .map(|p| evaluate_pair(p, with_context, gateway).map_err(|e| PairFailure { cve_id: p.cve_id.clone(), error: e.to_string() }))
        .collect();
    let mut evaluations = Vec::new();
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(e) => evaluations.push(e),
            Err(f) => failures.push(f),
        }
    }
    let outcomes: Vec<PairOutcome> = evaluations.iter().map(|e| e.outcome.clone()).collect();
    let groups = evaluations.iter().map(|e| (e.cve_id.clone(), e.cwe_group.clone())).collect();
    EvalRun { with_context, metrics: aggregate(&outcomes, &groups), evaluations, failures }
}

/// Builds one pair per resolved record. Multi-file fixes concatenate their
/// functions in patch order. Records that cannot form a pair are returned
/// with the reason.
pub fn build_pairs(
    records: &[DatasetRecord],
    patches: &BTreeMap<String, Vec<PatchRecord>>,
    descriptions: &BTreeMap<String, String>,
) -> (Vec<EvalPair>, Vec<PairFailure>) {
    let mut pairs = Vec::new();
    let mut skipped = Vec::new();
    for r in records {
        let skip = |why: &str| PairFailure { cve_id: r.cve_id.clone(), error: why.to_string() };
        if r.status != OutcomeStatus::Resolved {
            skipped.push(skip(&format!("status is {}", r.status.as_str())));
            continue;
        }
        let Some(recs) = patches.get(&r.cve_id).filter(|p| !p.is_empty()) else {
            skipped.push(skip("no patch records"));
            continue;
        };
        let mut recs: Vec<&PatchRecord> = recs.iter().collect();
        recs.sort_by_key(|p| p.patch_ref());
        let join = |f: &dyn Fn(&PatchRecord) -> String| recs.iter().map(|p| f(p)).collect::<Vec<_>>().join("\n\n");
        let ctx: Vec<ContextFulfillment> = r.contexts.iter().filter(|c| !c.empty).cloned().collect();
        let pair = EvalPair {
            cve_id: r.cve_id.clone(),
            cwe_group: cwe_group(&r.cwe_ids),
            pre_code: join(&|p| p.func_before.trim_end().to_string()),
            post_code: join(&|p| p.func_after.trim_end().to_string()),
            context: if ctx.is_empty() { None } else { Some(ctx) },
            ground_truth: GroundTruth {
                cve_description: descriptions.get(&r.cve_id).cloned().unwrap_or_else(|| "(no description)".into()),
                cwe_ids: r.cwe_ids.clone(),
                patch: join(&|p| p.diff_text()),
                root_cause: r.root_cause.clone().unwrap_or_default(),
            },
        };
        match pair.check() {
            Ok(()) => pairs.push(pair),
            Err(e) => skipped.push(skip(&e)),
        }
    }
    (pairs, skipped)
}

pub fn load_pairs(path: &Path) -> Result<Vec<EvalPair>, EvalError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| EvalError::Unreadable { path: path.display().to_string(), reason: e.to_string() })?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| EvalError::Unreadable {
                path: path.display().to_string(),
                reason: format!("line {}: {e}", i + 1),
            })
        })
        .collect()
}

pub fn render_pairs(pairs: &[EvalPair]) -> Vec<u8> {
    let mut out = Vec::new();
    for p in pairs {
        out.extend(serde_json::to_vec(p).expect("pairs serialize"));
        out.push(b'\n');
    }
    out
}
