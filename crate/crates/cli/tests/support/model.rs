//! A deterministic stand-in for the LLM, driven by the fixture cases.
//!
//! It reads each prompt the way a careful model would: the CVE id or patch
//! reference picks the case, the collected context decides which gaps are
//! closed, and the code under review decides the detection verdict.

use std::sync::Arc;

use patchsieve_core::llmgateway::{PromptEnvelope, Role, ScriptedTransport, Transport};
use regex::Regex;
use serde_json::{json, Value};

use super::corpus::{Case, Need};

pub struct FixtureModel {
    cases: Vec<Case>,
    cve_re: Regex,
    hunk_re: Regex,
}

fn reply(reasoning: &str, v: Value) -> String {
    format!("{reasoning}\n\n```json\n{}\n```\n", serde_json::to_string_pretty(&v).unwrap())
}

/// Text between `start` and the next `end` (or the end of `text`).
fn section<'a>(text: &'a str, start: &str, end: &str) -> &'a str {
    let Some(i) = text.find(start) else { return "" };
    let rest = &text[i + start.len()..];
    match rest.find(end) {
        Some(j) => &rest[..j],
        None => rest,
    }
}

fn line_after<'a>(text: &'a str, prefix: &str) -> &'a str {
    text.lines().find_map(|l| l.strip_prefix(prefix)).unwrap_or("").trim()
}

impl FixtureModel {
    pub fn new(cases: Vec<Case>) -> Self {
        FixtureModel {
            cases,
            cve_re: Regex::new(r"CVE-\d{4}-\d{4,}").unwrap(),
            hunk_re: Regex::new(r"^Hunk (\d+) @@ -(\d+),(\d+) \+(\d+),(\d+) @@").unwrap(),
        }
    }

    pub fn transport(self) -> Arc<dyn Transport> {
        let me = Arc::new(self);
        Arc::new(ScriptedTransport::new(move |_, env| me.respond(env)))
    }

    fn case_in(&self, text: &str) -> &Case {
        let id = self.cve_re.find(text).map(|m| m.as_str()).unwrap_or_else(|| panic!("no CVE id in prompt"));
        self.cases.iter().find(|c| c.cve_id == id).unwrap_or_else(|| panic!("unknown {id}"))
    }

    pub fn respond(&self, env: &PromptEnvelope) -> String {
        let user = env.text_of(Role::User);
        match env.template_id.as_str() {
            "classify.analyze.v1" | "classify.boundary.v1" | "classify.categorize.v1" | "classify.confidence.v1" => {
                self.classify(&env.template_id, &user)
            }
            "analysis.review.v1" => self.review(&user),
            "analysis.trace.v1" => self.trace(&user),
            "analysis.requests.v1" => self.requests(&user),
            "analysis.score.v1" => self.score(&user),
            "analysis.undecidable.v1" => self.label(&user),
            "context.params.v1" => self.params(&user),
            "detect.v1" | "detect_ctx.v1" => self.detect(env.template_id == "detect_ctx.v1", &user),
            "judge.v1" => self.judge(&user),
            other => format!("I cannot answer {other}."),
        }
    }

    fn classify(&self, template: &str, user: &str) -> String {
        let patch_ref = line_after(user, "Patch: ");
        let case = self.case_in(patch_ref);
        let file = patch_ref.splitn(3, ':').nth(2).unwrap_or("");
        let p = case.patches.iter().find(|p| p.file == file).unwrap_or_else(|| panic!("no patch for {patch_ref}"));
        let security = p.category == "security";
        match template {
            "classify.analyze.v1" => reply(
                "The diff is small and self-contained.",
                json!({
                    "intent_summary": format!("{} in {}", case.commit_message, p.function),
                    "repair_strategy": format!("changes {} only", p.function),
                    "technical_impact": if security { "removes an exploitable condition" } else { "no change to attack surface" },
                }),
            ),
            "classify.boundary.v1" => reply(
                "Weighing the pre-patch condition.",
                json!({
                    "pre_patch_condition": security,
                    "patch_eliminates_condition": security,
                    "assessment": if security {
                        format!("{} could be reached with attacker-controlled input before the change", p.function)
                    } else {
                        format!("{} never handled untrusted input", p.function)
                    },
                }),
            ),
            "classify.categorize.v1" => reply(
                "Picking the closest category.",
                json!({ "category": p.category, "rationale": format!("the change to {} is {} work", p.file, p.category) }),
            ),
            _ => reply("Scoring.", json!({ "confidence": p.confidence, "rationale": "based on the diff" })),
        }
    }

    fn review(&self, user: &str) -> String {
        let mut hunks = Vec::new();
        let mut file = String::new();
        for l in user.lines() {
            if let Some(rest) = l.strip_prefix("=== ") {
                file = rest.rsplit_once(" (").map(|(f, _)| f.to_string()).unwrap_or_default();
            } else if let Some(c) = self.hunk_re.captures(l) {
                let n: u64 = c[1].parse().unwrap();
                let new_start: u64 = c[4].parse().unwrap();
                let old_start: u64 = c[2].parse().unwrap();
                hunks.push(json!({
                    "hunk": n,
                    "file": file,
                    "line": new_start.max(old_start).max(1),
                    "explanation": format!("hunk {n} tightens the checks in {file}"),
                }));
            }
        }
        reply(
            "Reviewing every hunk in order.",
            json!({ "vulnerability_category": "input validation", "hunks": hunks, "summary": "the patch adds missing checks" }),
        )
    }

    fn open_needs<'c>(&self, case: &'c Case, contexts: &str) -> Vec<&'c Need> {
        let open: Vec<usize> = (0..case.needs.len()).filter(|&i| !contexts.contains(&case.needs[i].evidence)).collect();
        let Some(step) = open.iter().map(|&i| case.step_of(i)).min() else { return Vec::new() };
        open.into_iter().filter(|&i| case.step_of(i) == step).map(|i| &case.needs[i]).collect()
    }

    fn trace(&self, user: &str) -> String {
        let case = self.case_in(line_after(user, "CVE: "));
        let contexts = section(user, "Collected context:\n", "\n\nTrace the root cause");
        let mut gaps: Vec<Value> = self
            .open_needs(case, contexts)
            .iter()
            .map(|n| json!({ "description": n.gap, "break_point": n.break_point, "reason": "the code is not in the material provided" }))
            .collect();
        if let Some(stuck) = &case.stuck_gap {
            gaps.push(json!({
                "description": stuck,
                "break_point": case.patches[0].function,
                "reason": case.stuck_reason.clone().unwrap_or_else(|| "not visible in code".into()),
            }));
        }
        let patches = section(user, "Patched files and hunks:\n", "\n\nPatch review:");
        let line = patches
            .lines()
            .find_map(|l| self.hunk_re.captures(l).map(|c| c[4].parse::<u64>().unwrap().max(1)))
            .unwrap_or(1);
        let root_cause =
            if gaps.is_empty() { case.root_cause.clone() } else { format!("Partial: {}", case.root_cause) };
        reply(
            "Following the data flow from the patched lines.",
            json!({
                "root_cause": root_cause,
                "citations": [{ "file": case.patches[0].file, "line": line }],
                "gaps": gaps,
            }),
        )
    }

    fn requests(&self, user: &str) -> String {
        let case = self.case_in(line_after(user, "CVE: "));
        let gaps = section(user, "Open gaps:\n", "\n\nRequests already made:");
        let prior = section(user, "Requests already made:\n", "\n\nAvailable request kinds:");
        let reqs: Vec<Value> = case
            .needs
            .iter()
            .filter(|n| gaps.contains(&n.gap) && !prior.contains(&format!("{} `{}`", n.kind, n.target)))
            .map(|n| json!({ "kind": n.kind, "target": n.target, "rationale": format!("[{}] {}", case.cve_id, n.gap) }))
            .collect();
        reply("Asking for what closes the open gaps.", json!({ "requests": reqs }))
    }

    fn score(&self, user: &str) -> String {
        let case = self.case_in(line_after(user, "CVE: "));
        let complete = user.contains("Open gaps:\n(none)") && user.contains("Pending context requests:\n(none)");
        let c = if complete { case.final_confidence } else { 0.4 };
        reply("Scoring the evidence chain.", json!({ "confidence": c, "rationale": if complete { "chain complete" } else { "gaps remain" } }))
    }

    fn label(&self, user: &str) -> String {
        let case = self.case_in(line_after(user, "CVE: "));
        let (reason, why) = match &case.undecidable {
            Some(r) => (r.clone(), case.stuck_reason.clone().unwrap_or_else(|| "see the open gap".into())),
            None => ("tool_limited".to_string(), "the request kinds needed for the open gap were not available".into()),
        };
        reply("Choosing the best explanation.", json!({ "reason": reason, "justification": why }))
    }

    fn params(&self, user: &str) -> String {
        let kind = line_after(user, "Request kind: ");
        let target = line_after(user, "Target: ");
        let case = self.case_in(line_after(user, "Rationale: "));
        let need = case.needs.iter().find(|n| n.kind == kind && n.target == target);
        let v = match kind {
            "function" | "caller" => json!({ "name": target }),
            "variable" => json!({
                "symbol": target,
                "symbol_kind": if target.contains("->") || target.contains('.') { "member" } else { "variable" },
                "scope": need.and_then(|n| n.scope.clone()),
            }),
            "code" => {
                let (file, range) = target.rsplit_once(':').unwrap_or((target, "1-1"));
                let (s, e) = range.split_once('-').unwrap_or(("1", "1"));
                json!({ "file": file, "start": s.parse::<u64>().unwrap_or(1), "end": e.parse::<u64>().unwrap_or(1) })
            }
            _ => json!({ "query": need.and_then(|n| n.query.clone()).unwrap_or_else(|| target.to_string()) }),
        };
        reply("Mapping the request onto the tool.", v)
    }

    fn detect(&self, with_context: bool, user: &str) -> String {
        let code = section(user, "Code under review:\n```\n", "\n```");
        let mut by_len: Vec<(&Case, &str)> =
            self.cases.iter().flat_map(|c| c.patches.iter().map(move |p| (c, p.function.as_str()))).collect();
        by_len.sort_by_key(|(_, f)| std::cmp::Reverse(f.len()));
        let case = by_len
            .iter()
            .find(|(_, f)| code.contains(&format!("{f}(")))
            .map(|(c, _)| *c)
            .unwrap_or_else(|| panic!("no case for code {code}"));
        let post = case.patches.iter().filter_map(|p| p.fix_marker.as_deref()).any(|m| code.contains(m));
        let spec = &case.detect[if with_context { "context" } else { "no_context" }];
        let label = if post { &spec.post } else { &spec.pre };
        let analysis = match (label.as_str(), spec.aligned) {
            ("VUL", true) => format!("Tracing the inputs: {}", case.root_cause),
            ("VUL", false) => "The function may leak a descriptor on an early return.".to_string(),
            _ => "Every value is checked before it is used.".to_string(),
        };
        format!("{analysis}\n{label}\n")
    }

    fn judge(&self, user: &str) -> String {
        let case = self.case_in(line_after(user, "Ground truth for "));
        let analysis = section(user, "Model analysis:\n", "\n\nDoes the vulnerability");
        let verdict = if analysis.contains(&case.root_key) { "match" } else { "no_match" };
        reply("Comparing with the known root cause.", json!({ "verdict": verdict, "rationale": "compared flaws" }))
    }
}
