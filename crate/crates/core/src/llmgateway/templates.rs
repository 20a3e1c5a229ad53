//! Built-in prompt templates. Placeholders are `{{name}}`; substitution is a
//! single pass over the template text, so values are never re-expanded.
//!
//! Template wording is part of every request digest. Editing a template
//! invalidates the cassettes that recorded it, which is why ids carry a
//! version suffix.

use std::collections::BTreeMap;

use super::{GatewayError, ModelTag, PromptEnvelope, Role, RoleBlock};

pub const TEMPLATE_VERSION: &str = "v1";

#[derive(Debug, Clone, Copy)]
pub struct Template {
    pub id: &'static str,
    pub model_tag: ModelTag,
    pub blocks: &'static [(Role, &'static str)],
}

const JSON_RULE: &str = "Answer with your reasoning first, then exactly one ```json fenced block matching the schema. Do not emit any other fenced block.";

const CLASSIFY_SYSTEM: &str = "You are a senior security engineer auditing patches from open-source repositories. \
Judge each patch strictly from the code change, the commit message and any project discussion provided. \
Vulnerability advisories are deliberately not shown to you because they describe impact rather than the fix.";

const CLASSIFY_ANALYZE_USER: &str = "Step 1 of 4: patch and context analysis.
Patch: {{patch_ref}}
Repository: {{repo_id}}
File: {{file_path}} ({{language}})

Commit message:
{{commit_message}}

Unified diff (changed lines only):
{{diff}}

Function before the change:
{{func_before}}

Function after the change:
{{func_after}}

Auxiliary discussion:
{{auxiliary}}

Identify the purpose of this patch: its repair strategy and its technical impact. Prefer code-level evidence over wording in messages.
Schema: {\"intent_summary\": string, \"repair_strategy\": string, \"technical_impact\": string}
";

const CLASSIFY_BOUNDARY_USER: &str = "Step 2 of 4: security boundary assessment.
Patch: {{patch_ref}}

Unified diff (changed lines only):
{{diff}}

Commit message:
{{commit_message}}

Auxiliary discussion:
{{auxiliary}}

Intent established in step 1:
{{intent_summary}}

Decide two things. (a) Did the pre-patch code contain a condition that, under attacker-controlled input or a realistic operational scenario, could compromise the system's intended security properties? (b) Is the patch intended to eliminate that condition?
Schema: {\"pre_patch_condition\": boolean, \"patch_eliminates_condition\": boolean, \"assessment\": string}
";

const CLASSIFY_CATEGORIZE_USER: &str = "Step 3 of 4: non-security categorization.
Patch: {{patch_ref}}

Unified diff (changed lines only):
{{diff}}

Intent established in step 1:
{{intent_summary}}

Why step 2 did not find a security boundary:
{{boundary_assessment}}

Categories:
- test: testing and validation updates such as test cases, debugging statements or logging.
- support: supporting and non-core improvements such as comments, code style, refactoring of assertions or configuration files.
- defect: defect remediation and feature upgrades, i.e. non-security bug fixes or new logic that improves functionality or efficiency.
- security: choose this instead of defect whenever you are not certain the change is free of security relevance; recall matters more than precision here.
Schema: {\"category\": \"test\" | \"support\" | \"defect\" | \"security\", \"rationale\": string}
";

const CLASSIFY_CONFIDENCE_USER: &str = "Step 4 of 4: confidence scoring.
Patch: {{patch_ref}}
Assigned category: {{category}}

Intent:
{{intent_summary}}

Rationale for the category:
{{rationale}}

Rate your certainty that the assigned category is correct, from 0.0 to 1.0.
Schema: {\"confidence\": number, \"rationale\": string}
";

const ANALYSIS_SYSTEM: &str = "You are the analysis agent of a vulnerability root-cause investigation. \
Zero-assumption policy: infer nothing beyond the code that is explicitly provided to you. \
Cite file names and line numbers for every observation. When the evidence chain leaves the available code, say so instead of guessing.";

const ANALYSIS_REVIEW_USER: &str = "Patch review.
CVE: {{cve_id}}

{{cve_hint}}

Patched files and hunks ({{hunk_count}} hunks):
{{patches}}

Classify the vulnerability into a broad category (for example memory, logic, configuration, concurrency, input validation). Then explain every hunk in order: how it mitigates the vulnerability, citing the file and a line number inside that hunk.
Schema: {\"vulnerability_category\": string, \"hunks\": [{\"hunk\": integer, \"file\": string, \"line\": integer, \"explanation\": string}], \"summary\": string}
";

const ANALYSIS_TRACE_USER: &str = "Root-cause trace, iteration {{iteration}} of {{max_iter}}.
CVE: {{cve_id}}

{{cve_hint}}

Patched files and hunks:
{{patches}}

Patch review:
{{review}}

Previous root-cause narrative:
{{root_cause}}

Previously open gaps:
{{previous_gaps}}

Collected context:
{{contexts}}

Trace the root cause by strictly following function calls and data flows through the code above. Where a call or data flow leaves the available code, record a GAP with its break point and why the analysis cannot continue. Return the complete list of gaps that are still open; omit gaps the collected context has closed.
Schema: {\"root_cause\": string, \"citations\": [{\"file\": string, \"line\": integer}], \"gaps\": [{\"description\": string, \"break_point\": string, \"reason\": string}]}
";

const ANALYSIS_REQUESTS_USER: &str = "Context requests, iteration {{iteration}}.
CVE: {{cve_id}}

Open gaps:
{{gaps}}

Requests already made:
{{prior_requests}}

Available request kinds: {{allowed_kinds}}
- function: the definition of a function (target: function name)
- caller: the call sites of a function (target: function name)
- code: a line range (target: path:start-end)
- variable: definition, initialization and uses of a variable or structure member (target: name, or base->member)
- query: a structural query over functions, calls and usages (target: a plain-language description of the query)

Formulate at most {{request_budget}} precise requests that would close the open gaps. Do not repeat a request that was already made. If a request came back empty, you may try a different kind for the same information.
Schema: {\"requests\": [{\"kind\": string, \"target\": string, \"rationale\": string}]}
";

const ANALYSIS_SCORE_USER: &str = "Confidence scoring, iteration {{iteration}}.
CVE: {{cve_id}}

Current root-cause narrative:
{{root_cause}}

Open gaps:
{{gaps}}

Pending context requests:
{{pending}}

Score from 0.0 to 1.0 how complete the evidence chain is. Assign a high score only if the full trigger chain from input to the flawed operation is evident in the collected code.
Schema: {\"confidence\": number, \"rationale\": string}
";

const ANALYSIS_UNDECIDABLE_USER: &str = "Undecidable patch labelling.
CVE: {{cve_id}}

The investigation below reached its iteration limit without establishing a root cause.
{{transcript}}

Pick the single best explanation:
- runtime_high_level: the flaw depends on runtime information or high-level program understanding (for example a crash loop at boot).
- logic_dependent: the code violates an unstated application rule or operational goal.
- ambiguous_defensive: the patch adds a check whose necessity cannot be shown from the surrounding code.
- external_knowledge: understanding requires external specifications, library conventions or device-specific knowledge.
- misclassified_functional: the change is a refactoring, optimization or feature rather than a security fix.
- tool_limited: the context tools failed or returned nothing on the critical path.
Schema: {\"reason\": string, \"justification\": string}
";

const CONTEXT_SYSTEM: &str = "You are the context agent. You translate a natural-language context request into parameters for exactly one static-analysis tool. Use only names that appear in the request.";

const CONTEXT_PARAMS_USER: &str = "Request kind: {{kind}}
Target: {{target}}
Rationale: {{rationale}}

Tool: {{tool}}
Tool parameters: {{tool_signature}}

Query language (query_info only):
{{query_grammar}}

Fill in the tool parameters.
Schema: {\"name\": string?, \"file_hint\": string?, \"file\": string?, \"start\": integer?, \"end\": integer?, \"symbol\": string?, \"symbol_kind\": \"variable\" | \"member\"?, \"scope\": string?, \"query\": string?}
";

const DETECT_SYSTEM: &str = "You are a security auditor. Analyze code step by step and decide whether it is vulnerable.";

const DETECT_USER: &str = "{{task_description}}

Code under review:
```
{{code}}
```

Think step by step about whether this code contains the weakness described above. End your answer with a final line containing only VUL or NO_VUL.
";

const DETECT_CTX_USER: &str = "{{task_description}}

Code under review:
```
{{code}}
```

Additional repository context:
{{context}}

Think step by step about whether this code contains the weakness described above. End your answer with a final line containing only VUL or NO_VUL.
";

const JUDGE_SYSTEM: &str = "You are an expert vulnerability analyst grading another model's reasoning against known ground truth.";

const JUDGE_USER: &str = "Ground truth for {{cve_id}}
Description: {{cve_description}}
CWE: {{cwe_ids}}
Known root cause: {{root_cause}}

Patch:
{{patch}}

The model reviewed the {{side}} version of the code:
```
{{code}}
```

Model analysis:
{{analysis}}

Does the vulnerability the model identified match the known root cause? Answer match only if it names the same flaw; a different or generic flaw is no_match.
Schema: {\"verdict\": \"match\" | \"no_match\", \"rationale\": string}
";

const REPAIR_USER: &str = "Your previous answer to {{template_id}} could not be used: {{problem}}
Reply again, ending with exactly one ```json fenced block that satisfies the requested schema.";

const REPAIR_VERDICT_USER: &str = "Your previous answer to {{template_id}} could not be used: {{problem}}
Reply again and end with a final line containing only VUL or NO_VUL.";

macro_rules! tpl {
    ($id:expr, $tag:expr, [$(($role:expr, $text:expr)),* $(,)?]) => {
        Template { id: $id, model_tag: $tag, blocks: &[$(($role, $text)),*] }
    };
}

const TEMPLATES: &[Template] = &[
    tpl!("classify.analyze.v1", ModelTag::Classify, [(Role::System, CLASSIFY_SYSTEM), (Role::System, JSON_RULE), (Role::User, CLASSIFY_ANALYZE_USER)]),
    tpl!("classify.boundary.v1", ModelTag::Classify, [(Role::System, CLASSIFY_SYSTEM), (Role::System, JSON_RULE), (Role::User, CLASSIFY_BOUNDARY_USER)]),
    tpl!("classify.categorize.v1", ModelTag::Classify, [(Role::System, CLASSIFY_SYSTEM), (Role::System, JSON_RULE), (Role::User, CLASSIFY_CATEGORIZE_USER)]),
    tpl!("classify.confidence.v1", ModelTag::Classify, [(Role::System, CLASSIFY_SYSTEM), (Role::System, JSON_RULE), (Role::User, CLASSIFY_CONFIDENCE_USER)]),
    tpl!("analysis.review.v1", ModelTag::Analysis, [(Role::System, ANALYSIS_SYSTEM), (Role::System, JSON_RULE), (Role::User, ANALYSIS_REVIEW_USER)]),
    tpl!("analysis.trace.v1", ModelTag::Analysis, [(Role::System, ANALYSIS_SYSTEM), (Role::System, JSON_RULE), (Role::User, ANALYSIS_TRACE_USER)]),
    tpl!("analysis.requests.v1", ModelTag::Analysis, [(Role::System, ANALYSIS_SYSTEM), (Role::System, JSON_RULE), (Role::User, ANALYSIS_REQUESTS_USER)]),
    tpl!("analysis.score.v1", ModelTag::Analysis, [(Role::System, ANALYSIS_SYSTEM), (Role::System, JSON_RULE), (Role::User, ANALYSIS_SCORE_USER)]),
    tpl!("analysis.undecidable.v1", ModelTag::Analysis, [(Role::System, ANALYSIS_SYSTEM), (Role::System, JSON_RULE), (Role::User, ANALYSIS_UNDECIDABLE_USER)]),
    tpl!("context.params.v1", ModelTag::Context, [(Role::System, CONTEXT_SYSTEM), (Role::System, JSON_RULE), (Role::User, CONTEXT_PARAMS_USER)]),
    tpl!("detect.v1", ModelTag::Detect, [(Role::System, DETECT_SYSTEM), (Role::User, DETECT_USER)]),
    tpl!("detect_ctx.v1", ModelTag::Detect, [(Role::System, DETECT_SYSTEM), (Role::User, DETECT_CTX_USER)]),
    tpl!("judge.v1", ModelTag::Judge, [(Role::System, JUDGE_SYSTEM), (Role::System, JSON_RULE), (Role::User, JUDGE_USER)]),
    tpl!("repair.v1", ModelTag::Analysis, [(Role::User, REPAIR_USER)]),
    tpl!("repair_verdict.v1", ModelTag::Detect, [(Role::User, REPAIR_VERDICT_USER)]),
    #[cfg(test)]
    tpl!("test.echo.v1", ModelTag::Detect, [(Role::System, "You are a test fixture."), (Role::User, "{{instructions}}")]),
    #[cfg(test)]
    tpl!("test.static.v1", ModelTag::Judge, [(Role::User, "No placeholders here, {not one}.")]),
];

pub fn template_ids() -> impl Iterator<Item = &'static str> {
    TEMPLATES.iter().map(|t| t.id)
}

pub(crate) fn lookup(id: &str) -> Option<&'static Template> {
    TEMPLATES.iter().find(|t| t.id == id)
}

pub fn render_prompt(
    template_id: &str,
    variables: &BTreeMap<String, String>,
) -> Result<PromptEnvelope, GatewayError> {
    let template = lookup(template_id).ok_or_else(|| GatewayError::UnknownTemplate(template_id.to_string()))?;
    let mut blocks = Vec::with_capacity(template.blocks.len());
    for (role, text) in template.blocks {
        let rendered = substitute(text, variables)
            .map_err(|name| GatewayError::UnboundPlaceholder { template: template_id.to_string(), name })?;
        blocks.push(RoleBlock { role: *role, text: rendered });
    }
    Ok(PromptEnvelope::new(template.id, blocks, template.model_tag))
}

fn substitute(text: &str, vars: &BTreeMap<String, String>) -> Result<String, String> {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(open) = rest.find("{{") {
        let after = &rest[open + 2..];
        let Some(close) = after.find("}}") else { break };
        let name = &after[..close];
        if !is_placeholder_name(name) {
            out.push_str(&rest[..open + 2]);
            rest = after;
            continue;
        }
        out.push_str(&rest[..open]);
        let value = vars.get(name).ok_or_else(|| name.to_string())?;
        out.push_str(value);
        rest = &after[close + 2..];
    }
    out.push_str(rest);
    Ok(out)
}

fn is_placeholder_name(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vars(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn zero_placeholders_render_verbatim() {
        let e = render_prompt("test.static.v1", &BTreeMap::new()).unwrap();
        assert_eq!(e.role_blocks[0].text, "No placeholders here, {not one}.");
    }

    #[test]
    fn same_inputs_same_digest() {
        let a = render_prompt("test.echo.v1", &vars(&[("instructions", "x")])).unwrap();
        let b = render_prompt("test.echo.v1", &vars(&[("instructions", "x")])).unwrap();
        let c = render_prompt("test.echo.v1", &vars(&[("instructions", "y")])).unwrap();
        assert_eq!(a.request_digest, b.request_digest);
        assert_ne!(a.request_digest, c.request_digest);
    }

    #[test]
    fn missing_variable_is_error() {
        match render_prompt("test.echo.v1", &BTreeMap::new()) {
            Err(GatewayError::UnboundPlaceholder { name, .. }) => assert_eq!(name, "instructions"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_template() {
        assert!(matches!(
            render_prompt("nope.v9", &BTreeMap::new()),
            Err(GatewayError::UnknownTemplate(_))
        ));
    }

    #[test]
    fn values_are_not_reexpanded() {
        let e = render_prompt("test.echo.v1", &vars(&[("instructions", "{{instructions}}")])).unwrap();
        assert_eq!(e.role_blocks[1].text, "{{instructions}}");
    }

    #[test]
    fn json_schema_braces_survive() {
        // schema text contains `{\"a\": ...}` which must not be treated as a placeholder
        let t = lookup("analysis.score.v1").unwrap();
        let user = t.blocks.iter().find(|(r, _)| *r == Role::User).unwrap().1;
        let v = vars(&[
            ("iteration", "1"),
            ("cve_id", "CVE-1"),
            ("root_cause", "r"),
            ("gaps", "g"),
            ("pending", "p"),
        ]);
        let out = substitute(user, &v).unwrap();
        assert!(out.contains("{\"confidence\": number"));
    }

    #[test]
    fn every_template_id_is_unique_and_versioned() {
        let ids: Vec<_> = template_ids().collect();
        let mut sorted = ids.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(ids.len(), sorted.len());
        assert!(ids.iter().all(|id| id.ends_with(".v1")));
    }
}
