//! Stage one: security or not, with a confidence, and the CVE gate.
//!
//! Each patch goes through four prompts: intent analysis, security boundary
//! assessment, non-security categorization (only when the boundary test
//! fails) and confidence scoring. Advisory text never reaches these prompts.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{Discussion, Language, PatchRecord};
use crate::llmgateway::{ask_structured, render_prompt, Exchange, Gateway, GatewayError, StepError};

pub const DEFAULT_THRESHOLD: f64 = 0.9;

const NOT_PROVIDED: &str = "(not provided)";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatchCategory {
    Security,
    Test,
    Support,
    Defect,
}

impl PatchCategory {
    pub const ALL: [PatchCategory; 4] =
        [PatchCategory::Security, PatchCategory::Test, PatchCategory::Support, PatchCategory::Defect];

    pub fn as_str(self) -> &'static str {
        match self {
            PatchCategory::Security => "security",
            PatchCategory::Test => "test",
            PatchCategory::Support => "support",
            PatchCategory::Defect => "defect",
        }
    }
}

impl FromStr for PatchCategory {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PatchCategory::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown category `{s}`"))
    }
}

impl fmt::Display for PatchCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRationale {
    pub step: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationResult {
    pub patch_ref: String,
    pub cve_id: String,
    pub language: Language,
    pub category: PatchCategory,
    pub confidence: f64,
    pub intent_summary: String,
    /// Non-empty exactly when the category is security.
    pub boundary_assessment: String,
    pub rationales: Vec<StepRationale>,
    pub used_auxiliary: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clamp_note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateDecision {
    pub cve_id: String,
    pub kept: bool,
    pub qualifying_patches: Vec<String>,
    pub threshold: f64,
}

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error("patch {0} has no diff hunks")]
    EmptyDiff(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("malformed model output for {template_id}: {reason}")]
    MalformedModelOutput { template_id: String, reason: String },
    #[error("gate input mixes CVEs: {0} and {1}")]
    MixedCveInput(String, String),
    #[error("gate input is empty")]
    EmptyGateInput,
    #[error("threshold {0} outside (0, 1]")]
    InvalidThreshold(f64),
}

impl From<StepError> for ClassifyError {
    fn from(e: StepError) -> Self {
        match e {
            StepError::Gateway(g) => ClassifyError::Gateway(g),
            StepError::Malformed { template_id, reason } => ClassifyError::MalformedModelOutput { template_id, reason },
        }
    }
}

#[derive(Deserialize)]
struct IntentStep {
    intent_summary: String,
    #[serde(default)]
    repair_strategy: String,
    #[serde(default)]
    technical_impact: String,
}

#[derive(Deserialize)]
struct BoundaryStep {
    pre_patch_condition: bool,
    patch_eliminates_condition: bool,
    assessment: String,
}

#[derive(Deserialize)]
struct CategoryStep {
    category: String,
    rationale: String,
}

#[derive(Deserialize)]
struct ConfidenceStep {
    confidence: f64,
    #[serde(default)]
    rationale: String,
}

fn non_empty(what: &str, s: &str) -> Result<(), String> {
    if s.trim().is_empty() {
        Err(format!("`{what}` is empty"))
    } else {
        Ok(())
    }
}

fn or_placeholder(s: &str) -> String {
    if s.trim().is_empty() {
        NOT_PROVIDED.to_string()
    } else {
        s.to_string()
    }
}

fn auxiliary_text(discussion: &Discussion, ablate: bool) -> String {
    if ablate || discussion.is_empty() {
        return NOT_PROVIDED.to_string();
    }
    let mut out = format!("Source: {} ({})\n", discussion.url, discussion.total_words);
    for (i, body) in discussion.body_texts.iter().enumerate() {
        out.push_str(&format!("--- message {} ---\n{}\n", i + 1, body.trim_end()));
    }
    out
}

/// Clamps into [0, 1]; the note says what was changed.
pub fn clamp_confidence(raw: f64) -> (f64, Option<String>) {
    if raw > 1.0 {
        (1.0, Some(format!("confidence {raw} clamped to 1.0")))
    } else if raw < 0.0 {
        (0.0, Some(format!("confidence {raw} clamped to 0.0")))
    } else {
        (raw, None)
    }
}

/// Runs the four classification steps for one patch.
pub fn classify_patch(
    record: &PatchRecord,
    discussion: &Discussion,
    gateway: &Gateway,
    ablate_auxiliary: bool,
) -> Result<ClassificationResult, ClassifyError> {
    classify_patch_logged(record, discussion, gateway, ablate_auxiliary).map(|(r, _)| r)
}

/// As [`classify_patch`], also returning every model exchange in order.
pub fn classify_patch_logged(
    record: &PatchRecord,
    discussion: &Discussion,
    gateway: &Gateway,
    ablate_auxiliary: bool,
) -> Result<(ClassificationResult, Vec<Exchange>), ClassifyError> {
    let patch_ref = record.patch_ref();
    if record.diff_hunks.is_empty() {
        return Err(ClassifyError::EmptyDiff(patch_ref));
    }
    let auxiliary = auxiliary_text(discussion, ablate_auxiliary);
    let used_auxiliary = !ablate_auxiliary && !discussion.is_empty();
    let diff = record.diff_text();
    let mut log = Vec::new();
    let mut rationales = Vec::new();

    let mut vars = BTreeMap::new();
    vars.insert("patch_ref".to_string(), patch_ref.clone());
    vars.insert("repo_id".to_string(), record.repo_id.clone());
    vars.insert("file_path".to_string(), record.file_path.clone());
    vars.insert("language".to_string(), record.language.as_str().to_string());
    vars.insert("commit_message".to_string(), or_placeholder(&record.commit_message));
    vars.insert("diff".to_string(), diff);
    vars.insert("func_before".to_string(), or_placeholder(&record.func_before));
    vars.insert("func_after".to_string(), or_placeholder(&record.func_after));
    vars.insert("auxiliary".to_string(), auxiliary);

    let env = render_prompt("classify.analyze.v1", &vars)?;
    let (intent, ex): (IntentStep, _) = ask_structured(gateway, &env, |s: &IntentStep| non_empty("intent_summary", &s.intent_summary))?;
    log.extend(ex);
    rationales.push(StepRationale {
        step: "analyze".into(),
        text: format!(
            "{} Repair strategy: {} Impact: {}",
            intent.intent_summary.trim(),
            intent.repair_strategy.trim(),
            intent.technical_impact.trim()
        ),
    });
    vars.insert("intent_summary".to_string(), intent.intent_summary.clone());

    let env = render_prompt("classify.boundary.v1", &vars)?;
    let (boundary, ex): (BoundaryStep, _) = ask_structured(gateway, &env, |s: &BoundaryStep| non_empty("assessment", &s.assessment))?;
    log.extend(ex);
    rationales.push(StepRationale { step: "boundary".into(), text: boundary.assessment.clone() });
    let crosses_boundary = boundary.pre_patch_condition && boundary.patch_eliminates_condition;

    let (category, category_rationale, boundary_assessment) = if crosses_boundary {
        (PatchCategory::Security, boundary.assessment.clone(), boundary.assessment.clone())
    } else {
        vars.insert("boundary_assessment".to_string(), boundary.assessment.clone());
        let env = render_prompt("classify.categorize.v1", &vars)?;
        let (cat, ex): (CategoryStep, _) = ask_structured(gateway, &env, |s: &CategoryStep| {
            s.category.parse::<PatchCategory>()?;
            non_empty("rationale", &s.rationale)
        })?;
        log.extend(ex);
        rationales.push(StepRationale { step: "categorize".into(), text: cat.rationale.clone() });
        let category: PatchCategory = cat.category.parse().expect("validated above");
        let assessment = if category == PatchCategory::Security {
            format!("kept as security under recall bias: {}", cat.rationale.trim())
        } else {
            String::new()
        };
        (category, cat.rationale, assessment)
    };

    vars.insert("category".to_string(), category.as_str().to_string());
    vars.insert("rationale".to_string(), category_rationale);
    let env = render_prompt("classify.confidence.v1", &vars)?;
    let (conf, ex): (ConfidenceStep, _) = ask_structured(gateway, &env, |s: &ConfidenceStep| {
        if s.confidence.is_finite() {
            Ok(())
        } else {
            Err("`confidence` is not a finite number".into())
        }
    })?;
    log.extend(ex);
    rationales.push(StepRationale { step: "confidence".into(), text: conf.rationale.clone() });
    let (confidence, clamp_note) = clamp_confidence(conf.confidence);

    Ok((
        ClassificationResult {
            patch_ref,
            cve_id: record.cve_id.clone(),
            language: record.language,
            category,
            confidence,
            intent_summary: intent.intent_summary,
            boundary_assessment,
            rationales,
            used_auxiliary,
            clamp_note,
        },
        log,
    ))
}

/// Keeps a CVE when at least one of its patches is security with
/// `confidence >= threshold`.
pub fn gate_cve(results: &[ClassificationResult], threshold: f64) -> Result<GateDecision, ClassifyError> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(ClassifyError::InvalidThreshold(threshold));
    }
    let first = results.first().ok_or(ClassifyError::EmptyGateInput)?;
    if let Some(other) = results.iter().find(|r| r.cve_id != first.cve_id) {
        return Err(ClassifyError::MixedCveInput(first.cve_id.clone(), other.cve_id.clone()));
    }
    let qualifying_patches: Vec<String> = results
        .iter()
        .filter(|r| r.category == PatchCategory::Security && r.confidence >= threshold)
        .map(|r| r.patch_ref.clone())
        .collect();
    Ok(GateDecision {
        cve_id: first.cve_id.clone(),
        kept: !qualifying_patches.is_empty(),
        qualifying_patches,
        threshold,
    })
}

/// Gates every CVE present in `results`, in CVE order.
pub fn gate_all(results: &[ClassificationResult], threshold: f64) -> Result<Vec<GateDecision>, ClassifyError> {
    let mut by_cve: BTreeMap<&str, Vec<ClassificationResult>> = BTreeMap::new();
    for r in results {
        by_cve.entry(&r.cve_id).or_default().push(r.clone());
    }
    by_cve.values().map(|rs| gate_cve(rs, threshold)).collect()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CategoryRow {
    pub counts: BTreeMap<PatchCategory, usize>,
    pub total: usize,
}

impl CategoryRow {
    fn new() -> Self {
        Self { counts: PatchCategory::ALL.into_iter().map(|c| (c, 0)).collect(), total: 0 }
    }

    pub fn count(&self, c: PatchCategory) -> usize {
        self.counts.get(&c).copied().unwrap_or(0)
    }

    /// Share of `c` in this row, in percent; 0 for an empty row.
    pub fn percent(&self, c: PatchCategory) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            100.0 * self.count(c) as f64 / self.total as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub per_language: BTreeMap<Language, CategoryRow>,
    pub overall: CategoryRow,
}

pub fn summarize_classification(results: &[ClassificationResult]) -> ClassificationReport {
    let mut per_language: BTreeMap<Language, CategoryRow> = BTreeMap::new();
    let mut overall = CategoryRow::new();
    for r in results {
        let row = per_language.entry(r.language).or_insert_with(CategoryRow::new);
        *row.counts.get_mut(&r.category).unwrap() += 1;
        row.total += 1;
        *overall.counts.get_mut(&r.category).unwrap() += 1;
        overall.total += 1;
    }
    ClassificationReport { per_language, overall }
}

impl ClassificationReport {
    /// Text table: one row per language plus a total row.
    pub fn render(&self) -> String {
        let mut out = format!("{:<8}{:>8}", "lang", "total");
        for c in PatchCategory::ALL {
            out.push_str(&format!("{:>18}", c.as_str()));
        }
        out.push('\n');
        let row = |name: &str, r: &CategoryRow| {
            let mut line = format!("{:<8}{:>8}", name, r.total);
            for c in PatchCategory::ALL {
                line.push_str(&format!("{:>18}", format!("{} ({:.1}%)", r.count(c), r.percent(c))));
            }
            line.push('\n');
            line
        };
        for (lang, r) in &self.per_language {
            out.push_str(&row(lang.as_str(), r));
        }
        out.push_str(&row("all", &self.overall));
        out
    }
}
