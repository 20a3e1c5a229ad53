//! The `report` stage: classification breakdown, context statistics per CWE
//! group and the detection tables.

use std::collections::BTreeMap;

use patchsieve_core::agentloop::{OutcomeStatus, UndecidableReason};
use patchsieve_core::classify::{summarize_classification, ClassificationResult};
use patchsieve_core::datasetout::DatasetRecord;
use patchsieve_core::evalharness::{cwe_group, group_ids, group_label, render_svg};
use serde::Serialize;
use serde_json::Value;

use crate::stages::EvalReport;

pub struct Rendered {
    pub text: String,
    pub svg: Option<String>,
    pub data: Value,
}

#[derive(Debug, Default, Clone, Serialize)]
pub struct GroupContextRow {
    pub cves: usize,
    pub percent: f64,
    pub resolved: usize,
    pub undecidable: usize,
    pub error: usize,
    /// Mean count of non-empty context fulfillments per CVE.
    pub avg_contexts: f64,
    pub reasons: BTreeMap<String, usize>,
}

pub fn context_by_group(records: &[DatasetRecord]) -> BTreeMap<String, GroupContextRow> {
    let mut rows: BTreeMap<String, GroupContextRow> = BTreeMap::new();
    let mut ctx_total: BTreeMap<String, usize> = BTreeMap::new();
    for r in records {
        let g = cwe_group(&r.cwe_ids);
        let row = rows.entry(g.clone()).or_default();
        row.cves += 1;
        match r.status {
            OutcomeStatus::Resolved => row.resolved += 1,
            OutcomeStatus::Undecidable => row.undecidable += 1,
            OutcomeStatus::Error => row.error += 1,
        }
        if let Some(reason) = r.undecidable_reason {
            *row.reasons.entry(reason.as_str().to_string()).or_default() += 1;
        }
        *ctx_total.entry(g).or_default() += r.contexts.iter().filter(|c| !c.empty).count();
    }
    let n = records.len().max(1) as f64;
    for (g, row) in rows.iter_mut() {
        row.percent = 100.0 * row.cves as f64 / n;
        row.avg_contexts = ctx_total[g] as f64 / row.cves as f64;
    }
    rows
}

fn render_context_table(rows: &BTreeMap<String, GroupContextRow>) -> String {
    let mut out = format!(
        "{:<36}{:>6}{:>8}{:>10}{:>10}{:>13}{:>7}  reasons\n",
        "CWE group", "CVEs", "%", "contexts", "resolved", "undecidable", "error"
    );
    for g in group_ids() {
        let Some(r) = rows.get(g) else { continue };
        let reasons: Vec<String> = UndecidableReason::ALL
            .iter()
            .filter_map(|x| r.reasons.get(x.as_str()).map(|n| format!("{}={n}", x.as_str())))
            .collect();
        out.push_str(&format!(
            "{:<36}{:>6}{:>8.1}{:>10.2}{:>10}{:>13}{:>7}  {}\n",
            group_label(g),
            r.cves,
            r.percent,
            r.avg_contexts,
            r.resolved,
            r.undecidable,
            r.error,
            if reasons.is_empty() { "-".to_string() } else { reasons.join(", ") }
        ));
    }
    out
}

pub fn render(classes: Option<&[ClassificationResult]>, dataset: Option<&[DatasetRecord]>, evals: &[EvalReport]) -> Rendered {
    let mut text = String::new();
    let mut data = serde_json::Map::new();
    if let Some(c) = classes {
        let summary = summarize_classification(c);
        text.push_str("== patch classification ==\n");
        text.push_str(&summary.render());
        text.push('\n');
        data.insert("classification".into(), serde_json::to_value(&summary).expect("serializable"));
    }
    if let Some(d) = dataset {
        let rows = context_by_group(d);
        text.push_str("== context collected per CWE group ==\n");
        text.push_str(&render_context_table(&rows));
        text.push('\n');
        data.insert("context_by_group".into(), serde_json::to_value(&rows).expect("serializable"));
    }
    let titled: Vec<(&str, &EvalReport)> = evals
        .iter()
        .map(|e| (if e.run.with_context { "detection with context" } else { "detection without context" }, e))
        .collect();
    for (title, e) in &titled {
        text.push_str(&e.run.metrics.render_table(&format!("== {title} ==")));
        text.push('\n');
        data.insert(title.replace(' ', "_"), serde_json::to_value(&e.run.metrics).expect("serializable"));
    }
    let svg = (!titled.is_empty())
        .then(|| render_svg(&titled.iter().map(|(t, e)| (*t, &e.run.metrics)).collect::<Vec<_>>()));
    Rendered { text, svg, data: Value::Object(data) }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_inputs_render_nothing() {
        let r = render(None, None, &[]);
        assert!(r.text.is_empty());
        assert!(r.svg.is_none());
    }

    #[test]
    fn empty_dataset_has_no_group_rows() {
        assert!(context_by_group(&[]).is_empty());
    }
}
