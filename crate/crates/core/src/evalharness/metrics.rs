//! Confusion counts, F1 and paired accuracy, per CWE group and overall.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::cwe::{group_ids, group_label, misc_group};
use super::{PairOutcome, PostResult, PreResult};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroupMetrics {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
    pub pairs: usize,
    pub pair_correct: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tn_rate: f64,
    pub paired_accuracy: f64,
    /// Names of the ratios whose denominator was zero and were set to 0.
    pub degenerate: Vec<String>,
}

fn ratio(num: usize, den: usize, name: &str, degenerate: &mut Vec<String>) -> f64 {
    if den == 0 {
        degenerate.push(name.to_string());
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl GroupMetrics {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize, tn: usize, pairs: usize, pair_correct: usize) -> Self {
        let mut degenerate = Vec::new();
        let precision = ratio(tp, tp + fp, "precision", &mut degenerate);
        let recall = ratio(tp, tp + fn_, "recall", &mut degenerate);
        let f1 = if precision + recall == 0.0 {
            degenerate.push("f1".to_string());
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        let tn_rate = ratio(tn, tn + fp, "tn_rate", &mut degenerate);
        let paired_accuracy = ratio(pair_correct, pairs, "paired_accuracy", &mut degenerate);
        GroupMetrics { tp, fp, fn_, tn, pairs, pair_correct, precision, recall, f1, tn_rate, paired_accuracy, degenerate }
    }

    fn add(&mut self, o: &PairOutcome) {
        self.pairs += 1;
        match o.pre_result {
            PreResult::TP => self.tp += 1,
            PreResult::FN => self.fn_ += 1,
        }
        match o.post_result {
            PostResult::TN => self.tn += 1,
            PostResult::FP => self.fp += 1,
        }
        if o.pair_correct {
            self.pair_correct += 1;
        }
    }

    fn finish(self) -> Self {
        GroupMetrics::from_counts(self.tp, self.fp, self.fn_, self.tn, self.pairs, self.pair_correct)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub overall: GroupMetrics,
    pub per_group: BTreeMap<String, GroupMetrics>,
}

/// Folds pair outcomes into per-group and overall metrics. CVEs without an
/// entry in `groups` fall into `Misc.`.
pub fn aggregate(outcomes: &[PairOutcome], groups: &BTreeMap<String, String>) -> MetricsReport {
    let mut overall = GroupMetrics::default();
    let mut per_group: BTreeMap<String, GroupMetrics> = BTreeMap::new();
    for o in outcomes {
        overall.add(o);
        let g = groups.get(&o.cve_id).cloned().unwrap_or_else(|| misc_group().to_string());
        per_group.entry(g).or_default().add(o);
    }
    MetricsReport {
        overall: overall.finish(),
        per_group: per_group.into_iter().map(|(k, v)| (k, v.finish())).collect(),
    }
}

impl MetricsReport {
    /// Group keys in catalog order, then any others alphabetically.
    pub fn ordered_groups(&self) -> Vec<&str> {
        let known = group_ids();
        let mut out: Vec<&str> = known.iter().copied().filter(|g| self.per_group.contains_key(*g)).collect();
        out.extend(self.per_group.keys().map(String::as_str).filter(|g| !known.contains(g)));
        out
    }

    pub fn render_table(&self, title: &str) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{title}");
        let _ = writeln!(
            s,
            "{:<36} {:>5} {:>4} {:>4} {:>4} {:>4} {:>9} {:>7} {:>6} {:>9}",
            "group", "pairs", "TP", "FN", "TN", "FP", "precision", "recall", "F1", "paired"
        );
        let row = |s: &mut String, name: &str, m: &GroupMetrics| {
            let flag = if m.degenerate.is_empty() { "" } else { " *" };
            let _ = writeln!(
                s,
                "{:<36} {:>5} {:>4} {:>4} {:>4} {:>4} {:>9.3} {:>7.3} {:>6.3} {:>9.3}{flag}",
                name, m.pairs, m.tp, m.fn_, m.tn, m.fp, m.precision, m.recall, m.f1, m.paired_accuracy
            );
        };
        for g in self.ordered_groups() {
            row(&mut s, &group_label(g), &self.per_group[g]);
        }
        row(&mut s, "overall", &self.overall);
        if std::iter::once(&self.overall).chain(self.per_group.values()).any(|m| !m.degenerate.is_empty()) {
            let _ = writeln!(s, "* a ratio had a zero denominator and is reported as 0");
        }
        s
    }
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Bar chart of F1 and paired accuracy per group, one or more runs side by side.
pub fn render_svg(runs: &[(&str, &MetricsReport)]) -> String {
    let mut groups: Vec<String> = Vec::new();
    for (_, r) in runs {
        for g in r.ordered_groups() {
            if !groups.iter().any(|x| x == g) {
                groups.push(g.to_string());
            }
        }
    }
    groups.push("overall".into());
    let bar = 14.0;
    let per_group = (runs.len() * 2) as f64 * bar + 20.0;
    let (left, top, height) = (50.0, 40.0, 220.0);
    let width = left + per_group * groups.len() as f64 + 160.0;
    let palette = ["#4c78a8", "#9ecae9", "#f58518", "#ffbf79", "#54a24b", "#88d27a"];
    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{:.0}\" font-family=\"sans-serif\" font-size=\"10\">",
        top + height + 110.0
    );
    let _ = writeln!(s, "<text x=\"{left}\" y=\"20\" font-size=\"13\">F1 and paired accuracy by CWE group</text>");
    for i in 0..=4 {
        let v = i as f64 / 4.0;
        let y = top + height * (1.0 - v);
        let _ = writeln!(
            s,
            "<line x1=\"{left}\" y1=\"{y:.1}\" x2=\"{:.1}\" y2=\"{y:.1}\" stroke=\"#ddd\"/><text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{v:.2}</text>",
            width - 160.0,
            left - 4.0,
            y + 3.0
        );
    }
    for (gi, g) in groups.iter().enumerate() {
        let x0 = left + 10.0 + per_group * gi as f64;
        for (ri, (_, r)) in runs.iter().enumerate() {
            let m = if g == "overall" { Some(&r.overall) } else { r.per_group.get(g) };
            let Some(m) = m else { continue };
            for (k, v) in [m.f1, m.paired_accuracy].into_iter().enumerate() {
                let h = height * v;
                let x = x0 + (ri * 2 + k) as f64 * bar;
                let _ = writeln!(
                    s,
                    "<rect x=\"{x:.1}\" y=\"{:.1}\" width=\"{:.1}\" height=\"{h:.1}\" fill=\"{}\"><title>{}: {v:.3}</title></rect>",
                    top + height - h,
                    bar - 2.0,
                    palette[(ri * 2 + k) % palette.len()],
                    esc(g)
                );
            }
        }
        let lx = x0 + per_group / 2.0 - 10.0;
        let ly = top + height + 12.0;
        let _ = writeln!(
            s,
            "<text x=\"{lx:.1}\" y=\"{ly:.1}\" transform=\"rotate(40 {lx:.1} {ly:.1})\">{}</text>",
            esc(&if g == "overall" { g.clone() } else { group_label(g) })
        );
    }
    let lx = width - 150.0;
    for (ri, (name, _)) in runs.iter().enumerate() {
        for (k, what) in ["F1", "paired"].iter().enumerate() {
            let y = top + ((ri * 2 + k) as f64) * 16.0;
            let _ = writeln!(
                s,
                "<rect x=\"{lx:.1}\" y=\"{y:.1}\" width=\"10\" height=\"10\" fill=\"{}\"/><text x=\"{:.1}\" y=\"{:.1}\">{} {what}</text>",
                palette[(ri * 2 + k) % palette.len()],
                lx + 14.0,
                y + 9.0,
                esc(name)
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formula_examples() {
        let m = GroupMetrics::from_counts(1, 0, 0, 1, 1, 1);
        assert_eq!(m.f1, 1.0);
        assert!(m.degenerate.is_empty());
        let m = GroupMetrics::from_counts(0, 0, 3, 3, 3, 0);
        assert_eq!(m.f1, 0.0);
        assert!(m.degenerate.contains(&"precision".to_string()));
        let m = GroupMetrics::from_counts(2, 1, 1, 2, 3, 1);
        assert!((m.precision - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.recall - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.f1 - 2.0 / 3.0).abs() < 1e-15);
        let m = GroupMetrics::from_counts(0, 0, 0, 0, 0, 0);
        assert_eq!(m.paired_accuracy, 0.0);
        assert_eq!(m.degenerate.len(), 5);
    }

    #[test]
    fn svg_is_well_formed_enough() {
        let o = vec![PairOutcome::new("CVE-2024-0001", PreResult::TP, PostResult::TN)];
        let groups = BTreeMap::from([("CVE-2024-0001".to_string(), "CWE-664".to_string())]);
        let r = aggregate(&o, &groups);
        let svg = render_svg(&[("with context", &r), ("without", &r)]);
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
        assert_eq!(svg.matches("<rect").count(), 2 * 2 * 2 + 4);
        assert!(r.render_table("t").contains("CWE-664 (Resource Control)"));
    }
}
