//! Pipeline stages. Each reads its inputs from the workspace, writes its
//! outputs plus a `<stage>.summary.json` under `<workspace>/out`, and
//! returns that summary.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};
use std::time::{SystemTime, UNIX_EPOCH};

use patchsieve_core::agentloop::{analyze_cve, AnalysisOutcome, CveBundle, LoopConfig, OutcomeStatus};
use patchsieve_core::classify::{classify_patch_logged, gate_all, ClassificationResult, GateDecision};
use patchsieve_core::codeindex::build_index;
use patchsieve_core::datasetout::{consolidate, drop_undecidable, emit, load_dataset, DatasetRecord};
use patchsieve_core::evalharness::{build_pairs, evaluate, load_pairs, render_pairs, render_svg, EvalRun};
use patchsieve_core::ingest::{
    emit_feed_line, load_patch_records, lookup_discussion, materialize_snapshot, snapshot_dir, DiscussionSource,
    PatchRecord, Side,
};
use patchsieve_core::llmgateway::{Cassette, CassetteMetadata, Gateway, HttpTransport, Mode, Transport};
use patchsieve_core::util::{sha256_hex, to_jsonl, write_atomic};
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::report;

#[derive(Debug, thiserror::Error)]
pub enum StageFailure {
    #[error("{0}")]
    Usage(String),
    #[error("stage {stage} failed: {message}")]
    Stage { stage: &'static str, message: String },
}

fn fail(stage: &'static str, message: impl std::fmt::Display) -> StageFailure {
    StageFailure::Stage { stage, message: message.to_string() }
}

/// Fixed locations inside a workspace.
#[derive(Debug, Clone)]
pub struct Paths {
    pub workspace: PathBuf,
    pub out: PathBuf,
    pub records: PathBuf,
    pub discussions: PathBuf,
    pub advisories: PathBuf,
    pub classifications: PathBuf,
    pub gate: PathBuf,
    pub outcomes: PathBuf,
    pub transcripts: PathBuf,
    pub dataset: PathBuf,
    pub pairs: PathBuf,
    pub report: PathBuf,
}

impl Paths {
    pub fn new(ws: &Path) -> Self {
        let out = ws.join("out");
        Paths {
            workspace: ws.to_path_buf(),
            records: out.join("records.jsonl"),
            discussions: ws.join("discussions"),
            advisories: ws.join("cves.jsonl"),
            classifications: out.join("classifications.jsonl"),
            gate: out.join("gate.json"),
            outcomes: out.join("outcomes.jsonl"),
            transcripts: out.join("transcripts"),
            dataset: out.join("dataset.jsonl"),
            pairs: out.join("pairs.jsonl"),
            report: out.join("report.txt"),
            out,
        }
    }

    pub fn eval_report(&self, with_context: bool) -> PathBuf {
        self.out.join(if with_context { "eval_context.json" } else { "eval_no_context.json" })
    }

    pub fn summary(&self, stage: &str) -> PathBuf {
        self.out.join(format!("{stage}.summary.json"))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GateFile {
    pub threshold: f64,
    pub kept: Vec<String>,
    pub decisions: Vec<GateDecision>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: RunConfig,
    pub pair_count: usize,
    #[serde(flatten)]
    pub run: EvalRun,
}

#[derive(Deserialize)]
struct Advisory {
    cve_id: String,
    description: String,
}

pub struct Ctx {
    pub cfg: RunConfig,
    pub paths: Paths,
    transport: Option<Arc<dyn Transport>>,
    gateway: OnceLock<Result<Arc<Gateway>, String>>,
}

fn pretty<T: Serialize>(v: &T) -> Vec<u8> {
    let mut b = serde_json::to_vec_pretty(v).expect("summaries serialize");
    b.push(b'\n');
    b
}

fn read_jsonl<T: DeserializeOwned>(stage: &'static str, path: &Path) -> Result<Vec<T>, StageFailure> {
    let text = fs::read_to_string(path).map_err(|e| fail(stage, format!("cannot read {}: {e}", path.display())))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| fail(stage, format!("{}:{}: {e}", path.display(), i + 1))))
        .collect()
}

fn read_json<T: DeserializeOwned>(stage: &'static str, path: &Path) -> Result<T, StageFailure> {
    let text = fs::read_to_string(path).map_err(|e| fail(stage, format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| fail(stage, format!("{}: {e}", path.display())))
}

fn write(stage: &'static str, path: &Path, bytes: &[u8]) -> Result<(), StageFailure> {
    write_atomic(path, bytes).map_err(|e| fail(stage, format!("cannot write {}: {e}", path.display())))
}

fn by_cve<T: Clone>(items: &[T], key: impl Fn(&T) -> &str) -> BTreeMap<String, Vec<T>> {
    let mut m: BTreeMap<String, Vec<T>> = BTreeMap::new();
    for i in items {
        m.entry(key(i).to_string()).or_default().push(i.clone());
    }
    m
}

impl Ctx {
    pub fn new(cfg: RunConfig, paths: Paths, transport: Option<Arc<dyn Transport>>) -> Self {
        Ctx { cfg, paths, transport, gateway: OnceLock::new() }
    }

    fn gateway(&self, stage: &'static str) -> Result<Arc<Gateway>, StageFailure> {
        let g = self.gateway.get_or_init(|| self.open_gateway().map(Arc::new));
        match g {
            Ok(g) => Ok(g.clone()),
            Err(msg) if msg.starts_with("usage: ") => Err(StageFailure::Usage(msg["usage: ".len()..].to_string())),
            Err(msg) => Err(fail(stage, msg)),
        }
    }

    fn open_gateway(&self) -> Result<Gateway, String> {
        let dir = &self.cfg.cassette_dir;
        let transport = || -> Result<Arc<dyn Transport>, String> {
            match &self.transport {
                Some(t) => Ok(t.clone()),
                None => HttpTransport::from_env()
                    .map(|t| Arc::new(t) as Arc<dyn Transport>)
                    .ok_or_else(|| format!("usage: {} mode needs LLM_BASE_URL", self.cfg.mode)),
            }
        };
        let gw = Gateway::new(self.cfg.mode, self.cfg.models.clone());
        Ok(match self.cfg.mode {
            Mode::Replay => gw.with_cassette(Arc::new(Cassette::open_existing(dir).map_err(|e| e.to_string())?)),
            Mode::Live => gw.with_transport(transport()?),
            Mode::Record => gw
                .with_transport(transport()?)
                .with_cassette(Arc::new(Cassette::open(dir).map_err(|e| e.to_string())?)),
        })
    }

    /// Rewrites a recorded cassette in digest order and stamps its metadata.
    pub fn finish(&self) -> Result<(), StageFailure> {
        let Some(Ok(gw)) = self.gateway.get() else { return Ok(()) };
        if gw.mode() != Mode::Record {
            return Ok(());
        }
        let Some(c) = gw.cassette() else { return Ok(()) };
        c.normalize().map_err(|e| fail("record", e))?;
        let created_at_unix = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        let meta = CassetteMetadata { created_at_unix, models: self.cfg.models.clone(), decoding: BTreeMap::new() };
        c.write_metadata(&meta).map_err(|e| fail("record", e))
    }

    fn summary(&self, stage: &'static str, body: Value) -> Result<Value, StageFailure> {
        let mut v = json!({ "stage": stage, "config": self.cfg });
        if let (Value::Object(m), Value::Object(b)) = (&mut v, body) {
            m.extend(b);
        }
        write(stage, &self.paths.summary(stage), &pretty(&v))?;
        Ok(v)
    }

    fn load_records(&self, stage: &'static str, feed: Option<&Path>) -> Result<Vec<PatchRecord>, StageFailure> {
        let path = feed.unwrap_or(&self.paths.records);
        let load = load_patch_records(path).map_err(|e| fail(stage, e))?;
        for r in &load.rejects {
            log::warn!("{}:{}: rejected: field `{}`: {}", path.display(), r.line_no, r.field, r.reason);
        }
        Ok(load.records)
    }

    fn advisories(&self, stage: &'static str) -> Result<BTreeMap<String, String>, StageFailure> {
        if !self.paths.advisories.exists() {
            return Ok(BTreeMap::new());
        }
        let rows: Vec<Advisory> = read_jsonl(stage, &self.paths.advisories)?;
        Ok(rows.into_iter().map(|a| (a.cve_id, a.description)).collect())
    }

    pub fn ingest(&self, feed: &Path, strict: bool) -> Result<Value, StageFailure> {
        const S: &str = "ingest";
        let load = load_patch_records(feed).map_err(|e| fail(S, e))?;
        let mut commits: Vec<&PatchRecord> = Vec::new();
        let mut seen = BTreeSet::new();
        for r in &load.records {
            if seen.insert((r.repo_id.as_str(), r.parent_hash.as_str())) {
                commits.push(r);
            }
        }
        let snapshot_errors: Vec<String> = commits
            .par_iter()
            .filter_map(|r| materialize_snapshot(r, Side::Pre, &self.paths.workspace).err().map(|e| format!("{}: {e}", r.patch_ref())))
            .collect();
        let mut sources: BTreeMap<&str, usize> = BTreeMap::new();
        let mut corrupt = Vec::new();
        for r in &load.records {
            let l = lookup_discussion(r, &self.paths.discussions);
            let name = match l.discussion.source {
                DiscussionSource::PullRequest => "pull_request",
                DiscussionSource::Issue => "issue",
                DiscussionSource::None => "none",
            };
            *sources.entry(name).or_default() += 1;
            corrupt.extend(l.corrupt);
        }
        let mut lines = String::new();
        for r in &load.records {
            lines.push_str(&emit_feed_line(r));
            lines.push('\n');
        }
        write(S, &self.paths.records, lines.as_bytes())?;
        let rejects: Vec<Value> = load
            .rejects
            .iter()
            .map(|r| json!({ "line_no": r.line_no, "field": r.field, "reason": r.reason }))
            .collect();
        let cves: BTreeSet<&str> = load.records.iter().map(|r| r.cve_id.as_str()).collect();
        let v = self.summary(
            S,
            json!({
                "feed": feed,
                "records": load.records.len(),
                "cves": cves.len(),
                "rejects": rejects,
                "snapshots": commits.len(),
                "snapshot_errors": snapshot_errors,
                "discussions": sources,
                "corrupt_discussions": corrupt,
            }),
        )?;
        println!(
            "ingest: {} records ({} CVEs), {} rejected, {} snapshots, {} snapshot errors",
            load.records.len(),
            cves.len(),
            load.rejects.len(),
            commits.len(),
            snapshot_errors.len()
        );
        if strict && (!load.rejects.is_empty() || !snapshot_errors.is_empty()) {
            return Err(fail(S, format!("{} rejected lines, {} snapshot errors (strict)", load.rejects.len(), snapshot_errors.len())));
        }
        Ok(v)
    }

    pub fn classify(&self, feed: Option<&Path>) -> Result<Value, StageFailure> {
        const S: &str = "classify";
        let records = self.load_records(S, feed)?;
        let gw = self.gateway(S)?;
        let no_aux = self.cfg.ablations.no_auxiliary;
        let outcomes: Vec<Result<ClassificationResult, String>> = records
            .par_iter()
            .map(|r| {
                let disc = lookup_discussion(r, &self.paths.discussions).discussion;
                classify_patch_logged(r, &disc, &gw, no_aux)
                    .map(|(c, _)| c)
                    .map_err(|e| format!("{}: {e}", r.patch_ref()))
            })
            .collect();
        let (mut results, mut errors) = (Vec::new(), Vec::new());
        for o in outcomes {
            match o {
                Ok(c) => results.push(c),
                Err(e) => errors.push(e),
            }
        }
        results.sort_by(|a, b| a.patch_ref.cmp(&b.patch_ref));
        let text = to_jsonl(&results).map_err(|e| fail(S, e))?;
        write(S, &self.paths.classifications, text.as_bytes())?;
        let decisions = gate_all(&results, self.cfg.threshold).map_err(|e| fail(S, e))?;
        let kept: Vec<String> = decisions.iter().filter(|d| d.kept).map(|d| d.cve_id.clone()).collect();
        let gate = GateFile { threshold: self.cfg.threshold, kept: kept.clone(), decisions };
        write(S, &self.paths.gate, &pretty(&gate))?;
        let table = patchsieve_core::classify::summarize_classification(&results);
        let v = self.summary(
            S,
            json!({
                "patches": records.len(),
                "classified": results.len(),
                "cves": gate.decisions.len(),
                "kept": kept,
                "report": table,
                "errors": errors,
            }),
        )?;
        println!(
            "classify: {} patches, {} CVEs, {} kept at threshold {}, {} errors",
            results.len(),
            gate.decisions.len(),
            gate.kept.len(),
            self.cfg.threshold,
            errors.len()
        );
        if !errors.is_empty() {
            return Err(fail(S, format!("{} patches could not be classified; first: {}", errors.len(), errors[0])));
        }
        Ok(v)
    }

    fn loop_config(&self) -> LoopConfig {
        LoopConfig {
            max_iter: self.cfg.max_iter,
            term_threshold: self.cfg.term_threshold,
            restrict_tools: self.cfg.ablations.restrict_tools,
            include_cve_text: !self.cfg.ablations.no_cve_text,
            ..LoopConfig::default()
        }
    }

    fn analyze_one(&self, bundle: &CveBundle, gw: &Gateway, lc: &LoopConfig) -> AnalysisOutcome {
        let error = |msg: String| AnalysisOutcome {
            cve_id: bundle.cve_id.clone(),
            status: OutcomeStatus::Error,
            root_cause: None,
            final_confidence: 0.0,
            contexts: Vec::new(),
            undecidable_reason: None,
            undecidable_justification: None,
            iterations_used: 0,
            error: Some(msg),
            transcript: Vec::new(),
        };
        let first = &bundle.patches[0];
        if !self.cfg.languages.contains(&first.language) || !first.language.is_indexable() {
            return error(format!("language {} is not enabled for indexing", first.language));
        }
        let langs: Vec<_> = self.cfg.languages.iter().copied().filter(|l| l.is_indexable()).collect();
        let snap = match materialize_snapshot(first, Side::Pre, &self.paths.workspace) {
            Ok(s) => s,
            Err(e) => return error(format!("snapshot: {e}")),
        };
        match build_index(&snap, &langs) {
            Ok(index) => analyze_cve(bundle, &index, gw, lc),
            Err(e) => error(format!("index: {e}")),
        }
    }

    pub fn analyze(&self, gate: Option<&Path>) -> Result<Value, StageFailure> {
        const S: &str = "analyze";
        let gate: GateFile = read_json(S, gate.unwrap_or(&self.paths.gate))?;
        let records = self.load_records(S, None)?;
        let advisories = self.advisories(S)?;
        let gw = self.gateway(S)?;
        let lc = self.loop_config();
        let mut bundles = Vec::new();
        for d in gate.decisions.iter().filter(|d| d.kept) {
            let keep: BTreeSet<&str> = d.qualifying_patches.iter().map(String::as_str).collect();
            let mut patches: Vec<PatchRecord> =
                records.iter().filter(|r| keep.contains(r.patch_ref().as_str())).cloned().collect();
            patches.sort_by_key(|p| p.patch_ref());
            if patches.is_empty() {
                return Err(fail(S, format!("{}: gate names patches missing from {}", d.cve_id, self.paths.records.display())));
            }
            let description = if lc.include_cve_text { advisories.get(&d.cve_id).cloned() } else { None };
            bundles.push(CveBundle { cve_id: d.cve_id.clone(), patches, description });
        }
        let mut outcomes: Vec<AnalysisOutcome> = bundles.par_iter().map(|b| self.analyze_one(b, &gw, &lc)).collect();
        outcomes.sort_by(|a, b| a.cve_id.cmp(&b.cve_id));

        let mut status: BTreeMap<&str, usize> =
            ["resolved", "undecidable", "error"].into_iter().map(|s| (s, 0)).collect();
        let mut reasons: BTreeMap<String, usize> = BTreeMap::new();
        let mut tools: BTreeMap<String, usize> = BTreeMap::new();
        let mut errors = Vec::new();
        for o in &outcomes {
            *status.get_mut(o.status.as_str()).unwrap() += 1;
            if let Some(r) = o.undecidable_reason {
                *reasons.entry(r.as_str().to_string()).or_default() += 1;
            }
            for c in &o.contexts {
                *tools.entry(c.tool_used.as_str().to_string()).or_default() += 1;
            }
            if let Some(e) = &o.error {
                log::warn!("{}: {e}", o.cve_id);
                errors.push(format!("{}: {e}", o.cve_id));
            }
            let path = self.paths.transcripts.join(format!("{}.json", o.cve_id));
            write(S, &path, &pretty(o))?;
        }
        let slim: Vec<AnalysisOutcome> =
            outcomes.iter().map(|o| AnalysisOutcome { transcript: Vec::new(), ..o.clone() }).collect();
        write(S, &self.paths.outcomes, to_jsonl(&slim).map_err(|e| fail(S, e))?.as_bytes())?;
        let v = self.summary(
            S,
            json!({
                "cves": outcomes.len(),
                "status": status,
                "undecidable_reasons": reasons,
                "tools_dispatched": tools,
                "iterations": outcomes.iter().map(|o| (o.cve_id.clone(), o.iterations_used)).collect::<BTreeMap<_, _>>(),
                "errors": errors,
            }),
        )?;
        println!(
            "analyze: {} CVEs, {} resolved, {} undecidable, {} errors",
            outcomes.len(),
            status["resolved"],
            status["undecidable"],
            status["error"]
        );
        Ok(v)
    }

    pub fn build_dataset(&self, out: Option<&Path>) -> Result<Value, StageFailure> {
        const S: &str = "build-dataset";
        let out = out.unwrap_or(&self.paths.dataset);
        let records = self.load_records(S, None)?;
        let classes: Vec<ClassificationResult> = read_jsonl(S, &self.paths.classifications)?;
        let outcomes: Vec<AnalysisOutcome> = read_jsonl(S, &self.paths.outcomes)?;
        let patches = by_cve(&records, |r| &r.cve_id);
        let cls = by_cve(&classes, |c| &c.cve_id);
        let mut rows = consolidate(&outcomes, &cls, &patches).map_err(|e| fail(S, e))?;
        for row in &mut rows {
            for p in &patches[&row.cve_id] {
                let f = snapshot_dir(&self.paths.workspace, &p.repo_id, &p.parent_hash).join(&p.file_path);
                if let Ok(bytes) = fs::read(&f) {
                    row.file_hashes.insert(p.file_path.clone(), sha256_hex(&bytes));
                }
            }
        }
        let total = rows.len();
        if self.cfg.ablations.drop_undecidable {
            rows = drop_undecidable(rows);
        }
        let manifest = emit(&rows, out).map_err(|e| fail(S, e))?;
        let (pairs, skipped) = build_pairs(&rows, &patches, &self.advisories(S)?);
        let pairs_path = out.with_file_name("pairs.jsonl");
        write(S, &pairs_path, &render_pairs(&pairs))?;
        let v = self.summary(
            S,
            json!({
                "dataset": out,
                "dropped_undecidable": total - rows.len(),
                "manifest": manifest,
                "pairs": pairs.len(),
                "pairs_file": pairs_path,
                "pairs_skipped": skipped,
            }),
        )?;
        println!(
            "build-dataset: {} records, {} pairs, content_hash {}",
            manifest.record_count,
            pairs.len(),
            manifest.content_hash
        );
        Ok(v)
    }

    pub fn eval(&self, pairs: Option<&Path>, with_context: bool, report: Option<&Path>) -> Result<Value, StageFailure> {
        const S: &str = "eval";
        let pairs_path = pairs.unwrap_or(&self.paths.pairs);
        let pairs = load_pairs(pairs_path).map_err(|e| fail(S, e))?;
        let gw = self.gateway(S)?;
        let run = evaluate(&pairs, with_context, &gw);
        let report_path = report.map(Path::to_path_buf).unwrap_or_else(|| self.paths.eval_report(with_context));
        let title = if with_context { "detection with context" } else { "detection without context" };
        let table = run.metrics.render_table(title);
        write(S, &report_path.with_extension("txt"), table.as_bytes())?;
        write(S, &report_path.with_extension("svg"), render_svg(&[(title, &run.metrics)]).as_bytes())?;
        for f in &run.failures {
            log::warn!("{}: {}", f.cve_id, f.error);
        }
        let rep = EvalReport { config: self.cfg.clone(), pair_count: pairs.len(), run };
        write(S, &report_path, &pretty(&rep))?;
        println!(
            "eval ({}): {} pairs, F1 {:.3}, paired accuracy {:.3}, {} failures",
            if with_context { "with context" } else { "no context" },
            pairs.len(),
            rep.run.metrics.overall.f1,
            rep.run.metrics.overall.paired_accuracy,
            rep.run.failures.len()
        );
        Ok(json!({ "report": report_path, "metrics": rep.run.metrics, "failures": rep.run.failures }))
    }

    pub fn report(&self) -> Result<Value, StageFailure> {
        const S: &str = "report";
        let classes: Option<Vec<ClassificationResult>> =
            self.paths.classifications.exists().then(|| read_jsonl(S, &self.paths.classifications)).transpose()?;
        let dataset: Option<Vec<DatasetRecord>> = self
            .paths
            .dataset
            .exists()
            .then(|| load_dataset(&self.paths.dataset).map_err(|e| fail(S, e)))
            .transpose()?;
        let mut evals = Vec::new();
        for with in [true, false] {
            let p = self.paths.eval_report(with);
            if p.exists() {
                let r: EvalReport = read_json(S, &p)?;
                evals.push(r);
            }
        }
        if classes.is_none() && dataset.is_none() && evals.is_empty() {
            return Err(fail(S, format!("nothing to report in {}", self.paths.out.display())));
        }
        let rendered = report::render(classes.as_deref(), dataset.as_deref(), &evals);
        write(S, &self.paths.report, rendered.text.as_bytes())?;
        if let Some(svg) = &rendered.svg {
            write(S, &self.paths.report.with_extension("svg"), svg.as_bytes())?;
        }
        let v = self.summary(S, json!({ "report": self.paths.report, "tables": rendered.data }))?;
        println!("report: {}", self.paths.report.display());
        Ok(v)
    }

    pub fn run_all(&self, feed: &Path, strict: bool) -> Result<(), StageFailure> {
        self.ingest(feed, strict)?;
        self.classify(None)?;
        self.analyze(None)?;
        let ds = self.build_dataset(None)?;
        self.eval(None, true, None)?;
        self.eval(None, false, None)?;
        self.report()?;
        self.summary("run-all", json!({ "dataset_manifest": ds["manifest"] }))?;
        Ok(())
    }
}
