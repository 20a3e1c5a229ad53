//! Command-line driver for the curation pipeline.

pub mod config;
mod query;
mod report;
mod stages;

use std::path::PathBuf;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use patchsieve_core::ingest::Language;
use patchsieve_core::llmgateway::{Mode, Transport};

use config::{parse_languages, Overrides, RunConfig};
pub use stages::{Paths, StageFailure};

#[derive(Debug, Parser)]
#[command(name = "patchsieve", version, about = "Classify security patches, trace their root causes and curate a CVE dataset")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalArgs {
    /// TOML config file (also PATCHSIEVE_CONFIG)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Workspace directory holding clones, snapshots and outputs
    #[arg(long, global = true)]
    workspace: Option<PathBuf>,
    /// Model access: live, record or replay
    #[arg(long, global = true, value_parser = parse_mode)]
    mode: Option<Mode>,
    /// Cassette directory (default: <workspace>/cassettes)
    #[arg(long, global = true)]
    cassette_dir: Option<PathBuf>,
    /// Worker threads
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Comma-separated languages to index (c,cpp,java)
    #[arg(long, global = true, value_parser = parse_languages)]
    languages: Option<Vec<Language>>,
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse()
}

#[derive(Debug, Args, Default)]
struct ClassifyArgs {
    /// Minimum confidence for a security patch to keep its CVE
    #[arg(long)]
    threshold: Option<f64>,
    /// Withhold discussion text from every classification prompt
    #[arg(long)]
    no_auxiliary: bool,
}

#[derive(Debug, Args, Default)]
struct AnalyzeArgs {
    /// Iteration cap of the analysis loop
    #[arg(long)]
    max_iter: Option<u32>,
    /// Confidence needed to stop with a root cause
    #[arg(long)]
    term_threshold: Option<f64>,
    /// Withhold advisory text from the analysis agent
    #[arg(long)]
    no_cve_text: bool,
    /// Limit context requests to function definitions and callers
    #[arg(long)]
    restrict_tools: bool,
}

#[derive(Debug, Args, Default)]
struct DatasetArgs {
    /// Leave undecidable CVEs out of the dataset
    #[arg(long)]
    drop_undecidable: bool,
}

#[derive(Debug, Args)]
#[group(multiple = false)]
struct ContextChoice {
    /// Include curated context in detection prompts (default)
    #[arg(long)]
    with_context: bool,
    /// Detect from the raw function only
    #[arg(long)]
    no_context: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load a patch feed and materialize pre-patch snapshots
    Ingest {
        /// JSONL patch feed
        #[arg(long)]
        feed: PathBuf,
        /// Fail if any feed line is rejected
        #[arg(long)]
        strict: bool,
    },
    /// Classify every patch and gate CVEs on confidence
    Classify {
        /// Feed to classify (default: the records kept by ingest)
        #[arg(long)]
        feed: Option<PathBuf>,
        #[command(flatten)]
        args: ClassifyArgs,
    },
    /// Trace root causes of the CVEs kept by the gate
    Analyze {
        /// Gate file (default: <workspace>/out/gate.json)
        #[arg(long)]
        gate: Option<PathBuf>,
        #[command(flatten)]
        args: AnalyzeArgs,
    },
    /// Consolidate outcomes into the dataset and evaluation pairs
    BuildDataset {
        /// Dataset path (default: <workspace>/out/dataset.jsonl)
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        args: DatasetArgs,
    },
    /// Paired detection evaluation
    Eval {
        /// Pairs file (default: <workspace>/out/pairs.jsonl)
        #[arg(long)]
        pairs: Option<PathBuf>,
        #[command(flatten)]
        context: ContextChoice,
        /// Report path (default: <workspace>/out/eval_context.json or eval_no_context.json)
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Render classification, context and evaluation tables
    Report,
    /// ingest, classify, analyze, build-dataset, eval (both variants) and report
    RunAll {
        /// JSONL patch feed
        #[arg(long)]
        feed: PathBuf,
        /// Fail if any feed line is rejected
        #[arg(long)]
        strict: bool,
        #[command(flatten)]
        classify: ClassifyArgs,
        #[command(flatten)]
        analyze: AnalyzeArgs,
        #[command(flatten)]
        dataset: DatasetArgs,
    },
    /// Run one code index tool against a snapshot directory
    Query {
        /// Directory of source files to index
        #[arg(long)]
        snapshot: PathBuf,
        #[arg(long, value_parser = ["func", "callers", "code", "value", "query"])]
        op: String,
        /// Tool arguments: func NAME [FILE], callers NAME, code FILE START END,
        /// value SYMBOL [variable|member] [SCOPE], query TEXT
        #[arg(required = true, num_args = 1..)]
        args: Vec<String>,
    },
}

fn flag(b: bool) -> Option<bool> {
    b.then_some(true)
}

impl Cli {
    fn overrides(&self) -> Overrides {
        let g = &self.global;
        let mut o = Overrides {
            config: g.config.clone(),
            workspace: g.workspace.clone(),
            mode: g.mode,
            cassette_dir: g.cassette_dir.clone(),
            jobs: g.jobs,
            languages: g.languages.clone(),
            ..Default::default()
        };
        let classify = |o: &mut Overrides, a: &ClassifyArgs| {
            o.threshold = a.threshold;
            o.no_auxiliary = flag(a.no_auxiliary);
        };
        let apply_analyze = |o: &mut Overrides, a: &AnalyzeArgs| {
            o.max_iter = a.max_iter;
            o.term_threshold = a.term_threshold;
            o.no_cve_text = flag(a.no_cve_text);
            o.restrict_tools = flag(a.restrict_tools);
        };
        match &self.command {
            Command::Classify { args, .. } => classify(&mut o, args),
            Command::Analyze { args, .. } => apply_analyze(&mut o, args),
            Command::BuildDataset { args, .. } => o.drop_undecidable = flag(args.drop_undecidable),
            Command::RunAll { classify: c, analyze, dataset, .. } => {
                classify(&mut o, c);
                apply_analyze(&mut o, analyze);
                o.drop_undecidable = flag(dataset.drop_undecidable);
            }
            _ => {}
        }
        o
    }
}

/// Entry point shared by the binary and in-process tests. `transport`
/// replaces the HTTP client in live and record mode.
pub fn run(argv: &[String], transport: Option<Arc<dyn Transport>>) -> i32 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    if let Command::Query { snapshot, op, args } = &cli.command {
        return match query::run(snapshot, op, args, cli.global.languages.as_deref()) {
            Ok(()) => 0,
            Err(e) => {
                eprintln!("error: {e}");
                2
            }
        };
    }
    let env = |k: &str| std::env::var(k).ok();
    let cfg = match config::resolve(&cli.overrides(), &env) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    match dispatch(&cli.command, &cfg, transport) {
        Ok(()) => 0,
        Err(StageFailure::Usage(msg)) => {
            eprintln!("error: {msg}");
            2
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn dispatch(cmd: &Command, cfg: &RunConfig, transport: Option<Arc<dyn Transport>>) -> Result<(), StageFailure> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| StageFailure::Usage(format!("cannot start {} worker threads: {e}", cfg.jobs)))?;
    let paths = Paths::new(&cfg.workspace);
    pool.install(|| {
        let ctx = stages::Ctx::new(cfg.clone(), paths, transport);
        let result = match cmd {
            Command::Ingest { feed, strict } => ctx.ingest(feed, *strict).map(drop),
            Command::Classify { feed, .. } => ctx.classify(feed.as_deref()).map(drop),
            Command::Analyze { gate, .. } => ctx.analyze(gate.as_deref()).map(drop),
            Command::BuildDataset { out, .. } => ctx.build_dataset(out.as_deref()).map(drop),
            Command::Eval { pairs, context, report } => {
                ctx.eval(pairs.as_deref(), !context.no_context, report.as_deref()).map(drop)
            }
            Command::Report => ctx.report().map(drop),
            Command::RunAll { feed, strict, .. } => ctx.run_all(feed, *strict),
            Command::Query { .. } => unreachable!("handled before configuration"),
        };
        let flushed = ctx.finish();
        result.and(flushed)
    })
}
