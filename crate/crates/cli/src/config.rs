//! Run configuration: flags over environment over config file over defaults.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use patchsieve_core::ingest::Language;
use patchsieve_core::llmgateway::{Mode, ModelConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ablations {
    pub no_auxiliary: bool,
    pub restrict_tools: bool,
    pub no_cve_text: bool,
    pub drop_undecidable: bool,
}

/// Fully resolved configuration, echoed into every stage summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub workspace: PathBuf,
    pub threshold: f64,
    pub max_iter: u32,
    pub term_threshold: f64,
    pub mode: Mode,
    pub cassette_dir: PathBuf,
    pub languages: Vec<Language>,
    pub jobs: usize,
    pub ablations: Ablations,
    pub models: ModelConfig,
}

/// Values given on the command line; `None` means not given.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub config: Option<PathBuf>,
    pub workspace: Option<PathBuf>,
    pub threshold: Option<f64>,
    pub max_iter: Option<u32>,
    pub term_threshold: Option<f64>,
    pub mode: Option<Mode>,
    pub cassette_dir: Option<PathBuf>,
    pub languages: Option<Vec<Language>>,
    pub jobs: Option<usize>,
    pub no_auxiliary: Option<bool>,
    pub restrict_tools: Option<bool>,
    pub no_cve_text: Option<bool>,
    pub drop_undecidable: Option<bool>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileAblations {
    no_auxiliary: Option<bool>,
    restrict_tools: Option<bool>,
    no_cve_text: Option<bool>,
    drop_undecidable: Option<bool>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    workspace: Option<PathBuf>,
    threshold: Option<f64>,
    max_iter: Option<u32>,
    term_threshold: Option<f64>,
    mode: Option<String>,
    cassette_dir: Option<PathBuf>,
    languages: Option<Vec<String>>,
    jobs: Option<usize>,
    #[serde(default)]
    ablations: FileAblations,
}

pub const ENV_PREFIX: &str = "PATCHSIEVE_";

pub fn parse_languages(s: &str) -> Result<Vec<Language>, String> {
    let mut v = s
        .split(',')
        .map(str::trim)
        .filter(|x| !x.is_empty())
        .map(Language::from_str)
        .collect::<Result<Vec<_>, _>>()?;
    v.sort();
    v.dedup();
    if v.is_empty() {
        return Err("language set is empty".into());
    }
    Ok(v)
}

fn parse_bool(s: &str) -> Result<bool, String> {
    match s.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "on" => Ok(true),
        "0" | "false" | "no" | "off" | "" => Ok(false),
        other => Err(format!("`{other}` is not a boolean")),
    }
}

fn default_jobs() -> usize {
    std::thread::available_parallelism().map(|n| n.get().min(8)).unwrap_or(1)
}

struct Env<'a>(&'a dyn Fn(&str) -> Option<String>);

impl Env<'_> {
    fn get<T>(&self, key: &str, parse: impl Fn(&str) -> Result<T, String>) -> Result<Option<T>, String> {
        let name = format!("{ENV_PREFIX}{key}");
        match (self.0)(&name) {
            Some(v) => parse(&v).map(Some).map_err(|e| format!("{name}: {e}")),
            None => Ok(None),
        }
    }
}

fn num<T: FromStr>(s: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    s.trim().parse::<T>().map_err(|e| format!("`{s}`: {e}"))
}

/// Merges the four layers. `env` is injected so tests need not touch the
/// process environment.
pub fn resolve(flags: &Overrides, env: &dyn Fn(&str) -> Option<String>) -> Result<RunConfig, String> {
    let env = Env(env);
    let config_path = flags.config.clone().or(env.get("CONFIG", |s| Ok(PathBuf::from(s)))?);
    let file = match &config_path {
        Some(p) => load_file(p)?,
        None => FileConfig::default(),
    };
    let file_mode = file.mode.as_deref().map(Mode::from_str).transpose().map_err(|e| format!("config file: {e}"))?;
    let file_langs = file
        .languages
        .as_ref()
        .map(|v| parse_languages(&v.join(",")))
        .transpose()
        .map_err(|e| format!("config file: {e}"))?;

    let workspace = flags
        .workspace
        .clone()
        .or(env.get("WORKSPACE", |s| Ok(PathBuf::from(s)))?)
        .or(file.workspace)
        .unwrap_or_else(|| PathBuf::from("workspace"));
    let cassette_dir = flags
        .cassette_dir
        .clone()
        .or(env.get("CASSETTE_DIR", |s| Ok(PathBuf::from(s)))?)
        .or(file.cassette_dir)
        .unwrap_or_else(|| workspace.join("cassettes"));
    let ab = &file.ablations;
    let cfg = RunConfig {
        threshold: flags.threshold.or(env.get("THRESHOLD", num)?).or(file.threshold).unwrap_or(0.9),
        max_iter: flags.max_iter.or(env.get("MAX_ITER", num)?).or(file.max_iter).unwrap_or(8),
        term_threshold: flags.term_threshold.or(env.get("TERM_THRESHOLD", num)?).or(file.term_threshold).unwrap_or(0.9),
        mode: flags.mode.or(env.get("MODE", |s| Mode::from_str(s.trim()))?).or(file_mode).unwrap_or(Mode::Replay),
        languages: flags
            .languages
            .clone()
            .or(env.get("LANGUAGES", parse_languages)?)
            .or(file_langs)
            .unwrap_or_else(|| vec![Language::C, Language::Cpp, Language::Java]),
        jobs: flags.jobs.or(env.get("JOBS", num)?).or(file.jobs).unwrap_or_else(default_jobs),
        ablations: Ablations {
            no_auxiliary: flags.no_auxiliary.or(env.get("NO_AUXILIARY", parse_bool)?).or(ab.no_auxiliary).unwrap_or(false),
            restrict_tools: flags
                .restrict_tools
                .or(env.get("RESTRICT_TOOLS", parse_bool)?)
                .or(ab.restrict_tools)
                .unwrap_or(false),
            no_cve_text: flags.no_cve_text.or(env.get("NO_CVE_TEXT", parse_bool)?).or(ab.no_cve_text).unwrap_or(false),
            drop_undecidable: flags
                .drop_undecidable
                .or(env.get("DROP_UNDECIDABLE", parse_bool)?)
                .or(ab.drop_undecidable)
                .unwrap_or(false),
        },
        models: models_from(env.0),
        workspace,
        cassette_dir,
    };
    check(&cfg)?;
    Ok(cfg)
}

fn models_from(env: &dyn Fn(&str) -> Option<String>) -> ModelConfig {
    let mut m = ModelConfig::default();
    for (key, slot) in [
        ("LLM_MODEL_CLASSIFY", &mut m.classify),
        ("LLM_MODEL_ANALYSIS", &mut m.analysis),
        ("LLM_MODEL_CONTEXT", &mut m.context),
        ("LLM_MODEL_DETECT", &mut m.detect),
        ("LLM_MODEL_JUDGE", &mut m.judge),
    ] {
        if let Some(v) = env(key).filter(|v| !v.trim().is_empty()) {
            *slot = v;
        }
    }
    m
}

fn load_file(path: &Path) -> Result<FileConfig, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read config file {}: {e}", path.display()))?;
    toml::from_str(&text).map_err(|e| format!("config file {}: {e}", path.display()))
}

fn check(cfg: &RunConfig) -> Result<(), String> {
    let unit = |name: &str, v: f64| {
        if v > 0.0 && v <= 1.0 {
            Ok(())
        } else {
            Err(format!("{name} must lie in (0, 1], got {v}"))
        }
    };
    unit("threshold", cfg.threshold)?;
    unit("term_threshold", cfg.term_threshold)?;
    if cfg.max_iter < 1 {
        return Err("max_iter must be at least 1".into());
    }
    if cfg.jobs < 1 {
        return Err("jobs must be at least 1".into());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn env_of(pairs: &[(&str, &str)]) -> impl Fn(&str) -> Option<String> {
        let m: HashMap<String, String> = pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        move |k| m.get(k).cloned()
    }

    #[test]
    fn defaults() {
        let c = resolve(&Overrides::default(), &env_of(&[])).unwrap();
        assert_eq!(c.threshold, 0.9);
        assert_eq!(c.max_iter, 8);
        assert_eq!(c.term_threshold, 0.9);
        assert_eq!(c.mode, Mode::Replay);
        assert_eq!(c.cassette_dir, PathBuf::from("workspace/cassettes"));
        assert!(c.jobs >= 1);
        assert_eq!(c.ablations, Ablations::default());
    }

    #[test]
    fn precedence() {
        let d = tempfile::tempdir().unwrap();
        let p = d.path().join("c.toml");
        std::fs::write(
            &p,
            "threshold = 0.5\nmax_iter = 3\njobs = 2\nlanguages = [\"java\"]\n[ablations]\nrestrict_tools = true\n",
        )
        .unwrap();
        let flags = Overrides { config: Some(p.clone()), max_iter: Some(5), ..Default::default() };
        let c = resolve(&flags, &env_of(&[("PATCHSIEVE_THRESHOLD", "0.7"), ("PATCHSIEVE_MAX_ITER", "4")])).unwrap();
        assert_eq!(c.max_iter, 5);
        assert_eq!(c.threshold, 0.7);
        assert_eq!(c.jobs, 2);
        assert_eq!(c.languages, vec![Language::Java]);
        assert!(c.ablations.restrict_tools);
        let flags = Overrides { config: Some(p), restrict_tools: Some(false), ..Default::default() };
        let c = resolve(&flags, &env_of(&[("PATCHSIEVE_RESTRICT_TOOLS", "1")])).unwrap();
        assert!(!c.ablations.restrict_tools);
    }

    #[test]
    fn rejects_bad_values() {
        let bad = |flags: Overrides, env: &[(&str, &str)]| resolve(&flags, &env_of(env)).unwrap_err();
        assert!(bad(Overrides { threshold: Some(0.0), ..Default::default() }, &[]).contains("threshold"));
        assert!(bad(Overrides::default(), &[("PATCHSIEVE_TERM_THRESHOLD", "1.5")]).contains("term_threshold"));
        assert!(bad(Overrides { max_iter: Some(0), ..Default::default() }, &[]).contains("max_iter"));
        assert!(bad(Overrides { jobs: Some(0), ..Default::default() }, &[]).contains("jobs"));
        assert!(bad(Overrides::default(), &[("PATCHSIEVE_MODE", "fast")]).contains("PATCHSIEVE_MODE"));
        assert!(bad(Overrides::default(), &[("PATCHSIEVE_LANGUAGES", "c,rust")]).contains("rust"));
    }
}
