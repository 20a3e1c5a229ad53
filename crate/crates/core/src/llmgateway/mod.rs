//! Single choke point for model traffic.
//!
//! Every prompt the pipeline sends goes through [`Gateway::complete`]. The
//! gateway renders nothing itself; callers build a [`PromptEnvelope`] with
//! [`render_prompt`] and hand it over. Depending on the [`Mode`], the
//! envelope is sent to a [`Transport`], answered from a [`Cassette`], or both
//! (record).
//!
//! Cassettes are keyed by the envelope digest, never by call order, so
//! concurrent pipelines replay correctly regardless of scheduling.

mod cassette;
mod envelope;
mod structured;
mod templates;
mod transport;

use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cassette::{Cassette, CassetteEntry, CassetteMetadata, CASSETTE_FILE, CASSETTE_META_FILE};
pub use envelope::{PromptEnvelope, Role, RoleBlock};
pub use structured::{ask_structured, extract_fenced_json, Exchange, StepError};
pub(crate) use structured::repair_envelope;
pub use templates::{render_prompt, template_ids, Template, TEMPLATE_VERSION};
pub use transport::{
    HttpTransport, PanickingTransport, ScriptedTransport, Transport, TransportError, TransportReply,
};

/// Which role a prompt is addressed to. Each role may use a different model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelTag {
    Classify,
    Analysis,
    Context,
    Detect,
    Judge,
}

impl ModelTag {
    pub const ALL: [ModelTag; 5] = [
        ModelTag::Classify,
        ModelTag::Analysis,
        ModelTag::Context,
        ModelTag::Detect,
        ModelTag::Judge,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelTag::Classify => "classify",
            ModelTag::Analysis => "analysis",
            ModelTag::Context => "context",
            ModelTag::Detect => "detect",
            ModelTag::Judge => "judge",
        }
    }

    fn env_var(self) -> &'static str {
        match self {
            ModelTag::Classify => "LLM_MODEL_CLASSIFY",
            ModelTag::Analysis => "LLM_MODEL_ANALYSIS",
            ModelTag::Context => "LLM_MODEL_CONTEXT",
            ModelTag::Detect => "LLM_MODEL_DETECT",
            ModelTag::Judge => "LLM_MODEL_JUDGE",
        }
    }
}

impl fmt::Display for ModelTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Live,
    Record,
    Replay,
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "live" => Ok(Mode::Live),
            "record" => Ok(Mode::Record),
            "replay" => Ok(Mode::Replay),
            other => Err(format!("unknown mode `{other}` (expected live, record or replay)")),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Live => "live",
            Mode::Record => "record",
            Mode::Replay => "replay",
        })
    }
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("unknown template `{0}`")]
    UnknownTemplate(String),
    #[error("template `{template}` has unbound placeholder `{name}`")]
    UnboundPlaceholder { template: String, name: String },
    #[error("no cassette entry for request digest {0}")]
    CassetteMiss(String),
    #[error("gateway failure after {attempts} attempt(s): {last_error}")]
    Failure { attempts: u32, last_error: String },
    #[error("gateway misconfigured: {0}")]
    Config(String),
    #[error("cassette I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("cassette {path}:{line}: {reason}")]
    CorruptCassette { path: String, line: usize, reason: String },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenCounts {
    pub prompt: u64,
    pub completion: u64,
}

/// A model answer, byte-identical whether it came from the wire or a cassette.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub text: String,
    pub model: String,
    pub digest: String,
    pub token_counts: TokenCounts,
    pub from_cassette: bool,
}

/// Per-role model names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub classify: String,
    pub analysis: String,
    pub context: String,
    pub detect: String,
    pub judge: String,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            classify: "classify-model".into(),
            analysis: "analysis-model".into(),
            context: "context-model".into(),
            detect: "detect-model".into(),
            judge: "judge-model".into(),
        }
    }
}

impl ModelConfig {
    /// Reads `LLM_MODEL_*`, falling back to the defaults for unset roles.
    pub fn from_env() -> Self {
        let mut cfg = Self::default();
        for tag in ModelTag::ALL {
            if let Ok(v) = std::env::var(tag.env_var()) {
                if !v.trim().is_empty() {
                    *cfg.slot_mut(tag) = v;
                }
            }
        }
        cfg
    }

    pub fn model_for(&self, tag: ModelTag) -> &str {
        match tag {
            ModelTag::Classify => &self.classify,
            ModelTag::Analysis => &self.analysis,
            ModelTag::Context => &self.context,
            ModelTag::Detect => &self.detect,
            ModelTag::Judge => &self.judge,
        }
    }

    fn slot_mut(&mut self, tag: ModelTag) -> &mut String {
        match tag {
            ModelTag::Classify => &mut self.classify,
            ModelTag::Analysis => &mut self.analysis,
            ModelTag::Context => &mut self.context,
            ModelTag::Detect => &mut self.detect,
            ModelTag::Judge => &mut self.judge,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_attempts: 3, base_delay: Duration::from_millis(500) }
    }
}

impl RetryPolicy {
    pub fn immediate(max_attempts: u32) -> Self {
        Self { max_attempts, base_delay: Duration::ZERO }
    }

    fn delay_before(&self, attempt: u32) -> Duration {
        // attempt is 1-based; no wait before the first try
        if attempt <= 1 {
            Duration::ZERO
        } else {
            self.base_delay.saturating_mul(1 << (attempt - 2).min(16))
        }
    }
}

/// Spaces requests at least `1 / per_second` apart. The only shared mutable
/// state inside the gateway.
#[derive(Debug)]
pub struct RateLimiter {
    interval: Option<Duration>,
    next_slot: Mutex<Option<Instant>>,
}

impl RateLimiter {
    pub fn unlimited() -> Self {
        Self { interval: None, next_slot: Mutex::new(None) }
    }

    pub fn per_second(rate: f64) -> Self {
        let interval = (rate > 0.0).then(|| Duration::from_secs_f64(1.0 / rate));
        Self { interval, next_slot: Mutex::new(None) }
    }

    pub fn acquire(&self) {
        let Some(interval) = self.interval else { return };
        let wait = {
            let mut slot = self.next_slot.lock().unwrap_or_else(|e| e.into_inner());
            let now = Instant::now();
            let start = match *slot {
                Some(t) if t > now => t,
                _ => now,
            };
            *slot = Some(start + interval);
            start.saturating_duration_since(now)
        };
        if !wait.is_zero() {
            std::thread::sleep(wait);
        }
    }
}

pub struct Gateway {
    mode: Mode,
    transport: Option<Arc<dyn Transport>>,
    cassette: Option<Arc<Cassette>>,
    models: ModelConfig,
    retry: RetryPolicy,
    limiter: RateLimiter,
}

impl fmt::Debug for Gateway {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Gateway")
            .field("mode", &self.mode)
            .field("has_transport", &self.transport.is_some())
            .field("has_cassette", &self.cassette.is_some())
            .field("models", &self.models)
            .field("retry", &self.retry)
            .finish()
    }
}

impl Gateway {
    pub fn new(mode: Mode, models: ModelConfig) -> Self {
        Self {
            mode,
            transport: None,
            cassette: None,
            models,
            retry: RetryPolicy::default(),
            limiter: RateLimiter::unlimited(),
        }
    }

    /// Replay-only gateway over an existing cassette.
    pub fn replay(cassette: Arc<Cassette>) -> Self {
        Self::new(Mode::Replay, ModelConfig::default()).with_cassette(cassette)
    }

    pub fn with_transport(mut self, transport: Arc<dyn Transport>) -> Self {
        self.transport = Some(transport);
        self
    }

    pub fn with_cassette(mut self, cassette: Arc<Cassette>) -> Self {
        self.cassette = Some(cassette);
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_rate_limit(mut self, limiter: RateLimiter) -> Self {
        self.limiter = limiter;
        self
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn models(&self) -> &ModelConfig {
        &self.models
    }

    pub fn cassette(&self) -> Option<&Arc<Cassette>> {
        self.cassette.as_ref()
    }

    pub fn complete(&self, envelope: &PromptEnvelope) -> Result<Completion, GatewayError> {
        match self.mode {
            Mode::Replay => {
                let cassette = self.require_cassette()?;
                let entry = cassette
                    .get(&envelope.request_digest)
                    .ok_or_else(|| GatewayError::CassetteMiss(envelope.request_digest.clone()))?;
                Ok(entry.into_completion(true))
            }
            Mode::Live => self.send_with_retry(envelope),
            Mode::Record => {
                let cassette = self.require_cassette()?;
                // an identical request already answered in this cassette is
                // served from it so record and replay agree byte-for-byte
                if let Some(entry) = cassette.get(&envelope.request_digest) {
                    return Ok(entry.into_completion(true));
                }
                let completion = self.send_with_retry(envelope)?;
                let entry = CassetteEntry {
                    digest: completion.digest.clone(),
                    model: completion.model.clone(),
                    response_text: completion.text.clone(),
                    token_counts: completion.token_counts,
                };
                Ok(cassette.insert(entry)?.into_completion(false))
            }
        }
    }

    fn require_cassette(&self) -> Result<&Arc<Cassette>, GatewayError> {
        self.cassette
            .as_ref()
            .ok_or_else(|| GatewayError::Config(format!("{} mode requires a cassette", self.mode)))
    }

    fn send_with_retry(&self, envelope: &PromptEnvelope) -> Result<Completion, GatewayError> {
        let transport = self
            .transport
            .as_ref()
            .ok_or_else(|| GatewayError::Config(format!("{} mode requires a transport", self.mode)))?;
        let model = self.models.model_for(envelope.model_tag).to_string();
        let attempts = self.retry.max_attempts.max(1);
        let mut last_error = String::new();
        for attempt in 1..=attempts {
            let delay = self.retry.delay_before(attempt);
            if !delay.is_zero() {
                std::thread::sleep(delay);
            }
            self.limiter.acquire();
            match transport.send(&model, envelope) {
                Ok(reply) => {
                    return Ok(Completion {
                        text: reply.text,
                        model,
                        digest: envelope.request_digest.clone(),
                        token_counts: reply.token_counts,
                        from_cassette: false,
                    })
                }
                Err(TransportError::Fatal(msg)) => {
                    return Err(GatewayError::Failure { attempts: attempt, last_error: msg })
                }
                Err(TransportError::Retryable(msg)) => {
                    log::warn!(
                        "{} request {} attempt {attempt}/{attempts} failed: {msg}",
                        envelope.template_id,
                        &envelope.request_digest[..12]
                    );
                    last_error = msg;
                }
            }
        }
        Err(GatewayError::Failure { attempts, last_error })
    }
}
