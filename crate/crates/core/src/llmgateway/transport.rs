use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use super::{PromptEnvelope, TokenCounts};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransportReply {
    pub text: String,
    pub token_counts: TokenCounts,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransportError {
    /// Worth another attempt (timeouts, 429, 5xx).
    Retryable(String),
    /// Retrying cannot help (bad credentials, malformed request).
    Fatal(String),
}

pub trait Transport: Send + Sync {
    fn send(&self, model: &str, envelope: &PromptEnvelope) -> Result<TransportReply, TransportError>;
}

/// Fails loudly if anything tries to reach the network. Installed in replay
/// mode by tests to prove the transport is never touched.
#[derive(Debug, Clone, Copy, Default)]
pub struct PanickingTransport;

impl Transport for PanickingTransport {
    fn send(&self, _model: &str, envelope: &PromptEnvelope) -> Result<TransportReply, TransportError> {
        panic!("network transport used for {} ({})", envelope.template_id, envelope.request_digest)
    }
}

type ScriptFn = dyn Fn(&str, &PromptEnvelope) -> Result<String, TransportError> + Send + Sync;

/// Answers from a closure. Used for deterministic fixture models and fault
/// injection.
pub struct ScriptedTransport {
    script: Box<ScriptFn>,
}

impl ScriptedTransport {
    pub fn new<F>(f: F) -> Self
    where
        F: Fn(&str, &PromptEnvelope) -> String + Send + Sync + 'static,
    {
        Self { script: Box::new(move |m, e| Ok(f(m, e))) }
    }

    pub fn fallible<F>(f: F) -> Self
    where
        F: Fn(&str, &PromptEnvelope) -> Result<String, TransportError> + Send + Sync + 'static,
    {
        Self { script: Box::new(f) }
    }
}

impl Transport for ScriptedTransport {
    fn send(&self, model: &str, envelope: &PromptEnvelope) -> Result<TransportReply, TransportError> {
        let text = (self.script)(model, envelope)?;
        let token_counts = TokenCounts {
            prompt: word_count(&envelope.full_text()),
            completion: word_count(&text),
        };
        Ok(TransportReply { text, token_counts })
    }
}

fn word_count(s: &str) -> u64 {
    s.split_whitespace().count() as u64
}

/// OpenAI-compatible `/chat/completions` client.
#[derive(Debug, Clone)]
pub struct HttpTransport {
    base_url: String,
    api_key: Option<String>,
    temperature: f64,
    max_tokens: Option<u32>,
    timeout: Duration,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
    #[serde(default)]
    usage: Option<ChatUsage>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct ChatUsage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

impl HttpTransport {
    pub fn new(base_url: impl Into<String>, api_key: Option<String>) -> Self {
        Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            api_key,
            temperature: 0.0,
            max_tokens: None,
            timeout: Duration::from_secs(300),
        }
    }

    /// `LLM_BASE_URL` (required) and `LLM_API_KEY` (optional).
    pub fn from_env() -> Option<Self> {
        let base = std::env::var("LLM_BASE_URL").ok().filter(|s| !s.trim().is_empty())?;
        let key = std::env::var("LLM_API_KEY").ok().filter(|s| !s.is_empty());
        Some(Self::new(base, key))
    }

    pub fn with_temperature(mut self, t: f64) -> Self {
        self.temperature = t;
        self
    }

    pub fn with_max_tokens(mut self, n: u32) -> Self {
        self.max_tokens = Some(n);
        self
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn max_tokens(&self) -> Option<u32> {
        self.max_tokens
    }
}

impl Transport for HttpTransport {
    fn send(&self, model: &str, envelope: &PromptEnvelope) -> Result<TransportReply, TransportError> {
        let messages: Vec<_> = envelope
            .role_blocks
            .iter()
            .map(|b| json!({"role": b.role.as_str(), "content": b.text}))
            .collect();
        let mut body = json!({
            "model": model,
            "messages": messages,
            "temperature": self.temperature,
        });
        if let Some(n) = self.max_tokens {
            body["max_tokens"] = json!(n);
        }
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(self.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let mut req = agent.post(format!("{}/chat/completions", self.base_url));
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = req.send_json(&body).map_err(|e| TransportError::Retryable(e.to_string()))?;
        let status = resp.status().as_u16();
        if status == 429 || status >= 500 {
            return Err(TransportError::Retryable(format!("HTTP {status}")));
        }
        if status >= 400 {
            let detail = resp.body_mut().read_to_string().unwrap_or_default();
            return Err(TransportError::Fatal(format!("HTTP {status}: {detail}")));
        }
        let parsed: ChatResponse =
            resp.body_mut().read_json().map_err(|e| TransportError::Retryable(e.to_string()))?;
        let text = parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| TransportError::Retryable("response without message content".into()))?;
        let token_counts = parsed
            .usage
            .map(|u| TokenCounts { prompt: u.prompt_tokens, completion: u.completion_tokens })
            .unwrap_or_default();
        Ok(TransportReply { text, token_counts })
    }
}
