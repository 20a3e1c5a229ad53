//! The fenced-block output contract shared by every model-facing step.
//!
//! A step prompt asks for exactly one ```` ```json ```` block. If the answer
//! cannot be parsed or fails the step's validation rule, the model gets one
//! repair prompt quoting its own answer and the problem. A second failure is
//! [`StepError::Malformed`].

use std::collections::BTreeMap;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{render_prompt, Gateway, GatewayError, PromptEnvelope, Role, RoleBlock};

#[derive(Debug, Error)]
pub enum StepError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("malformed model output for {template_id}: {reason}")]
    Malformed { template_id: String, reason: String },
}

/// One request/response pair, kept for transcripts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exchange {
    pub template_id: String,
    pub digest: String,
    pub response: String,
}

/// Returns the JSON value inside the last ```` ```json ```` fence.
pub fn extract_fenced_json(text: &str) -> Result<serde_json::Value, String> {
    let start = text
        .rfind("```json")
        .ok_or_else(|| "no ```json fenced block in response".to_string())?;
    let body_start = start + "```json".len();
    let rest = &text[body_start..];
    let end = rest.find("```").ok_or_else(|| "unterminated ```json block".to_string())?;
    serde_json::from_str(rest[..end].trim()).map_err(|e| format!("fenced block is not valid JSON: {e}"))
}

fn parse_and_check<T, F>(text: &str, validate: &F) -> Result<T, String>
where
    T: DeserializeOwned,
    F: Fn(&T) -> Result<(), String>,
{
    let value = extract_fenced_json(text)?;
    let parsed: T = serde_json::from_value(value).map_err(|e| format!("fenced block does not match schema: {e}"))?;
    validate(&parsed)?;
    Ok(parsed)
}

/// Sends `envelope`, parses the fenced block as `T` and applies `validate`,
/// with a single repair round on failure.
pub fn ask_structured<T, F>(
    gateway: &Gateway,
    envelope: &PromptEnvelope,
    validate: F,
) -> Result<(T, Vec<Exchange>), StepError>
where
    T: DeserializeOwned,
    F: Fn(&T) -> Result<(), String>,
{
    let first = gateway.complete(envelope)?;
    let mut exchanges = vec![Exchange {
        template_id: envelope.template_id.clone(),
        digest: envelope.request_digest.clone(),
        response: first.text.clone(),
    }];
    let problem = match parse_and_check(&first.text, &validate) {
        Ok(v) => return Ok((v, exchanges)),
        Err(problem) => problem,
    };

    let repair = repair_envelope(envelope, &first.text, &problem, "repair.v1")?;
    let second = gateway.complete(&repair)?;
    exchanges.push(Exchange {
        template_id: repair.template_id.clone(),
        digest: repair.request_digest.clone(),
        response: second.text.clone(),
    });
    parse_and_check(&second.text, &validate)
        .map(|v| (v, exchanges))
        .map_err(|reason| StepError::Malformed {
            template_id: envelope.template_id.clone(),
            reason: format!("{reason} (after repair; first attempt: {problem})"),
        })
}

/// The repair prompt replays the original conversation, the bad answer as
/// the assistant turn, and a user turn naming the problem.
pub(crate) fn repair_envelope(
    original: &PromptEnvelope,
    bad_answer: &str,
    problem: &str,
    repair_template: &str,
) -> Result<PromptEnvelope, GatewayError> {
    let mut vars = BTreeMap::new();
    vars.insert("template_id".to_string(), original.template_id.clone());
    vars.insert("problem".to_string(), problem.to_string());
    let instruction = render_prompt(repair_template, &vars)?;
    let mut blocks = original.role_blocks.clone();
    blocks.push(RoleBlock { role: Role::Assistant, text: bad_answer.to_string() });
    blocks.push(RoleBlock { role: Role::User, text: instruction.text_of(Role::User) });
    Ok(PromptEnvelope::new(
        format!("{}+repair", original.template_id),
        blocks,
        original.model_tag,
    ))
}
