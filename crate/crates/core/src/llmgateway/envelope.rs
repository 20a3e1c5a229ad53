use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::ModelTag;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleBlock {
    pub role: Role,
    pub text: String,
}

/// A fully rendered request. The digest is computed once at construction and
/// covers everything that can change the model's answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptEnvelope {
    pub template_id: String,
    pub role_blocks: Vec<RoleBlock>,
    pub model_tag: ModelTag,
    pub request_digest: String,
}

impl PromptEnvelope {
    pub fn new(template_id: impl Into<String>, role_blocks: Vec<RoleBlock>, model_tag: ModelTag) -> Self {
        let template_id = template_id.into();
        let request_digest = digest(&template_id, &role_blocks, model_tag);
        Self { template_id, role_blocks, model_tag, request_digest }
    }

    /// Concatenated text of all blocks of one role.
    pub fn text_of(&self, role: Role) -> String {
        self.role_blocks
            .iter()
            .filter(|b| b.role == role)
            .map(|b| b.text.as_str())
            .collect::<Vec<_>>()
            .join("\n")
    }

    /// All block text, in order.
    pub fn full_text(&self) -> String {
        self.role_blocks.iter().map(|b| b.text.as_str()).collect::<Vec<_>>().join("\n")
    }
}

// Length-prefixed so that no two distinct envelopes share a preimage.
fn digest(template_id: &str, blocks: &[RoleBlock], tag: ModelTag) -> String {
    let mut h = Sha256::new();
    let mut field = |bytes: &[u8]| {
        h.update((bytes.len() as u64).to_be_bytes());
        h.update(bytes);
    };
    field(b"patchsieve-envelope-v1");
    field(template_id.as_bytes());
    field(tag.as_str().as_bytes());
    field(&(blocks.len() as u64).to_be_bytes());
    for b in blocks {
        field(b.role.as_str().as_bytes());
        field(b.text.as_bytes());
    }
    hex::encode(h.finalize())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn block(role: Role, text: &str) -> RoleBlock {
        RoleBlock { role, text: text.into() }
    }

    #[test]
    fn digest_is_sensitive_to_block_boundaries() {
        let a = PromptEnvelope::new("t", vec![block(Role::User, "ab"), block(Role::User, "c")], ModelTag::Detect);
        let b = PromptEnvelope::new("t", vec![block(Role::User, "a"), block(Role::User, "bc")], ModelTag::Detect);
        assert_ne!(a.request_digest, b.request_digest);
    }

    #[test]
    fn digest_depends_on_tag_and_role() {
        let a = PromptEnvelope::new("t", vec![block(Role::User, "x")], ModelTag::Detect);
        let b = PromptEnvelope::new("t", vec![block(Role::User, "x")], ModelTag::Judge);
        let c = PromptEnvelope::new("t", vec![block(Role::System, "x")], ModelTag::Detect);
        assert_ne!(a.request_digest, b.request_digest);
        assert_ne!(a.request_digest, c.request_digest);
    }

    #[test]
    fn digest_is_pinned() {
        // changing this value invalidates every committed cassette
        let e = PromptEnvelope::new("t", vec![block(Role::User, "x")], ModelTag::Detect);
        assert_eq!(e.request_digest, "38584a8c70e822d37e70e4bbb3221004592fca4405104ed9e88611a02a984e65");
    }
}
