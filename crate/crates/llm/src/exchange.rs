use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::LlmError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
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
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Self { role: Role::System, content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self { role: Role::User, content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self { role: Role::Assistant, content: content.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChatParams {
    pub temperature: f64,
    pub max_tokens: u32,
    pub top_p: f64,
}

impl Default for ChatParams {
    fn default() -> Self {
        Self { temperature: 0.5, max_tokens: 2048, top_p: 0.95 }
    }
}

impl ChatParams {
    pub fn validate(&self) -> Result<(), LlmError> {
        if !(0.3..=0.7).contains(&self.temperature) {
            return Err(LlmError::InvalidExchange(format!("temperature {} outside [0.3, 0.7]", self.temperature)));
        }
        if !(1024..=4096).contains(&self.max_tokens) {
            return Err(LlmError::InvalidExchange(format!("max_tokens {} outside [1024, 4096]", self.max_tokens)));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(LlmError::InvalidExchange(format!("top_p {} outside (0, 1]", self.top_p)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatExchange {
    pub messages: Vec<Message>,
    pub params: ChatParams,
}

impl ChatExchange {
    pub fn new(messages: Vec<Message>) -> Self {
        Self { messages, params: ChatParams::default() }
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        match self.messages.first() {
            None => return Err(LlmError::InvalidExchange("no messages".into())),
            Some(m) if m.role != Role::System => {
                return Err(LlmError::InvalidExchange("first message must be the system message".into()))
            }
            _ => {}
        }
        self.params.validate()
    }

    /// Appends the assistant reply and a follow-up user turn.
    pub fn continued(&self, reply: &str, follow_up: impl Into<String>) -> ChatExchange {
        let mut next = self.clone();
        next.messages.push(Message::assistant(reply));
        next.messages.push(Message::user(follow_up));
        next
    }

    pub fn digest(&self) -> String {
        prompt_digest(&self.messages)
    }

    /// Text of the last user message.
    pub fn last_user(&self) -> &str {
        self.messages.iter().rev().find(|m| m.role == Role::User).map_or("", |m| m.content.as_str())
    }
}

/// SHA-256 over the role-tagged messages; sampling parameters are not part of the key.
pub fn prompt_digest(messages: &[Message]) -> String {
    let mut h = Sha256::new();
    for m in messages {
        h.update(m.role.as_str().as_bytes());
        h.update([0u8]);
        h.update((m.content.len() as u64).to_le_bytes());
        h.update(m.content.as_bytes());
    }
    hex::encode(h.finalize())
}
