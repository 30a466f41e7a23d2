use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use crate::embed::hashed_embedding;
use crate::prompts::task_of;
use crate::{ChatExchange, LlmBackend, LlmError};

const RECORD_PREFIX: &str = ">>> ";

/// Scripted responses keyed by prompt digest.
///
/// Text format: a header line `>>> <digest>` followed by the response body,
/// up to the next header. Lines starting with `#` before the first header are
/// comments. A digest listed several times answers in order, repeating its
/// last response once exhausted.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MockScript {
    entries: Vec<(String, String)>,
}

impl MockScript {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, digest: impl Into<String>, response: impl Into<String>) {
        self.entries.push((digest.into(), response.into()));
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn parse(text: &str) -> Result<Self, LlmError> {
        let mut script = MockScript::new();
        let mut current: Option<(String, Vec<&str>)> = None;
        for (n, line) in text.lines().enumerate() {
            if let Some(rest) = line.strip_prefix(RECORD_PREFIX) {
                if let Some((d, body)) = current.take() {
                    script.push(d, body.join("\n"));
                }
                let digest = rest.trim();
                if digest.len() != 64 || !digest.bytes().all(|b| b.is_ascii_hexdigit()) {
                    return Err(LlmError::Script { line: n + 1, message: format!("invalid digest {digest:?}") });
                }
                current = Some((digest.to_ascii_lowercase(), Vec::new()));
            } else if let Some((_, body)) = current.as_mut() {
                body.push(line);
            } else if !(line.trim().is_empty() || line.starts_with('#')) {
                return Err(LlmError::Script { line: n + 1, message: "text before the first record".into() });
            }
        }
        if let Some((d, body)) = current {
            script.push(d, body.join("\n"));
        }
        Ok(script)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (d, r) in &self.entries {
            out.push_str(RECORD_PREFIX);
            out.push_str(d);
            out.push('\n');
            out.push_str(r);
            out.push('\n');
        }
        out
    }
}

/// Deterministic fallback consulted when the script has no entry.
pub trait MockPolicy: Send + Sync {
    fn respond(&self, exchange: &ChatExchange) -> Option<String>;
}

impl<F> MockPolicy for F
where
    F: Fn(&ChatExchange) -> Option<String> + Send + Sync,
{
    fn respond(&self, exchange: &ChatExchange) -> Option<String> {
        self(exchange)
    }
}

/// Offline backend: scripted replay, then the optional policy, with hashed embeddings.
pub struct MockBackend {
    by_digest: HashMap<String, Vec<String>>,
    cursor: Mutex<HashMap<String, usize>>,
    policy: Option<Arc<dyn MockPolicy>>,
    served: Mutex<MockScript>,
}

impl MockBackend {
    pub fn new(script: MockScript, policy: Option<Arc<dyn MockPolicy>>) -> Self {
        let mut by_digest: HashMap<String, Vec<String>> = HashMap::new();
        for (d, r) in script.entries {
            by_digest.entry(d).or_default().push(r);
        }
        Self { by_digest, cursor: Mutex::new(HashMap::new()), policy, served: Mutex::new(MockScript::new()) }
    }

    /// Embedding-only backend: every chat call is a missing-key error.
    pub fn offline() -> Self {
        Self::new(MockScript::new(), None)
    }

    pub fn with_policy(policy: Arc<dyn MockPolicy>) -> Self {
        Self::new(MockScript::new(), Some(policy))
    }

    /// Every chat answer given so far, as a replayable script.
    pub fn served(&self) -> MockScript {
        self.served.lock().expect("mock lock").clone()
    }
}

impl LlmBackend for MockBackend {
    fn chat(&self, exchange: &ChatExchange) -> Result<String, LlmError> {
        exchange.validate()?;
        let digest = exchange.digest();
        let scripted = self.by_digest.get(&digest).map(|answers| {
            let mut cursor = self.cursor.lock().expect("mock lock");
            let k = cursor.entry(digest.clone()).or_insert(0);
            let answer = answers[(*k).min(answers.len() - 1)].clone();
            *k += 1;
            answer
        });
        let answer = match scripted.or_else(|| self.policy.as_ref().and_then(|p| p.respond(exchange))) {
            Some(a) => a,
            None => {
                return Err(LlmError::MissingScriptKey { digest, task: task_of(exchange.last_user()).unwrap_or("?").to_string() })
            }
        };
        self.served.lock().expect("mock lock").push(digest, answer.clone());
        Ok(answer)
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, LlmError> {
        if texts.is_empty() {
            return Err(LlmError::EmptyInput);
        }
        Ok(texts.iter().map(|t| hashed_embedding(t)).collect())
    }

    fn describe(&self) -> String {
        format!("mock ({} scripted prompts, policy: {})", self.by_digest.len(), self.policy.is_some())
    }
}
