#[derive(Debug, thiserror::Error)]
pub enum LlmError {
    #[error("invalid chat exchange: {0}")]
    InvalidExchange(String),
    #[error("environment variable {0} is not set")]
    MissingApiKey(&'static str),
    #[error("authentication rejected (HTTP {status})")]
    Auth { status: u16 },
    #[error("request failed after {attempts} attempts: {last}")]
    RetriesExhausted { attempts: usize, last: String },
    #[error("HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("malformed response: {0}")]
    Decode(String),
    #[error("mock script has no response for prompt digest {digest} (task {task})")]
    MissingScriptKey { digest: String, task: String },
    #[error("malformed mock script at line {line}: {message}")]
    Script { line: usize, message: String },
    #[error("template {template}: unbound slot {slot}")]
    UnboundSlot { template: String, slot: String },
    #[error("unknown template {0}")]
    UnknownTemplate(String),
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("invalid chunking: chunk_chars {chunk} must exceed overlap_chars {overlap}")]
    Chunking { chunk: usize, overlap: usize },
    #[error("nothing to embed")]
    EmptyInput,
}
