//! Chat and embedding access for the scenario and architecture agents.
//!
//! Two backends share one trait: an OpenAI-compatible HTTP client with a
//! sliding-window rate limiter and exponential backoff, and a deterministic
//! offline mock that replays scripted responses keyed on prompt digests.

mod blocks;
mod embed;
mod error;
mod exchange;
mod mock;
mod prompts;
mod rag;
mod remote;

pub use blocks::{extract_blocks, parse_block, parse_single_block, render_block, Block, BlockError};
pub use embed::{cosine, hashed_embedding, EMBED_DIM};
pub use error::LlmError;
pub use exchange::{prompt_digest, ChatExchange, ChatParams, Message, Role};
pub use mock::{MockBackend, MockPolicy, MockScript};
pub use prompts::{render, task_of, template, template_names, Bindings, PromptTemplate, TASK_PREFIX};
pub use rag::{chunk_text, ingest_corpus, DocKind, Document, Retrieved, VectorStore, DEFAULT_CHUNK_CHARS, DEFAULT_OVERLAP_CHARS};
pub use remote::{
    Clock, FakeClock, FakeTransport, HttpReply, RateLimiter, RemoteBackend, RemoteConfig, RetryPolicy, SystemClock,
    Transport, TransportError, UreqTransport, API_KEY_ENV, chat_reply_body,
};

/// A chat/embedding provider.
pub trait LlmBackend: Send + Sync {
    fn chat(&self, exchange: &ChatExchange) -> Result<String, LlmError>;
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, LlmError>;
    /// Short label for logs and manifests.
    fn describe(&self) -> String;
}
