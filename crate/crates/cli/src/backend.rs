use std::sync::Arc;

use tsa_agent::RulePolicy;
use tsa_llm::{ChatExchange, LlmBackend, MockBackend, MockPolicy, MockScript, RemoteBackend, RemoteConfig};
use tsa_nas::SearchPolicy;

use crate::config::BackendConfig;
use crate::error::CliError;

/// Offline answers for every task the pipeline issues: scenario drafting
/// and repair from the agent's rules, strategy and candidates from the
/// search policy.
#[derive(Debug, Clone, Copy, Default)]
pub struct OfflinePolicy;

impl MockPolicy for OfflinePolicy {
    fn respond(&self, exchange: &ChatExchange) -> Option<String> {
        RulePolicy.respond(exchange).or_else(|| SearchPolicy.respond(exchange))
    }
}

/// The backend a run talks to. Mock runs keep a handle on the concrete
/// backend so the served responses can be saved for replay.
pub enum Backend {
    Mock(MockBackend),
    Remote(RemoteBackend),
}

impl Backend {
    /// Builds the configured backend. `offline` forces a mock regardless of
    /// the config. A remote backend reads its key from the environment here,
    /// before any request is made.
    pub fn open(config: &BackendConfig, offline: bool) -> Result<Self, CliError> {
        let policy: Arc<dyn MockPolicy> = Arc::new(OfflinePolicy);
        match config {
            BackendConfig::Mock { script: Some(path) } => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Validation(format!("cannot read mock script {}: {e}", path.display())))?;
                Ok(Backend::Mock(MockBackend::new(MockScript::parse(&text)?, Some(policy))))
            }
            BackendConfig::Mock { script: None } => Ok(Backend::Mock(MockBackend::with_policy(policy))),
            BackendConfig::Remote { .. } if offline => Ok(Backend::Mock(MockBackend::with_policy(policy))),
            BackendConfig::Remote { base_url, model, embed_model, max_requests_per_minute } => {
                let cfg = RemoteConfig {
                    base_url: base_url.clone(),
                    model: model.clone(),
                    embed_model: embed_model.clone(),
                    max_requests_per_minute: *max_requests_per_minute,
                    ..Default::default()
                };
                Ok(Backend::Remote(RemoteBackend::from_env(cfg)?))
            }
        }
    }

    pub fn as_dyn(&self) -> &dyn LlmBackend {
        match self {
            Backend::Mock(m) => m,
            Backend::Remote(r) => r,
        }
    }

    /// Responses served so far, in the replayable script format.
    pub fn served_script(&self) -> Option<String> {
        match self {
            Backend::Mock(m) => Some(m.served().to_text()),
            Backend::Remote(_) => None,
        }
    }
}
