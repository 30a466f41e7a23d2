use tsa_agent::CampaignError;
use tsa_core::sim::SimError;
use tsa_llm::LlmError;
use tsa_nas::SearchError;

/// Process exit codes; stable across releases.
pub mod exit {
    pub const OK: i32 = 0;
    /// Filesystem or serialization failure outside any pipeline stage.
    pub const IO: i32 = 1;
    pub const VALIDATION: i32 = 2;
    pub const INTEGRATION: i32 = 3;
    pub const STAGE_FAILED: i32 = 4;
    pub const MISSING_KEY: i32 = 5;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("simulation failed: {0}")]
    Integration(String),
    #[error("campaign failed: {0}")]
    Campaign(String),
    #[error("search failed: {0}")]
    Search(String),
    #[error("environment variable {0} is not set; the remote backend needs it")]
    MissingKey(&'static str),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Validation(_) => exit::VALIDATION,
            CliError::Integration(_) => exit::INTEGRATION,
            CliError::Campaign(_) | CliError::Search(_) => exit::STAGE_FAILED,
            CliError::MissingKey(_) => exit::MISSING_KEY,
            CliError::Io { .. } => exit::IO,
        }
    }

    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io { context: context.into(), source }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::InvalidScenario(_) | SimError::Config(_) => CliError::Validation(e.to_string()),
            SimError::PowerFlowDiverged { .. } | SimError::Grid(_) => CliError::Integration(e.to_string()),
        }
    }
}

impl From<CampaignError> for CliError {
    fn from(e: CampaignError) -> Self {
        CliError::Campaign(e.to_string())
    }
}

impl From<SearchError> for CliError {
    fn from(e: SearchError) -> Self {
        match e {
            SearchError::Requirements(_) | SearchError::Space(_) | SearchError::Task { .. } => {
                CliError::Validation(e.to_string())
            }
            other => CliError::Search(other.to_string()),
        }
    }
}

impl From<LlmError> for CliError {
    fn from(e: LlmError) -> Self {
        match e {
            LlmError::MissingApiKey(var) => CliError::MissingKey(var),
            LlmError::Script { .. } => CliError::Validation(e.to_string()),
            other => CliError::Campaign(other.to_string()),
        }
    }
}
