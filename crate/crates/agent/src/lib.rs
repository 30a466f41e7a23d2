//! LLM-driven simulation controller.
//!
//! A study request is split into sub-requests, each sub-request is drafted
//! into a schema-tagged scenario grounded in retrieved context, invalid drafts
//! go through a bounded feedback loop, and validated scenarios are simulated,
//! labeled and packed into a balanced dataset.

mod agent;
mod campaign;
mod corpus;
mod policy;
mod request;
mod transcript;

pub use agent::{AgentConfig, AgentError, DraftError, Rejected, RepairFailure, ScenarioAgent, ScenarioDraft};
pub use campaign::{run_campaign, CampaignConfig, CampaignError, LabelMode};
pub use corpus::{builtin_corpus, describe_case};
pub use policy::{decompose_request, parse_clause, RulePolicy};
pub use request::{
    Intent, SubRequest, SubRequestList, DEFAULT_CLEARING_STEP_MS, SCENARIO_FIELDS, SCENARIO_SCHEMA, SUBREQUEST_FIELDS,
    SUBREQUEST_SCHEMA,
};
pub use transcript::{AgentTranscript, AttemptRecord, Outcome, Stage};
