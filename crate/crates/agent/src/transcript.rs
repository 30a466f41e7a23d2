use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tsa_core::sim::{Scenario, SCENARIO_SCHEMA_VERSION};

use crate::request::SubRequest;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Decompose,
    Reformat,
    Draft,
    Repair,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Valid,
    ParseError,
    Invalid,
}

/// One LLM call and what came of it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptRecord {
    pub stage: Stage,
    /// Index of the sub-request being served, absent for decomposition.
    pub sub_request: Option<usize>,
    pub prompt_digest: String,
    pub response: String,
    pub outcome: Outcome,
    pub errors: Vec<String>,
}

/// Full audit trail of a request: every model call, the validated scenarios
/// and how many of them integrated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentTranscript {
    pub scenario_schema_version: u32,
    pub request: String,
    pub sub_requests: Vec<SubRequest>,
    pub attempts: Vec<AttemptRecord>,
    /// Validated scenarios in campaign order.
    pub scenarios: Vec<Scenario>,
    /// Scenarios the campaign set out to produce, valid or not.
    pub total: usize,
    /// Validated scenarios whose simulation completed.
    pub integrated: usize,
    pub validity_rate: f64,
    pub class_counts: Vec<usize>,
}

impl AgentTranscript {
    pub fn new(request: &str) -> Self {
        AgentTranscript {
            scenario_schema_version: SCENARIO_SCHEMA_VERSION,
            request: request.to_string(),
            sub_requests: Vec::new(),
            attempts: Vec::new(),
            scenarios: Vec::new(),
            total: 0,
            integrated: 0,
            validity_rate: 0.0,
            class_counts: Vec::new(),
        }
    }

    pub fn record(&mut self, record: AttemptRecord) {
        self.attempts.push(record);
    }

    /// Model calls made on behalf of sub-request `index`.
    pub fn attempts_for(&self, index: usize) -> Vec<&AttemptRecord> {
        self.attempts.iter().filter(|a| a.sub_request == Some(index)).collect()
    }

    pub fn set_outcome(&mut self, total: usize, integrated: usize) {
        self.total = total;
        self.integrated = integrated;
        self.validity_rate = if total == 0 { 0.0 } else { integrated as f64 / total as f64 };
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("transcript serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// SHA-256 of the structured form, recorded in dataset metadata.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_json().as_bytes()))
    }

    /// Human-readable log.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "scenario schema v{}", self.scenario_schema_version);
        let _ = writeln!(out, "request: {}", self.request);
        for (i, s) in self.sub_requests.iter().enumerate() {
            let _ = writeln!(out, "\n[sub-request {i}]\n{}", s.to_toml());
        }
        for (n, a) in self.attempts.iter().enumerate() {
            let target = a.sub_request.map_or("-".to_string(), |i| i.to_string());
            let _ = writeln!(
                out,
                "\n=== call {n}: {:?} (sub-request {target}) -> {:?}\nprompt {}\n--- response\n{}",
                a.stage, a.outcome, a.prompt_digest, a.response
            );
            for e in &a.errors {
                let _ = writeln!(out, "error: {e}");
            }
        }
        let _ = writeln!(
            out,
            "\nscenarios: {} valid of {}, {} integrated, validity rate {:.4}",
            self.scenarios.len(),
            self.total,
            self.integrated,
            self.validity_rate
        );
        let _ = writeln!(out, "class counts: {:?}", self.class_counts);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip_preserves_digest() {
        let mut t = AgentTranscript::new("fault at bus 7");
        t.record(AttemptRecord {
            stage: Stage::Draft,
            sub_request: Some(0),
            prompt_digest: "ab".repeat(32),
            response: "```scenario/v1\n```".into(),
            outcome: Outcome::ParseError,
            errors: vec!["missing field".into()],
        });
        t.set_outcome(4, 3);
        assert_eq!(t.validity_rate, 0.75);
        let back = AgentTranscript::from_json(&t.to_json()).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.digest(), t.digest());
        assert!(t.to_text().contains("error: missing field"));
    }

    #[test]
    fn empty_campaign_rate_is_zero() {
        let mut t = AgentTranscript::new("x");
        t.set_outcome(0, 0);
        assert_eq!(t.validity_rate, 0.0);
    }
}
