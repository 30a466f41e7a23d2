use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use tsa_nn::{ArchitectureDescriptor, Family, Metrics};

use crate::requirements::Requirements;

/// Length of the digest prefix shown in prompts.
pub const SHORT_DIGEST: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Evaluated,
    /// Refused before training because the analytic parameter count exceeds the limit.
    Rejected,
    /// Training stopped on a non-finite loss or gradient, or failed outright.
    Aborted,
}

/// One evaluated (or refused) architecture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub iteration: usize,
    pub digest: String,
    /// The descriptor as trained, with its assigned seed.
    pub descriptor: ArchitectureDescriptor,
    /// Best validation accuracy; 0 for rejected and aborted candidates.
    pub accuracy: f64,
    pub params: usize,
    pub latency_ms: f64,
    pub status: Status,
    pub note: Option<String>,
    pub train_accuracy: Option<f64>,
    /// Validation metrics of the restored best weights.
    pub metrics: Option<Metrics>,
    pub epochs_run: usize,
    /// Strategy direction active when the candidate was proposed.
    pub strategy: String,
}

impl Record {
    /// Meets the parameter and latency limits after a completed training run.
    pub fn feasible(&self, req: &Requirements) -> bool {
        self.status == Status::Evaluated && self.params <= req.lambda_params && self.latency_ms <= req.max_latency_ms
    }

    pub fn short_digest(&self) -> &str {
        &self.digest[..SHORT_DIGEST.min(self.digest.len())]
    }
}

/// One-line summary of a descriptor's layout and recipe.
pub fn summarize(d: &ArchitectureDescriptor) -> String {
    let layout = match (d.family, &d.branches) {
        (Family::MultiBranch, Some(b)) => {
            let attn = if d.attention.enabled { format!("attention {} heads", d.attention.heads) } else { "no attention".into() };
            format!(
                "multi_branch {:?}/{:?}/{:?} fusion {} {attn} head {:?}",
                b.temporal.widths, b.spatial.widths, b.frequency.widths, d.fusion_dim, d.head
            )
        }
        _ => format!("mlp {:?}", d.hidden),
    };
    format!(
        "{layout}, dropout {}, {}, lr {}, wd {}, batch {}{}",
        d.dropout,
        match d.loss {
            tsa_nn::LossSpec::Focal { alpha, gamma } => format!("focal(a={alpha}, g={gamma})"),
            other => other.name().to_string(),
        },
        d.optim.lr,
        d.optim.weight_decay,
        d.batch_size,
        if d.batch_norm { ", batch norm" } else { "" }
    )
}

/// Append-only record of every candidate the search has considered.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    records: Vec<Record>,
}

impl History {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, record: Record) {
        if let Some(last) = self.records.last() {
            assert!(record.iteration >= last.iteration, "history is ordered by iteration");
        }
        self.records.push(record);
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn iteration(&self, t: usize) -> impl Iterator<Item = &Record> {
        self.records.iter().filter(move |r| r.iteration == t)
    }

    /// Markdown table used as the Strategist's memory.
    pub fn table(&self, req: &Requirements) -> String {
        if self.records.is_empty() {
            return "(no architectures evaluated yet)".into();
        }
        let mut out = String::from(
            "| iter | digest | status | accuracy | params | latency_ms | feasible | architecture |\n|---|---|---|---|---|---|---|---|\n",
        );
        for r in &self.records {
            let status = match r.status {
                Status::Evaluated => "evaluated",
                Status::Rejected => "rejected",
                Status::Aborted => "aborted",
            };
            out.push_str(&format!(
                "| {} | {} | {status} | {:.4} | {} | {:.3} | {} | {} |\n",
                r.iteration,
                r.short_digest(),
                r.accuracy,
                r.params,
                r.latency_ms,
                if r.feasible(req) { "yes" } else { "no" },
                summarize(&r.descriptor)
            ));
        }
        out.trim_end().to_string()
    }
}

/// Digests of every descriptor evaluated or refused so far.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Archive {
    digests: BTreeSet<String>,
}

impl Archive {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a digest; false when it was already present.
    pub fn insert(&mut self, digest: &str) -> bool {
        self.digests.insert(digest.to_string())
    }

    pub fn contains(&self, digest: &str) -> bool {
        self.digests.contains(digest)
    }

    pub fn len(&self) -> usize {
        self.digests.len()
    }

    pub fn is_empty(&self) -> bool {
        self.digests.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &String> {
        self.digests.iter()
    }
}

/// A row of the history table as read back from a prompt.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub iteration: usize,
    pub digest_prefix: String,
    pub accuracy: f64,
    pub feasible: bool,
}

/// Reads the rows written by [`History::table`].
pub fn parse_table(text: &str) -> Vec<TableRow> {
    text.lines()
        .filter_map(|line| {
            let cells: Vec<&str> = line.trim().strip_prefix('|')?.split('|').map(str::trim).collect();
            if cells.len() < 8 {
                return None;
            }
            Some(TableRow {
                iteration: cells[0].parse().ok()?,
                digest_prefix: cells[1].to_string(),
                accuracy: cells[3].parse().ok()?,
                feasible: cells[6] == "yes",
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(iteration: usize, digest: &str, accuracy: f64, status: Status) -> Record {
        Record {
            iteration,
            digest: digest.into(),
            descriptor: ArchitectureDescriptor::mlp(&[16, 8]),
            accuracy,
            params: 1000,
            latency_ms: 0.5,
            status,
            note: None,
            train_accuracy: None,
            metrics: None,
            epochs_run: 3,
            strategy: "baseline".into(),
        }
    }

    #[test]
    fn table_round_trips_through_the_prompt_reader() {
        let mut h = History::new();
        h.push(record(1, "aaaaaaaaaaaaaaaaaaaa", 0.8125, Status::Evaluated));
        h.push(record(2, "bbbbbbbbbbbbbbbbbbbb", 0.0, Status::Rejected));
        let rows = parse_table(&h.table(&Requirements::default()));
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0], TableRow { iteration: 1, digest_prefix: "aaaaaaaaaaaa".into(), accuracy: 0.8125, feasible: true });
        assert!(!rows[1].feasible);
    }

    #[test]
    fn feasibility_needs_limits_and_a_completed_run() {
        let req = Requirements { lambda_params: 999, ..Requirements::default() };
        assert!(!record(1, "d", 0.9, Status::Evaluated).feasible(&req));
        assert!(record(1, "d", 0.9, Status::Evaluated).feasible(&Requirements::default()));
        assert!(!record(1, "d", 0.9, Status::Aborted).feasible(&Requirements::default()));
    }

    #[test]
    #[should_panic(expected = "ordered by iteration")]
    fn history_is_append_only_in_iteration_order() {
        let mut h = History::new();
        h.push(record(2, "a", 0.5, Status::Evaluated));
        h.push(record(1, "b", 0.5, Status::Evaluated));
    }

    #[test]
    fn archive_holds_each_digest_once() {
        let mut a = Archive::new();
        assert!(a.insert("x"));
        assert!(!a.insert("x"));
        assert_eq!(a.len(), 1);
    }
}
