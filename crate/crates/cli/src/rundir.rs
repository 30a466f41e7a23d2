use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const MANIFEST: &str = "manifest.json";
pub const CONFIG: &str = "config.toml";
pub const TRANSCRIPT: &str = "transcript.json";
pub const TRANSCRIPT_TEXT: &str = "transcript.txt";
pub const DATASET: &str = "dataset.tsds";
pub const CAMPAIGN_SUMMARY: &str = "campaign.json";
pub const MOCK_SCRIPT: &str = "mock.script";
pub const TRAJECTORY: &str = "trajectory.json";
pub const SEARCH_DIR: &str = "search";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Running,
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub status: StageStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exit_code: Option<i32>,
    /// Paths relative to the run directory.
    pub artifacts: Vec<String>,
    pub wall_time_s: f64,
}

/// Index of a run directory: what ran, with which versions and seeds, and
/// which files each stage produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub created: String,
    pub seed: u64,
    pub backend: String,
    pub versions: BTreeMap<String, String>,
    pub stages: Vec<StageRecord>,
}

impl Manifest {
    pub fn stage(&self, name: &str) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.name == name)
    }

    pub fn artifacts(&self) -> Vec<&str> {
        self.stages.iter().flat_map(|s| s.artifacts.iter().map(String::as_str)).collect()
    }
}

fn versions() -> BTreeMap<String, String> {
    // The workspace crates share one version.
    ["tsa-cli", "tsa-core", "tsa-llm", "tsa-agent", "tsa-nn", "tsa-nas"]
        .iter()
        .map(|c| (c.to_string(), env!("CARGO_PKG_VERSION").to_string()))
        .collect()
}

/// One run's output directory, `run-<timestamp>-<seed>` under the output root.
#[derive(Debug)]
pub struct RunDir {
    pub path: PathBuf,
    pub manifest: Manifest,
}

pub fn io(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> CliError {
    let context = context.into();
    move |e| CliError::io(context, e)
}

impl RunDir {
    pub fn create(root: &Path, command: &str, seed: u64, backend: String) -> Result<Self, CliError> {
        let now = chrono::Utc::now();
        let stamp = now.format("%Y%m%dT%H%M%SZ").to_string();
        fs::create_dir_all(root).map_err(io(format!("cannot create {}", root.display())))?;
        let mut path = root.join(format!("run-{stamp}-{seed}"));
        let mut n = 1;
        loop {
            match fs::create_dir(&path) {
                Ok(()) => break,
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                    n += 1;
                    path = root.join(format!("run-{stamp}-{seed}.{n}"));
                }
                Err(e) => return Err(CliError::io(format!("cannot create {}", path.display()), e)),
            }
        }
        let manifest = Manifest {
            command: command.to_string(),
            created: now.to_rfc3339(),
            seed,
            backend,
            versions: versions(),
            stages: Vec::new(),
        };
        let run = RunDir { path, manifest };
        run.save_manifest()?;
        Ok(run)
    }

    pub fn file(&self, rel: &str) -> PathBuf {
        self.path.join(rel)
    }

    pub fn write(&self, rel: &str, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
        let p = self.file(rel);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent).map_err(io(format!("cannot create {}", parent.display())))?;
        }
        fs::write(&p, contents).map_err(io(format!("cannot write {}", p.display())))
    }

    pub fn write_json<T: Serialize>(&self, rel: &str, value: &T) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(value).expect("artifact serializes");
        self.write(rel, text + "\n")
    }

    pub fn save_manifest(&self) -> Result<(), CliError> {
        self.write_json(MANIFEST, &self.manifest)
    }

    pub fn begin(&mut self, name: &str) -> Result<(), CliError> {
        self.manifest.stages.push(StageRecord {
            name: name.to_string(),
            status: StageStatus::Running,
            error: None,
            exit_code: None,
            artifacts: Vec::new(),
            wall_time_s: 0.0,
        });
        self.save_manifest()
    }

    fn current(&mut self) -> &mut StageRecord {
        self.manifest.stages.last_mut().expect("a stage has begun")
    }

    pub fn artifact(&mut self, rel: &str) {
        self.current().artifacts.push(rel.to_string());
    }

    /// Closes the running stage with the outcome of its body.
    pub fn finish(&mut self, wall_time_s: f64, outcome: Result<(), &CliError>) -> Result<(), CliError> {
        let stage = self.current();
        stage.wall_time_s = wall_time_s;
        match outcome {
            Ok(()) => stage.status = StageStatus::Ok,
            Err(e) => {
                stage.status = StageStatus::Failed;
                stage.error = Some(e.to_string());
                stage.exit_code = Some(e.code());
            }
        }
        self.save_manifest()
    }
}

pub fn read_manifest(run: &Path) -> Result<Manifest, CliError> {
    let p = run.join(MANIFEST);
    let text = fs::read_to_string(&p).map_err(io(format!("cannot read {}", p.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", p.display())))
}
