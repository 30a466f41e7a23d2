use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tsa_agent::LabelMode;
use tsa_core::cases;
use tsa_core::dataset::FeatureScheme;
use tsa_core::grid::GridCase;
use tsa_core::labeling::StabilityThresholds;
use tsa_nas::{Requirements, SearchSpace};

use crate::error::CliError;

/// Chat/embedding provider of a run. Exactly one variant is present in the
/// TOML form (`[backend.mock]` or `[backend.remote]`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum BackendConfig {
    Mock {
        /// Recorded responses; prompts missing from the script fall back to
        /// the offline policies.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        script: Option<PathBuf>,
    },
    Remote {
        base_url: String,
        model: String,
        embed_model: String,
        #[serde(default = "ten")]
        max_requests_per_minute: usize,
    },
}

fn ten() -> usize {
    10
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig::Mock { script: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignSection {
    /// Study request used when none is given on the command line.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request: Option<String>,
    /// Smallest acceptable dataset after balancing.
    #[serde(default)]
    pub min_samples: usize,
    #[serde(default)]
    pub labels: LabelMode,
    /// Minority share target; absent disables balancing.
    #[serde(default = "half", skip_serializing_if = "Option::is_none")]
    pub balance: Option<f64>,
    #[serde(default = "three")]
    pub max_retries: usize,
}

fn half() -> Option<f64> {
    Some(0.5)
}

fn three() -> usize {
    3
}

impl Default for CampaignSection {
    fn default() -> Self {
        Self { request: None, min_samples: 0, labels: LabelMode::Binary, balance: half(), max_retries: three() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSection {
    /// Name of a bundled search space (`desk` or `full`).
    #[serde(default = "desk")]
    pub space: String,
    #[serde(default = "four")]
    pub candidates_per_iteration: usize,
    #[serde(default = "thirty")]
    pub epoch_cap: usize,
    #[serde(default = "yes")]
    pub retrain_winner: bool,
}

fn desk() -> String {
    "desk".into()
}

fn four() -> usize {
    4
}

fn thirty() -> usize {
    30
}

fn yes() -> bool {
    true
}

impl Default for SearchSection {
    fn default() -> Self {
        Self { space: desk(), candidates_per_iteration: four(), epoch_cap: thirty(), retrain_winner: yes() }
    }
}

/// Everything a run needs besides the secret key. Relative paths in a
/// config file are resolved against the file's directory at load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Bundled case name or path to a case file.
    #[serde(default = "wscc9")]
    pub case: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub backend: BackendConfig,
    #[serde(default)]
    pub thresholds: StabilityThresholds,
    #[serde(default)]
    pub scheme: FeatureScheme,
    #[serde(default)]
    pub campaign: CampaignSection,
    #[serde(default)]
    pub requirements: Requirements,
    #[serde(default)]
    pub search: SearchSection,
    #[serde(default = "runs")]
    pub output_dir: PathBuf,
}

fn wscc9() -> String {
    "wscc9".into()
}

fn runs() -> PathBuf {
    PathBuf::from("runs")
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            case: wscc9(),
            seed: 0,
            backend: BackendConfig::default(),
            thresholds: StabilityThresholds::default(),
            scheme: FeatureScheme::default(),
            campaign: CampaignSection::default(),
            requirements: Requirements::default(),
            search: SearchSection::default(),
            output_dir: runs(),
        }
    }
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| invalid(format!("config: {e}")))
    }

    /// Reads, resolves and validates a config file.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| invalid(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let join = |p: &Path| if p.is_relative() { base.join(p) } else { p.to_path_buf() };
        if cases::bundled_text(&self.case).is_none() {
            self.case = join(Path::new(&self.case)).to_string_lossy().into_owned();
        }
        if let BackendConfig::Mock { script: Some(s) } = &mut self.backend {
            *s = join(s);
        }
        self.output_dir = join(&self.output_dir);
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if cases::bundled_text(&self.case).is_none() && !Path::new(&self.case).is_file() {
            return Err(invalid(format!(
                "case {} is neither a bundled case ({}) nor an existing file",
                self.case,
                cases::NAMES.join(", ")
            )));
        }
        if let BackendConfig::Mock { script: Some(s) } = &self.backend {
            if !s.is_file() {
                return Err(invalid(format!("mock script {} does not exist", s.display())));
            }
        }
        if let BackendConfig::Remote { max_requests_per_minute: 0, .. } = &self.backend {
            return Err(invalid("backend.remote.max_requests_per_minute must be positive"));
        }
        self.thresholds.validate().map_err(|e| invalid(format!("thresholds: {e}")))?;
        self.requirements.validate().map_err(|e| invalid(format!("requirements: {e}")))?;
        self.space()?;
        if self.search.candidates_per_iteration == 0 {
            return Err(invalid("search.candidates_per_iteration must be positive"));
        }
        if self.search.epoch_cap == 0 {
            return Err(invalid("search.epoch_cap must be positive"));
        }
        if let Some(b) = self.campaign.balance {
            if !(b > 0.0 && b <= 0.5) {
                return Err(invalid(format!("campaign.balance {b} must lie in (0, 0.5]")));
            }
        }
        Ok(())
    }

    pub fn load_case(&self) -> Result<GridCase, CliError> {
        if let Some(case) = cases::bundled(&self.case) {
            return Ok(case);
        }
        let text = std::fs::read_to_string(&self.case).map_err(|e| invalid(format!("cannot read case {}: {e}", self.case)))?;
        GridCase::parse(&text).map_err(|e| invalid(format!("case {}: {e}", self.case)))
    }

    pub fn space(&self) -> Result<SearchSpace, CliError> {
        SearchSpace::preset(&self.search.space).map_err(|e| invalid(format!("search.space: {e}")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }
}
