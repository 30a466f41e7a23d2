use serde::{Deserialize, Serialize};
use tsa_core::sim::FaultKind;

pub const SUBREQUEST_SCHEMA: &str = "subrequests/v1";
pub const SCENARIO_SCHEMA: &str = "scenario/v1";

/// Field reference shown to the model in the conversion prompt.
pub const SUBREQUEST_FIELDS: &str = "\
intent = \"fault_scenario\" | \"sweep\" | \"dataset_goal\"
fault_kinds = [\"three_phase\" | \"slg\" | \"line_trip\" | \"gen_trip\", ...]   # optional
locations = [bus ids, or line/generator indices for trips]          # optional
t_fault = seconds                                                    # optional
clearing_ms = [min, max]                                             # optional, milliseconds
clearing_step_ms = step                                              # optional, sweeps only
load_range = [min, max]                                              # optional, load multiplier
r_f = ohms, x_f = ohms                                               # optional
count = scenarios to generate                                        # default 1
balance_target = minority share                                     # optional";

/// Field reference shown to the model in the drafting prompt.
pub const SCENARIO_FIELDS: &str = "\
fault_kind = \"three_phase\" | \"slg\" | \"line_trip\" | \"gen_trip\"
location = bus id (bus faults), line index (line_trip) or generator index (gen_trip)
t_fault = inception time in seconds
t_clear = clearing time in seconds, later than t_fault
clearing_action = \"remove_fault\" | \"trip_line\"
clear_line = line index opened by trip_line (optional)
load_scale = load multiplier in [0.5, 1.5]
horizon = observed window after inception in seconds (default 5)
[z_fault]
r_f = fault resistance in ohms
x_f = fault reactance in ohms";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Intent {
    FaultScenario,
    Sweep,
    DatasetGoal,
}

/// One simulation intent extracted from a study request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubRequest {
    pub intent: Intent,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fault_kinds: Vec<FaultKind>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub locations: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_fault: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clearing_ms: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clearing_step_ms: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub load_range: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_f: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_f: Option<f64>,
    #[serde(default = "one")]
    pub count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub balance_target: Option<f64>,
}

fn one() -> usize {
    1
}

/// Wire wrapper of the conversion reply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubRequestList {
    pub subrequests: Vec<SubRequest>,
}

pub const DEFAULT_CLEARING_STEP_MS: f64 = 50.0;

impl SubRequest {
    pub fn new(intent: Intent) -> Self {
        SubRequest {
            intent,
            fault_kinds: Vec::new(),
            locations: Vec::new(),
            t_fault: None,
            clearing_ms: None,
            clearing_step_ms: None,
            load_range: None,
            r_f: None,
            x_f: None,
            count: 1,
            balance_target: None,
        }
    }

    /// Structural checks independent of any case.
    pub fn validate(&self) -> Result<(), String> {
        if self.count == 0 {
            return Err("count must be at least 1".into());
        }
        let ordered = |name: &str, r: Option<[f64; 2]>, lo: f64| match r {
            Some([a, b]) if !(a.is_finite() && b.is_finite() && a >= lo && a <= b) => {
                Err(format!("{name} [{a}, {b}] must be finite, at least {lo} and ordered"))
            }
            _ => Ok(()),
        };
        ordered("clearing_ms", self.clearing_ms, 0.0)?;
        ordered("load_range", self.load_range, 0.0)?;
        if let Some(s) = self.clearing_step_ms {
            if !(s.is_finite() && s > 0.0) {
                return Err(format!("clearing_step_ms ({s}) must be positive"));
            }
        }
        if let Some(t) = self.t_fault {
            if !(t.is_finite() && t >= 0.0) {
                return Err(format!("t_fault ({t}) must be non-negative"));
            }
        }
        if let Some(b) = self.balance_target {
            if !(b > 0.0 && b <= 0.5) {
                return Err(format!("balance_target ({b}) must lie in (0, 0.5]"));
            }
        }
        Ok(())
    }

    /// Clearing durations of a sweep in seconds, inclusive of both ends.
    pub fn clearing_grid(&self) -> Vec<f64> {
        let Some([lo, hi]) = self.clearing_ms else { return Vec::new() };
        let step = self.clearing_step_ms.unwrap_or(DEFAULT_CLEARING_STEP_MS);
        let n = ((hi - lo) / step + 1e-9).floor() as usize;
        (0..=n).map(|k| (lo + step * k as f64) / 1000.0).collect()
    }

    /// TOML rendering used in prompts and transcripts.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("sub-request serializes").trim_end().to_string()
    }
}
