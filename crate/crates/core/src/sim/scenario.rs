use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::grid::GridCase;

/// Version tag of the scenario wire format.
pub const SCENARIO_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultKind {
    ThreePhase,
    Slg,
    LineTrip,
    GenTrip,
}

impl FaultKind {
    pub const ALL: [FaultKind; 4] = [FaultKind::ThreePhase, FaultKind::Slg, FaultKind::LineTrip, FaultKind::GenTrip];

    /// Bus faults carry an impedance and are located at a bus.
    pub fn is_bus_fault(self) -> bool {
        matches!(self, FaultKind::ThreePhase | FaultKind::Slg)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FaultKind::ThreePhase => "three_phase",
            FaultKind::Slg => "slg",
            FaultKind::LineTrip => "line_trip",
            FaultKind::GenTrip => "gen_trip",
        }
    }
}

impl fmt::Display for FaultKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ClearingAction {
    #[default]
    RemoveFault,
    TripLine,
}

/// Fault impedance in ohms at the faulted bus voltage level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultImpedance {
    pub r_f: f64,
    pub x_f: f64,
}

/// One disturbance experiment.
///
/// `t_fault` and `t_clear` are absolute simulation times in seconds;
/// `horizon` is the length of the observed window that starts at `t_fault`.
/// `location` is a bus id for bus faults, an index into `GridCase::lines` for
/// line trips and an index into `GridCase::generators` for generator trips.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub fault_kind: FaultKind,
    pub location: usize,
    #[serde(default = "default_t_fault")]
    pub t_fault: f64,
    pub t_clear: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z_fault: Option<FaultImpedance>,
    #[serde(default)]
    pub clearing_action: ClearingAction,
    /// Line opened by a `trip_line` clearing; chosen automatically when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clear_line: Option<usize>,
    #[serde(default = "one")]
    pub load_scale: f64,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_hint: Option<String>,
}

fn default_t_fault() -> f64 {
    1.0
}

fn one() -> f64 {
    1.0
}

fn default_horizon() -> f64 {
    5.0
}

/// Accepted range of the load multiplier.
pub const LOAD_SCALE_RANGE: (f64, f64) = (0.5, 1.5);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IssueCode {
    UnknownBus,
    UnknownLine,
    UnknownGenerator,
    Ordering,
    Impedance,
    LoadScale,
    Horizon,
    Islanding,
}

/// Machine-readable validation finding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioIssue {
    pub field: String,
    pub code: IssueCode,
    pub message: String,
}

impl fmt::Display for ScenarioIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

impl Scenario {
    /// Template for a bus fault with the given clearing duration.
    pub fn bus_fault(kind: FaultKind, bus: usize, t_fault: f64, duration: f64, z: FaultImpedance) -> Self {
        Scenario {
            fault_kind: kind,
            location: bus,
            t_fault,
            t_clear: t_fault + duration,
            z_fault: Some(z),
            clearing_action: ClearingAction::RemoveFault,
            clear_line: None,
            load_scale: 1.0,
            horizon: default_horizon(),
            label_hint: None,
        }
    }

    /// Fault-on duration in seconds.
    pub fn duration(&self) -> f64 {
        self.t_clear - self.t_fault
    }

    /// End of the observed window.
    pub fn t_end(&self) -> f64 {
        self.t_fault + self.horizon
    }

    /// Line removed by this scenario (line trips, or `trip_line` clearing).
    pub fn removed_line(&self, case: &GridCase) -> Option<usize> {
        match self.fault_kind {
            FaultKind::LineTrip => Some(self.location),
            FaultKind::ThreePhase | FaultKind::Slg if self.clearing_action == ClearingAction::TripLine => {
                self.clear_line.or_else(|| auto_clear_line(case, self.location))
            }
            _ => None,
        }
    }

    /// Checks the scenario against a case; an empty list means valid.
    pub fn check(&self, case: &GridCase) -> Vec<ScenarioIssue> {
        let mut issues = Vec::new();
        let mut push = |field: &str, code: IssueCode, message: String| {
            issues.push(ScenarioIssue { field: field.to_string(), code, message });
        };

        match self.fault_kind {
            FaultKind::ThreePhase | FaultKind::Slg => {
                if case.bus_index(self.location).is_none() {
                    push("location", IssueCode::UnknownBus, format!("unknown bus {}", self.location));
                }
                match self.z_fault {
                    None => push("z_fault", IssueCode::Impedance, "bus faults require r_f and x_f".into()),
                    Some(z) => {
                        let finite = z.r_f.is_finite() && z.x_f.is_finite();
                        if !finite || z.r_f < 0.0 || z.x_f < 0.0 || (z.r_f == 0.0 && z.x_f == 0.0) {
                            push(
                                "z_fault",
                                IssueCode::Impedance,
                                format!("fault impedance must be non-negative and non-zero (r_f={}, x_f={})", z.r_f, z.x_f),
                            );
                        }
                    }
                }
                if self.clearing_action == ClearingAction::TripLine {
                    match self.clear_line {
                        Some(l) if l >= case.lines.len() || !case.lines[l].in_service() => {
                            push("clear_line", IssueCode::UnknownLine, format!("unknown line {l}"))
                        }
                        Some(l) => {
                            if islands_without(case, l) {
                                push("clear_line", IssueCode::Islanding, format!("opening line {l} islands the network"));
                            }
                        }
                        None => {
                            if case.bus_index(self.location).is_some() && auto_clear_line(case, self.location).is_none() {
                                push(
                                    "clear_line",
                                    IssueCode::Islanding,
                                    format!("no line at bus {} can be opened without islanding", self.location),
                                );
                            }
                        }
                    }
                }
            }
            FaultKind::LineTrip => {
                if self.location >= case.lines.len() || !case.lines[self.location].in_service() {
                    push("location", IssueCode::UnknownLine, format!("unknown line {}", self.location));
                } else if islands_without(case, self.location) {
                    push("location", IssueCode::Islanding, format!("tripping line {} islands the network", self.location));
                }
            }
            FaultKind::GenTrip => {
                if self.location >= case.generators.len() {
                    push("location", IssueCode::UnknownGenerator, format!("unknown generator {}", self.location));
                }
            }
        }

        let times_finite = self.t_fault.is_finite() && self.t_clear.is_finite() && self.horizon.is_finite();
        if !times_finite || self.horizon <= 0.0 {
            push("horizon", IssueCode::Horizon, format!("horizon must be positive and finite (got {})", self.horizon));
        }
        if !(self.t_fault >= 0.0) {
            push("t_fault", IssueCode::Ordering, format!("t_fault ({}) must be non-negative", self.t_fault));
        }
        if !(self.t_clear > self.t_fault) {
            push(
                "t_clear",
                IssueCode::Ordering,
                format!("t_clear ({}) must be later than t_fault ({})", self.t_clear, self.t_fault),
            );
        } else if self.t_clear > self.t_end() + 1e-12 {
            push(
                "t_clear",
                IssueCode::Ordering,
                format!(
                    "t_clear ({}) must not exceed the end of the window t_fault + horizon ({})",
                    self.t_clear,
                    self.t_end()
                ),
            );
        }
        let (lo, hi) = LOAD_SCALE_RANGE;
        if !(self.load_scale >= lo && self.load_scale <= hi) {
            push(
                "load_scale",
                IssueCode::LoadScale,
                format!("load_scale ({}) must lie in [{lo}, {hi}]", self.load_scale),
            );
        }
        issues
    }
}

fn islands_without(case: &GridCase, line: usize) -> bool {
    let removed: BTreeSet<usize> = [line].into_iter().collect();
    case.islands(&removed).len() > 1
}

/// Lowest-index in-service line at `bus` whose opening keeps the network whole.
pub fn auto_clear_line(case: &GridCase, bus: usize) -> Option<usize> {
    case.lines
        .iter()
        .enumerate()
        .filter(|(_, l)| l.in_service() && (l.from == bus || l.to == bus))
        .map(|(k, _)| k)
        .find(|&k| !islands_without(case, k))
}
