//! Deterministic rule-based stand-in for the model, used by the offline
//! backend when the mock script has no entry for a prompt.

use std::sync::LazyLock;

use regex::Regex;
use tsa_core::sim::{FaultImpedance, FaultKind, Scenario, LOAD_SCALE_RANGE};
use tsa_llm::{render_block, ChatExchange, MockPolicy, Role};

use crate::request::{Intent, SubRequest, SubRequestList, SCENARIO_SCHEMA, SUBREQUEST_SCHEMA};

static NUMBER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\d+(?:\.\d+)?").unwrap());
static BUSES: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\bbus(?:es)?\s+(\d+(?:\s*(?:,|and|to|-|–)\s*\d+)*)").unwrap());
static LINES: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\blines?\s+(\d+(?:\s*(?:,|and)\s*\d+)*)").unwrap());
static GENS: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\bgenerators?\s+(\d+(?:\s*(?:,|and)\s*\d+)*)").unwrap());
static MS_RANGE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(\d+(?:\.\d+)?)\s*(?:ms)?\s*(?:-|–|to)\s*(\d+(?:\.\d+)?)\s*ms").unwrap());
static MS_STEP: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?:in\s+|every\s+|step(?:s)?\s+(?:of\s+)?)(\d+(?:\.\d+)?)\s*ms(?:\s+steps?)?").unwrap());
static MS_SINGLE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(\d+(?:\.\d+)?)\s*ms").unwrap());
static LOAD: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"load(?:\s+(?:level|scale|range|multiplier))?\s+(?:of\s+|between\s+|from\s+)?(\d+(?:\.\d+)?)(?:\s*(?:-|–|to|and)\s*(\d+(?:\.\d+)?))?").unwrap()
});
static COUNT: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(\d+)\s+(?:[a-z_-]+\s+){0,3}?(?:scenarios|samples|cases|simulations)\b").unwrap());
static BALANCE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"balance(?:d)?(?:\s+target)?\s+(?:of\s+)?(0?\.\d+)").unwrap());
static T_FAULT: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?:inception|applied|starting)\s+(?:time\s+)?(?:at\s+)?(?:t\s*=\s*)?(\d+(?:\.\d+)?)\s*s\b").unwrap());
static R_F: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"r_?f\s*(?:=|of)?\s*(\d+(?:\.\d+)?)").unwrap());
static X_F: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"x_?f\s*(?:=|of)?\s*(\d+(?:\.\d+)?)").unwrap());
static BUS_IDS: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"buses with ids \[([\d, ]*)\]").unwrap());
static LINE_COUNT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(\d+) in-service lines").unwrap());
static GEN_COUNT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(\d+) generators").unwrap());
static UNKNOWN_FIELD: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"unknown field `(\w+)`").unwrap());

fn numbers(text: &str) -> Vec<f64> {
    NUMBER.find_iter(text).filter_map(|m| m.as_str().parse().ok()).collect()
}

/// Ids from a list such as "4, 5 and 7" or a range such as "4 to 9".
fn id_list(text: &str) -> Vec<usize> {
    let ids: Vec<usize> = numbers(text).into_iter().map(|v| v as usize).collect();
    let is_range = ids.len() == 2 && (text.contains("to") || text.contains('-') || text.contains('–'));
    if is_range && ids[0] <= ids[1] {
        (ids[0]..=ids[1]).collect()
    } else {
        ids
    }
}

fn section<'t>(text: &'t str, start: &str, end: &str) -> Option<&'t str> {
    let from = text.find(start)? + start.len();
    let rest = &text[from..];
    Some(rest[..rest.find(end).unwrap_or(rest.len())].trim())
}

fn first_capture(re: &Regex, text: &str) -> Option<f64> {
    re.captures(text).and_then(|c| c[1].parse().ok())
}

/// Reads one clause of a study request.
pub fn parse_clause(clause: &str) -> Option<SubRequest> {
    let text = clause.to_lowercase();
    let mut kinds = Vec::new();
    let has = |words: &[&str]| words.iter().any(|w| text.contains(w));
    if has(&["three-phase", "three phase", "3-phase", "3 phase", "three_phase"]) {
        kinds.push(FaultKind::ThreePhase);
    }
    if has(&["single line to ground", "single-line-to-ground", "line-to-ground", "slg"]) {
        kinds.push(FaultKind::Slg);
    }
    if has(&["line trip", "trip line", "line outage", "line_trip", "tripping line"]) {
        kinds.push(FaultKind::LineTrip);
    }
    if has(&["generator trip", "gen trip", "loss of generator", "gen_trip", "tripping generator"]) {
        kinds.push(FaultKind::GenTrip);
    }

    let mut sub = SubRequest::new(Intent::FaultScenario);
    let mut recognized = !kinds.is_empty();
    // Durations and counts are masked so they cannot extend an id list.
    let masked = COUNT.replace_all(&MS_SINGLE.replace_all(&text, " ; "), " ; ").into_owned();
    let mut locations = Vec::new();
    if let Some(c) = BUSES.captures(&masked) {
        locations = id_list(&c[1]);
    } else if let Some(c) = LINES.captures(&masked).filter(|_| kinds.contains(&FaultKind::LineTrip)) {
        locations = id_list(&c[1]);
    } else if let Some(c) = GENS.captures(&masked).filter(|_| kinds.contains(&FaultKind::GenTrip)) {
        locations = id_list(&c[1]);
    }
    recognized |= !locations.is_empty();
    sub.locations = locations;

    let mut rest = text.clone();
    if let Some(c) = MS_STEP.captures(&text) {
        sub.clearing_step_ms = c[1].parse().ok();
        rest = rest.replace(&c[0], " ");
    }
    if let Some(c) = MS_RANGE.captures(&rest) {
        let (a, b): (f64, f64) = (c[1].parse().ok()?, c[2].parse().ok()?);
        sub.clearing_ms = Some([a.min(b), a.max(b)]);
    } else if let Some(v) = first_capture(&MS_SINGLE, &rest) {
        sub.clearing_ms = Some([v, v]);
    }
    recognized |= sub.clearing_ms.is_some();

    if let Some(c) = LOAD.captures(&text) {
        let a: f64 = c[1].parse().ok()?;
        let b: f64 = c.get(2).and_then(|m| m.as_str().parse().ok()).unwrap_or(a);
        sub.load_range = Some([a.min(b), a.max(b)]);
    }
    if let Some(n) = COUNT.captures(&text).and_then(|c| c[1].parse::<usize>().ok()) {
        sub.count = n.max(1);
        recognized = true;
    }
    sub.balance_target = first_capture(&BALANCE, &text).or_else(|| text.contains("balanced").then_some(0.5));
    sub.t_fault = first_capture(&T_FAULT, &text);
    sub.r_f = first_capture(&R_F, &text);
    sub.x_f = first_capture(&X_F, &text);
    sub.fault_kinds = kinds;

    sub.intent = if text.contains("sweep") || text.contains("sweeping") {
        Intent::Sweep
    } else if sub.count > 1 || text.contains("dataset") {
        Intent::DatasetGoal
    } else {
        Intent::FaultScenario
    };
    recognized.then_some(sub)
}

/// Rule-based decomposition of a whole request: one sub-request per clause.
pub fn decompose_request(request: &str) -> Vec<SubRequest> {
    request.split([';', '\n']).filter_map(parse_clause).collect()
}

fn scenario_for(sub: &SubRequest, bus_ids: &[usize]) -> Scenario {
    let kind = sub.fault_kinds.first().copied().unwrap_or(FaultKind::ThreePhase);
    let location = sub.locations.first().copied().unwrap_or(match kind {
        FaultKind::ThreePhase | FaultKind::Slg => bus_ids.last().copied().unwrap_or(1),
        _ => 0,
    });
    let t_fault = sub.t_fault.unwrap_or(1.0);
    let duration = sub.clearing_ms.map_or(0.1, |[lo, _]| lo / 1000.0);
    let z = FaultImpedance { r_f: sub.r_f.unwrap_or(0.01), x_f: sub.x_f.unwrap_or(0.001) };
    let mut s = Scenario::bus_fault(kind, location, t_fault, duration, z);
    if !kind.is_bus_fault() {
        s.z_fault = None;
    }
    if let Some([lo, hi]) = sub.load_range {
        s.load_scale = ((lo + hi) / 2.0 * 100.0).round() / 100.0;
    }
    s
}

/// Element ranges parsed back out of the case description in the system message.
#[derive(Debug, Default)]
struct CaseFacts {
    bus_ids: Vec<usize>,
    n_lines: usize,
    n_gens: usize,
}

impl CaseFacts {
    fn from_system(text: &str) -> Self {
        let bus_ids = BUS_IDS.captures(text).map(|c| numbers(&c[1]).into_iter().map(|v| v as usize).collect()).unwrap_or_default();
        let count = |re: &Regex| re.captures(text).and_then(|c| c[1].parse().ok()).unwrap_or(0);
        CaseFacts { bus_ids, n_lines: count(&LINE_COUNT), n_gens: count(&GEN_COUNT) }
    }

    fn nearest_bus(&self, id: usize) -> usize {
        self.bus_ids.iter().copied().min_by_key(|b| (b.abs_diff(id), *b)).unwrap_or(1)
    }
}

fn fix_table(table: &mut toml::Table, errors: &str, facts: &CaseFacts) {
    let known = [
        "fault_kind", "location", "t_fault", "t_clear", "z_fault", "clearing_action", "clear_line", "load_scale", "horizon",
        "label_hint",
    ];
    table.retain(|k, _| known.contains(&k));
    for c in UNKNOWN_FIELD.captures_iter(errors) {
        table.remove(&c[1]);
    }
    let get_f = |t: &toml::Table, k: &str| t.get(k).and_then(|v| v.as_float().or(v.as_integer().map(|i| i as f64)));
    let location = table.get("location").and_then(|v| v.as_integer()).unwrap_or(0).max(0) as usize;
    if errors.contains("unknown bus") {
        table.insert("location".into(), (facts.nearest_bus(location) as i64).into());
    }
    if errors.contains("unknown line") || errors.contains("islands the network") {
        if table.get("fault_kind").and_then(|v| v.as_str()) == Some("line_trip") {
            let next = if facts.n_lines > 0 { (location + 1) % facts.n_lines } else { 0 };
            table.insert("location".into(), (next as i64).into());
        } else {
            table.insert("clearing_action".into(), "remove_fault".into());
            table.remove("clear_line");
        }
    }
    if errors.contains("unknown generator") {
        table.insert("location".into(), (location.min(facts.n_gens.saturating_sub(1)) as i64).into());
    }
    if errors.contains("t_fault") || errors.contains("t_clear") {
        let t_fault = get_f(table, "t_fault").filter(|t| t.is_finite() && *t >= 0.0).unwrap_or(1.0);
        table.insert("t_fault".into(), t_fault.into());
        table.insert("t_clear".into(), (((t_fault + 0.1) * 1e6).round() / 1e6).into());
    }
    if errors.contains("horizon") {
        table.insert("horizon".into(), 5.0.into());
    }
    if errors.contains("z_fault") || errors.contains("missing field `r_f`") || errors.contains("missing field `x_f`") {
        let mut z = toml::Table::new();
        z.insert("r_f".into(), 0.01.into());
        z.insert("x_f".into(), 0.001.into());
        table.insert("z_fault".into(), z.into());
    }
    if errors.contains("load_scale") {
        let (lo, hi) = LOAD_SCALE_RANGE;
        let v = get_f(table, "load_scale").filter(|v| v.is_finite()).unwrap_or(1.0).clamp(lo, hi);
        table.insert("load_scale".into(), v.into());
    }
    for (key, default) in [("fault_kind", toml::Value::from("three_phase")), ("t_clear", 1.1.into())] {
        if !table.contains_key(key) {
            table.insert(key.into(), default);
        }
    }
    if !table.contains_key("location") {
        table.insert("location".into(), (facts.bus_ids.last().copied().unwrap_or(1) as i64).into());
    }
}

/// Offline answers for the scenario agent's prompts.
#[derive(Debug, Clone, Copy, Default)]
pub struct RulePolicy;

impl RulePolicy {
    fn conversion(&self, user: &str) -> String {
        let request = section(user, "Request:\n", "\n\nEach sub-request").unwrap_or(user);
        let list = SubRequestList { subrequests: decompose_request(request) };
        format!(
            "The request splits into {} sub-request(s).\n\n{}",
            list.subrequests.len(),
            render_block(SUBREQUEST_SCHEMA, &list)
        )
    }

    fn draft(&self, user: &str, facts: &CaseFacts) -> Option<String> {
        let text = section(user, "Sub-request:\n", "\n\nWork step by step")?;
        let sub: SubRequest = toml::from_str(text).ok()?;
        let s = scenario_for(&sub, &facts.bus_ids);
        Some(format!(
            "Fault {} at element {}, cleared after {:.0} ms.\n\n{}",
            s.fault_kind,
            s.location,
            s.duration() * 1000.0,
            render_block(SCENARIO_SCHEMA, &s)
        ))
    }

    fn feedback(&self, user: &str, facts: &CaseFacts) -> Option<String> {
        let errors = section(user, "failed with error: ", ". The issue is likely").unwrap_or_default();
        let previous = section(user, "Previous response:\n", "\n\nGenerate the corrected").unwrap_or_default();
        let body = tsa_llm::extract_blocks(previous)
            .ok()
            .and_then(|blocks| blocks.into_iter().find(|b| b.schema == SCENARIO_SCHEMA))
            .map(|b| b.body)
            .unwrap_or_default();
        let mut table: toml::Table = toml::from_str(&body).unwrap_or_default();
        fix_table(&mut table, errors, facts);
        let fixed = toml::to_string(&table).ok()?;
        Some(format!("Corrected the fields named in the error.\n\n```{SCENARIO_SCHEMA}\n{}\n```", fixed.trim_end()))
    }
}

impl MockPolicy for RulePolicy {
    fn respond(&self, exchange: &ChatExchange) -> Option<String> {
        let system = exchange.messages.iter().find(|m| m.role == Role::System).map_or("", |m| m.content.as_str());
        let facts = CaseFacts::from_system(system);
        let user = exchange.last_user();
        match tsa_llm::task_of(user)? {
            "conversion" => Some(self.conversion(user)),
            "reformat" => {
                let first = exchange.messages.iter().find(|m| m.role == Role::User)?;
                Some(self.conversion(&first.content))
            }
            "architecture" => self.draft(user, &facts),
            "feedback" => self.feedback(user, &facts),
            _ => None,
        }
    }
}
