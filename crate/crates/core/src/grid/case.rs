//! Network case description and the case-file reader.
//!
//! Case files are TOML documents with top-level `name`, `f0_hz`, `sbase_mva`
//! and the record arrays `buses`, `lines` and `generators`. Quantities are
//! per-unit on `sbase_mva` unless the field name carries a unit suffix.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::GridError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BusKind {
    Slack,
    Pv,
    Pq,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bus {
    pub id: usize,
    pub kind: BusKind,
    pub base_kv: f64,
    #[serde(default = "one")]
    pub v_setpoint: f64,
    #[serde(default)]
    pub p_load: f64,
    #[serde(default)]
    pub q_load: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LineStatus {
    #[default]
    In,
    Out,
}

/// Series branch (line or transformer). The tap ratio applies on the `from` side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Line {
    pub from: usize,
    pub to: usize,
    #[serde(default)]
    pub r: f64,
    pub x: f64,
    #[serde(default)]
    pub b_shunt: f64,
    #[serde(default = "one")]
    pub tap: f64,
    #[serde(default)]
    pub status: LineStatus,
}

impl Line {
    pub fn in_service(&self) -> bool {
        self.status == LineStatus::In
    }
}

/// Classical-model synchronous machine. `h`, `d` and `xdp` are on the machine
/// base `mbase`; dispatch and reactive limits are on the system base.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Generator {
    pub bus: usize,
    #[serde(default)]
    pub p_dispatch: f64,
    #[serde(default = "default_q_limits")]
    pub q_limits: [f64; 2],
    pub h: f64,
    #[serde(default)]
    pub d: f64,
    pub xdp: f64,
    pub mbase: f64,
}

fn one() -> f64 {
    1.0
}

fn default_q_limits() -> [f64; 2] {
    [-9999.0, 9999.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridCase {
    pub name: String,
    pub f0_hz: f64,
    pub sbase_mva: f64,
    pub buses: Vec<Bus>,
    #[serde(default)]
    pub lines: Vec<Line>,
    #[serde(default)]
    pub generators: Vec<Generator>,
}

impl GridCase {
    /// Parse and validate case-file text.
    pub fn parse(text: &str) -> Result<Self, GridError> {
        parse_case(text)
    }

    pub fn n_bus(&self) -> usize {
        self.buses.len()
    }

    pub fn n_gen(&self) -> usize {
        self.generators.len()
    }

    /// Internal (contiguous) index of the bus with external id `id`.
    pub fn bus_index(&self, id: usize) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    pub fn slack_index(&self) -> usize {
        self.buses
            .iter()
            .position(|b| b.kind == BusKind::Slack)
            .expect("validated case has a slack bus")
    }

    /// Bus ids in internal order.
    pub fn bus_ids(&self) -> Vec<usize> {
        self.buses.iter().map(|b| b.id).collect()
    }

    /// Inertia constant of generator `g` converted to the system base.
    pub fn h_sys(&self, g: usize) -> f64 {
        let gen = &self.generators[g];
        gen.h * gen.mbase / self.sbase_mva
    }

    pub fn d_sys(&self, g: usize) -> f64 {
        let gen = &self.generators[g];
        gen.d * gen.mbase / self.sbase_mva
    }

    pub fn xdp_sys(&self, g: usize) -> f64 {
        let gen = &self.generators[g];
        gen.xdp * self.sbase_mva / gen.mbase
    }

    /// Copy of the case with every load multiplied by `factor`.
    pub fn with_load_scale(&self, factor: f64) -> GridCase {
        let mut out = self.clone();
        for bus in &mut out.buses {
            bus.p_load *= factor;
            bus.q_load *= factor;
        }
        out
    }

    /// Ohms to per-unit at the voltage level of bus `bus_id`.
    pub fn ohms_to_pu(&self, bus_id: usize, ohms: f64) -> Option<f64> {
        let bus = &self.buses[self.bus_index(bus_id)?];
        let z_base = bus.base_kv * bus.base_kv / self.sbase_mva;
        Some(ohms / z_base)
    }

    /// Checks every structural invariant of the case.
    pub fn validate(&self) -> Result<(), GridError> {
        let schema = |path: String, message: String| GridError::Schema { path, message };

        if !(self.f0_hz.is_finite() && self.f0_hz > 0.0) {
            return Err(schema("f0_hz".into(), "must be a positive frequency".into()));
        }
        if !(self.sbase_mva.is_finite() && self.sbase_mva > 0.0) {
            return Err(schema("sbase_mva".into(), "must be positive".into()));
        }
        if self.buses.is_empty() {
            return Err(schema("buses".into(), "case has no buses".into()));
        }

        let mut seen: HashMap<usize, usize> = HashMap::new();
        for (i, bus) in self.buses.iter().enumerate() {
            let path = format!("buses[{i}]");
            if let Some(first) = seen.insert(bus.id, i) {
                return Err(GridError::DuplicateBus {
                    path,
                    id: bus.id,
                    first: format!("buses[{first}]"),
                });
            }
            for (field, v) in [
                ("base_kv", bus.base_kv),
                ("v_setpoint", bus.v_setpoint),
                ("p_load", bus.p_load),
                ("q_load", bus.q_load),
            ] {
                if !v.is_finite() {
                    return Err(schema(format!("{path}.{field}"), "must be finite".into()));
                }
            }
            if bus.base_kv <= 0.0 {
                return Err(schema(format!("{path}.base_kv"), "must be positive".into()));
            }
            if bus.v_setpoint <= 0.0 {
                return Err(schema(format!("{path}.v_setpoint"), "must be positive".into()));
            }
        }

        let slacks: Vec<usize> = self
            .buses
            .iter()
            .enumerate()
            .filter(|(_, b)| b.kind == BusKind::Slack)
            .map(|(i, _)| i)
            .collect();
        match slacks.len() {
            0 => return Err(GridError::NoSlack),
            1 => {}
            _ => {
                return Err(schema(
                    format!("buses[{}].kind", slacks[1]),
                    format!("second slack bus (first is buses[{}])", slacks[0]),
                ))
            }
        }

        for (i, line) in self.lines.iter().enumerate() {
            let path = format!("lines[{i}]");
            for (field, id) in [("from", line.from), ("to", line.to)] {
                if !seen.contains_key(&id) {
                    return Err(schema(format!("{path}.{field}"), format!("unknown bus {id}")));
                }
            }
            if line.from == line.to {
                return Err(schema(path, format!("line connects bus {} to itself", line.from)));
            }
            for (field, v) in [("r", line.r), ("x", line.x), ("b_shunt", line.b_shunt), ("tap", line.tap)] {
                if !v.is_finite() {
                    return Err(schema(format!("{path}.{field}"), "must be finite".into()));
                }
            }
            if line.x == 0.0 {
                return Err(schema(format!("{path}.x"), "series reactance must be non-zero".into()));
            }
            if line.tap <= 0.0 {
                return Err(schema(format!("{path}.tap"), "tap ratio must be positive".into()));
            }
        }

        if self.generators.len() < 2 {
            return Err(schema(
                "generators".into(),
                format!("need at least 2 generators, found {}", self.generators.len()),
            ));
        }
        for (i, gen) in self.generators.iter().enumerate() {
            let path = format!("generators[{i}]");
            if !seen.contains_key(&gen.bus) {
                return Err(schema(format!("{path}.bus"), format!("unknown bus {}", gen.bus)));
            }
            for (field, v) in [
                ("p_dispatch", gen.p_dispatch),
                ("h", gen.h),
                ("d", gen.d),
                ("xdp", gen.xdp),
                ("mbase", gen.mbase),
            ] {
                if !v.is_finite() {
                    return Err(schema(format!("{path}.{field}"), "must be finite".into()));
                }
            }
            if gen.h <= 0.0 {
                return Err(schema(format!("{path}.h"), "inertia must be positive".into()));
            }
            if gen.xdp <= 0.0 {
                return Err(schema(format!("{path}.xdp"), "transient reactance must be positive".into()));
            }
            if gen.mbase <= 0.0 {
                return Err(schema(format!("{path}.mbase"), "machine base must be positive".into()));
            }
            if gen.d < 0.0 {
                return Err(schema(format!("{path}.d"), "damping must be non-negative".into()));
            }
            if gen.q_limits[0] > gen.q_limits[1] {
                return Err(schema(format!("{path}.q_limits"), "q_min exceeds q_max".into()));
            }
        }

        let islands = self.islands(&BTreeSet::new());
        if islands.len() > 1 {
            let stranded: Vec<usize> = islands[1..].iter().flatten().map(|&i| self.buses[i].id).collect();
            return Err(GridError::Disconnected { buses: stranded });
        }
        Ok(())
    }

    /// Connected components (internal bus indices) over in-service lines not in
    /// `removed`. The component holding the slack bus comes first.
    pub fn islands(&self, removed: &BTreeSet<usize>) -> Vec<Vec<usize>> {
        let n = self.buses.len();
        let pos: HashMap<usize, usize> = self.buses.iter().enumerate().map(|(i, b)| (b.id, i)).collect();
        let mut adj = vec![Vec::new(); n];
        for (k, line) in self.lines.iter().enumerate() {
            if !line.in_service() || removed.contains(&k) {
                continue;
            }
            let (Some(&a), Some(&b)) = (pos.get(&line.from), pos.get(&line.to)) else {
                continue;
            };
            adj[a].push(b);
            adj[b].push(a);
        }
        let start = self
            .buses
            .iter()
            .position(|b| b.kind == BusKind::Slack)
            .unwrap_or(0);
        let mut comp = vec![usize::MAX; n];
        let mut out = Vec::new();
        for root in std::iter::once(start).chain(0..n) {
            if comp[root] != usize::MAX {
                continue;
            }
            let id = out.len();
            let mut members = vec![root];
            comp[root] = id;
            let mut stack = vec![root];
            while let Some(u) = stack.pop() {
                for &v in &adj[u] {
                    if comp[v] == usize::MAX {
                        comp[v] = id;
                        members.push(v);
                        stack.push(v);
                    }
                }
            }
            members.sort_unstable();
            out.push(members);
        }
        out
    }
}

/// Parses case-file text into a validated [`GridCase`].
pub fn parse_case(text: &str) -> Result<GridCase, GridError> {
    let de = toml::Deserializer::parse(text).map_err(|e| GridError::Syntax(e.to_string()))?;
    let case: GridCase = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        GridError::Schema {
            path: if path == "." { "<root>".into() } else { path },
            message: e.into_inner().message().trim().to_string(),
        }
    })?;
    case.validate()?;
    Ok(case)
}

/// Serializes a case back to case-file text.
pub fn write_case(case: &GridCase) -> String {
    toml::to_string(case).expect("case serializes")
}
