//! Bus admittance matrices with fault/outage overlays.
//!
//! Node numbering for the extended matrix: buses in case order, followed by
//! the internal nodes of the in-service generators in generator order.

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{kron_reduce, GridCase, GridError, PowerFlowSolution, ReducedNetwork, C64, CMatrix};

/// Modification applied on top of the base network when staging a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Overlay {
    /// Shunt admittance (per-unit) added at a bus, e.g. a fault.
    Shunt { bus: usize, g: f64, b: f64 },
    /// Line taken out of service, by index into `GridCase::lines`.
    RemoveLine { line: usize },
    /// Generator disconnected, by index into `GridCase::generators`.
    RemoveGenerator { gen: usize },
    /// Constant-impedance loads multiplied by `factor`.
    ScaleLoads { factor: f64 },
}

impl Overlay {
    /// Fault shunt from a per-unit fault impedance.
    pub fn fault(bus: usize, z: C64) -> Self {
        let y = z.inv();
        Overlay::Shunt { bus, g: y.re, b: y.im }
    }
}

#[derive(Debug, Default)]
struct OverlaySet {
    shunts: Vec<(usize, C64)>,
    removed_lines: BTreeSet<usize>,
    removed_gens: BTreeSet<usize>,
    load_factor: f64,
}

fn resolve(case: &GridCase, overlays: &[Overlay]) -> Result<OverlaySet, GridError> {
    let mut set = OverlaySet { load_factor: 1.0, ..Default::default() };
    for ov in overlays {
        match *ov {
            Overlay::Shunt { bus, g, b } => {
                let i = case.bus_index(bus).ok_or(GridError::UnknownElement { kind: "bus", id: bus })?;
                set.shunts.push((i, C64::new(g, b)));
            }
            Overlay::RemoveLine { line } => {
                if line >= case.lines.len() {
                    return Err(GridError::UnknownElement { kind: "line", id: line });
                }
                set.removed_lines.insert(line);
            }
            Overlay::RemoveGenerator { gen } => {
                if gen >= case.generators.len() {
                    return Err(GridError::UnknownElement { kind: "generator", id: gen });
                }
                set.removed_gens.insert(gen);
            }
            Overlay::ScaleLoads { factor } => set.load_factor *= factor,
        }
    }
    if set.removed_gens.len() == case.generators.len() {
        return Err(GridError::NoGenerators);
    }
    Ok(set)
}

fn stamp_lines(case: &GridCase, removed: &BTreeSet<usize>, y: &mut CMatrix) {
    for (k, line) in case.lines.iter().enumerate() {
        if !line.in_service() || removed.contains(&k) {
            continue;
        }
        let (Some(f), Some(t)) = (case.bus_index(line.from), case.bus_index(line.to)) else {
            continue;
        };
        let ys = C64::new(line.r, line.x).inv();
        let bc = C64::new(0.0, line.b_shunt / 2.0);
        let tap = line.tap;
        y[(f, f)] += (ys + bc) / (tap * tap);
        y[(t, t)] += ys + bc;
        y[(f, t)] -= ys / tap;
        y[(t, f)] -= ys / tap;
    }
}

/// Bus admittance matrix of the lines alone (the power-flow network).
pub fn network_admittance(case: &GridCase) -> CMatrix {
    let n = case.n_bus();
    let mut y = DMatrix::from_element(n, n, C64::new(0.0, 0.0));
    stamp_lines(case, &BTreeSet::new(), &mut y);
    y
}

/// Per-generator complex output (system base) at the operating point.
/// Bus totals are split in proportion to machine base; non-slack buses keep
/// each unit's scheduled active power.
fn generator_outputs(case: &GridCase, op: &PowerFlowSolution) -> Vec<C64> {
    let mut out = vec![C64::new(0.0, 0.0); case.n_gen()];
    for (i, bus) in case.buses.iter().enumerate() {
        let units: Vec<usize> = (0..case.n_gen()).filter(|&g| case.generators[g].bus == bus.id).collect();
        if units.is_empty() {
            continue;
        }
        let p_total = op.p_inj[i] + bus.p_load;
        let q_total = op.q_inj[i] + bus.q_load;
        let mbase: f64 = units.iter().map(|&g| case.generators[g].mbase).sum();
        for &g in &units {
            let share = case.generators[g].mbase / mbase;
            let p = if i == case.slack_index() { p_total * share } else { case.generators[g].p_dispatch };
            out[g] = C64::new(p, q_total * share);
        }
    }
    out
}

/// Internal EMFs `E = V + j·X'd·I` of every generator at the operating point.
pub fn generator_emfs(case: &GridCase, op: &PowerFlowSolution) -> Vec<C64> {
    let v = op.voltages();
    generator_outputs(case, op)
        .into_iter()
        .enumerate()
        .map(|(g, s)| {
            let vt = v[case.bus_index(case.generators[g].bus).expect("validated")];
            let current = (s / vt).conj();
            vt + C64::new(0.0, case.xdp_sys(g)) * current
        })
        .collect()
}

/// Extended admittance matrix: lines, line charging, taps, loads as constant
/// admittances at the operating point, and generator transient-reactance
/// branches to internal nodes, with `overlays` applied.
///
/// Returns the matrix and the generator index of each internal node.
pub fn build_admittance(
    case: &GridCase,
    op: &PowerFlowSolution,
    overlays: &[Overlay],
) -> Result<(CMatrix, Vec<usize>), GridError> {
    if op.v_mag.len() != case.n_bus() {
        return Err(GridError::Dimension(format!(
            "operating point has {} buses, case has {}",
            op.v_mag.len(),
            case.n_bus()
        )));
    }
    let set = resolve(case, overlays)?;
    let gens: Vec<usize> = (0..case.n_gen()).filter(|g| !set.removed_gens.contains(g)).collect();
    let nb = case.n_bus();
    let n = nb + gens.len();
    let mut y = DMatrix::from_element(n, n, C64::new(0.0, 0.0));
    stamp_lines(case, &set.removed_lines, &mut y);

    for (i, bus) in case.buses.iter().enumerate() {
        let s = C64::new(bus.p_load, bus.q_load) * set.load_factor;
        if s.norm() > 0.0 {
            let vm = op.v_mag[i];
            y[(i, i)] += s.conj() / (vm * vm);
        }
    }
    for &(i, ysh) in &set.shunts {
        y[(i, i)] += ysh;
    }
    for (k, &g) in gens.iter().enumerate() {
        let b = case.bus_index(case.generators[g].bus).expect("validated");
        let node = nb + k;
        let yg = C64::new(0.0, case.xdp_sys(g)).inv();
        y[(node, node)] += yg;
        y[(b, b)] += yg;
        y[(node, b)] -= yg;
        y[(b, node)] -= yg;
    }
    Ok((y, gens))
}

/// Builds the extended matrix and reduces it to the generator internal nodes,
/// attaching the pre-disturbance EMFs of the retained machines.
pub fn reduce_network(
    case: &GridCase,
    op: &PowerFlowSolution,
    overlays: &[Overlay],
) -> Result<ReducedNetwork, GridError> {
    let (y, gens) = build_admittance(case, op, overlays)?;
    let nb = case.n_bus();
    let keep: Vec<usize> = (nb..nb + gens.len()).collect();
    let mut red = kron_reduce(&y, &keep)?;
    let emf = generator_emfs(case, op);
    red.gen_emf = gens.iter().map(|&g| emf[g]).collect();
    red.gens = gens;
    Ok(red)
}
