//! Polar Newton–Raphson power flow.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{network_admittance, BusKind, GridCase, GridError, C64};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerFlowOptions {
    /// Convergence threshold on the largest per-bus power mismatch, per-unit.
    pub tol: f64,
    /// Upper bound on mismatch evaluations.
    pub max_iter: usize,
}

impl Default for PowerFlowOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 30 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerFlowSolution {
    pub v_mag: Vec<f64>,
    pub v_ang: Vec<f64>,
    /// Net injections (generation minus load) at the final iterate.
    pub p_inj: Vec<f64>,
    pub q_inj: Vec<f64>,
    pub converged: bool,
    /// Number of mismatch evaluations performed (a flat start that already
    /// satisfies the tolerance counts as one).
    pub iterations: usize,
    pub max_mismatch: f64,
}

impl PowerFlowSolution {
    pub fn voltages(&self) -> Vec<C64> {
        self.v_mag
            .iter()
            .zip(&self.v_ang)
            .map(|(&m, &a)| C64::from_polar(m, a))
            .collect()
    }
}

/// Specified net injections per bus: dispatch minus load.
pub(crate) fn specified_injections(case: &GridCase) -> (Vec<f64>, Vec<f64>) {
    let mut p: Vec<f64> = case.buses.iter().map(|b| -b.p_load).collect();
    let q: Vec<f64> = case.buses.iter().map(|b| -b.q_load).collect();
    for gen in &case.generators {
        if let Some(i) = case.bus_index(gen.bus) {
            p[i] += gen.p_dispatch;
        }
    }
    (p, q)
}

fn complex_power(y: &DMatrix<C64>, v: &DVector<C64>) -> DVector<C64> {
    let i = y * v;
    v.zip_map(&i, |vk, ik| vk * ik.conj())
}

/// Solves the AC power flow from a flat start.
///
/// Non-convergence is not an error: the returned solution carries
/// `converged = false` and the mismatch that was reached.
pub fn power_flow(case: &GridCase, opts: PowerFlowOptions) -> Result<PowerFlowSolution, GridError> {
    let n = case.n_bus();
    let y = network_admittance(case);
    let (p_spec, q_spec) = specified_injections(case);

    let pvpq: Vec<usize> = (0..n).filter(|&i| case.buses[i].kind != BusKind::Slack).collect();
    let pq: Vec<usize> = (0..n).filter(|&i| case.buses[i].kind == BusKind::Pq).collect();
    let (npv, npq) = (pvpq.len(), pq.len());

    let mut vm: Vec<f64> = case
        .buses
        .iter()
        .map(|b| if b.kind == BusKind::Pq { 1.0 } else { b.v_setpoint })
        .collect();
    let mut va = vec![0.0; n];

    let voltage = |vm: &[f64], va: &[f64]| DVector::from_iterator(n, (0..n).map(|i| C64::from_polar(vm[i], va[i])));

    let mut iterations = 0;
    let mut converged = false;
    let mut max_mismatch = f64::INFINITY;

    while iterations < opts.max_iter {
        let v = voltage(&vm, &va);
        let s = complex_power(&y, &v);
        let mut f = DVector::<f64>::zeros(npv + npq);
        for (k, &i) in pvpq.iter().enumerate() {
            f[k] = s[i].re - p_spec[i];
        }
        for (k, &i) in pq.iter().enumerate() {
            f[npv + k] = s[i].im - q_spec[i];
        }
        iterations += 1;
        max_mismatch = f.amax();
        if !max_mismatch.is_finite() {
            break;
        }
        if max_mismatch <= opts.tol {
            converged = true;
            break;
        }
        if iterations == opts.max_iter {
            break;
        }

        // dS/dθ = j·diag(V)·conj(diag(I) − Y·diag(V))
        // dS/d|V| = diag(V)·conj(Y·diag(V/|V|)) + conj(diag(I))·diag(V/|V|)
        let i_bus = &y * &v;
        let vnorm = v.map(|z| z / z.norm());
        let mut j = DMatrix::<f64>::zeros(npv + npq, npv + npq);
        let ds_dth = |r: usize, c: usize| -> C64 {
            let mut term = -y[(r, c)] * v[c];
            if r == c {
                term += i_bus[r];
            }
            C64::i() * v[r] * term.conj()
        };
        let ds_dvm = |r: usize, c: usize| -> C64 {
            let mut val = v[r] * (y[(r, c)] * vnorm[c]).conj();
            if r == c {
                val += i_bus[r].conj() * vnorm[r];
            }
            val
        };
        for (a, &r) in pvpq.iter().enumerate() {
            for (b, &c) in pvpq.iter().enumerate() {
                j[(a, b)] = ds_dth(r, c).re;
            }
            for (b, &c) in pq.iter().enumerate() {
                j[(a, npv + b)] = ds_dvm(r, c).re;
            }
        }
        for (a, &r) in pq.iter().enumerate() {
            for (b, &c) in pvpq.iter().enumerate() {
                j[(npv + a, b)] = ds_dth(r, c).im;
            }
            for (b, &c) in pq.iter().enumerate() {
                j[(npv + a, npv + b)] = ds_dvm(r, c).im;
            }
        }
        let dx = j
            .lu()
            .solve(&f)
            .ok_or(GridError::SingularJacobian { iteration: iterations })?;
        for (k, &i) in pvpq.iter().enumerate() {
            va[i] -= dx[k];
        }
        for (k, &i) in pq.iter().enumerate() {
            vm[i] -= dx[npv + k];
        }
    }

    let v = voltage(&vm, &va);
    let s = complex_power(&y, &v);
    Ok(PowerFlowSolution {
        v_mag: vm,
        v_ang: va,
        p_inj: s.iter().map(|z| z.re).collect(),
        q_inj: s.iter().map(|z| z.im).collect(),
        converged,
        iterations,
        max_mismatch,
    })
}
