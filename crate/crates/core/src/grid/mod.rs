//! Static network model: case files, power flow, admittance matrices and
//! Kron reduction onto generator internal nodes.

mod admittance;
mod case;
mod kron;
mod powerflow;

use thiserror::Error;

pub use admittance::{build_admittance, generator_emfs, network_admittance, reduce_network, Overlay};
pub use case::{parse_case, write_case, Bus, BusKind, Generator, GridCase, Line, LineStatus};
pub use kron::{kron_reduce, ReducedNetwork};
pub use powerflow::{power_flow, PowerFlowOptions, PowerFlowSolution};

pub type C64 = num_complex::Complex<f64>;
pub type CMatrix = nalgebra::DMatrix<C64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("case file syntax error: {0}")]
    Syntax(String),
    #[error("schema violation at {path}: {message}")]
    Schema { path: String, message: String },
    #[error("duplicate bus id {id} at {path} (first defined at {first})")]
    DuplicateBus { path: String, id: usize, first: String },
    #[error("case has no slack bus")]
    NoSlack,
    #[error("network is disconnected; buses {buses:?} are not reachable from the slack bus")]
    Disconnected { buses: Vec<usize> },
    #[error("power-flow Jacobian is singular at iteration {iteration}")]
    SingularJacobian { iteration: usize },
    #[error("overlay references unknown {kind} {id}")]
    UnknownElement { kind: &'static str, id: usize },
    #[error("overlays remove every generator from the network")]
    NoGenerators,
    #[error("eliminated-node block is singular (condition estimate {condition:.3e})")]
    SingularReduction { condition: f64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}
