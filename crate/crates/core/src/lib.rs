//! Power-system side of the transient stability pipeline: network cases,
//! power flow, Kron reduction, classical multi-machine simulation, stability
//! labeling and the `.tsds` dataset container.

pub mod cases;
pub mod container;
pub mod dataset;
pub mod grid;
pub mod labeling;
pub mod sim;
