//! Case files bundled with the crate.

use crate::grid::{parse_case, GridCase};

pub const SMIB: &str = include_str!("../cases/smib.toml");
pub const THREE_BUS: &str = include_str!("../cases/three_bus.toml");
pub const WSCC9: &str = include_str!("../cases/wscc9.toml");
pub const IEEE39: &str = include_str!("../cases/ieee39.toml");

/// Names accepted by [`bundled`].
pub const NAMES: [&str; 4] = ["smib", "three_bus", "wscc9", "ieee39"];

/// Case-file text of a bundled case by name.
pub fn bundled_text(name: &str) -> Option<&'static str> {
    match name {
        "smib" => Some(SMIB),
        "three_bus" => Some(THREE_BUS),
        "wscc9" | "ieee9" => Some(WSCC9),
        "ieee39" => Some(IEEE39),
        _ => None,
    }
}

/// Parsed bundled case by name.
pub fn bundled(name: &str) -> Option<GridCase> {
    bundled_text(name).map(|t| parse_case(t).expect("bundled cases are valid"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{power_flow, PowerFlowOptions};

    #[test]
    fn every_bundled_case_parses_and_solves() {
        for name in NAMES {
            let case = bundled(name).unwrap();
            let pf = power_flow(&case, PowerFlowOptions::default()).unwrap();
            assert!(pf.converged, "{name} did not converge");
        }
    }

    #[test]
    fn ieee39_dimensions() {
        let case = bundled("ieee39").unwrap();
        assert_eq!(case.n_bus(), 39);
        assert_eq!(case.n_gen(), 10);
    }
}
