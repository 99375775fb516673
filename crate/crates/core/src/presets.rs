//! Built-in parameter grids.

use serde::Serialize;

use crate::model::SystemParams;

pub const TABLE4_SERVER_CONFIGS: [(u32, u32); 6] = [(2, 1), (3, 1), (3, 2), (4, 1), (4, 2), (4, 3)];
pub const TABLE4_H0: [f64; 7] = [0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0];
pub const TABLE4_H2: [f64; 6] = [0.1, 0.2, 0.5, 1.0, 1.5, 2.0];
pub const TABLE4_MU2: [f64; 9] = [4.0, 5.0, 6.0, 8.0, 10.0, 12.0, 15.0, 20.0, 25.0];
pub const TABLE4_H1: f64 = 1.0;
pub const TABLE4_MU1: f64 = 10.0;

/// Every point of the numerical-study grid, server configuration outermost,
/// then `h0`, `h2`, `mu2`.
pub fn table4_grid() -> Vec<SystemParams> {
    let mut out = Vec::with_capacity(6 * 7 * 6 * 9);
    for (c1, c2) in TABLE4_SERVER_CONFIGS {
        for h0 in TABLE4_H0 {
            for h2 in TABLE4_H2 {
                for mu2 in TABLE4_MU2 {
                    out.push(SystemParams { c1, c2, mu1: TABLE4_MU1, mu2, h0, h1: TABLE4_H1, h2 });
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NamedParams {
    pub name: &'static str,
    pub params: SystemParams,
}

const fn sys(c1: u32, c2: u32, mu1: f64, mu2: f64, h0: f64, h1: f64, h2: f64) -> SystemParams {
    SystemParams { c1, c2, mu1, mu2, h0, h1, h2 }
}

/// Worked examples. Variants with a suffix change only `h1`.
pub const EXAMPLES: [NamedParams; 9] = [
    NamedParams { name: "ex1", params: sys(4, 2, 3.0, 0.96, 0.1, 1.0, 0.16) },
    NamedParams { name: "ex2", params: sys(4, 2, 3.0, 0.6, 1.0, 1.0, 0.04) },
    NamedParams { name: "ex3", params: sys(4, 2, 1.0, 1.5, 2.0, 2.0, 1.0) },
    NamedParams { name: "ex3b", params: sys(4, 2, 1.0, 1.5, 2.0, 8.0, 1.0) },
    NamedParams { name: "ex4", params: sys(4, 2, 1.0, 1.5, 0.16, 0.8, 0.4) },
    NamedParams { name: "ex4b", params: sys(4, 2, 1.0, 1.5, 0.16, 1.6, 0.4) },
    NamedParams { name: "ex5", params: sys(4, 2, 1.0, 1.5, 0.2, 1.0, 0.2) },
    NamedParams { name: "ex7", params: sys(4, 2, 3.0, 30.0, 0.1, 1.0, 12.5) },
    NamedParams { name: "ex8", params: sys(4, 2, 3.0, 3.3, 1.0, 1.0, 1.22) },
];

pub fn example(name: &str) -> Option<SystemParams> {
    EXAMPLES.iter().find(|e| e.name == name).map(|e| e.params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate;

    #[test]
    fn grid_size_and_validity() {
        let g = table4_grid();
        assert_eq!(g.len(), 2268);
        assert!(g.iter().all(|p| validate(*p).is_ok()));
        assert!(EXAMPLES.iter().all(|e| validate(e.params).is_ok()));
    }

    #[test]
    fn example_lookup() {
        assert_eq!(example("ex3b").unwrap().h1, 8.0);
        assert!(example("ex6").is_none());
    }
}
