//! Optimal and heuristic control of a clearing system in which flexible
//! servers either work alone or join dedicated servers on collaborative
//! service.
//!
//! The exact solver in [`solver`] computes expected clearing costs by a
//! recursion over queue levels; [`thresholds`] derives integer thresholds
//! from those values and from a closed-form affine surrogate; [`policies`]
//! turns thresholds into decision rules; [`simulator`] estimates the same
//! costs by Monte Carlo; [`experiments`] sweeps parameter grids.
//!
//! ```
//! use collabq::{model::SystemParams, solver, thresholds};
//!
//! let p = SystemParams::new(4, 2, 3.0, 0.96, 0.1, 1.0, 0.16).unwrap();
//! let table = solver::solve_optimal(&p, 30);
//! let d = solver::diff(&table).unwrap();
//! let actual = thresholds::actual_profile(&p, &d).unwrap();
//! let heuristic = thresholds::heuristic_profile(&p);
//! assert_eq!(actual.get(3), heuristic.get(3));
//! ```

pub mod error;
pub mod experiments;
pub mod model;
pub mod policies;
pub mod presets;
pub mod simulator;
pub mod solver;
pub mod thresholds;

pub use error::{Error, Result};
pub use model::{CostRegime, State, SystemParams, TieRouting};
pub use policies::{Action, DecisionContext, Policy, Station};
pub use solver::{DiffTable, ValueTable};
pub use thresholds::{Threshold, ThresholdProfile};
