//! Chance-constrained stochastic optimal control over scenario trees for
//! interactive vehicle motion planning.
//!
//! The crate combines:
//! - tractor-trailer kinematics ([`dynamics`]),
//! - polytope occupancy with an exact distance oracle and dual
//!   minimum-distance constraint blocks ([`geometry`]),
//! - scenario trees with path-probability propagation ([`tree`]),
//! - human-driver decision models and a logistic-regression estimator
//!   ([`drivers`]),
//! - chance-constraint variants with tight and sigmoid reformulations
//!   ([`chance`]),
//! - a primal-dual interior-point NLP solver ([`solver`]),
//! - assembly of the tractable stochastic optimal control problem
//!   ([`ocp`]),
//! - and simulation harnesses with metrics ([`sim`]).

pub mod chance;
pub mod drivers;
pub mod dynamics;
pub mod geometry;
pub mod ocp;
pub mod sim;
pub mod solver;
pub mod tree;

pub use dynamics::{TrafficState, VehicleControl, VehicleGeometry, VehicleState};
pub use geometry::{BodyShape, DualBlock, Frame, Polygon, Pose, VPolytope};
pub use ocp::{ControllerVariant, OcpConfig};
pub use solver::{NlpProblem, SolveOptions, SolveResult, SolveStatus};
pub use tree::{BranchingRule, PathProbabilities, ScenarioTree};
