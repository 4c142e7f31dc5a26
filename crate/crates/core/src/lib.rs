//! Retrofit controller synthesis and verification.
//!
//! A retrofit controller is a local add-on controller that keeps a network
//! stable for every environment under which it was stable before. This
//! crate provides the state-space algebra to build such controllers, the
//! analysis instruments to verify them, LQR design of the internal
//! stabilizer, network-level performance bounds and a nonlinear power-grid
//! testbed.

pub mod analysis;
pub mod error;
pub mod grid;
pub mod linalg;
pub mod lqr;
pub mod lti;
pub mod network;
pub mod synthetic;
pub mod youla;

pub use analysis::{hinf_norm, internal_stability, l2_norm, simulate_lti, Input, Trajectory};
pub use error::{Error, Result};
pub use lqr::{lqr_controller, solve_care, tune_to_gain_bound, CareProblem, TunedStabilizer};
pub use lti::{
    freq_response, is_hurwitz, lft_lower, lft_upper, make_state_space, partition_plant, PartitionedPlant, PortSpec,
    StateSpace,
};

pub use network::{assemble_network, performance_bound, NetworkModel, PerformanceLedger};
pub use youla::{ControllerKind, ProjectionPair, RetrofitController};

pub use nalgebra::{DMatrix, DVector};
pub use num_complex::Complex64;
