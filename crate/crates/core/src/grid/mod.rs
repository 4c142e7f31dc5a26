//! Nonlinear power grid with AGC, used as a retrofit testbed.

pub mod config;
pub mod equilibrium;
pub mod experiment;
pub mod generator;
pub mod linearize;
pub mod model;
pub mod nyquist;
pub mod retrofit;
pub mod sim;

pub use config::{GeneratorParams, GridConfig};
pub use equilibrium::{solve_equilibrium, Equilibrium, GridState};
pub use experiment::{penetration_csv, penetration_experiment, PenetrationRow};
pub use linearize::{agc_controller, linearize_generator, linearized_network, quotient_abscissa};
pub use model::{build_grid, GridModel, ReducedNetwork};
pub use nyquist::{agc_nyquist, LocusPoint};
pub use retrofit::{design_module, design_modules, GridModule};
pub use sim::{linearization_gap, omega_csv, simulate_grid, FaultEvent, GridRun, Module, Scenario};
