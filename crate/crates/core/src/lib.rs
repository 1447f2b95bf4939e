//! Linear power-network frequency dynamics co-simulated with a distributed,
//! saturation-gated primal-dual controller that restores frequency, keeps
//! line flows inside their limits and holds inter-area exchanges, plus an
//! active-set oracle that certifies the controller's equilibria.
//!
//! Numerical code is generic over the scalar type. The aliases at the crate
//! root fix it to `f64` for everyday use; the oracle and graph matrices also
//! run in exact rational arithmetic through [`Exact`].

pub mod agc;
pub mod controller;
pub mod corpus;
pub mod grid;
pub mod integrate;
pub mod linalg;
pub mod model;
pub mod oracle;
pub mod plant;
pub mod report;
pub mod scalar;
pub mod sim;
#[doc(hidden)]
pub mod testing;

pub use grid::{emit_scenario, load_scenario, load_scenario_file, Scenario, ScenarioError};
pub use scalar::{Real, Scalar};

/// Exact rational scalar.
pub type Exact = num_rational::BigRational;

pub type Model64 = model::Model<f64>;
pub type PlantState64 = plant::PlantState<f64>;
pub type ControllerState64 = controller::ControllerState<f64>;
pub type ControllerConfig64 = controller::ControllerConfig<f64>;
pub type AgcConfig64 = agc::AgcConfig<f64>;
pub type Simulation64 = sim::Simulation<f64>;
pub type QpProblem64 = oracle::QpProblem<f64>;
pub type OracleSolution64 = oracle::OracleSolution<f64>;
