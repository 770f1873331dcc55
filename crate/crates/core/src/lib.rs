//! Consistency analysis of record replication across vehicles in a road
//! segment.
//!
//! A piece of information is kept alive inside a segment by rebroadcasting
//! it between vehicles while traffic flows through. The crate models this as
//! a continuous-time Markov chain over states `(i, j)`, where `i` counts the
//! occupants holding the record and `j` the occupants present, builds the
//! sparse rate matrix from the arrival/departure/delivery families, and
//! answers one question: the probability that at least `t` vehicles hold the
//! record, at a given time or in the stationary regime.
//!
//! Solvers:
//!
//! * [`transient_distribution`]: uniformization with a certified truncation
//!   bound (the matrix exponential is never formed);
//! * [`steady_state`]: dense null-space solve on the recurrent class;
//! * [`simulate_runs`]: exact event-by-event stochastic simulation, the
//!   independent arbiter for both.

pub mod consistency;
pub mod error;
pub mod generator;
mod graph;
mod math;
pub mod model;
pub mod oracle;
pub mod statespace;
pub mod steady;
pub mod transient;

pub use consistency::{
    consistency_probability, sweep_steady, sweep_transient, ConsistencyRow, ConsistencyTable,
};
pub use error::{Error, Result};
pub use generator::{
    build_rate_matrix, epidemic_rate, validate_generator, GeneratorDiagnostics, RateMatrix,
};
pub use math::truncated_poisson_weights;
pub use model::{InitialOccupancy, ModelOptions, Scenario, ScenarioParams, SpeedUnit};
pub use oracle::{
    empirical_j_occupancy, estimate_vs_analytic, simulate_runs, ComparisonReport, ComparisonRow,
    SimulationEstimate,
};
pub use statespace::{strict_below_target_count, strict_state_count, StateSpace};
pub use steady::{
    final_value_check, steady_state, steady_state_from, steady_state_power_iteration, SteadyState,
};
pub use transient::{
    initial_distribution, ode_reference, ode_reference_grid, transient_distribution,
    DistributionVector, TransientSolution, DEFAULT_TRUNCATION_TOL,
};
