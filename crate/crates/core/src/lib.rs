//! Integrated selection and routing for urban waste collection.
//!
//! The crate has four layers:
//!
//! - [`model`] and [`travel`]: clusters, shifts, prizes, travel matrices and
//!   the routing instance built from them;
//! - [`solver`]: a hybrid genetic search for the prize-collecting vehicle
//!   routing problem with time windows and driver breaks, plus an exhaustive
//!   oracle for tiny instances;
//! - [`demand`] and [`policy`]: deposit arrival processes, overflow
//!   probabilities, volume estimation and the two prize-setting policies;
//! - [`sim`]: a discrete-event simulator that plans a shift every day and
//!   reports service-level and cost measures.
//!
//! [`bench`] reads Solomon / Gehring-Homberger instances for solver
//! benchmarking.

pub mod bench;
pub mod demand;
pub mod model;
pub mod policy;
pub mod sim;
pub mod solver;
pub mod travel;

pub use model::{
    build_routing_instance, service_duration, BreakSpec, Cluster, Cost, Prize, RoutingInstance, Seconds, ShiftConfig,
};
pub use solver::{solve_hgs, Budget, Evaluation, Solution, SolveOutcome, SolverParams};
pub use travel::{generate_city, City, TravelMatrix};
