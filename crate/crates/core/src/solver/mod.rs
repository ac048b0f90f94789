//! Prize-collecting vehicle routing with time windows and depot breaks.
//!
//! [`solve_hgs`] is a hybrid genetic search with time-warp relaxation,
//! granular neighbourhoods and selective route exchange crossover.
//! [`brute_force_optimal`] enumerates tiny instances exactly.

mod brute_force;
mod crossover;
mod hgs;
mod local_search;
mod neighbourhood;
mod population;
mod segment;
mod solution;

pub use brute_force::{brute_force_optimal, BruteForceError, MAX_CLUSTERS, MAX_VEHICLES};
pub use hgs::{solve_hgs, unreachable_required, Budget, SolveError, SolveOutcome, SolverParams};
pub use local_search::{covers_required, local_search, LocalSearch};
pub use neighbourhood::{correlation, Neighbourhood, NeighbourhoodParams};
pub use solution::{
    evaluate, format_solution, schedule_route, Evaluation, Penalties, RouteSchedule, Solution, SolutionError, Visit,
};

#[cfg(test)]
mod tests;
