//! Finite-horizon Markov decision processes with a Kullback-Leibler welfare
//! penalty, for an aggregator steering an ensemble of cycling loads.
//!
//! The control variable is a time-dependent column-stochastic transition
//! matrix `p(t)`; deviating from the natural chain `pbar` costs a weighted KL
//! divergence, and occupying a state costs `U(t)`. Solvers run one backward
//! dynamic-programming sweep for the value function and one forward sweep of
//! the master equation:
//!
//! * [`ls_solver`] handles the closed-form cases (one weight per time step,
//!   or one weight per source state),
//! * [`general_solver`] handles a weight per transition,
//! * [`tracker`] wraps the general case in a dual loop that forces the
//!   ensemble consumption onto a requested signal,
//! * [`simulator`] samples individual devices from a solved schedule.

pub mod chain;
pub mod error;
pub mod general_solver;
pub mod ls_solver;
pub mod model;
pub mod objective;
pub mod problem;
pub mod simulator;
pub mod tracker;

pub use chain::{
    propagate, propagate_all, steady_state, validate_stochastic, EnsembleState, StochasticMatrix,
    FIXED_POINT_TOL, STOCHASTIC_TOL,
};
pub use error::{Error, Result, StochasticityReport};
pub use general_solver::{LambdaMethod, LambdaSolveConfig};
pub use model::CyclicModelSpec;
pub use objective::{kl_column_cost, objective_value};
pub use problem::{CostSchedule, PenaltySchedule, Problem, Solution};
pub use simulator::SimulationRun;
pub use tracker::{TrackConfig, TrackingProblem, TrackingResult};

/// Solves with the cheapest applicable backward pass: the closed-form
/// solvers for `Uniform` and `PerSource` weights, the general solver for
/// `Full`.
pub fn solve(prob: &Problem) -> Result<Solution> {
    match prob.penalty {
        PenaltySchedule::Full(_) => general_solver::solve(prob),
        _ => ls_solver::solve(prob),
    }
}
