//! Command-line frontend for the `ensemble-mdp` solvers.
//!
//! Exit codes: 0 success, 1 output i/o failure, 2 unparsable input,
//! 3 solver convergence failure, 4 infeasible or invalid input,
//! 5 tracking did not converge (diagnostics are still written).

pub mod args;
pub mod commands;
pub mod error;
pub mod output;
pub mod problem_file;
