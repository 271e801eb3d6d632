use std::fmt;

use thiserror::Error;

/// A single source column that failed the stochasticity check.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnViolation {
    pub column: usize,
    pub sum: f64,
    pub min_entry: f64,
}

/// Offending columns found by [`crate::validate_stochastic`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StochasticityReport {
    pub violations: Vec<ColumnViolation>,
}

impl StochasticityReport {
    pub fn columns(&self) -> Vec<usize> {
        self.violations.iter().map(|v| v.column).collect()
    }
}

impl fmt::Display for StochasticityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                write!(f, "; ")?;
            }
            write!(
                f,
                "column {} (sum {:.17}, min entry {:.3e})",
                v.column, v.sum, v.min_entry
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    Dimension {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("matrix is not column-stochastic: {0}")]
    NotStochastic(StochasticityReport),

    #[error("invalid ensemble state: {0}")]
    InvalidState(String),

    #[error("steady state is not unique: eigenvalue-1 eigenspace has dimension {dimension}")]
    NonUniqueSteadyState { dimension: usize },

    #[error("transition to destination {destination} has positive probability but is forbidden by the reference chain")]
    SupportViolation { destination: usize },

    #[error("penalty variant {found} not supported here (expected {expected})")]
    WrongPenaltyVariant {
        expected: &'static str,
        found: &'static str,
    },

    #[error("{}", convergence_message(*.time, *.column, *.residual, *.iterations))]
    Convergence {
        time: Option<usize>,
        column: Option<usize>,
        residual: f64,
        iterations: usize,
    },

    #[error("target {target} at t={t} lies outside the attainable range [{min}, {max}]")]
    Infeasible {
        t: usize,
        target: f64,
        min: f64,
        max: f64,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

fn convergence_message(
    time: Option<usize>,
    column: Option<usize>,
    residual: f64,
    iterations: usize,
) -> String {
    let mut msg = format!("no convergence after {iterations} iterations (residual {residual:.3e})");
    if let Some(t) = time {
        msg.push_str(&format!(" at time {t}"));
    }
    if let Some(c) = column {
        msg.push_str(&format!(" in source column {c}"));
    }
    msg
}

impl Error {
    pub(crate) fn at_column(self, column: usize) -> Self {
        match self {
            Error::Convergence {
                time,
                residual,
                iterations,
                ..
            } => Error::Convergence {
                time,
                column: Some(column),
                residual,
                iterations,
            },
            other => other,
        }
    }

    pub(crate) fn at_time(self, time: usize) -> Self {
        match self {
            Error::Convergence {
                column,
                residual,
                iterations,
                ..
            } => Error::Convergence {
                time: Some(time),
                column,
                residual,
                iterations,
            },
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
