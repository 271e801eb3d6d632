//! JSON problem description.
//!
//! Matrices are row-major with rows indexed by destination, so every column
//! of `pbar` sums to one.

use ensemble_mdp::model::uniform_level_costs;
use ensemble_mdp::{steady_state, CostSchedule, EnsembleState, PenaltySchedule, Problem, StochasticMatrix};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub n: usize,
    #[serde(rename = "T")]
    pub horizon: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub states: Option<Vec<String>>,
    pub pbar: Vec<Vec<f64>>,
    pub rho0: InitialState,
    pub costs: CostSpec,
    pub penalty: PenaltySpec,
    #[serde(default)]
    pub seed: u64,
    /// Energy used per slot in each state; needed by `track` and for
    /// consumption output.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitialState {
    Keyword(SteadyKeyword),
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SteadyKeyword {
    Steady,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CostSpec {
    /// `T` rows of `n` costs, row `k` charged at time `k + 1`.
    Explicit(Vec<Vec<f64>>),
    Generator(CostGenerator),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostGenerator {
    pub generator: GeneratorKind,
    pub base: f64,
    /// States charged `base + r(t)`; the others cost nothing.
    pub states: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeneratorKind {
    Uniform01,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum PenaltySpec {
    Uniform(OneOrPerStep<f64>),
    PerSource(OneOrPerStep<Vec<f64>>),
    Full(OneOrPerStep<Vec<Vec<f64>>>),
}

/// A value shared by every step, or one value per step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrPerStep<T> {
    Constant(T),
    PerStep(Vec<T>),
}

impl<T: Clone> OneOrPerStep<T> {
    fn expand(&self, horizon: usize) -> Result<Vec<T>, CliError> {
        match self {
            OneOrPerStep::Constant(v) => Ok(vec![v.clone(); horizon]),
            OneOrPerStep::PerStep(v) if v.len() == horizon => Ok(v.clone()),
            OneOrPerStep::PerStep(v) => Err(CliError::Invalid(format!(
                "penalty schedule has {} steps, expected T = {horizon}",
                v.len()
            ))),
        }
    }
}

impl ProblemFile {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Parse(format!("problem file: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("problem file serializes")
    }

    /// Builds and validates the problem; `seed` overrides the file seed for
    /// generated costs.
    pub fn to_problem(&self, seed: Option<u64>) -> Result<Problem, CliError> {
        let n = self.n;
        let seed = seed.unwrap_or(self.seed);
        if self.pbar.len() != n || self.pbar.iter().any(|r| r.len() != n) {
            return Err(CliError::Invalid(format!("pbar must be {n} x {n}")));
        }
        if let Some(names) = &self.states {
            if names.len() != n {
                return Err(CliError::Invalid(format!("{} state names for {n} states", names.len())));
            }
        }
        if let Some(eps) = &self.epsilon {
            if eps.len() != n {
                return Err(CliError::Invalid(format!("epsilon has {} entries, expected {n}", eps.len())));
            }
        }
        let pbar = StochasticMatrix::from_rows(&self.pbar)?;
        let rho0 = match &self.rho0 {
            InitialState::Keyword(SteadyKeyword::Steady) => steady_state(&pbar)?,
            InitialState::Explicit(v) => EnsembleState::new(v.clone())?,
        };
        let costs = match &self.costs {
            CostSpec::Explicit(rows) => {
                if rows.len() != self.horizon {
                    return Err(CliError::Invalid(format!(
                        "costs have {} rows, expected T = {}",
                        rows.len(),
                        self.horizon
                    )));
                }
                CostSchedule::new(n, rows.clone())?
            }
            CostSpec::Generator(g) => uniform_level_costs(n, &g.states, g.base, self.horizon, seed)?,
        };
        let penalty = match &self.penalty {
            PenaltySpec::Uniform(g) => PenaltySchedule::Uniform(g.expand(self.horizon)?),
            PenaltySpec::PerSource(g) => PenaltySchedule::PerSource(g.expand(self.horizon)?),
            PenaltySpec::Full(g) => PenaltySchedule::Full(g.expand(self.horizon)?),
        };
        Ok(Problem::new(pbar, costs, penalty, rho0)?)
    }

    /// Fully explicit description of `prob`: every cost row, every penalty
    /// step and the initial state are written out.
    pub fn from_problem(prob: &Problem, seed: u64, epsilon: Option<Vec<f64>>) -> Self {
        let penalty = match &prob.penalty {
            PenaltySchedule::Uniform(g) => PenaltySpec::Uniform(OneOrPerStep::PerStep(g.clone())),
            PenaltySchedule::PerSource(g) => PenaltySpec::PerSource(OneOrPerStep::PerStep(g.clone())),
            PenaltySchedule::Full(g) => PenaltySpec::Full(OneOrPerStep::PerStep(g.clone())),
        };
        ProblemFile {
            n: prob.n(),
            horizon: prob.horizon(),
            states: None,
            pbar: prob.pbar.rows(),
            rho0: InitialState::Explicit(prob.rho0.values().to_vec()),
            costs: CostSpec::Explicit(prob.costs.charged_rows().to_vec()),
            penalty,
            seed,
            epsilon,
        }
    }
}
