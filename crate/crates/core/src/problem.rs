use crate::chain::{EnsembleState, StochasticMatrix};
use crate::error::{Error, Result};

/// Per-state cost `U(t, a)` for `t = 1..=T`.
///
/// `U(0, .)` is identically zero. The backward recursion adds `U(tau)` at
/// every `tau` including zero while the objective charges `U(t + 1)` for
/// `t = 0..T`; with a zero first row the two accountings coincide.
#[derive(Debug, Clone, PartialEq)]
pub struct CostSchedule {
    n: usize,
    // (T + 1) rows, row 0 all zero.
    rows: Vec<Vec<f64>>,
}

impl CostSchedule {
    /// `rows[t - 1]` holds the costs charged at time `t`.
    pub fn new(n: usize, rows: Vec<Vec<f64>>) -> Result<Self> {
        for (i, r) in rows.iter().enumerate() {
            if r.len() != n {
                return Err(Error::Dimension {
                    what: "cost row",
                    expected: n,
                    found: r.len(),
                });
            }
            if let Some(v) = r.iter().find(|v| !v.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "non-finite cost {v} at t={}",
                    i + 1
                )));
            }
        }
        let mut all = Vec::with_capacity(rows.len() + 1);
        all.push(vec![0.0; n]);
        all.extend(rows);
        Ok(Self { n, rows: all })
    }

    pub fn zeros(horizon: usize, n: usize) -> Self {
        Self {
            n,
            rows: vec![vec![0.0; n]; horizon + 1],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn horizon(&self) -> usize {
        self.rows.len() - 1
    }

    /// Costs at time `t` for `t = 0..=T`.
    pub fn at(&self, t: usize) -> &[f64] {
        &self.rows[t]
    }

    /// Rows for `t = 1..=T`.
    pub fn charged_rows(&self) -> &[Vec<f64>] {
        &self.rows[1..]
    }

    pub fn is_zero(&self) -> bool {
        self.rows.iter().flatten().all(|&v| v == 0.0)
    }
}

/// Weights of the KL welfare penalty, indexed by transition time `t = 0..T`.
#[derive(Debug, Clone, PartialEq)]
pub enum PenaltySchedule {
    /// `gamma(t)`, shared by every transition.
    Uniform(Vec<f64>),
    /// `gamma[t][src]`, shared by every destination of a source.
    PerSource(Vec<Vec<f64>>),
    /// `gamma[t][dest][src]`.
    Full(Vec<Vec<Vec<f64>>>),
}

impl PenaltySchedule {
    pub fn uniform_constant(horizon: usize, gamma: f64) -> Self {
        PenaltySchedule::Uniform(vec![gamma; horizon])
    }

    /// Repeats a single `[dest][src]` weight matrix over the horizon.
    pub fn full_constant(horizon: usize, weights: Vec<Vec<f64>>) -> Self {
        PenaltySchedule::Full(vec![weights; horizon])
    }

    pub fn variant_name(&self) -> &'static str {
        match self {
            PenaltySchedule::Uniform(_) => "uniform",
            PenaltySchedule::PerSource(_) => "per_source",
            PenaltySchedule::Full(_) => "full",
        }
    }

    pub fn horizon(&self) -> usize {
        match self {
            PenaltySchedule::Uniform(g) => g.len(),
            PenaltySchedule::PerSource(g) => g.len(),
            PenaltySchedule::Full(g) => g.len(),
        }
    }

    /// Weight of the `src -> dest` transition at time `t`.
    #[inline]
    pub fn gamma(&self, t: usize, dest: usize, src: usize) -> f64 {
        match self {
            PenaltySchedule::Uniform(g) => g[t],
            PenaltySchedule::PerSource(g) => g[t][src],
            PenaltySchedule::Full(g) => g[t][dest][src],
        }
    }

    /// Weights of every transition out of `src` at time `t`, by destination.
    pub fn column(&self, t: usize, src: usize, n: usize) -> Vec<f64> {
        (0..n).map(|dest| self.gamma(t, dest, src)).collect()
    }

    /// Full `[dest][src]` weight matrix at time `t`.
    pub fn matrix(&self, t: usize, n: usize) -> Vec<Vec<f64>> {
        (0..n)
            .map(|dest| (0..n).map(|src| self.gamma(t, dest, src)).collect())
            .collect()
    }

    /// Expands any variant to the `Full` representation.
    pub fn to_full(&self, n: usize) -> PenaltySchedule {
        PenaltySchedule::Full((0..self.horizon()).map(|t| self.matrix(t, n)).collect())
    }

    /// Expands `Uniform` to `PerSource`; fails on `Full`.
    pub fn to_per_source(&self, n: usize) -> Result<PenaltySchedule> {
        match self {
            PenaltySchedule::Uniform(g) => Ok(PenaltySchedule::PerSource(
                g.iter().map(|&v| vec![v; n]).collect(),
            )),
            PenaltySchedule::PerSource(_) => Ok(self.clone()),
            PenaltySchedule::Full(_) => Err(Error::WrongPenaltyVariant {
                expected: "uniform or per_source",
                found: "full",
            }),
        }
    }

    fn check(&self, n: usize) -> Result<()> {
        match self {
            PenaltySchedule::Uniform(g) => all_positive(g.iter().copied()),
            PenaltySchedule::PerSource(g) => {
                for row in g {
                    expect_len("per-source penalty row", n, row.len())?;
                }
                all_positive(g.iter().flatten().copied())
            }
            PenaltySchedule::Full(g) => {
                for mat in g {
                    expect_len("full penalty rows", n, mat.len())?;
                    for row in mat {
                        expect_len("full penalty row", n, row.len())?;
                    }
                }
                all_positive(g.iter().flatten().flatten().copied())
            }
        }
    }
}

fn all_positive(mut vals: impl Iterator<Item = f64>) -> Result<()> {
    match vals.find(|v| !(v.is_finite() && *v > 0.0)) {
        Some(v) => Err(Error::InvalidParameter(format!(
            "penalty weights must be positive and finite, found {v}"
        ))),
        None => Ok(()),
    }
}

fn expect_len(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::Dimension {
            what,
            expected,
            found,
        })
    }
}

/// A finite-horizon control problem for the ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub pbar: StochasticMatrix,
    pub costs: CostSchedule,
    pub penalty: PenaltySchedule,
    pub rho0: EnsembleState,
}

impl Problem {
    pub fn new(
        pbar: StochasticMatrix,
        costs: CostSchedule,
        penalty: PenaltySchedule,
        rho0: EnsembleState,
    ) -> Result<Self> {
        let n = pbar.n();
        expect_len("cost schedule states", n, costs.n())?;
        expect_len("initial state", n, rho0.n())?;
        let horizon = costs.horizon();
        if horizon == 0 {
            return Err(Error::InvalidParameter("horizon must be at least 1".into()));
        }
        expect_len("penalty schedule horizon", horizon, penalty.horizon())?;
        penalty.check(n)?;
        Ok(Self {
            pbar,
            costs,
            penalty,
            rho0,
        })
    }

    pub fn n(&self) -> usize {
        self.pbar.n()
    }

    pub fn horizon(&self) -> usize {
        self.costs.horizon()
    }

    /// Same problem with a different cost schedule.
    pub fn with_costs(&self, costs: CostSchedule) -> Result<Self> {
        Problem::new(
            self.pbar.clone(),
            costs,
            self.penalty.clone(),
            self.rho0.clone(),
        )
    }

    /// Same problem with a different penalty schedule.
    pub fn with_penalty(&self, penalty: PenaltySchedule) -> Result<Self> {
        Problem::new(
            self.pbar.clone(),
            self.costs.clone(),
            penalty,
            self.rho0.clone(),
        )
    }
}

/// Optimal trajectories produced by a solver.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    /// `p(t)` for `t = 0..T`.
    pub p_traj: Vec<StochasticMatrix>,
    /// `rho(t)` for `t = 0..=T`.
    pub rho_traj: Vec<EnsembleState>,
    /// Value function `phi(t)` for `t = 0..=T`.
    pub phi_traj: Vec<Vec<f64>>,
    /// Normalization multipliers per `(t, src)`; general solver only.
    pub lambda_traj: Option<Vec<Vec<f64>>>,
    pub objective: f64,
}

impl Solution {
    /// `sum_a phi_a(0) rho_a(0)`, which equals the objective at the optimum.
    pub fn initial_value(&self) -> f64 {
        self.phi_traj[0]
            .iter()
            .zip(self.rho_traj[0].values())
            .map(|(phi, rho)| phi * rho)
            .sum()
    }

    pub fn mean_entropy(&self) -> f64 {
        self.rho_traj.iter().map(EnsembleState::entropy).sum::<f64>() / self.rho_traj.len() as f64
    }
}
