//! Exact tracking of a requested consumption signal.
//!
//! The tracking constraint `sum_a eps_a rho_a(t) = s(t)` is dualized with
//! one multiplier `xi(t)` per time step. For fixed `xi` the inner problem is
//! the penalized cost problem with `U_a(t) = xi(t) eps_a`; the outer loop
//! moves `xi` along the constraint violation until it vanishes.

use crate::chain::EnsembleState;
use crate::error::{Error, Result};
use crate::general_solver::{self, LambdaSolveConfig};
use crate::ls_solver;
use crate::problem::{CostSchedule, PenaltySchedule, Problem, Solution};

#[derive(Debug, Clone, PartialEq)]
pub struct TrackingProblem {
    /// Chain, weights and initial state; its costs are ignored.
    pub base: Problem,
    /// Energy used per slot in each state.
    pub epsilon: Vec<f64>,
    /// Requested consumption `s(t)` for `t = 1..=T`.
    pub target: Vec<f64>,
}

impl TrackingProblem {
    pub fn new(base: Problem, epsilon: Vec<f64>, target: Vec<f64>) -> Result<Self> {
        if epsilon.len() != base.n() {
            return Err(Error::Dimension {
                what: "energy vector",
                expected: base.n(),
                found: epsilon.len(),
            });
        }
        if target.len() != base.horizon() {
            return Err(Error::Dimension {
                what: "target signal",
                expected: base.horizon(),
                found: target.len(),
            });
        }
        if epsilon.iter().any(|e| !e.is_finite() || *e < 0.0) {
            return Err(Error::InvalidParameter(
                "energy consumption must be finite and nonnegative".into(),
            ));
        }
        if target.iter().any(|s| !s.is_finite()) {
            return Err(Error::InvalidParameter("target signal must be finite".into()));
        }
        Ok(Self {
            base,
            epsilon,
            target,
        })
    }

    /// Consumption is a convex combination of `eps`, so every target must
    /// lie in `[min eps, max eps]`.
    pub fn check_feasible(&self) -> Result<()> {
        let min = self.epsilon.iter().copied().fold(f64::INFINITY, f64::min);
        let max = self.epsilon.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for (i, &s) in self.target.iter().enumerate() {
            if s < min || s > max {
                return Err(Error::Infeasible {
                    t: i + 1,
                    target: s,
                    min,
                    max,
                });
            }
        }
        Ok(())
    }
}

/// Rule for the multiplier update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DualUpdate {
    /// `xi(t) += step (s_hat(t) - s(t))`, step halved whenever the largest
    /// residual grows. Each `xi(t)` moves on its own residual only; slow
    /// when the penalty makes consumption stiff.
    GradientAscent,
    /// Newton step on the dual with a finite-difference Jacobian of the
    /// consumption, backtracking on the residual norm.
    #[default]
    Newton,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackConfig {
    pub outer_tol: f64,
    pub max_outer: usize,
    pub step: f64,
    pub update: DualUpdate,
    pub lambda: LambdaSolveConfig,
}

impl Default for TrackConfig {
    fn default() -> Self {
        Self {
            outer_tol: 1e-6,
            max_outer: 500,
            step: 0.5,
            update: DualUpdate::Newton,
            lambda: LambdaSolveConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackingResult {
    pub solution: Solution,
    /// `xi(t)` for `t = 1..=T`.
    pub xi_traj: Vec<f64>,
    /// `|s_hat(t) - s(t)|` for `t = 1..=T`.
    pub tracking_residuals: Vec<f64>,
    pub outer_iterations: usize,
    pub converged: bool,
    /// Largest residual after each inner solve, starting with `xi = 0`.
    pub residual_history: Vec<f64>,
}

impl TrackingResult {
    pub fn max_residual(&self) -> f64 {
        self.tracking_residuals.iter().copied().fold(0.0, f64::max)
    }
}

/// Progress report passed to the logging sink after every inner solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OuterIterate<'a> {
    pub iteration: usize,
    pub max_residual: f64,
    pub step: f64,
    pub xi: &'a [f64],
}

/// `s_hat(t) = sum_a eps_a rho_a(t)` for `t = 1..=T`.
pub fn consumption(rho_traj: &[EnsembleState], epsilon: &[f64]) -> Vec<f64> {
    rho_traj
        .iter()
        .skip(1)
        .map(|rho| rho.values().iter().zip(epsilon).map(|(r, e)| r * e).sum())
        .collect()
}

/// `U_a(t) = xi(t) eps_a` for `t = 1..=T`.
pub fn costs_from_xi(xi: &[f64], epsilon: &[f64]) -> CostSchedule {
    let rows = xi
        .iter()
        .map(|x| epsilon.iter().map(|e| x * e).collect())
        .collect();
    CostSchedule::new(epsilon.len(), rows).expect("rows have the energy vector's length")
}

fn inner_solve(tp: &TrackingProblem, xi: &[f64], lambda: &LambdaSolveConfig) -> Result<Solution> {
    let prob = tp.base.with_costs(costs_from_xi(xi, &tp.epsilon))?;
    match prob.penalty {
        PenaltySchedule::Full(_) => general_solver::solve_with(&prob, lambda),
        _ => ls_solver::solve(&prob),
    }
}

fn signed_residuals(tp: &TrackingProblem, sol: &Solution) -> Vec<f64> {
    consumption(&sol.rho_traj, &tp.epsilon)
        .iter()
        .zip(&tp.target)
        .map(|(s_hat, s)| s_hat - s)
        .collect()
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn track(tp: &TrackingProblem, cfg: &TrackConfig) -> Result<TrackingResult> {
    track_with_sink(tp, cfg, |_| {})
}

/// Outer dual loop starting from `xi = 0`, i.e. the natural chain.
///
/// Non-convergence within `cfg.max_outer` updates is reported through
/// `converged = false`, not as an error.
pub fn track_with_sink<F>(tp: &TrackingProblem, cfg: &TrackConfig, mut sink: F) -> Result<TrackingResult>
where
    F: FnMut(&OuterIterate<'_>),
{
    if !(cfg.outer_tol > 0.0 && cfg.step > 0.0) {
        return Err(Error::InvalidParameter("outer tolerance and step must be positive".into()));
    }
    tp.check_feasible()?;
    let horizon = tp.target.len();
    let mut xi = vec![0.0; horizon];
    let mut sol = inner_solve(tp, &xi, &cfg.lambda)?;
    let mut residual = signed_residuals(tp, &sol);
    let mut worst = max_abs(&residual);
    let mut history = vec![worst];
    let mut step = cfg.step;
    let mut iteration = 0;
    sink(&OuterIterate {
        iteration,
        max_residual: worst,
        step,
        xi: &xi,
    });

    while worst > cfg.outer_tol && iteration < cfg.max_outer {
        iteration += 1;
        match cfg.update {
            DualUpdate::GradientAscent => {
                let trial: Vec<f64> = xi.iter().zip(&residual).map(|(x, r)| x + step * r).collect();
                let trial_sol = inner_solve(tp, &trial, &cfg.lambda)?;
                let trial_residual = signed_residuals(tp, &trial_sol);
                let trial_worst = max_abs(&trial_residual);
                if trial_worst > worst {
                    step *= 0.5;
                }
                xi = trial;
                sol = trial_sol;
                residual = trial_residual;
                worst = trial_worst;
            }
            DualUpdate::Newton => {
                let (next_xi, next_sol, next_residual) = newton_update(tp, cfg, &xi, &residual)?;
                xi = next_xi;
                sol = next_sol;
                residual = next_residual;
                worst = max_abs(&residual);
            }
        }
        history.push(worst);
        sink(&OuterIterate {
            iteration,
            max_residual: worst,
            step,
            xi: &xi,
        });
    }

    Ok(TrackingResult {
        tracking_residuals: residual.iter().map(|r| r.abs()).collect(),
        converged: worst <= cfg.outer_tol,
        solution: sol,
        xi_traj: xi,
        outer_iterations: iteration,
        residual_history: history,
    })
}

/// Solves `J d = -r` for the consumption Jacobian `J = d s_hat / d xi`
/// (forward differences), then backtracks on the residual norm along `d`.
fn newton_update(
    tp: &TrackingProblem,
    cfg: &TrackConfig,
    xi: &[f64],
    residual: &[f64],
) -> Result<(Vec<f64>, Solution, Vec<f64>)> {
    let horizon = xi.len();
    let h = 1e-6;
    let mut jac = nalgebra::DMatrix::zeros(horizon, horizon);
    for k in 0..horizon {
        let mut bumped = xi.to_vec();
        bumped[k] += h;
        let r = signed_residuals(tp, &inner_solve(tp, &bumped, &cfg.lambda)?);
        for t in 0..horizon {
            jac[(t, k)] = (r[t] - residual[t]) / h;
        }
    }
    let rhs = nalgebra::DVector::from_iterator(horizon, residual.iter().map(|r| -r));
    let direction = jac
        .clone()
        .lu()
        .solve(&rhs)
        .unwrap_or_else(|| rhs.map(|r| -cfg.step * r));
    let norm = |r: &[f64]| r.iter().map(|x| x * x).sum::<f64>();
    let current = norm(residual);
    let mut scale = 1.0;
    loop {
        let trial: Vec<f64> = xi.iter().zip(direction.iter()).map(|(x, d)| x + scale * d).collect();
        let sol = inner_solve(tp, &trial, &cfg.lambda)?;
        let r = signed_residuals(tp, &sol);
        if norm(&r) < current || scale < 1e-6 {
            return Ok((trial, sol, r));
        }
        scale *= 0.5;
    }
}
