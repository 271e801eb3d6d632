//! Backward-forward solver for arbitrary transition weights
//! `gamma[t][dest][src]`.
//!
//! For each source column the optimal transitions have the stationary form
//! `p_b = pbar_b exp(-1 - (phi_b - lambda) / gamma_b)`, and `lambda` is the
//! unique root of the normalization residual
//! `g(lambda) = sum_b p_b(lambda) - 1`, which is strictly increasing. The
//! root is found by safeguarded Newton on `ln(1 + g)` inside a bracket, by
//! the plain fixed-step iteration `lambda -= step * g(lambda)`, or the column
//! is minimized directly over the simplex by projected gradient.

use crate::chain::{propagate_all, StochasticMatrix};
use crate::error::{Error, Result};
use crate::ls_solver::log_sum_exp;
use crate::objective::{kl_column_cost, objective_value};
use crate::problem::{Problem, Solution};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LambdaMethod {
    #[default]
    BisectionNewton,
    GradientDescent,
    DirectConvex,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaSolveConfig {
    pub method: LambdaMethod,
    /// Bound on `|sum_b p_b - 1|`; for [`LambdaMethod::DirectConvex`] the
    /// bound on the spread of the column gradient over its support.
    pub tol: f64,
    pub max_iter: usize,
    /// Step of the fixed-step iteration.
    pub step: f64,
}

impl Default for LambdaSolveConfig {
    fn default() -> Self {
        Self {
            method: LambdaMethod::BisectionNewton,
            tol: 1e-10,
            max_iter: 10_000,
            step: 0.1,
        }
    }
}

impl LambdaSolveConfig {
    pub fn with_method(method: LambdaMethod) -> Self {
        Self {
            method,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err(Error::InvalidParameter(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidParameter("max_iter must be at least 1".into()));
        }
        if self.step.is_nan() || self.step <= 0.0 {
            return Err(Error::InvalidParameter(format!("step must be positive, got {}", self.step)));
        }
        Ok(())
    }
}

/// A multiplier together with the work spent finding it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaSolution {
    pub lambda: f64,
    pub iterations: usize,
}

/// Output of one backward step.
#[derive(Debug, Clone, PartialEq)]
pub struct BackwardStep {
    pub p: StochasticMatrix,
    pub phi: Vec<f64>,
    pub lambda: Vec<f64>,
}

fn check_column(phi_next: &[f64], gamma_col: &[f64], pbar_col: &[f64]) -> Result<()> {
    let n = pbar_col.len();
    for (what, len) in [("value vector", phi_next.len()), ("penalty column", gamma_col.len())] {
        if len != n {
            return Err(Error::Dimension {
                what,
                expected: n,
                found: len,
            });
        }
    }
    if !pbar_col.iter().any(|&v| v > 0.0) {
        return Err(Error::InvalidParameter("reference column has empty support".into()));
    }
    Ok(())
}

/// Stationary transition column for a given multiplier; zero off the
/// support of `pbar_col`.
pub fn kkt_transition_column(
    phi_next: &[f64],
    lambda: f64,
    gamma_col: &[f64],
    pbar_col: &[f64],
) -> Result<Vec<f64>> {
    check_column(phi_next, gamma_col, pbar_col)?;
    Ok(pbar_col
        .iter()
        .zip(phi_next)
        .zip(gamma_col)
        .map(|((&pb, &phi), &g)| {
            if pb > 0.0 {
                (pb.ln() - 1.0 - (phi - lambda) / g).exp()
            } else {
                0.0
            }
        })
        .collect())
}

/// `ln sum_b p_b(lambda)` and its derivative, evaluated with a max shift.
struct LogMass<'a> {
    phi: &'a [f64],
    gamma: &'a [f64],
    pbar: &'a [f64],
}

impl LogMass<'_> {
    fn exponents(&self, lambda: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.pbar
            .iter()
            .zip(self.phi)
            .zip(self.gamma)
            .filter(|((&pb, _), _)| pb > 0.0)
            .map(move |((&pb, &phi), &g)| (pb.ln() - 1.0 - (phi - lambda) / g, g))
    }

    fn value(&self, lambda: f64) -> f64 {
        let xs: Vec<f64> = self.exponents(lambda).map(|(x, _)| x).collect();
        log_sum_exp(&xs)
    }

    fn value_and_slope(&self, lambda: f64) -> (f64, f64) {
        let terms: Vec<(f64, f64)> = self.exponents(lambda).collect();
        let m = terms.iter().map(|t| t.0).fold(f64::NEG_INFINITY, f64::max);
        let (mut mass, mut weighted) = (0.0, 0.0);
        for (x, g) in terms {
            let w = (x - m).exp();
            mass += w;
            weighted += w / g;
        }
        (m + mass.ln(), weighted / mass)
    }

    /// `g(lambda) = sum_b p_b - 1`.
    fn residual(&self, lambda: f64) -> f64 {
        self.value(lambda).exp_m1()
    }

    /// Closed-form root when `gamma` is constant on the support, used with
    /// the support-mean weight as a starting point.
    fn initial_guess(&self) -> f64 {
        let support: Vec<f64> = self.exponents(0.0).map(|(_, g)| g).collect();
        let mean_gamma = support.iter().sum::<f64>() / support.len() as f64;
        let xs: Vec<f64> = self
            .pbar
            .iter()
            .zip(self.phi)
            .filter(|(&pb, _)| pb > 0.0)
            .map(|(&pb, &phi)| pb.ln() - phi / mean_gamma)
            .collect();
        mean_gamma * (1.0 - log_sum_exp(&xs))
    }
}

/// Multiplier that makes the stationary column sum to one.
pub fn solve_lambda(
    phi_next: &[f64],
    gamma_col: &[f64],
    pbar_col: &[f64],
    cfg: &LambdaSolveConfig,
) -> Result<LambdaSolution> {
    cfg.validate()?;
    check_column(phi_next, gamma_col, pbar_col)?;
    let h = LogMass {
        phi: phi_next,
        gamma: gamma_col,
        pbar: pbar_col,
    };
    match cfg.method {
        LambdaMethod::BisectionNewton => newton_in_bracket(&h, cfg),
        LambdaMethod::GradientDescent => fixed_step(&h, cfg),
        LambdaMethod::DirectConvex => {
            let direct = minimize_column_direct_with(phi_next, 0.0, gamma_col, pbar_col, cfg.tol, cfg.max_iter)?;
            Ok(LambdaSolution {
                lambda: multiplier_from_column(&direct.p_col, phi_next, gamma_col, pbar_col),
                iterations: direct.iterations,
            })
        }
    }
}

fn newton_in_bracket(h: &LogMass<'_>, cfg: &LambdaSolveConfig) -> Result<LambdaSolution> {
    let mut iterations = 0;
    let mut lambda = h.initial_guess();
    let start = h.value(lambda);
    if start.exp_m1().abs() <= cfg.tol {
        return Ok(LambdaSolution { lambda, iterations });
    }

    // Expand by doubling until the root is bracketed.
    let gamma_max = h.exponents(0.0).map(|(_, g)| g).fold(0.0, f64::max);
    let mut width = gamma_max.max(1.0);
    let (mut lo, mut hi);
    if start < 0.0 {
        lo = lambda;
        hi = lambda + width;
        while h.value(hi) < 0.0 {
            iterations += 1;
            if iterations >= cfg.max_iter || !hi.is_finite() {
                return Err(convergence(h.residual(hi), iterations));
            }
            lo = hi;
            width *= 2.0;
            hi = lo + width;
        }
    } else {
        hi = lambda;
        lo = lambda - width;
        while h.value(lo) > 0.0 {
            iterations += 1;
            if iterations >= cfg.max_iter || !lo.is_finite() {
                return Err(convergence(h.residual(lo), iterations));
            }
            hi = lo;
            width *= 2.0;
            lo = hi - width;
        }
    }

    loop {
        let (value, slope) = h.value_and_slope(lambda);
        let residual = value.exp_m1();
        if residual.abs() <= cfg.tol {
            return Ok(LambdaSolution { lambda, iterations });
        }
        if iterations >= cfg.max_iter {
            return Err(convergence(residual, iterations));
        }
        iterations += 1;
        if value < 0.0 {
            lo = lo.max(lambda);
        } else {
            hi = hi.min(lambda);
        }
        let newton = lambda - value / slope;
        lambda = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo <= f64::EPSILON * lambda.abs().max(1.0) {
            let residual = h.residual(lambda);
            if residual.abs() <= cfg.tol {
                return Ok(LambdaSolution { lambda, iterations });
            }
            return Err(convergence(residual, iterations));
        }
    }
}

fn fixed_step(h: &LogMass<'_>, cfg: &LambdaSolveConfig) -> Result<LambdaSolution> {
    let mut lambda = h.initial_guess();
    for iterations in 0..=cfg.max_iter {
        let residual = h.residual(lambda);
        if !residual.is_finite() {
            return Err(convergence(residual, iterations));
        }
        if residual.abs() <= cfg.tol {
            return Ok(LambdaSolution { lambda, iterations });
        }
        lambda -= cfg.step * residual;
    }
    Err(convergence(h.residual(lambda), cfg.max_iter))
}

fn convergence(residual: f64, iterations: usize) -> Error {
    Error::Convergence {
        time: None,
        column: None,
        residual,
        iterations,
    }
}

/// Multiplier implied by a (near-)stationary column, averaged over its
/// support with the column itself as weights.
fn multiplier_from_column(p_col: &[f64], phi_next: &[f64], gamma_col: &[f64], pbar_col: &[f64]) -> f64 {
    let mut acc = 0.0;
    let mut mass = 0.0;
    for b in 0..p_col.len() {
        if p_col[b] > 0.0 && pbar_col[b] > 0.0 {
            acc += p_col[b] * (phi_next[b] + gamma_col[b] * ((p_col[b] / pbar_col[b]).ln() + 1.0));
            mass += p_col[b];
        }
    }
    acc / mass
}

/// Result of [`minimize_column_direct`].
#[derive(Debug, Clone, PartialEq)]
pub struct DirectColumn {
    pub p_col: Vec<f64>,
    /// Minimized column objective plus the state cost.
    pub value: f64,
    pub iterations: usize,
    /// Spread of the gradient over the support at termination.
    pub stationarity: f64,
}

const DIRECT_MAX_ITER: usize = 200_000;

/// Minimizes `f(p) = sum_b phi_b p_b + sum_b gamma_b p_b ln(p_b / pbar_b)`
/// over the probability simplex on the support of `pbar_col` by projected
/// gradient with Barzilai-Borwein steps and Armijo backtracking. Stops when
/// the gradient is constant over the support to within `tol`.
pub fn minimize_column_direct(
    phi_next: &[f64],
    state_cost: f64,
    gamma_col: &[f64],
    pbar_col: &[f64],
    tol: f64,
) -> Result<DirectColumn> {
    minimize_column_direct_with(phi_next, state_cost, gamma_col, pbar_col, tol, DIRECT_MAX_ITER)
}

fn minimize_column_direct_with(
    phi_next: &[f64],
    state_cost: f64,
    gamma_col: &[f64],
    pbar_col: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<DirectColumn> {
    check_column(phi_next, gamma_col, pbar_col)?;
    let support: Vec<usize> = (0..pbar_col.len()).filter(|&b| pbar_col[b] > 0.0).collect();
    let phi: Vec<f64> = support.iter().map(|&b| phi_next[b]).collect();
    let gamma: Vec<f64> = support.iter().map(|&b| gamma_col[b]).collect();
    let pbar: Vec<f64> = support.iter().map(|&b| pbar_col[b]).collect();
    let m = support.len();

    let objective = |x: &[f64]| -> f64 {
        (0..m)
            .map(|i| {
                let ent = if x[i] > 0.0 { gamma[i] * x[i] * (x[i] / pbar[i]).ln() } else { 0.0 };
                phi[i] * x[i] + ent
            })
            .sum()
    };
    let gradient = |x: &[f64]| -> Vec<f64> {
        (0..m)
            .map(|i| phi[i] + gamma[i] * ((x[i].max(1e-300) / pbar[i]).ln() + 1.0))
            .collect()
    };
    let spread = |g: &[f64]| {
        let hi = g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = g.iter().copied().fold(f64::INFINITY, f64::min);
        hi - lo
    };

    let mut x = pbar.clone();
    let total: f64 = x.iter().sum();
    x.iter_mut().for_each(|v| *v /= total);
    let mut f = objective(&x);
    let mut g = gradient(&x);
    let mut step = 1.0 / gamma.iter().copied().fold(0.0, f64::max);
    let mut iterations = 0;

    let finish = |x: Vec<f64>, f: f64, iterations: usize, stationarity: f64| {
        let mut p_col = vec![0.0; pbar_col.len()];
        for (i, &b) in support.iter().enumerate() {
            p_col[b] = x[i];
        }
        DirectColumn {
            p_col,
            value: f + state_cost,
            iterations,
            stationarity,
        }
    };

    loop {
        let residual = spread(&g);
        if residual <= tol || m == 1 {
            return Ok(finish(x, f, iterations, residual));
        }
        if iterations >= max_iter {
            return Err(convergence(residual, iterations));
        }
        iterations += 1;

        let slack = 1e-15 * (1.0 + f.abs());
        let mut trial_step = step;
        let (x_new, f_new) = loop {
            let y: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi - trial_step * gi).collect();
            let cand = project_to_simplex(&y);
            let decrease: f64 = cand.iter().zip(&x).zip(&g).map(|((c, xi), gi)| gi * (c - xi)).sum();
            let f_cand = objective(&cand);
            if f_cand <= f + 1e-4 * decrease + slack || trial_step < 1e-20 {
                break (cand, f_cand);
            }
            trial_step *= 0.5;
        };
        let g_new = gradient(&x_new);
        let (mut ss, mut sy) = (0.0, 0.0);
        for i in 0..m {
            let s = x_new[i] - x[i];
            ss += s * s;
            sy += s * (g_new[i] - g[i]);
        }
        step = if sy > 0.0 { (ss / sy).clamp(1e-12, 1e12) } else { trial_step * 2.0 };
        x = x_new;
        f = f_new;
        g = g_new;
    }
}

/// Euclidean projection onto `{x >= 0, sum x = 1}`.
pub(crate) fn project_to_simplex(y: &[f64]) -> Vec<f64> {
    let mut sorted = y.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (k, &v) in sorted.iter().enumerate() {
        cumsum += v;
        let t = (cumsum - 1.0) / (k + 1) as f64;
        if v - t > 0.0 {
            theta = t;
        }
    }
    y.iter().map(|v| (v - theta).max(0.0)).collect()
}

/// One backward step: for every source state, solve its column and
/// evaluate `phi_a(tau) = sum_b phi_b(tau+1) p(b, a)
/// + sum_b gamma(b, a) p(b, a) ln(p(b, a) / pbar(b, a)) + U_a(tau)`.
///
/// `gamma_t` is indexed `[dest][src]`.
pub fn backward_step(
    phi_next: &[f64],
    cost: &[f64],
    gamma_t: &[Vec<f64>],
    pbar: &StochasticMatrix,
    cfg: &LambdaSolveConfig,
) -> Result<BackwardStep> {
    let n = pbar.n();
    for (what, len) in [
        ("value vector", phi_next.len()),
        ("cost vector", cost.len()),
        ("penalty rows", gamma_t.len()),
    ] {
        if len != n {
            return Err(Error::Dimension {
                what,
                expected: n,
                found: len,
            });
        }
    }
    let mut data = vec![0.0; n * n];
    let mut phi = vec![0.0; n];
    let mut lambda = vec![0.0; n];
    for src in 0..n {
        let pbar_col = pbar.column(src);
        let gamma_col: Vec<f64> = gamma_t.iter().map(|row| row[src]).collect();
        let (col, multiplier) = match cfg.method {
            LambdaMethod::DirectConvex => {
                let direct = minimize_column_direct_with(phi_next, 0.0, &gamma_col, &pbar_col, cfg.tol, cfg.max_iter)
                    .map_err(|e| e.at_column(src))?;
                let multiplier = multiplier_from_column(&direct.p_col, phi_next, &gamma_col, &pbar_col);
                (direct.p_col, multiplier)
            }
            _ => {
                let sol = solve_lambda(phi_next, &gamma_col, &pbar_col, cfg).map_err(|e| e.at_column(src))?;
                let mut col = kkt_transition_column(phi_next, sol.lambda, &gamma_col, &pbar_col)?;
                // Converged to cfg.tol; remove the remaining round-off.
                let sum: f64 = col.iter().sum();
                col.iter_mut().for_each(|v| *v /= sum);
                (col, sol.lambda)
            }
        };
        let expected_next: f64 = col.iter().zip(phi_next).map(|(p, v)| p * v).sum();
        phi[src] = expected_next + kl_column_cost(&col, &pbar_col, &gamma_col)? + cost[src];
        lambda[src] = multiplier;
        for dest in 0..n {
            data[dest * n + src] = col[dest];
        }
    }
    Ok(BackwardStep {
        p: StochasticMatrix::new(n, data)?,
        phi,
        lambda,
    })
}

/// Solves with the default multiplier configuration.
pub fn solve(prob: &Problem) -> Result<Solution> {
    solve_with(prob, &LambdaSolveConfig::default())
}

/// Backward sweep from `phi(T) = U(T)` down to `tau = 0`, then forward
/// propagation from `rho0`. Accepts every penalty variant.
pub fn solve_with(prob: &Problem, cfg: &LambdaSolveConfig) -> Result<Solution> {
    cfg.validate()?;
    let n = prob.n();
    let horizon = prob.horizon();
    let mut phi_traj = vec![Vec::new(); horizon + 1];
    phi_traj[horizon] = prob.costs.at(horizon).to_vec();
    let mut p_traj = Vec::with_capacity(horizon);
    let mut lambda_traj = vec![Vec::new(); horizon];
    for tau in (0..horizon).rev() {
        let gamma_t = prob.penalty.matrix(tau, n);
        let step = backward_step(&phi_traj[tau + 1], prob.costs.at(tau), &gamma_t, &prob.pbar, cfg)
            .map_err(|e| e.at_time(tau))?;
        phi_traj[tau] = step.phi;
        lambda_traj[tau] = step.lambda;
        p_traj.push(step.p);
    }
    p_traj.reverse();
    let rho_traj = propagate_all(&prob.rho0, &p_traj)?;
    let objective = objective_value(prob, &p_traj)?;
    Ok(Solution {
        p_traj,
        rho_traj,
        phi_traj,
        lambda_traj: Some(lambda_traj),
        objective,
    })
}
