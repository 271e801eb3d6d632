//! Backward-forward solvers for the penalties whose per-column
//! normalization is available in closed form.
//!
//! * `Uniform` weights make the Bellman recursion linear in the
//!   desirability `u = exp(-phi / gamma)` ([`backward_linear`]).
//! * `PerSource` weights keep a closed-form softmax column but the recursion
//!   on `phi` is a log-sum-exp ([`backward_normalized`]).
//!
//! The final-time weight is taken as `gamma(T) := gamma(T - 1)`; it only
//! scales `u(T)` and cancels out of both `phi(T) = U(T)` and every `p(t)`.

use crate::chain::{propagate_all, StochasticMatrix};
use crate::error::{Error, Result};
use crate::objective::objective_value;
use crate::problem::{PenaltySchedule, Problem, Solution};

/// Desirability `u(tau)` for `tau = 0..=T`, kept as per-step rescaled
/// values plus a log scale so that long horizons do not underflow.
#[derive(Debug, Clone, PartialEq)]
pub struct DesirabilityTrajectory {
    scaled: Vec<Vec<f64>>,
    log_scale: Vec<f64>,
    log_u: Vec<Vec<f64>>,
}

impl DesirabilityTrajectory {
    pub fn len(&self) -> usize {
        self.scaled.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scaled.is_empty()
    }

    /// `u(tau) / max_a u_a(tau)`; every entry lies in `(0, 1]` unless it
    /// underflowed.
    pub fn scaled(&self, tau: usize) -> &[f64] {
        &self.scaled[tau]
    }

    /// `ln max_a u_a(tau)`.
    pub fn log_scale(&self, tau: usize) -> f64 {
        self.log_scale[tau]
    }

    /// `ln u(tau)`, exact even where `u` itself is not representable.
    pub fn log_u(&self, tau: usize) -> &[f64] {
        &self.log_u[tau]
    }

    /// `u(tau)` in absolute terms. May under- or overflow for extreme costs.
    pub fn u(&self, tau: usize) -> Vec<f64> {
        self.log_u[tau].iter().map(|l| l.exp()).collect()
    }
}

/// Output of [`backward_linear`].
#[derive(Debug, Clone, PartialEq)]
pub struct LinearBackward {
    pub p_traj: Vec<StochasticMatrix>,
    pub desirability: DesirabilityTrajectory,
    pub phi_traj: Vec<Vec<f64>>,
}

/// Output of [`backward_normalized`].
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedBackward {
    pub p_traj: Vec<StochasticMatrix>,
    pub phi_traj: Vec<Vec<f64>>,
}

fn uniform_weights(prob: &Problem) -> Result<&[f64]> {
    match &prob.penalty {
        PenaltySchedule::Uniform(g) => Ok(g),
        other => Err(Error::WrongPenaltyVariant {
            expected: "uniform",
            found: other.variant_name(),
        }),
    }
}

/// Linear backward recursion
/// `u_a(tau) = exp(-U_a(tau)/gamma(tau)) sum_b pbar(b, a) u_b(tau+1)`
/// with `u_a(T) = exp(-U_a(T)/gamma(T))`, followed by the column-normalized
/// optimal transitions `p(b, a) ~ pbar(b, a) u_b(tau + 1)`.
///
/// When `gamma` changes between steps, `u(tau + 1)` enters raised to
/// `gamma(tau + 1) / gamma(tau)`, which is the identity for a constant
/// weight and keeps the result exact otherwise.
pub fn backward_linear(prob: &Problem) -> Result<LinearBackward> {
    let gamma = uniform_weights(prob)?;
    let n = prob.n();
    let horizon = prob.horizon();
    let pbar = &prob.pbar;
    let gamma_at = |tau: usize| gamma[tau.min(horizon - 1)];

    let mut scaled = vec![Vec::new(); horizon + 1];
    let mut log_scale = vec![0.0; horizon + 1];
    let mut log_u = vec![Vec::new(); horizon + 1];

    let final_log: Vec<f64> = prob
        .costs
        .at(horizon)
        .iter()
        .map(|u| -u / gamma_at(horizon))
        .collect();
    let (s, m) = rescale(&final_log);
    scaled[horizon] = s;
    log_scale[horizon] = m;
    log_u[horizon] = final_log;

    let mut p_traj = vec![StochasticMatrix::identity(n); horizon];
    for tau in (0..horizon).rev() {
        let g = gamma_at(tau);
        let ratio = gamma_at(tau + 1) / g;
        let (next_scaled, next_scale) = (&scaled[tau + 1], log_scale[tau + 1]);
        let weights: Vec<f64> = if ratio == 1.0 {
            next_scaled.clone()
        } else {
            next_scaled.iter().map(|w| w.powf(ratio)).collect()
        };
        let shift = ratio * next_scale;

        let mut data = vec![0.0; n * n];
        let mut logs = vec![0.0; n];
        for src in 0..n {
            let mass: f64 = (0..n).map(|dest| pbar.get(dest, src) * weights[dest]).sum();
            let cost_term = -prob.costs.at(tau)[src] / g;
            if mass > f64::MIN_POSITIVE {
                for dest in 0..n {
                    data[dest * n + src] = pbar.get(dest, src) * weights[dest] / mass;
                }
                logs[src] = mass.ln() + shift + cost_term;
            } else {
                // Every reachable successor underflowed; redo this column in
                // log space.
                let exps: Vec<f64> = (0..n)
                    .map(|dest| {
                        let pb = pbar.get(dest, src);
                        if pb > 0.0 {
                            pb.ln() + ratio * log_u[tau + 1][dest]
                        } else {
                            f64::NEG_INFINITY
                        }
                    })
                    .collect();
                let lse = log_sum_exp(&exps);
                for dest in 0..n {
                    data[dest * n + src] = (exps[dest] - lse).exp();
                }
                logs[src] = lse + cost_term;
            }
        }
        p_traj[tau] = StochasticMatrix::new(n, data)?;
        let (s, m) = rescale(&logs);
        scaled[tau] = s;
        log_scale[tau] = m;
        log_u[tau] = logs;
    }

    let phi_traj = log_u
        .iter()
        .enumerate()
        .map(|(tau, l)| l.iter().map(|v| -gamma_at(tau) * v).collect())
        .collect();
    Ok(LinearBackward {
        p_traj,
        desirability: DesirabilityTrajectory {
            scaled,
            log_scale,
            log_u,
        },
        phi_traj,
    })
}

fn rescale(logs: &[f64]) -> (Vec<f64>, f64) {
    let m = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (logs.iter().map(|l| (l - m).exp()).collect(), m)
}

pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Log-sum-exp recursion
/// `phi_a(tau) = -gamma_a(tau) ln sum_b exp(-phi_b(tau+1)/gamma_a(tau)) pbar(b, a) + U_a(tau)`
/// from `phi(T) = U(T)`, with softmax transition columns.
pub fn backward_normalized(prob: &Problem) -> Result<NormalizedBackward> {
    let gamma = match &prob.penalty {
        PenaltySchedule::PerSource(g) => g,
        other => {
            return Err(Error::WrongPenaltyVariant {
                expected: "per_source",
                found: other.variant_name(),
            })
        }
    };
    let n = prob.n();
    let horizon = prob.horizon();
    let pbar = &prob.pbar;

    let mut phi_traj = vec![Vec::new(); horizon + 1];
    phi_traj[horizon] = prob.costs.at(horizon).to_vec();
    let mut p_traj = vec![StochasticMatrix::identity(n); horizon];

    for tau in (0..horizon).rev() {
        let phi_next = &phi_traj[tau + 1];
        let mut data = vec![0.0; n * n];
        let mut phi = vec![0.0; n];
        for src in 0..n {
            let g = gamma[tau][src];
            let exps: Vec<f64> = (0..n)
                .map(|dest| {
                    let pb = pbar.get(dest, src);
                    if pb > 0.0 {
                        pb.ln() - phi_next[dest] / g
                    } else {
                        f64::NEG_INFINITY
                    }
                })
                .collect();
            let lse = log_sum_exp(&exps);
            for dest in 0..n {
                data[dest * n + src] = (exps[dest] - lse).exp();
            }
            phi[src] = -g * lse + prob.costs.at(tau)[src];
        }
        p_traj[tau] = StochasticMatrix::new(n, data)?;
        phi_traj[tau] = phi;
    }
    Ok(NormalizedBackward { p_traj, phi_traj })
}

/// Backward pass for the `Uniform` or `PerSource` penalty, then forward
/// propagation from `rho0`.
pub fn solve(prob: &Problem) -> Result<Solution> {
    let (p_traj, phi_traj) = match &prob.penalty {
        PenaltySchedule::Uniform(_) => {
            let lin = backward_linear(prob)?;
            debug_assert!(agrees_with_normalized(prob, &lin));
            (lin.p_traj, lin.phi_traj)
        }
        PenaltySchedule::PerSource(_) => {
            let out = backward_normalized(prob)?;
            (out.p_traj, out.phi_traj)
        }
        PenaltySchedule::Full(_) => {
            return Err(Error::WrongPenaltyVariant {
                expected: "uniform or per_source",
                found: "full",
            })
        }
    };
    let rho_traj = propagate_all(&prob.rho0, &p_traj)?;
    let objective = objective_value(prob, &p_traj)?;
    Ok(Solution {
        p_traj,
        rho_traj,
        phi_traj,
        lambda_traj: None,
        objective,
    })
}

// Only checked on small instances; the log-sum-exp route costs an extra
// backward pass.
fn agrees_with_normalized(prob: &Problem, lin: &LinearBackward) -> bool {
    if prob.n() * prob.horizon() > 256 {
        return true;
    }
    let Ok(per_source) = prob.penalty.to_per_source(prob.n()) else {
        return false;
    };
    let Ok(alt) = prob.with_penalty(per_source).and_then(|p| backward_normalized(&p)) else {
        return false;
    };
    lin.p_traj
        .iter()
        .zip(&alt.p_traj)
        .all(|(a, b)| a.max_abs_diff(b) <= 1e-8)
}
