#![allow(dead_code)]

use ensemble_mdp::tracker::consumption;
use ensemble_mdp::{
    propagate_all, CostSchedule, EnsembleState, PenaltySchedule, Problem, StochasticMatrix,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Uniform,
    PerSource,
    Full,
}

pub const VARIANTS: [Variant; 3] = [Variant::Uniform, Variant::PerSource, Variant::Full];

/// Random column-stochastic matrix with roughly `zero_frac` forbidden
/// transitions; every column keeps at least one allowed destination.
pub fn random_stochastic(rng: &mut ChaCha8Rng, n: usize, zero_frac: f64) -> StochasticMatrix {
    let mut columns = Vec::with_capacity(n);
    for _ in 0..n {
        let mut col: Vec<f64> = (0..n)
            .map(|_| {
                if rng.random::<f64>() < zero_frac {
                    0.0
                } else {
                    0.05 + rng.random::<f64>()
                }
            })
            .collect();
        if col.iter().all(|&v| v == 0.0) {
            col[rng.random_range(0..n)] = 1.0;
        }
        let z: f64 = col.iter().sum();
        col.iter_mut().for_each(|v| *v /= z);
        columns.push(col);
    }
    StochasticMatrix::from_columns(&columns).unwrap()
}

pub fn random_state(rng: &mut ChaCha8Rng, n: usize) -> EnsembleState {
    let mut v: Vec<f64> = (0..n).map(|_| 0.05 + rng.random::<f64>()).collect();
    let z: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= z);
    EnsembleState::new(v).unwrap()
}

pub fn random_costs(rng: &mut ChaCha8Rng, n: usize, horizon: usize) -> CostSchedule {
    let rows = (0..horizon)
        .map(|_| (0..n).map(|_| -1.0 + 3.0 * rng.random::<f64>()).collect())
        .collect();
    CostSchedule::new(n, rows).unwrap()
}

fn weight(rng: &mut ChaCha8Rng) -> f64 {
    0.3 + 2.7 * rng.random::<f64>()
}

pub fn random_penalty(rng: &mut ChaCha8Rng, variant: Variant, n: usize, horizon: usize) -> PenaltySchedule {
    match variant {
        Variant::Uniform => PenaltySchedule::Uniform((0..horizon).map(|_| weight(rng)).collect()),
        Variant::PerSource => PenaltySchedule::PerSource(
            (0..horizon)
                .map(|_| (0..n).map(|_| weight(rng)).collect())
                .collect(),
        ),
        Variant::Full => PenaltySchedule::Full(
            (0..horizon)
                .map(|_| {
                    (0..n)
                        .map(|_| (0..n).map(|_| weight(rng)).collect())
                        .collect()
                })
                .collect(),
        ),
    }
}

pub fn random_problem(rng: &mut ChaCha8Rng, variant: Variant, n: usize, horizon: usize) -> Problem {
    let pbar = random_stochastic(rng, n, 0.3);
    let rho0 = random_state(rng, n);
    let costs = random_costs(rng, n, horizon);
    let penalty = random_penalty(rng, variant, n, horizon);
    Problem::new(pbar, costs, penalty, rho0).unwrap()
}

/// Straightforward re-implementation of the objective: expected cost of the
/// next state plus the weighted KL of every column, weighted by occupation.
pub fn reference_objective(prob: &Problem, p_traj: &[StochasticMatrix]) -> f64 {
    let n = prob.n();
    let mut rho = prob.rho0.values().to_vec();
    let mut total = 0.0;
    for (t, p) in p_traj.iter().enumerate() {
        let mut next = vec![0.0; n];
        for b in 0..n {
            for a in 0..n {
                let pab = p.get(a, b);
                next[a] += pab * rho[b];
                if pab == 0.0 {
                    continue;
                }
                let gamma = prob.penalty.gamma(t, a, b);
                let term = prob.costs.at(t + 1)[a] + gamma * (pab / prob.pbar.get(a, b)).ln();
                total += rho[b] * pab * term;
            }
        }
        rho = next;
    }
    total
}

/// Checks the invariants every emitted transition matrix must satisfy.
pub fn check_emitted(p: &StochasticMatrix, pbar: &StochasticMatrix) -> Result<(), String> {
    ensemble_mdp::validate_stochastic(&p.rows(), 1e-10).map_err(|e| e.to_string())?;
    for a in 0..p.n() {
        for b in 0..p.n() {
            if pbar.get(a, b) == 0.0 && p.get(a, b) != 0.0 {
                return Err(format!("entry ({a}, {b}) leaves the reference support"));
            }
        }
    }
    Ok(())
}

/// Target signal produced by a chain whose allowed transitions are reweighted
/// by `exp(amp * (U - 1/2))`; feasible by construction.
pub fn perturbed_target(rng: &mut ChaCha8Rng, prob: &Problem, epsilon: &[f64], amp: f64) -> Vec<f64> {
    let n = prob.n();
    let p_traj: Vec<StochasticMatrix> = (0..prob.horizon())
        .map(|_| {
            let columns: Vec<Vec<f64>> = (0..n)
                .map(|src| {
                    let w: Vec<f64> = prob
                        .pbar
                        .column(src)
                        .iter()
                        .map(|&p| {
                            if p > 0.0 {
                                p * (amp * (rng.random::<f64>() - 0.5)).exp()
                            } else {
                                0.0
                            }
                        })
                        .collect();
                    let z: f64 = w.iter().sum();
                    w.iter().map(|v| v / z).collect()
                })
                .collect();
            StochasticMatrix::from_columns(&columns).unwrap()
        })
        .collect();
    consumption(&propagate_all(&prob.rho0, &p_traj).unwrap(), epsilon)
}

/// Grid search over a two-state, two-step problem.
///
/// A column of a 2x2 matrix is `(a, 1 - a)`. Because the occupations weight
/// each column's cost nonnegatively, the best last-step matrix is found
/// column by column; the first-step matrix is searched jointly on the grid
/// and every search is polished by golden section around its best node.
pub fn brute_force_two_by_two(prob: &Problem, grid_step: f64) -> f64 {
    assert_eq!(prob.n(), 2);
    assert_eq!(prob.horizon(), 2);
    let pbar = &prob.pbar;

    // Cost of column `src` at step `t` with continuation values `cont`.
    let column_cost = |t: usize, src: usize, a: f64, cont: [f64; 2]| -> f64 {
        let p = [a, 1.0 - a];
        let mut c = 0.0;
        for dest in 0..2 {
            if p[dest] == 0.0 {
                continue;
            }
            let pb = pbar.get(dest, src);
            if pb == 0.0 {
                return f64::INFINITY;
            }
            let gamma = prob.penalty.gamma(t, dest, src);
            c += p[dest] * (prob.costs.at(t + 1)[dest] + cont[dest] + gamma * (p[dest] / pb).ln());
        }
        c
    };
    let candidates = |src: usize| -> Vec<f64> {
        match (pbar.get(0, src) > 0.0, pbar.get(1, src) > 0.0) {
            (true, true) => {
                let steps = (1.0 / grid_step).round() as usize;
                (0..=steps).map(|k| k as f64 * grid_step).collect()
            }
            (true, false) => vec![1.0],
            (false, true) => vec![0.0],
            (false, false) => unreachable!(),
        }
    };
    let polish = |f: &dyn Fn(f64) -> f64, best: f64, free: bool| -> f64 {
        if !free {
            return f(best);
        }
        let (mut lo, mut hi) = ((best - grid_step).max(0.0), (best + grid_step).min(1.0));
        let ratio = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..200 {
            let x1 = hi - ratio * (hi - lo);
            let x2 = lo + ratio * (hi - lo);
            if f(x1) < f(x2) {
                hi = x2;
            } else {
                lo = x1;
            }
        }
        f(best).min(f(0.5 * (lo + hi)))
    };
    let argmin = |f: &dyn Fn(f64) -> f64, cands: &[f64]| -> f64 {
        *cands
            .iter()
            .min_by(|a, b| f(**a).total_cmp(&f(**b)))
            .unwrap()
    };

    // Last step, column by column.
    let mut last = [0.0; 2];
    for (src, slot) in last.iter_mut().enumerate() {
        let f = |a: f64| column_cost(1, src, a, [0.0, 0.0]);
        let cands = candidates(src);
        let best = argmin(&f, &cands);
        *slot = polish(&f, best, cands.len() > 1);
    }

    // First step, joint grid over both columns.
    let rho0 = prob.rho0.values();
    let c0 = |a: f64| column_cost(0, 0, a, last);
    let c1 = |a: f64| column_cost(0, 1, a, last);
    let (cand0, cand1) = (candidates(0), candidates(1));
    let table1: Vec<f64> = cand1.iter().map(|&a| c1(a)).collect();
    let mut best = (f64::INFINITY, 0.0, 0.0);
    for &a0 in &cand0 {
        let v0 = rho0[0] * c0(a0);
        for (k, &a1) in cand1.iter().enumerate() {
            let total = v0 + rho0[1] * table1[k];
            if total < best.0 {
                best = (total, a0, a1);
            }
        }
    }
    let refined0 = polish(&c0, best.1, cand0.len() > 1);
    let refined1 = polish(&c1, best.2, cand1.len() > 1);
    best.0.min(rho0[0] * refined0 + rho0[1] * refined1)
}
