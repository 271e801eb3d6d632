//! Monte Carlo realization of an ensemble of independent devices.
//!
//! Device `i` draws from its own ChaCha stream `(seed, i)`, so a run is
//! bit-identical for a given seed regardless of how rayon schedules the
//! devices.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::chain::{EnsembleState, StochasticMatrix};
use crate::error::{Error, Result};

const DEVICES_PER_TASK: usize = 1024;

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationRun {
    pub n_devices: usize,
    pub seed: u64,
    /// Occupation counts, `(T + 1) x n`.
    pub counts: Vec<Vec<u64>>,
    /// `counts / n_devices`.
    pub empirical_rho: Vec<Vec<f64>>,
}

impl SimulationRun {
    /// Largest `|empirical - analytic|` over all times and states.
    pub fn max_deviation(&self, rho_traj: &[EnsembleState]) -> f64 {
        self.empirical_rho
            .iter()
            .zip(rho_traj)
            .flat_map(|(emp, rho)| emp.iter().zip(rho.values()).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max)
    }
}

/// Cumulative distribution for inverse-CDF sampling.
struct Categorical {
    cumulative: Vec<f64>,
    positive: Vec<bool>,
    last_positive: usize,
}

impl Categorical {
    fn new(probs: &[f64]) -> Self {
        let mut acc = 0.0;
        let cumulative = probs
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        let positive: Vec<bool> = probs.iter().map(|&p| p > 0.0).collect();
        let last_positive = positive.iter().rposition(|&b| b).unwrap_or(0);
        Self {
            cumulative,
            positive,
            last_positive,
        }
    }

    /// First allowed index whose cumulative mass reaches `u`; a draw that
    /// lands exactly on a bin edge goes to the lower bin.
    fn sample(&self, u: f64) -> usize {
        self.cumulative
            .iter()
            .zip(&self.positive)
            .position(|(&c, &ok)| ok && u <= c)
            .unwrap_or(self.last_positive)
    }
}

/// Samples `n_devices` devices starting from `rho0` and stepping with
/// `p_traj`.
pub fn sample(
    p_traj: &[StochasticMatrix],
    rho0: &EnsembleState,
    n_devices: usize,
    seed: u64,
) -> Result<SimulationRun> {
    if n_devices == 0 {
        return Err(Error::InvalidParameter("device count must be at least 1".into()));
    }
    let n = rho0.n();
    if let Some(p) = p_traj.iter().find(|p| p.n() != n) {
        return Err(Error::Dimension {
            what: "transition matrix vs initial state",
            expected: n,
            found: p.n(),
        });
    }
    let initial = Categorical::new(rho0.values());
    let steps: Vec<Vec<Categorical>> = p_traj
        .iter()
        .map(|p| (0..n).map(|src| Categorical::new(&p.column(src))).collect())
        .collect();
    let rows = p_traj.len() + 1;

    let tasks = n_devices.div_ceil(DEVICES_PER_TASK);
    let counts = (0..tasks)
        .into_par_iter()
        .map(|task| {
            let mut local = vec![vec![0u64; n]; rows];
            let start = task * DEVICES_PER_TASK;
            let end = (start + DEVICES_PER_TASK).min(n_devices);
            for device in start..end {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(device as u64);
                let mut state = initial.sample(rng.random::<f64>());
                local[0][state] += 1;
                for (t, columns) in steps.iter().enumerate() {
                    state = columns[state].sample(rng.random::<f64>());
                    local[t + 1][state] += 1;
                }
            }
            local
        })
        .reduce(
            || vec![vec![0u64; n]; rows],
            |mut acc, part| {
                for (a, p) in acc.iter_mut().zip(part) {
                    for (x, y) in a.iter_mut().zip(p) {
                        *x += y;
                    }
                }
                acc
            },
        );

    let empirical_rho = counts
        .iter()
        .map(|row| row.iter().map(|&c| c as f64 / n_devices as f64).collect())
        .collect();
    Ok(SimulationRun {
        n_devices,
        seed,
        counts,
        empirical_rho,
    })
}

/// `sum_a eps_a rho_emp(t, a)` for every sampled time.
pub fn empirical_consumption(run: &SimulationRun, epsilon: &[f64]) -> Result<Vec<f64>> {
    let n = run.counts.first().map_or(0, Vec::len);
    if epsilon.len() != n {
        return Err(Error::Dimension {
            what: "energy vector",
            expected: n,
            found: epsilon.len(),
        });
    }
    Ok(run
        .empirical_rho
        .iter()
        .map(|row| row.iter().zip(epsilon).map(|(r, e)| r * e).sum())
        .collect())
}
