//! Generator for the cyclic thermostatic-load chain: `n` states on a ring,
//! the first half "on" and the second half "off". A device advances one
//! step around the ring with probability `q` and stays put otherwise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::chain::{steady_state, StochasticMatrix};
use crate::error::{Error, Result};
use crate::problem::{CostSchedule, PenaltySchedule, Problem};

/// Which welfare weights to attach to the generated chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PenaltyKind {
    /// One weight (`gamma_on_cycle`) for every transition.
    Uniform,
    /// `gamma_on_cycle` for transitions one step along the ring,
    /// `gamma_off_cycle` for everything else.
    #[default]
    Cycle,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CyclicModelSpec {
    pub n_states: usize,
    pub advance_prob: f64,
    /// Defaults to the first half of the ring.
    pub on_states: Option<Vec<usize>>,
    pub cost_base: f64,
    pub gamma_off_cycle: f64,
    pub gamma_on_cycle: f64,
    pub epsilon_on: f64,
    pub epsilon_off: f64,
    /// Penalize the wrap transition `n-1 -> 0` like an off-cycle move.
    pub strict_wrap_gamma: bool,
}

impl Default for CyclicModelSpec {
    fn default() -> Self {
        Self {
            n_states: 8,
            advance_prob: 0.8,
            on_states: None,
            cost_base: 1.0,
            gamma_off_cycle: 10.0,
            gamma_on_cycle: 1.0,
            epsilon_on: 1.0,
            epsilon_off: 0.0,
            strict_wrap_gamma: false,
        }
    }
}

impl CyclicModelSpec {
    pub fn validate(&self) -> Result<()> {
        let n = self.n_states;
        if n < 2 || !n.is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!(
                "state count must be even and at least 2, got {n}"
            )));
        }
        if !(self.advance_prob > 0.0 && self.advance_prob <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "advance probability must lie in (0, 1], got {}",
                self.advance_prob
            )));
        }
        if let Some(on) = &self.on_states {
            if let Some(s) = on.iter().find(|&&s| s >= n) {
                return Err(Error::InvalidParameter(format!("on-state {s} out of range")));
            }
        }
        for (name, g) in [("gamma_off_cycle", self.gamma_off_cycle), ("gamma_on_cycle", self.gamma_on_cycle)] {
            if !(g.is_finite() && g > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {g}")));
            }
        }
        for (name, v) in [
            ("cost_base", self.cost_base),
            ("epsilon_on", self.epsilon_on),
            ("epsilon_off", self.epsilon_off),
        ] {
            if !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} must be finite")));
            }
        }
        if self.epsilon_on < 0.0 || self.epsilon_off < 0.0 {
            return Err(Error::InvalidParameter("energy consumption must be nonnegative".into()));
        }
        Ok(())
    }

    pub fn on_states(&self) -> Vec<usize> {
        self.on_states
            .clone()
            .unwrap_or_else(|| (0..self.n_states / 2).collect())
    }

    fn is_on(&self, state: usize) -> bool {
        self.on_states().contains(&state)
    }

    /// Natural ring chain; column `a` puts `q` on `a + 1 (mod n)` and `1 - q`
    /// on `a`.
    pub fn pbar(&self) -> Result<StochasticMatrix> {
        self.validate()?;
        let n = self.n_states;
        let q = self.advance_prob;
        let mut data = vec![0.0; n * n];
        for src in 0..n {
            data[((src + 1) % n) * n + src] += q;
            data[src * n + src] += 1.0 - q;
        }
        StochasticMatrix::new(n, data)
    }

    /// `[dest][src]` weights for [`PenaltyKind::Cycle`].
    pub fn cycle_weights(&self) -> Vec<Vec<f64>> {
        let n = self.n_states;
        let mut w = vec![vec![self.gamma_off_cycle; n]; n];
        for src in 0..n {
            let wraps = src + 1 == n;
            if !(wraps && self.strict_wrap_gamma) {
                w[(src + 1) % n][src] = self.gamma_on_cycle;
            }
        }
        w
    }

    pub fn penalty(&self, kind: PenaltyKind, horizon: usize) -> PenaltySchedule {
        match kind {
            PenaltyKind::Uniform => PenaltySchedule::uniform_constant(horizon, self.gamma_on_cycle),
            PenaltyKind::Cycle => PenaltySchedule::full_constant(horizon, self.cycle_weights()),
        }
    }

    /// Per-state energy use per slot.
    pub fn epsilon(&self) -> Vec<f64> {
        (0..self.n_states)
            .map(|s| if self.is_on(s) { self.epsilon_on } else { self.epsilon_off })
            .collect()
    }

    /// Costs `cost_base + r(t)` on the on-states, see [`uniform_level_costs`].
    pub fn costs(&self, horizon: usize, seed: u64) -> Result<CostSchedule> {
        self.validate()?;
        uniform_level_costs(self.n_states, &self.on_states(), self.cost_base, horizon, seed)
    }

    /// Full problem starting from the natural steady state.
    pub fn problem(&self, kind: PenaltyKind, horizon: usize, seed: u64) -> Result<Problem> {
        let pbar = self.pbar()?;
        let rho0 = steady_state(&pbar)?;
        Problem::new(pbar, self.costs(horizon, seed)?, self.penalty(kind, horizon), rho0)
    }
}

/// Costs `base + r(t)` on `states` with one `r(t) ~ U[0, 1)` per time step
/// drawn from a ChaCha8 stream seeded with `seed`; zero elsewhere.
pub fn uniform_level_costs(
    n: usize,
    states: &[usize],
    base: f64,
    horizon: usize,
    seed: u64,
) -> Result<CostSchedule> {
    if let Some(&s) = states.iter().find(|&&s| s >= n) {
        return Err(Error::InvalidParameter(format!("cost state {s} out of range for {n} states")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = (0..horizon)
        .map(|_| {
            let level = base + rng.random::<f64>();
            (0..n)
                .map(|s| if states.contains(&s) { level } else { 0.0 })
                .collect()
        })
        .collect();
    CostSchedule::new(n, rows)
}
