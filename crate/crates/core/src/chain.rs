//! Column-stochastic transition matrices, ensemble distributions and the
//! master equation that couples them.
//!
//! Orientation is fixed throughout the crate: entry `(dest, src)` is the
//! probability of moving from state `src` to state `dest` in one slot, so
//! every *column* sums to one and `rho' = P rho`.

use nalgebra::{DMatrix, DVector};

use crate::error::{ColumnViolation, Error, Result, StochasticityReport};

/// Default tolerance for column sums and state normalization.
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// Default tolerance for fixed-point residuals.
pub const FIXED_POINT_TOL: f64 = 1e-10;

/// Singular values of `I - P` below this count towards the eigenvalue-1
/// eigenspace.
const NULLSPACE_TOL: f64 = 1e-10;

/// Square column-stochastic matrix stored row-major as `(dest, src)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticMatrix {
    n: usize,
    data: Vec<f64>,
}

impl StochasticMatrix {
    /// Builds a matrix from row-major entries, checking stochasticity at
    /// [`STOCHASTIC_TOL`].
    pub fn new(n: usize, data: Vec<f64>) -> Result<Self> {
        Self::with_tolerance(n, data, STOCHASTIC_TOL)
    }

    pub fn with_tolerance(n: usize, data: Vec<f64>, tol: f64) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::Dimension {
                what: "stochastic matrix entries",
                expected: n * n,
                found: data.len(),
            });
        }
        check_columns(n, &data, tol)?;
        Ok(Self { n, data })
    }

    /// Builds a matrix from `rows[dest][src]`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = square_size(rows)?;
        Self::new(n, rows.concat())
    }

    /// Builds a matrix from `columns[src][dest]`.
    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let n = square_size(columns)?;
        let mut data = vec![0.0; n * n];
        for (src, col) in columns.iter().enumerate() {
            for (dest, &v) in col.iter().enumerate() {
                data[dest * n + src] = v;
            }
        }
        Self::new(n, data)
    }

    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Self { n, data }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, dest: usize, src: usize) -> f64 {
        self.data[dest * self.n + src]
    }

    /// Transition distribution out of `src`.
    pub fn column(&self, src: usize) -> Vec<f64> {
        (0..self.n).map(|dest| self.get(dest, src)).collect()
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.n).map(<[f64]>::to_vec).collect()
    }

    /// Row-major `(dest, src)` entries.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// True where the transition `src -> dest` is allowed.
    pub fn support(&self, dest: usize, src: usize) -> bool {
        self.get(dest, src) > 0.0
    }

    pub fn validate(&self, tol: f64) -> Result<()> {
        check_columns(self.n, &self.data, tol)
    }

    pub fn max_abs_diff(&self, other: &StochasticMatrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

fn square_size(rows: &[Vec<f64>]) -> Result<usize> {
    let n = rows.len();
    for r in rows {
        if r.len() != n {
            return Err(Error::Dimension {
                what: "square matrix row",
                expected: n,
                found: r.len(),
            });
        }
    }
    Ok(n)
}

fn check_columns(n: usize, data: &[f64], tol: f64) -> Result<()> {
    let mut report = StochasticityReport::default();
    for src in 0..n {
        let mut sum = 0.0;
        let mut min_entry = f64::INFINITY;
        for dest in 0..n {
            let v = data[dest * n + src];
            sum += v;
            min_entry = min_entry.min(v);
        }
        let finite = sum.is_finite() && min_entry.is_finite();
        if !finite || min_entry < -tol || (sum - 1.0).abs() > tol {
            report.violations.push(ColumnViolation {
                column: src,
                sum,
                min_entry,
            });
        }
    }
    if report.violations.is_empty() {
        Ok(())
    } else {
        Err(Error::NotStochastic(report))
    }
}

/// Checks a raw `rows[dest][src]` matrix for column stochasticity.
///
/// Entries down to `-tol` are accepted so that round-off from solvers does
/// not trip the check; the report lists every offending source column.
pub fn validate_stochastic(rows: &[Vec<f64>], tol: f64) -> Result<()> {
    let n = square_size(rows)?;
    check_columns(n, &rows.concat(), tol)
}

/// Probability distribution of a device over the discrete states.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleState {
    values: Vec<f64>,
}

impl EnsembleState {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        Self::with_tolerance(values, STOCHASTIC_TOL)
    }

    pub fn with_tolerance(values: Vec<f64>, tol: f64) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidState("empty state vector".into()));
        }
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < 0.0)
        {
            return Err(Error::InvalidState(format!("entry {i} is {v}")));
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > tol {
            return Err(Error::InvalidState(format!("entries sum to {sum}")));
        }
        Ok(Self { values })
    }

    pub fn uniform(n: usize) -> Self {
        Self {
            values: vec![1.0 / n as f64; n],
        }
    }

    pub fn point_mass(n: usize, state: usize) -> Self {
        let mut values = vec![0.0; n];
        values[state] = 1.0;
        Self { values }
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self) -> f64 {
        -self
            .values
            .iter()
            .filter(|&&v| v > 0.0)
            .map(|&v| v * v.ln())
            .sum::<f64>()
    }

    pub fn max_abs_diff(&self, other: &EnsembleState) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// One step of the master equation, `rho'_a = sum_b P(a, b) rho_b`.
pub fn propagate(rho: &EnsembleState, p: &StochasticMatrix) -> Result<EnsembleState> {
    let n = p.n();
    if rho.n() != n {
        return Err(Error::Dimension {
            what: "state vs transition matrix",
            expected: n,
            found: rho.n(),
        });
    }
    let values = (0..n)
        .map(|dest| {
            (0..n)
                .map(|src| p.get(dest, src) * rho.values[src])
                .sum::<f64>()
        })
        .collect();
    Ok(EnsembleState { values })
}

/// Runs the master equation forward, returning `rho(0..=len)`.
pub fn propagate_all(rho0: &EnsembleState, p_traj: &[StochasticMatrix]) -> Result<Vec<EnsembleState>> {
    let mut traj = Vec::with_capacity(p_traj.len() + 1);
    traj.push(rho0.clone());
    for p in p_traj {
        let next = propagate(traj.last().expect("non-empty"), p)?;
        traj.push(next);
    }
    Ok(traj)
}

/// Stationary distribution of `pbar` from the linear system
/// `(I - pbar) rho = 0`, `sum(rho) = 1`.
///
/// Works for periodic chains where power iteration would oscillate. Fails
/// when the eigenvalue-1 eigenspace is more than one-dimensional.
pub fn steady_state(pbar: &StochasticMatrix) -> Result<EnsembleState> {
    let n = pbar.n();
    let a = DMatrix::from_fn(n, n, |i, j| {
        let id = if i == j { 1.0 } else { 0.0 };
        id - pbar.get(i, j)
    });
    let sv = a.clone().svd(false, false).singular_values;
    let dimension = sv.iter().filter(|&&s| s < NULLSPACE_TOL).count();
    if dimension > 1 {
        return Err(Error::NonUniqueSteadyState { dimension });
    }

    let mut aug = DMatrix::zeros(n + 1, n);
    aug.view_mut((0, 0), (n, n)).copy_from(&a);
    aug.row_mut(n).fill(1.0);
    let mut rhs = DVector::zeros(n + 1);
    rhs[n] = 1.0;
    let sol = aug
        .svd(true, true)
        .solve(&rhs, f64::EPSILON)
        .map_err(|e| Error::InvalidParameter(format!("steady-state solve failed: {e}")))?;

    let mut values: Vec<f64> = sol.iter().map(|&v| v.max(0.0)).collect();
    let sum: f64 = values.iter().sum();
    values.iter_mut().for_each(|v| *v /= sum);
    Ok(EnsembleState { values })
}
