use crate::chain::{propagate_all, StochasticMatrix};
use crate::error::{Error, Result};
use crate::problem::Problem;

/// Weighted KL term of one source column,
/// `sum_b gamma_b p_b ln(p_b / pbar_b)` with `0 ln(0/0) = 0`.
pub fn kl_column_cost(p_col: &[f64], pbar_col: &[f64], gamma_col: &[f64]) -> Result<f64> {
    let n = p_col.len();
    for (what, len) in [("reference column", pbar_col.len()), ("penalty column", gamma_col.len())] {
        if len != n {
            return Err(Error::Dimension {
                what,
                expected: n,
                found: len,
            });
        }
    }
    let mut total = 0.0;
    for dest in 0..n {
        let p = p_col[dest];
        if p <= 0.0 {
            continue;
        }
        let pbar = pbar_col[dest];
        if pbar <= 0.0 {
            return Err(Error::SupportViolation { destination: dest });
        }
        total += gamma_col[dest] * p * (p / pbar).ln();
    }
    Ok(total)
}

/// Total expected cost plus welfare penalty of a transition schedule,
/// evaluated along the forward trajectory from `prob.rho0`.
pub fn objective_value(prob: &Problem, p_traj: &[StochasticMatrix]) -> Result<f64> {
    let n = prob.n();
    if p_traj.len() != prob.horizon() {
        return Err(Error::Dimension {
            what: "transition schedule length",
            expected: prob.horizon(),
            found: p_traj.len(),
        });
    }
    if let Some(p) = p_traj.iter().find(|p| p.n() != n) {
        return Err(Error::Dimension {
            what: "transition matrix size",
            expected: n,
            found: p.n(),
        });
    }
    let rho_traj = propagate_all(&prob.rho0, p_traj)?;
    let mut total = 0.0;
    for (t, p) in p_traj.iter().enumerate() {
        let next_cost = prob.costs.at(t + 1);
        for src in 0..n {
            let weight = rho_traj[t].values()[src];
            let col = p.column(src);
            let expected_cost: f64 = col.iter().zip(next_cost).map(|(p, u)| p * u).sum();
            let kl = kl_column_cost(
                &col,
                &prob.pbar.column(src),
                &prob.penalty.column(t, src, n),
            )?;
            total += weight * (expected_cost + kl);
        }
    }
    Ok(total)
}
