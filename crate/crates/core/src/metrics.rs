//! Feasibility and optimality measures.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{axpy, dist, norm_sq};
use crate::problem::Problem;
use crate::reference::ReferenceSolution;

/// Iteration budget of [`distance_to_feasible`].
pub const DISTANCE_BUDGET: usize = 20_000;

/// `‖((h_j(x))₊)_j‖₂`
pub fn feasibility_norm(p: &Problem, x: &[f64]) -> f64 {
    p.constraints
        .iter()
        .map(|h| {
            let v = h.value(x).max(0.0);
            v * v
        })
        .sum::<f64>()
        .sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceEstimate {
    /// `‖x − x_T‖` for the terminal point `x_T` of the feasibility loop.
    pub distance: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Upper estimate of `dist(x, X)`.
///
/// Projects onto `Y`, then alternates full Polyak steps on the most violated
/// constraint with projections onto `Y` until every violation is at most `tol`.
pub fn distance_to_feasible(p: &Problem, x: &[f64], tol: f64) -> DistanceEstimate {
    let mut y = p.simple_set.project(x);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < DISTANCE_BUDGET {
        let mut worst = f64::NEG_INFINITY;
        let mut arg = 0;
        for (j, h) in p.constraints.iter().enumerate() {
            let v = h.value(&y);
            if v > worst {
                worst = v;
                arg = j;
            }
        }
        if worst <= tol {
            converged = true;
            break;
        }
        let g = p.constraints[arg].subgradient(&y);
        let g_sq = norm_sq(&g);
        if g_sq == 0.0 {
            break;
        }
        axpy(-worst / g_sq, &g, &mut y);
        y = p.simple_set.project(&y);
        iterations += 1;
    }
    DistanceEstimate {
        distance: dist(x, &y),
        converged,
        iterations,
    }
}

/// Signed `F(x) − F_ref`.
pub fn optimality_gap(p: &Problem, x: &[f64], reference: &ReferenceSolution) -> Result<f64> {
    check_dim(p.dim, x.len())?;
    if reference.fingerprint != p.fingerprint() {
        return Err(Error::Precondition("reference solution belongs to a different instance".into()));
    }
    Ok(p.eval_objective(x)? - reference.f_ref)
}
