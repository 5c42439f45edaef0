use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::stepsize::StepsizeSchedule;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AveragingMode {
    /// Weights `α_j(2 − α_j 𝓛)` on `x_j`, `j >= 1`.
    Convex,
    /// Weights `(t+1)²` on `x_t`, `t >= k₀+1`.
    StronglyConvex,
}

/// Running weighted sum `Σ w_j x_j` and `S = Σ w_j`.
#[derive(Clone, Debug, PartialEq)]
pub struct Averager {
    numerator: Vec<f64>,
    weight_sum: f64,
    terms: usize,
}

impl Averager {
    pub fn new(dim: usize) -> Self {
        Averager {
            numerator: vec![0.0; dim],
            weight_sum: 0.0,
            terms: 0,
        }
    }

    pub fn push(&mut self, weight: f64, x: &[f64]) {
        for (n, xi) in self.numerator.iter_mut().zip(x) {
            *n += weight * xi;
        }
        self.weight_sum += weight;
        self.terms += 1;
    }

    pub fn weight_sum(&self) -> f64 {
        self.weight_sum
    }

    pub fn terms(&self) -> usize {
        self.terms
    }

    pub fn average(&self) -> Result<Vec<f64>> {
        if !(self.weight_sum > 0.0) {
            return Err(Error::Precondition("average requested before any weighted iterate".into()));
        }
        Ok(self.numerator.iter().map(|n| n / self.weight_sum).collect())
    }
}

/// `x̂_k` from the iterates `x_1, …, x_k` under `schedule`.
pub fn average_convex(iterates: &[Vec<f64>], schedule: &StepsizeSchedule) -> Result<Vec<f64>> {
    let first = iterates
        .first()
        .ok_or_else(|| Error::Precondition("convex average needs k >= 1".into()))?;
    let mut acc = Averager::new(first.len());
    for (j, x) in iterates.iter().enumerate() {
        check_dim(first.len(), x.len())?;
        acc.push(schedule.convex_weight(j + 1), x);
    }
    acc.average()
}

/// `x̂_k` with weights `(t+1)²` over `t = k₀+1..=k`, from the iterates
/// `x_1, …, x_k`.
pub fn average_strongly_convex(iterates: &[Vec<f64>], k0: usize) -> Result<Vec<f64>> {
    let k = iterates.len();
    if k <= k0 {
        return Err(Error::Precondition(format!("strongly convex average needs k > k0, got k={k}, k0={k0}")));
    }
    let mut acc = Averager::new(iterates[0].len());
    for t in k0 + 1..=k {
        check_dim(acc.numerator.len(), iterates[t - 1].len())?;
        let w = ((t + 1) * (t + 1)) as f64;
        acc.push(w, &iterates[t - 1]);
    }
    acc.average()
}
