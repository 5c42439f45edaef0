//! Stepsize sequences.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Open interval `(lo, hi)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OpenInterval {
    pub lo: f64,
    pub hi: f64,
}

impl OpenInterval {
    pub fn contains(&self, x: f64) -> bool {
        x > self.lo && x < self.hi
    }
}

/// Admissible initial stepsizes for the scaled slope `𝓛`:
/// `(0, 1/2)` if `𝓛 = 0`, else `(0, (1 − √((1 − 𝓛)₊)) / 𝓛)`.
pub fn admissible_alpha0_interval(l_scaled: f64) -> Result<OpenInterval> {
    if !(l_scaled >= 0.0) || !l_scaled.is_finite() {
        return Err(Error::Config(format!("scaled L must be finite and nonnegative, got {l_scaled}")));
    }
    let hi = if l_scaled == 0.0 {
        0.5
    } else if l_scaled < 1.0 {
        // (1 − √(1−𝓛))/𝓛 rewritten to avoid cancellation for small 𝓛
        1.0 / (1.0 + (1.0 - l_scaled).sqrt())
    } else {
        1.0 / l_scaled
    };
    Ok(OpenInterval { lo: 0.0, hi })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alpha0Case {
    /// `R₀/𝓑` binds.
    Ratio,
    /// The interval bound minus `δ` binds.
    Interval,
}

/// `α₀* = min(R₀/𝓑, min(1/2, upper) − δ)`.
pub fn optimal_alpha0(r0: f64, b_scaled: f64, l_scaled: f64, delta: f64) -> Result<(f64, Alpha0Case)> {
    if !(r0 > 0.0) || !(b_scaled > 0.0) {
        return Err(Error::Config(format!("R0 and scaled B must be positive, got {r0} and {b_scaled}")));
    }
    if !(delta > 0.0 && delta < 0.5) {
        return Err(Error::Config(format!("delta must lie in (0, 1/2), got {delta}")));
    }
    let cap = admissible_alpha0_interval(l_scaled)?.hi.min(0.5) - delta;
    if cap <= 0.0 {
        return Err(Error::Config(format!(
            "delta {delta} leaves no admissible initial stepsize (upper bound {})",
            cap + delta
        )));
    }
    let ratio = r0 / b_scaled;
    if ratio <= cap {
        Ok((ratio, Alpha0Case::Ratio))
    } else {
        Ok((cap, Alpha0Case::Interval))
    }
}

/// `C = β(2−β)/(c 𝓑_h²)`.
pub fn c_constant(beta: f64, c: f64, b_h: f64) -> Result<f64> {
    if !(beta > 0.0 && beta < 2.0) {
        return Err(Error::Config(format!("beta must lie in (0,2), got {beta}")));
    }
    if !(c > 0.0) || !(b_h > 0.0) {
        return Err(Error::Config(format!("c and B_h must be positive, got {c} and {b_h}")));
    }
    Ok(beta * (2.0 - beta) / (c * b_h * b_h))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum StepsizeSchedule {
    /// `α_k = α₀ / (k+1)^γ`
    ConvexDecay { alpha0: f64, gamma: f64, l_scaled: f64 },
    /// `α_k = min(1/𝓛, 8/(μ(k+1)))`
    Switching { l_scaled: f64, mu: f64 },
}

impl StepsizeSchedule {
    /// Convex decay schedule. `gamma < 1/2` needs `assume_zero_b`.
    pub fn convex_decay(alpha0: f64, gamma: f64, l_scaled: f64, assume_zero_b: bool) -> Result<Self> {
        let interval = admissible_alpha0_interval(l_scaled)?;
        if !interval.contains(alpha0) {
            return Err(Error::Config(format!(
                "alpha0 = {alpha0} lies outside the admissible interval ({}, {})",
                interval.lo, interval.hi
            )));
        }
        let lo = if assume_zero_b { 0.0 } else { 0.5 };
        if !(gamma >= lo && gamma < 1.0) {
            return Err(Error::Config(format!("gamma must lie in [{lo}, 1), got {gamma}")));
        }
        Ok(StepsizeSchedule::ConvexDecay {
            alpha0,
            gamma,
            l_scaled,
        })
    }

    pub fn switching(l_scaled: f64, mu: f64) -> Result<Self> {
        if !(l_scaled > 0.0) || !(mu > 0.0) || !l_scaled.is_finite() {
            return Err(Error::Config(format!(
                "switching schedule needs positive scaled L and mu, got {l_scaled} and {mu}"
            )));
        }
        Ok(StepsizeSchedule::Switching { l_scaled, mu })
    }

    pub fn alpha_at(&self, k: usize) -> f64 {
        let k1 = (k + 1) as f64;
        match *self {
            StepsizeSchedule::ConvexDecay { alpha0, gamma, .. } => alpha0 / k1.powf(gamma),
            StepsizeSchedule::Switching { l_scaled, mu } => (1.0 / l_scaled).min(8.0 / (mu * k1)),
        }
    }

    /// `k₀ = ⌊8𝓛/μ − 1⌋`, clamped at 0; `None` for convex decay.
    pub fn switch_point(&self) -> Option<usize> {
        match *self {
            StepsizeSchedule::ConvexDecay { .. } => None,
            StepsizeSchedule::Switching { l_scaled, mu } => Some((8.0 * l_scaled / mu - 1.0).floor().max(0.0) as usize),
        }
    }

    pub fn l_scaled(&self) -> f64 {
        match *self {
            StepsizeSchedule::ConvexDecay { l_scaled, .. } | StepsizeSchedule::Switching { l_scaled, .. } => l_scaled,
        }
    }

    /// Averaging weight `α_k(2 − α_k 𝓛)` of the convex mode.
    pub fn convex_weight(&self, k: usize) -> f64 {
        let a = self.alpha_at(k);
        a * (2.0 - a * self.l_scaled())
    }
}
