use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{Problem, ProxTerm, SimpleSet, SmoothTerm};
use crate::error::{check_dim, Error, Result};
use crate::linalg::{dot, norm, norm_sq};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstantsMode {
    /// Bounded (sub)gradients on a bounded `Y`: `L = 0`.
    Nonsmooth,
    /// Lipschitz gradients of `f_i`, bounded subgradients of `g_i`.
    Smooth,
}

/// Deterministic problem constants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemConstants {
    /// Offset `B²` of the bounded gradient condition.
    pub b_sq: f64,
    /// Slope `L` of the bounded gradient condition.
    pub l: f64,
    /// Strong convexity modulus of `F` on `Y`.
    pub mu: f64,
    /// Per-constraint subgradient bounds.
    pub b_j: Vec<f64>,
    /// Growth constant `c̄` (user supplied, default 1).
    pub c_bar: f64,
    /// Growth exponent `q >= 1` (default 1).
    pub q: f64,
    /// Set when `Y` is unbounded and the diameter term of the smooth estimate was dropped.
    #[serde(default)]
    pub diameter_term_omitted: bool,
}

impl ProblemConstants {
    pub fn validate(&self) -> Result<()> {
        let ok = self.b_sq >= 0.0
            && self.l >= 0.0
            && self.mu >= 0.0
            && self.c_bar > 0.0
            && self.q >= 1.0
            && self.b_j.iter().all(|b| *b > 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "constants out of range: B²={}, L={}, μ={}, c̄={}, q={}",
                self.b_sq, self.l, self.mu, self.c_bar, self.q
            )))
        }
    }

    pub fn max_b_j(&self) -> f64 {
        self.b_j.iter().fold(0.0, |m, b| m.max(*b))
    }
}

/// Estimates `B²`, `L`, `μ` and `B_j` for `p`.
///
/// `x_ref` stands in for the optimal set; it is required in smooth mode.
/// `c̄` and `q` are set to 1 and may be overridden by the caller.
pub fn estimate_constants(
    p: &Problem,
    x_ref: Option<&[f64]>,
    mode: ConstantsMode,
) -> Result<ProblemConstants> {
    let big_n = p.num_components() as f64;
    let b_g_sq: Vec<f64> = p
        .components
        .iter()
        .map(|c| {
            let b: f64 = c.g.iter().map(ProxTerm::subgradient_bound).sum();
            b * b
        })
        .collect();

    let mut diameter_term_omitted = false;
    let (b_sq, l) = match mode {
        ConstantsMode::Nonsmooth => {
            let mut acc = 0.0;
            for (c, bg) in p.components.iter().zip(&b_g_sq) {
                let bf = smooth_gradient_bound(&c.f, &p.simple_set).ok_or_else(|| {
                    Error::Estimation(
                        "gradient bound undefined: Y is unbounded and f_i is not linear".into(),
                    )
                })?;
                acc += bf * bf + bg;
            }
            (2.0 * acc / big_n, 0.0)
        }
        ConstantsMode::Smooth => {
            let x_ref = x_ref.ok_or_else(|| {
                Error::Estimation("smooth mode needs a reference solution".into())
            })?;
            check_dim(p.dim, x_ref.len())?;
            let l_max = p
                .components
                .iter()
                .map(|c| c.f.smoothness())
                .fold(0.0, f64::max);
            let grad_sq_mean = p
                .components
                .iter()
                .map(|c| norm_sq(&c.f.gradient(x_ref)))
                .sum::<f64>()
                / big_n;
            let bg_term = 4.0 * b_g_sq.iter().sum::<f64>() / big_n;
            let diameter_term = match p.simple_set.diameter() {
                Some(d) => d * l_max * min_norm_subgradient(p, x_ref)?,
                None => {
                    diameter_term_omitted = true;
                    0.0
                }
            };
            (bg_term + 4.0 * (grad_sq_mean + diameter_term), 4.0 * l_max)
        }
    };

    let constants = ProblemConstants {
        b_sq,
        l,
        mu: strong_convexity(p),
        b_j: p.constraints.iter().map(|h| h.subgradient_bound()).collect(),
        c_bar: 1.0,
        q: 1.0,
        diameter_term_omitted,
    };
    Ok(constants)
}

/// `sup_{x∈Y} ‖∇f(x)‖`, `None` when infinite.
fn smooth_gradient_bound(f: &SmoothTerm, y: &SimpleSet) -> Option<f64> {
    match f {
        SmoothTerm::Linear { a, .. } => Some(norm(a)),
        SmoothTerm::LeastSquares { a, b } => {
            let (lo, hi) = linear_range(a, y)?;
            Some(norm(a) * (lo - b).abs().max((hi - b).abs()))
        }
        SmoothTerm::SeparableQuadratic {
            curvature,
            center,
            linear,
        } => match y {
            SimpleSet::Whole => {
                if curvature.iter().all(|c| *c == 0.0) {
                    Some(norm(linear))
                } else {
                    None
                }
            }
            SimpleSet::Box { lower, upper } => {
                let mut s = 0.0;
                for k in 0..curvature.len() {
                    let at = |v: f64| (curvature[k] * (v - center[k]) + linear[k]).abs();
                    let m = if curvature[k] == 0.0 {
                        linear[k].abs()
                    } else {
                        at(lower[k]?).max(at(upper[k]?))
                    };
                    s += m * m;
                }
                Some(s.sqrt())
            }
            SimpleSet::Ball { center: yc, radius } => {
                let c_max = curvature.iter().fold(0.0_f64, |m, c| m.max(*c));
                Some(c_max * (crate::linalg::dist(yc, center) + radius) + norm(linear))
            }
        },
    }
}

/// Range of `aᵀx` over `Y`.
fn linear_range(a: &[f64], y: &SimpleSet) -> Option<(f64, f64)> {
    match y {
        SimpleSet::Whole => {
            if a.iter().all(|v| *v == 0.0) {
                Some((0.0, 0.0))
            } else {
                None
            }
        }
        SimpleSet::Box { lower, upper } => {
            let (mut lo, mut hi) = (0.0, 0.0);
            for (k, ak) in a.iter().enumerate() {
                if *ak == 0.0 {
                    continue;
                }
                let (l, u) = (lower[k]?, upper[k]?);
                lo += (ak * l).min(ak * u);
                hi += (ak * l).max(ak * u);
            }
            Some((lo, hi))
        }
        SimpleSet::Ball { center, radius } => {
            let mid = dot(a, center);
            let r = radius * norm(a);
            Some((mid - r, mid + r))
        }
    }
}

/// Norm of the smallest element of `∇f(x) + ∂g(x)`.
fn min_norm_subgradient(p: &Problem, x: &[f64]) -> Result<f64> {
    let inv_n = 1.0 / p.num_components() as f64;
    let mut grad = p.grad_f(x)?;
    let mut kink = vec![0.0; p.dim];
    let mut groups: Vec<(&[usize], f64)> = Vec::new();
    for c in &p.components {
        for t in &c.g {
            match t {
                ProxTerm::L1 { terms } => {
                    for (k, w) in terms {
                        if x[*k] == 0.0 {
                            kink[*k] += inv_n * w;
                        } else {
                            grad[*k] += inv_n * w * x[*k].signum();
                        }
                    }
                }
                ProxTerm::Norm2 { coords, weight } => {
                    let nrm = coords.iter().map(|k| x[*k] * x[*k]).sum::<f64>().sqrt();
                    if nrm > 0.0 {
                        for k in coords {
                            grad[*k] += inv_n * weight * x[*k] / nrm;
                        }
                    } else {
                        groups.push((coords, inv_n * weight));
                    }
                }
            }
        }
    }
    for k in 0..p.dim {
        let t = kink[k];
        grad[k] -= grad[k].clamp(-t, t);
    }
    for (coords, t) in groups {
        let nrm = coords.iter().map(|k| grad[*k] * grad[*k]).sum::<f64>().sqrt();
        let keep = if nrm > t { 1.0 - t / nrm } else { 0.0 };
        for k in coords {
            grad[*k] *= keep;
        }
    }
    Ok(norm(&grad))
}

/// Smallest eigenvalue of the Hessian of `(1/N) Σ f_i`, clamped at zero.
fn strong_convexity(p: &Problem) -> f64 {
    let n = p.dim;
    let inv_n = 1.0 / p.num_components() as f64;
    let mut h = DMatrix::<f64>::zeros(n, n);
    for c in &p.components {
        match &c.f {
            SmoothTerm::LeastSquares { a, .. } => {
                for r in 0..n {
                    if a[r] == 0.0 {
                        continue;
                    }
                    for s in 0..n {
                        h[(r, s)] += inv_n * a[r] * a[s];
                    }
                }
            }
            SmoothTerm::SeparableQuadratic { curvature, .. } => {
                for k in 0..n {
                    h[(k, k)] += inv_n * curvature[k];
                }
            }
            SmoothTerm::Linear { .. } => {}
        }
    }
    let min = h
        .symmetric_eigenvalues()
        .iter()
        .fold(f64::INFINITY, |m, v| m.min(*v));
    min.max(0.0)
}
