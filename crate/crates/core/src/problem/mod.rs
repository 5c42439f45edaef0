//! Constrained finite-sum problem model.
//!
//! A [`Problem`] minimizes `F(x) = (1/N) Σ_i (f_i(x) + g_i(x))` over a simple
//! convex set `Y` subject to convex functional constraints `h_j(x) <= 0`.
//! Each `f_i` exposes a gradient, each `g_i` a proximal map, and each `h_j`
//! a subgradient. All oracles are pure.

mod constants;
mod generators;

pub use constants::{estimate_constants, ConstantsMode, ProblemConstants};
pub use generators::{
    make_constrained_lasso, make_robust_svm, ConstrainedLassoSpec, LassoScales, QDiagonal,
    RobustSvmSpec, SvmData,
};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{axpy, dot, norm, norm_sq};
use crate::sampling::Sample;

/// Differentiable part `f_i` of one objective component.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SmoothTerm {
    /// `½ (aᵀx − b)²`
    LeastSquares { a: Vec<f64>, b: f64 },
    /// `aᵀx + b`
    Linear { a: Vec<f64>, b: f64 },
    /// `½ Σ_k curvature_k (x_k − center_k)² + linearᵀx`, with `curvature >= 0`.
    SeparableQuadratic {
        curvature: Vec<f64>,
        center: Vec<f64>,
        linear: Vec<f64>,
    },
}

impl SmoothTerm {
    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            SmoothTerm::LeastSquares { a, b } => {
                let r = dot(a, x) - b;
                0.5 * r * r
            }
            SmoothTerm::Linear { a, b } => dot(a, x) + b,
            SmoothTerm::SeparableQuadratic {
                curvature,
                center,
                linear,
            } => {
                let mut v = 0.0;
                for k in 0..x.len() {
                    let d = x[k] - center[k];
                    v += 0.5 * curvature[k] * d * d + linear[k] * x[k];
                }
                v
            }
        }
    }

    /// Adds `scale * ∇f(x)` into `out`.
    pub fn add_gradient(&self, x: &[f64], scale: f64, out: &mut [f64]) {
        match self {
            SmoothTerm::LeastSquares { a, b } => {
                let r = dot(a, x) - b;
                axpy(scale * r, a, out);
            }
            SmoothTerm::Linear { a, .. } => axpy(scale, a, out),
            SmoothTerm::SeparableQuadratic {
                curvature,
                center,
                linear,
            } => {
                for k in 0..x.len() {
                    out[k] += scale * (curvature[k] * (x[k] - center[k]) + linear[k]);
                }
            }
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; x.len()];
        self.add_gradient(x, 1.0, &mut g);
        g
    }

    /// Lipschitz constant of the gradient.
    pub fn smoothness(&self) -> f64 {
        match self {
            SmoothTerm::LeastSquares { a, .. } => norm_sq(a),
            SmoothTerm::Linear { .. } => 0.0,
            SmoothTerm::SeparableQuadratic { curvature, .. } => {
                curvature.iter().fold(0.0, |m, c| m.max(*c))
            }
        }
    }

    fn dim(&self) -> usize {
        match self {
            SmoothTerm::LeastSquares { a, .. } | SmoothTerm::Linear { a, .. } => a.len(),
            SmoothTerm::SeparableQuadratic { curvature, .. } => curvature.len(),
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        check_dim(n, self.dim())?;
        if let SmoothTerm::SeparableQuadratic {
            curvature,
            center,
            linear,
        } = self
        {
            check_dim(n, center.len())?;
            check_dim(n, linear.len())?;
            if curvature.iter().any(|c| *c < 0.0 || !c.is_finite()) {
                return Err(Error::Config(
                    "separable quadratic curvature must be finite and nonnegative".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Proximable part `g_i` of one objective component.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProxTerm {
    /// `Σ w |x_k|` over `(k, w)` pairs, `w >= 0`.
    L1 { terms: Vec<(usize, f64)> },
    /// `weight · ‖x_C‖₂` over the coordinate group `C`.
    Norm2 { coords: Vec<usize>, weight: f64 },
}

impl ProxTerm {
    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            ProxTerm::L1 { terms } => terms.iter().map(|(k, w)| w * x[*k].abs()).sum(),
            ProxTerm::Norm2 { coords, weight } => {
                weight * coords.iter().map(|k| x[*k] * x[*k]).sum::<f64>().sqrt()
            }
        }
    }

    /// Adds `scale * s` for a subgradient `s` (zero chosen where the term is kinked).
    pub fn add_subgradient(&self, x: &[f64], scale: f64, out: &mut [f64]) {
        match self {
            ProxTerm::L1 { terms } => {
                for (k, w) in terms {
                    out[*k] += scale * w * sign(x[*k]);
                }
            }
            ProxTerm::Norm2 { coords, weight } => {
                let nrm = coords.iter().map(|k| x[*k] * x[*k]).sum::<f64>().sqrt();
                if nrm > 0.0 {
                    for k in coords {
                        out[*k] += scale * weight * x[*k] / nrm;
                    }
                }
            }
        }
    }

    /// Bound on the norm of any subgradient.
    pub fn subgradient_bound(&self) -> f64 {
        match self {
            ProxTerm::L1 { terms } => terms.iter().map(|(_, w)| w * w).sum::<f64>().sqrt(),
            ProxTerm::Norm2 { weight, .. } => *weight,
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        let (coords, weights): (Vec<usize>, Vec<f64>) = match self {
            ProxTerm::L1 { terms } => terms.iter().copied().unzip(),
            ProxTerm::Norm2 { coords, weight } => (coords.clone(), vec![*weight]),
        };
        if let Some(k) = coords.iter().find(|k| **k >= n) {
            return Err(Error::Index { index: *k, size: n });
        }
        if weights.iter().any(|w| *w < 0.0 || !w.is_finite()) {
            return Err(Error::Config("prox term weights must be finite and nonnegative".into()));
        }
        Ok(())
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// One pair `(f_i, g_i)`; `g` is a (possibly empty) sum of prox terms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub f: SmoothTerm,
    #[serde(default)]
    pub g: Vec<ProxTerm>,
}

impl Component {
    pub fn value(&self, x: &[f64]) -> f64 {
        self.f.value(x) + self.g.iter().map(|t| t.value(x)).sum::<f64>()
    }
}

/// A functional constraint in `h(x) <= 0` form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Constraint {
    /// `aᵀx + b`
    Affine { a: Vec<f64>, b: f64 },
    /// `‖scale ⊙ x‖₂ + aᵀx + b`; `scale` holds the diagonal of `Q^{-1/2}`.
    SecondOrderCone { scale: Vec<f64>, a: Vec<f64>, b: f64 },
}

impl Constraint {
    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            Constraint::Affine { a, b } => dot(a, x) + b,
            Constraint::SecondOrderCone { scale, a, b } => {
                scaled_norm(scale, x) + dot(a, x) + b
            }
        }
    }

    /// An element of `∂h(x)`. At the cone apex the norm contributes zero.
    pub fn subgradient(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Constraint::Affine { a, .. } => a.clone(),
            Constraint::SecondOrderCone { scale, a, .. } => {
                let mut g = a.clone();
                let nrm = scaled_norm(scale, x);
                if nrm > 0.0 {
                    for k in 0..x.len() {
                        g[k] += scale[k] * scale[k] * x[k] / nrm;
                    }
                }
                g
            }
        }
    }

    /// Global bound `B_j` on subgradient norms.
    pub fn subgradient_bound(&self) -> f64 {
        match self {
            Constraint::Affine { a, .. } => norm(a),
            Constraint::SecondOrderCone { scale, a, .. } => {
                scale.iter().fold(0.0_f64, |m, s| m.max(s.abs())) + norm(a)
            }
        }
    }

    pub fn is_affine(&self) -> bool {
        matches!(self, Constraint::Affine { .. })
    }

    fn validate(&self, n: usize) -> Result<()> {
        match self {
            Constraint::Affine { a, b } => {
                check_dim(n, a.len())?;
                finite(b)
            }
            Constraint::SecondOrderCone { scale, a, b } => {
                check_dim(n, a.len())?;
                check_dim(n, scale.len())?;
                finite(b)
            }
        }
    }
}

fn finite(v: &f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config("non-finite constraint offset".into()))
    }
}

fn scaled_norm(scale: &[f64], x: &[f64]) -> f64 {
    scale
        .iter()
        .zip(x)
        .map(|(s, v)| (s * v) * (s * v))
        .sum::<f64>()
        .sqrt()
}

/// The simple set `Y` with a cheap Euclidean projection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SimpleSet {
    Whole,
    /// Per-coordinate bounds; `null` means unbounded on that side.
    Box {
        lower: Vec<Option<f64>>,
        upper: Vec<Option<f64>>,
    },
    Ball { center: Vec<f64>, radius: f64 },
}

impl SimpleSet {
    pub fn cube(n: usize, radius: f64) -> Self {
        SimpleSet::Box {
            lower: vec![Some(-radius); n],
            upper: vec![Some(radius); n],
        }
    }

    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        match self {
            SimpleSet::Whole => x.to_vec(),
            SimpleSet::Box { lower, upper } => x
                .iter()
                .zip(lower.iter().zip(upper))
                .map(|(v, (lo, hi))| {
                    let v = lo.map_or(*v, |l| v.max(l));
                    hi.map_or(v, |h| v.min(h))
                })
                .collect(),
            SimpleSet::Ball { center, radius } => {
                let d = crate::linalg::dist(x, center);
                if d <= *radius {
                    x.to_vec()
                } else {
                    let s = radius / d;
                    x.iter().zip(center).map(|(v, c)| c + s * (v - c)).collect()
                }
            }
        }
    }

    pub fn is_bounded(&self) -> bool {
        match self {
            SimpleSet::Whole => false,
            SimpleSet::Box { lower, upper } => {
                lower.iter().all(Option::is_some) && upper.iter().all(Option::is_some)
            }
            SimpleSet::Ball { .. } => true,
        }
    }

    /// Diameter of `Y`, `None` when unbounded.
    pub fn diameter(&self) -> Option<f64> {
        match self {
            SimpleSet::Whole => None,
            SimpleSet::Box { lower, upper } => {
                let mut s = 0.0;
                for (lo, hi) in lower.iter().zip(upper) {
                    let w = (*hi)? - (*lo)?;
                    s += w * w;
                }
                Some(s.sqrt())
            }
            SimpleSet::Ball { radius, .. } => Some(2.0 * radius),
        }
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        crate::linalg::dist(&self.project(x), x) <= tol
    }

    fn validate(&self, n: usize) -> Result<()> {
        match self {
            SimpleSet::Whole => Ok(()),
            SimpleSet::Box { lower, upper } => {
                check_dim(n, lower.len())?;
                check_dim(n, upper.len())?;
                for (lo, hi) in lower.iter().zip(upper) {
                    if let (Some(l), Some(h)) = (lo, hi) {
                        if l > h {
                            return Err(Error::Config(format!("empty box side [{l}, {h}]")));
                        }
                    }
                }
                Ok(())
            }
            SimpleSet::Ball { center, radius } => {
                check_dim(n, center.len())?;
                if *radius > 0.0 && radius.is_finite() {
                    Ok(())
                } else {
                    Err(Error::Config(format!("ball radius must be positive, got {radius}")))
                }
            }
        }
    }
}

/// A complete problem instance. Serializes to the documented instance schema.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Problem {
    pub dim: usize,
    pub components: Vec<Component>,
    #[serde(default)]
    pub constraints: Vec<Constraint>,
    #[serde(default = "whole_space")]
    pub simple_set: SimpleSet,
    /// Direction `s_h` returned by [`Problem::subgrad_constraint`] when `h_j(x) <= 0`.
    /// Defaults to the first standard basis vector.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fallback_subgradient: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constants: Option<ProblemConstants>,
}

fn whole_space() -> SimpleSet {
    SimpleSet::Whole
}

impl Problem {
    pub fn new(dim: usize, components: Vec<Component>, constraints: Vec<Constraint>, simple_set: SimpleSet) -> Result<Self> {
        let p = Problem {
            dim,
            components,
            constraints,
            simple_set,
            fallback_subgradient: None,
            constants: None,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let p: Problem = serde_json::from_str(text)?;
        p.validate()?;
        Ok(p)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Config("dimension must be positive".into()));
        }
        if self.components.is_empty() {
            return Err(Error::Config("at least one objective component is required".into()));
        }
        for c in &self.components {
            c.f.validate(self.dim)?;
            for t in &c.g {
                t.validate(self.dim)?;
            }
        }
        for h in &self.constraints {
            h.validate(self.dim)?;
        }
        self.simple_set.validate(self.dim)?;
        if let Some(s) = &self.fallback_subgradient {
            check_dim(self.dim, s.len())?;
            if norm(s) == 0.0 {
                return Err(Error::Config("fallback subgradient must be nonzero".into()));
            }
        }
        Ok(())
    }

    /// Number of objective components `N`.
    pub fn num_components(&self) -> usize {
        self.components.len()
    }

    /// Number of functional constraints `m_c`.
    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn fingerprint(&self) -> String {
        let mut stripped = self.clone();
        stripped.constants = None;
        let bytes = serde_json::to_vec(&stripped).expect("problem serializes");
        let digest = Sha256::digest(&bytes);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn eval_objective(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim, x.len())?;
        let sum: f64 = self.components.iter().map(|c| c.value(x)).sum();
        Ok(sum / self.num_components() as f64)
    }

    /// `(1/N) Σ ζ^i f_i(x) + (1/N) Σ ζ^i g_i(x)` for a realized sample.
    pub fn eval_objective_sampled(&self, x: &[f64], sample: &Sample) -> Result<f64> {
        check_dim(self.dim, x.len())?;
        self.check_sample(sample, self.num_components())?;
        let sum: f64 = sample
            .iter()
            .map(|(i, w)| w * self.components[i].value(x))
            .sum();
        Ok(sum / self.num_components() as f64)
    }

    /// `(1/N) Σ_{i∈S} ζ^i ∇f_i(x)`; zero for an empty sample.
    pub fn subgrad_f_minibatch(&self, x: &[f64], sample: &Sample) -> Result<Vec<f64>> {
        check_dim(self.dim, x.len())?;
        self.check_sample(sample, self.num_components())?;
        let inv_n = 1.0 / self.num_components() as f64;
        let mut g = vec![0.0; self.dim];
        for (i, w) in sample.iter() {
            self.components[i].f.add_gradient(x, w * inv_n, &mut g);
        }
        Ok(g)
    }

    /// Full gradient of the smooth part `(1/N) Σ ∇f_i(x)`.
    pub fn grad_f(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim, x.len())?;
        let inv_n = 1.0 / self.num_components() as f64;
        let mut g = vec![0.0; self.dim];
        for c in &self.components {
            c.f.add_gradient(x, inv_n, &mut g);
        }
        Ok(g)
    }

    /// `∇F_i(x) = ∇f_i(x) + s_i` with `s_i ∈ ∂g_i(x)`.
    pub fn component_subgradient(&self, i: usize, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim, x.len())?;
        let c = self
            .components
            .get(i)
            .ok_or(Error::Index { index: i, size: self.num_components() })?;
        let mut g = c.f.gradient(x);
        for t in &c.g {
            t.add_subgradient(x, 1.0, &mut g);
        }
        Ok(g)
    }

    /// `argmin_u ½‖u − x‖² + α (1/N) Σ_{i∈S} ζ^i g_i(u)`.
    ///
    /// Weighted l1 terms always aggregate into a coordinatewise soft threshold.
    /// Group-norm terms are supported when, after merging identical groups,
    /// they touch pairwise disjoint coordinates that carry no l1 weight.
    pub fn prox_g_minibatch(&self, x: &[f64], alpha: f64, sample: &Sample) -> Result<Vec<f64>> {
        check_dim(self.dim, x.len())?;
        self.check_sample(sample, self.num_components())?;
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::Precondition(format!("prox step must be positive, got {alpha}")));
        }
        let scale = alpha / self.num_components() as f64;
        let mut thresholds = vec![0.0; self.dim];
        let mut groups: Vec<(&[usize], f64)> = Vec::new();
        for (i, w) in sample.iter() {
            for term in &self.components[i].g {
                match term {
                    ProxTerm::L1 { terms } => {
                        for (k, tw) in terms {
                            thresholds[*k] += scale * w * tw;
                        }
                    }
                    ProxTerm::Norm2 { coords, weight } => {
                        match groups.iter_mut().find(|(c, _)| *c == coords.as_slice()) {
                            Some(g) => g.1 += scale * w * weight,
                            None => groups.push((coords.as_slice(), scale * w * weight)),
                        }
                    }
                }
            }
        }

        let mut u: Vec<f64> = x
            .iter()
            .zip(&thresholds)
            .map(|(v, t)| soft_threshold(*v, *t))
            .collect();

        if !groups.is_empty() {
            let mut owner = vec![false; self.dim];
            for (coords, _) in &groups {
                for k in coords.iter() {
                    if owner[*k] || thresholds[*k] > 0.0 {
                        return Err(Error::UnsupportedOracle(
                            "overlapping proximal terms have no closed-form prox".into(),
                        ));
                    }
                    owner[*k] = true;
                }
            }
            for (coords, t) in &groups {
                let nrm = coords.iter().map(|k| x[*k] * x[*k]).sum::<f64>().sqrt();
                let shrink = if nrm > *t { 1.0 - t / nrm } else { 0.0 };
                for k in coords.iter() {
                    u[*k] = shrink * x[*k];
                }
            }
        }
        Ok(u)
    }

    pub fn eval_constraint(&self, j: usize, x: &[f64]) -> Result<f64> {
        check_dim(self.dim, x.len())?;
        Ok(self.constraint(j)?.value(x))
    }

    /// A subgradient of `h_j` at `x` when `h_j(x) > 0`, otherwise the fallback `s_h`.
    pub fn subgrad_constraint(&self, j: usize, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim, x.len())?;
        let h = self.constraint(j)?;
        if h.value(x) > 0.0 {
            Ok(h.subgradient(x))
        } else {
            Ok(self.fallback())
        }
    }

    pub fn fallback(&self) -> Vec<f64> {
        self.fallback_subgradient.clone().unwrap_or_else(|| {
            let mut e = vec![0.0; self.dim];
            e[0] = 1.0;
            e
        })
    }

    pub fn constraint(&self, j: usize) -> Result<&Constraint> {
        self.constraints.get(j).ok_or(Error::Index {
            index: j,
            size: self.num_constraints(),
        })
    }

    pub fn project_y(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim, x.len())?;
        Ok(self.simple_set.project(x))
    }

    /// Largest constraint value, `-inf` when there are no constraints.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        self.constraints
            .iter()
            .map(|h| h.value(x))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    fn check_sample(&self, sample: &Sample, size: usize) -> Result<()> {
        match sample.indices.iter().find(|i| **i >= size) {
            Some(i) => Err(Error::Index { index: *i, size }),
            None => Ok(()),
        }
    }
}

pub fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}
