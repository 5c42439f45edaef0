//! Deterministic high-accuracy solutions used as `F*`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{axpy, dist, dot, max_abs, norm, norm_sq, sub};
use crate::metrics::feasibility_norm;
use crate::problem::{estimate_constants, ConstantsMode, Constraint, Problem, ProxTerm, SimpleSet};
use crate::sampling::{Sample, SamplingLaw, WeightRule};
use crate::solver::{run, AveragingMode, Laws, SolverConfig};
use crate::stepsize::StepsizeSchedule;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceMethod {
    /// Augmented Lagrangian outer loop, accelerated proximal gradient inner loop.
    AugmentedLagrangian,
    /// The stochastic method itself with full batches.
    FullBatchSsp,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReferenceOptions {
    pub method: ReferenceMethod,
    /// Target for the feasibility norm and the stationarity residual.
    pub tol: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    /// Cross-check against grid search when `n <= 3`.
    pub cross_check: bool,
}

impl Default for ReferenceOptions {
    fn default() -> Self {
        ReferenceOptions {
            method: ReferenceMethod::AugmentedLagrangian,
            tol: 1e-8,
            max_outer: 60,
            max_inner: 50_000,
            cross_check: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSolution {
    pub x_ref: Vec<f64>,
    pub f_ref: f64,
    pub feasibility_norm_ref: f64,
    pub method: ReferenceMethod,
    pub iterations: usize,
    /// Fingerprint of the instance this solution belongs to.
    pub fingerprint: String,
}

/// Largest accepted feasibility norm of a reference solution.
pub const MAX_REFERENCE_INFEASIBILITY: f64 = 1e-6;

/// Largest accepted disagreement with grid search.
pub const CROSS_CHECK_TOL: f64 = 1e-2;

pub fn reference_solve(p: &Problem, tol: f64) -> Result<ReferenceSolution> {
    reference_solve_with(
        p,
        &ReferenceOptions {
            tol,
            ..ReferenceOptions::default()
        },
    )
}

pub fn reference_solve_with(p: &Problem, opts: &ReferenceOptions) -> Result<ReferenceSolution> {
    if !(opts.tol > 0.0) {
        return Err(Error::Config(format!("reference tolerance must be positive, got {}", opts.tol)));
    }
    let (x, iterations) = match opts.method {
        ReferenceMethod::AugmentedLagrangian => augmented_lagrangian(p, opts)?,
        ReferenceMethod::FullBatchSsp => full_batch_ssp(p, opts)?,
    };
    let feas = feasibility_norm(p, &x);
    let f_ref = p.eval_objective(&x)?;
    if !(feas <= MAX_REFERENCE_INFEASIBILITY) || !f_ref.is_finite() {
        return Err(Error::Budget {
            best_value: f_ref,
            feasibility: feas,
        });
    }
    let solution = ReferenceSolution {
        x_ref: x,
        f_ref,
        feasibility_norm_ref: feas,
        method: opts.method,
        iterations,
        fingerprint: p.fingerprint(),
    };
    if opts.cross_check && p.dim <= 3 {
        let radius = (2.0 * max_abs(&solution.x_ref)).max(2.0);
        let grid = grid_search(p, &vec![0.0; p.dim], radius, 1e-3)?;
        if !grid.feasible || (grid.f - solution.f_ref).abs() > CROSS_CHECK_TOL {
            return Err(Error::CrossCheck(format!(
                "reference value {} vs grid value {} (grid point feasible: {})",
                solution.f_ref, grid.f, grid.feasible
            )));
        }
    }
    Ok(solution)
}

/// Constraint used internally; `Y` moves here when its projection does not
/// combine with the prox of `g`.
enum Con<'a> {
    Given(&'a Constraint),
    Ball { center: &'a [f64], radius: f64 },
    Bound { k: usize, value: f64, upper: bool },
}

impl Con<'_> {
    fn value(&self, x: &[f64]) -> f64 {
        match self {
            Con::Given(h) => h.value(x),
            Con::Ball { center, radius } => dist(x, center) - radius,
            Con::Bound { k, value, upper: true } => x[*k] - value,
            Con::Bound { k, value, upper: false } => value - x[*k],
        }
    }

    fn add_gradient(&self, x: &[f64], scale: f64, out: &mut [f64]) {
        match self {
            Con::Given(h) => axpy(scale, &h.subgradient(x), out),
            Con::Ball { center, .. } => {
                let d = dist(x, center);
                if d > 0.0 {
                    for k in 0..x.len() {
                        out[k] += scale * (x[k] - center[k]) / d;
                    }
                }
            }
            Con::Bound { k, upper, .. } => out[*k] += if *upper { scale } else { -scale },
        }
    }
}

/// Lower and upper box bounds.
type Bounds<'a> = (&'a [Option<f64>], &'a [Option<f64>]);

struct Lagrangian<'a> {
    p: &'a Problem,
    cons: Vec<Con<'a>>,
    /// Box handled inside the prox.
    clamp: Option<Bounds<'a>>,
    full: Sample,
}

impl<'a> Lagrangian<'a> {
    fn new(p: &'a Problem) -> Self {
        let has_groups = p
            .components
            .iter()
            .any(|c| c.g.iter().any(|t| matches!(t, ProxTerm::Norm2 { .. })));
        let mut cons: Vec<Con> = p.constraints.iter().map(Con::Given).collect();
        let mut clamp = None;
        match &p.simple_set {
            SimpleSet::Whole => {}
            SimpleSet::Box { lower, upper } if !has_groups => clamp = Some((lower.as_slice(), upper.as_slice())),
            SimpleSet::Box { lower, upper } => {
                for k in 0..p.dim {
                    if let Some(v) = lower[k] {
                        cons.push(Con::Bound { k, value: v, upper: false });
                    }
                    if let Some(v) = upper[k] {
                        cons.push(Con::Bound { k, value: v, upper: true });
                    }
                }
            }
            SimpleSet::Ball { center, radius } => cons.push(Con::Ball {
                center,
                radius: *radius,
            }),
        }
        let n = p.num_components();
        Lagrangian {
            p,
            cons,
            clamp,
            full: Sample::new((0..n).collect(), vec![1.0; n]),
        }
    }

    fn smooth_value(&self, x: &[f64]) -> f64 {
        let n = self.p.num_components() as f64;
        self.p.components.iter().map(|c| c.f.value(x)).sum::<f64>() / n
    }

    /// Value and gradient of `f̄ + (1/2ρ) Σ ((λ + ρh)₊² − λ²)`.
    fn phi(&self, x: &[f64], lambda: &[f64], rho: f64, grad: Option<&mut Vec<f64>>) -> f64 {
        let mut value = self.smooth_value(x);
        let mut g = grad;
        if let Some(g) = g.as_deref_mut() {
            *g = self.p.grad_f(x).expect("dimension checked");
        }
        for (c, l) in self.cons.iter().zip(lambda) {
            let s = (l + rho * c.value(x)).max(0.0);
            value += (s * s - l * l) / (2.0 * rho);
            if s > 0.0 {
                if let Some(g) = g.as_deref_mut() {
                    c.add_gradient(x, s, g);
                }
            }
        }
        value
    }

    fn prox(&self, x: &[f64], step: f64) -> Result<Vec<f64>> {
        let mut u = self.p.prox_g_minibatch(x, step, &self.full)?;
        if let Some((lo, hi)) = self.clamp {
            for k in 0..u.len() {
                if let Some(l) = lo[k] {
                    u[k] = u[k].max(l);
                }
                if let Some(h) = hi[k] {
                    u[k] = u[k].min(h);
                }
            }
        }
        Ok(u)
    }

    /// Accelerated proximal gradient with backtracking and gradient restart.
    fn inner(&self, x0: &[f64], lambda: &[f64], rho: f64, eps: f64, max_iter: usize, lip: &mut f64) -> Result<(Vec<f64>, usize)> {
        let mut x = x0.to_vec();
        let mut y = x.clone();
        let mut t: f64 = 1.0;
        let mut grad = Vec::new();
        for it in 0..max_iter {
            let fy = self.phi(&y, lambda, rho, Some(&mut grad));
            let (x_new, d) = loop {
                let mut w = y.clone();
                axpy(-1.0 / *lip, &grad, &mut w);
                let x_new = self.prox(&w, 1.0 / *lip)?;
                let d = sub(&x_new, &y);
                let model = fy + dot(&grad, &d) + 0.5 * *lip * norm_sq(&d);
                if self.phi(&x_new, lambda, rho, None) <= model + 1e-14 * fy.abs().max(1.0) || *lip > 1e16 {
                    break (x_new, d);
                }
                *lip *= 2.0;
            };
            if *lip * norm(&d) <= eps {
                return Ok((x_new, it + 1));
            }
            if dot(&d, &sub(&x_new, &x)) < 0.0 {
                // momentum points uphill
                t = 1.0;
                y = x_new.clone();
            } else {
                let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
                y = x_new.clone();
                axpy((t - 1.0) / t_next, &sub(&x_new, &x), &mut y);
                t = t_next;
            }
            x = x_new;
            *lip *= 0.98;
        }
        Ok((x, max_iter))
    }
}

fn augmented_lagrangian(p: &Problem, opts: &ReferenceOptions) -> Result<(Vec<f64>, usize)> {
    let lag = Lagrangian::new(p);
    let mut x = p.simple_set.project(&vec![0.0; p.dim]);
    let mut lambda = vec![0.0; lag.cons.len()];
    let mut rho = 10.0;
    let mut lip = 1.0;
    let mut total = 0;
    let mut prev_feas = f64::INFINITY;
    for outer in 0..opts.max_outer {
        let eps = (1e-2 * 0.1f64.powi(outer as i32)).max(0.1 * opts.tol);
        let (x_new, used) = lag.inner(&x, &lambda, rho, eps, opts.max_inner, &mut lip)?;
        total += used;
        x = x_new;
        let mut shift = 0.0;
        let mut feas = 0.0;
        for (c, l) in lag.cons.iter().zip(lambda.iter_mut()) {
            let h = c.value(&x);
            let next = (*l + rho * h).max(0.0);
            shift += ((next - *l) / rho).powi(2);
            feas += h.max(0.0).powi(2);
            *l = next;
        }
        let (shift, feas) = (shift.sqrt(), feas.sqrt());
        if shift <= opts.tol && eps <= 0.1 * opts.tol {
            return Ok((p.simple_set.project(&x), total));
        }
        if feas > 0.25 * prev_feas && rho < 1e10 {
            rho *= 10.0;
        }
        prev_feas = feas;
    }
    Ok((p.simple_set.project(&x), total))
}

fn full_batch_ssp(p: &Problem, opts: &ReferenceOptions) -> Result<(Vec<f64>, usize)> {
    let n = p.num_components();
    let m = p.num_constraints();
    let laws = Laws::new(
        p,
        SamplingLaw::nice(n, n, WeightRule::InverseMarginal)?,
        if m > 0 {
            Some(SamplingLaw::nice(m, m, WeightRule::Indicator)?)
        } else {
            None
        },
    )?;
    let constants = match &p.constants {
        Some(c) => c.clone(),
        None => estimate_constants(p, Some(&vec![0.0; p.dim]), ConstantsMode::Smooth)?,
    };
    let (schedule, averaging) = if constants.mu > 0.0 && constants.l > 0.0 {
        (StepsizeSchedule::switching(constants.l, constants.mu)?, AveragingMode::StronglyConvex)
    } else {
        let hi = crate::stepsize::admissible_alpha0_interval(constants.l)?.hi.min(0.5);
        (StepsizeSchedule::convex_decay(hi - 0.01, 0.5, constants.l, false)?, AveragingMode::Convex)
    };
    let mut cfg = SolverConfig::new(laws, schedule, averaging);
    cfg.max_epochs = opts.max_inner;
    cfg.feasibility_tol = opts.tol;
    cfg.record_distance = false;
    cfg.log_every = usize::MAX;
    let result = run(p, None, &cfg)?;
    Ok((result.averaged, result.iterations))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub x: Vec<f64>,
    pub f: f64,
    /// A grid point satisfied every constraint.
    pub feasible: bool,
    pub evaluations: usize,
}

const GRID_POINTS: usize = 41;

/// Coarse-to-fine grid minimization of `F` over feasible points of
/// `[center − radius, center + radius]ⁿ ∩ Y`, refined until the spacing is at
/// most `resolution`. Meant for `n <= 3`.
pub fn grid_search(p: &Problem, center: &[f64], radius: f64, resolution: f64) -> Result<GridResult> {
    if p.dim > 3 {
        return Err(Error::Precondition(format!("grid search supports n <= 3, got {}", p.dim)));
    }
    if !(radius > 0.0 && resolution > 0.0) {
        return Err(Error::Precondition("grid radius and resolution must be positive".into()));
    }
    let mut c = center.to_vec();
    let mut r = radius;
    let mut evaluations = 0;
    loop {
        let bounds: Vec<(f64, f64)> = (0..p.dim)
            .map(|k| {
                let (mut lo, mut hi) = (c[k] - r, c[k] + r);
                if let SimpleSet::Box { lower, upper } = &p.simple_set {
                    lo = lower[k].map_or(lo, |l| lo.max(l));
                    hi = upper[k].map_or(hi, |u| hi.min(u));
                }
                (lo, hi.max(lo))
            })
            .collect();
        let mut best: Option<(bool, f64, f64, Vec<f64>)> = None;
        let total = GRID_POINTS.pow(p.dim as u32);
        let mut x = vec![0.0; p.dim];
        for idx in 0..total {
            let mut rest = idx;
            for (k, (lo, hi)) in bounds.iter().enumerate() {
                let i = rest % GRID_POINTS;
                rest /= GRID_POINTS;
                x[k] = lo + (hi - lo) * i as f64 / (GRID_POINTS - 1) as f64;
            }
            evaluations += 1;
            if !p.simple_set.contains(&x, 0.0) {
                continue;
            }
            let viol = p.max_violation(&x).max(0.0);
            let f = p.eval_objective(&x)?;
            let cand = (viol == 0.0, viol, f);
            let better = match &best {
                None => true,
                Some((feas, v, bf, _)) => match (cand.0, *feas) {
                    (true, false) => true,
                    (false, true) => false,
                    (true, true) => f < *bf,
                    (false, false) => viol < *v,
                },
            };
            if better {
                best = Some((cand.0, viol, f, x.clone()));
            }
        }
        let (feasible, _, f, bx) = best.ok_or_else(|| Error::Precondition("grid does not meet Y".into()))?;
        let spacing = bounds.iter().map(|(lo, hi)| hi - lo).fold(0.0, f64::max) / (GRID_POINTS - 1) as f64;
        if spacing <= resolution {
            return Ok(GridResult {
                x: bx,
                f,
                feasible,
                evaluations,
            });
        }
        c = bx;
        r = 3.0 * spacing;
    }
}
