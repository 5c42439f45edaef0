//! Mini-batch stochastic subgradient projection.
//!
//! One iteration:
//!
//! ```text
//! u = prox_{α g(·,ζ)}(x − α ∇f(x,ζ))
//! v = Π_Y(u)
//! z = v − β (h(v,ξ))₊ / ‖∇h(v,ξ)‖² ∇h(v,ξ)
//! x⁺ = Π_Y(z)
//! ```

mod averaging;
mod monitor;
mod run;

pub use averaging::{average_convex, average_strongly_convex, Averager, AveragingMode};
pub use monitor::{attach_invariant_monitor, InvariantMonitor, NoObserver, StepObserver};
pub use run::{run, run_observed, RunRecord, RunResult, Solver, SolverConfig, Termination};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{axpy, norm_sq};
use crate::problem::Problem;
use crate::rng::{stream, stream_rng, StreamRng};
use crate::sampling::{Sample, SamplingLaw};

/// Objective law plus an optional constraint law (absent when `m_c = 0`).
#[derive(Clone, Debug)]
pub struct Laws {
    pub objective: SamplingLaw,
    pub constraint: Option<SamplingLaw>,
}

impl Laws {
    pub fn new(problem: &Problem, objective: SamplingLaw, constraint: Option<SamplingLaw>) -> Result<Self> {
        if objective.universe() != problem.num_components() {
            return Err(Error::Config(format!(
                "objective law covers {} indices, problem has {} components",
                objective.universe(),
                problem.num_components()
            )));
        }
        match (&constraint, problem.num_constraints()) {
            (None, 0) => {}
            (Some(c), m) if c.universe() == m => {}
            (Some(c), m) => {
                return Err(Error::Config(format!(
                    "constraint law covers {} indices, problem has {m} constraints",
                    c.universe()
                )))
            }
            (None, m) => return Err(Error::Config(format!("problem has {m} constraints but no constraint law"))),
        }
        Ok(Laws { objective, constraint })
    }

    /// `⌈max(N/τ₁, m/τ₂)⌉`
    pub fn epoch_length(&self) -> usize {
        let obj = self.objective.universe().div_ceil(self.objective.tau());
        let con = self
            .constraint
            .as_ref()
            .map_or(0, |c| c.universe().div_ceil(c.tau()));
        obj.max(con).max(1)
    }
}

#[derive(Clone, Debug)]
pub struct SolverState {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub z: Vec<f64>,
    /// Number of completed iterations.
    pub k: usize,
    pub last_objective_sample: Option<Sample>,
    pub last_constraint_sample: Option<Sample>,
    obj_rng: StreamRng,
    con_rng: StreamRng,
}

impl SolverState {
    /// Starts from `Π_Y(x0)`.
    pub fn new(problem: &Problem, x0: &[f64], seed: u64) -> Result<Self> {
        let x = problem.project_y(x0)?;
        Ok(SolverState {
            u: x.clone(),
            v: x.clone(),
            z: x.clone(),
            x,
            k: 0,
            last_objective_sample: None,
            last_constraint_sample: None,
            obj_rng: stream_rng(seed, stream::OBJECTIVE),
            con_rng: stream_rng(seed, stream::CONSTRAINT),
        })
    }
}

/// What a single step saw.
#[derive(Clone, Debug, PartialEq)]
pub struct StepTrace {
    /// Index of the step; it maps `x_k` to `x_{k+1}`.
    pub k: usize,
    pub alpha: f64,
    pub beta: f64,
    /// `h(v_k, ξ_k)`, `-inf` without constraints.
    pub h: f64,
    /// Argmax constraint, when violated.
    pub active: Option<usize>,
    /// Subgradient used in the feasibility step, when violated.
    pub grad_h: Option<Vec<f64>>,
}

impl StepTrace {
    pub fn violated(&self) -> bool {
        self.h > 0.0
    }
}

/// Advances `state` by one iteration.
pub fn ssp_step(problem: &Problem, laws: &Laws, state: &mut SolverState, alpha: f64, beta: f64) -> Result<StepTrace> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::Precondition(format!("stepsize must be positive, got {alpha}")));
    }
    if !(beta > 0.0 && beta < 2.0) {
        return Err(Error::Config(format!("beta must lie in (0,2), got {beta}")));
    }
    check_dim(problem.dim, state.x.len())?;

    let zeta = laws.objective.draw(&mut state.obj_rng);
    let mut y = state.x.clone();
    axpy(-alpha, &problem.subgrad_f_minibatch(&state.x, &zeta)?, &mut y);
    state.u = problem.prox_g_minibatch(&y, alpha, &zeta)?;
    state.v = problem.project_y(&state.u)?;

    let mut h = f64::NEG_INFINITY;
    let mut active = None;
    let mut xi = None;
    if let Some(law) = &laws.constraint {
        let sample = law.draw(&mut state.con_rng);
        for (j, w) in sample.iter() {
            let val = w * problem.constraints[j].value(&state.v);
            if val > h {
                h = val;
                active = Some((j, w));
            }
        }
        xi = Some(sample);
    }

    let mut grad_h = None;
    let mut z = state.v.clone();
    let violated = h > 0.0;
    if violated {
        let (j, w) = active.expect("violation implies a sampled constraint");
        let mut g = problem.constraints[j].subgradient(&state.v);
        if w != 1.0 {
            g.iter_mut().for_each(|c| *c *= w);
        }
        let g_sq = norm_sq(&g);
        if g_sq == 0.0 || !g_sq.is_finite() {
            return Err(Error::OracleContract(format!(
                "constraint {j} is violated by {h:e} but its subgradient norm is {}",
                g_sq.sqrt()
            )));
        }
        axpy(-beta * h / g_sq, &g, &mut z);
        grad_h = Some(g);
    }
    state.z = z;
    state.x = problem.project_y(&state.z)?;

    let trace = StepTrace {
        k: state.k,
        alpha,
        beta,
        h,
        active: if violated { active.map(|a| a.0) } else { None },
        grad_h,
    };
    state.k += 1;
    state.last_objective_sample = Some(zeta);
    state.last_constraint_sample = xi;
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{dot, sub};
    use crate::problem::{Component, Constraint, SimpleSet, SmoothTerm};
    use crate::sampling::WeightRule;

    /// `f = ½x²`, `h = 1 − x`, `Y = ℝ`.
    pub(crate) fn one_dim() -> Problem {
        Problem::new(
            1,
            vec![Component {
                f: SmoothTerm::SeparableQuadratic {
                    curvature: vec![1.0],
                    center: vec![0.0],
                    linear: vec![0.0],
                },
                g: vec![],
            }],
            vec![Constraint::Affine { a: vec![-1.0], b: 1.0 }],
            SimpleSet::Whole,
        )
        .unwrap()
    }

    fn full_laws(p: &Problem) -> Laws {
        Laws::new(
            p,
            SamplingLaw::nice(p.num_components(), p.num_components(), WeightRule::InverseMarginal).unwrap(),
            Some(SamplingLaw::nice(p.num_constraints(), p.num_constraints(), WeightRule::Indicator).unwrap()),
        )
        .unwrap()
    }

    #[test]
    fn hand_evaluated_step() {
        let p = one_dim();
        let laws = full_laws(&p);
        let mut s = SolverState::new(&p, &[0.0], 0).unwrap();
        let t = ssp_step(&p, &laws, &mut s, 0.1, 1.0).unwrap();
        assert_eq!(s.u, vec![0.0]);
        assert_eq!(s.v, vec![0.0]);
        assert_eq!(t.h, 1.0);
        assert_eq!(t.grad_h, Some(vec![-1.0]));
        assert_eq!(s.z, vec![1.0]);
        assert_eq!(s.x, vec![1.0]);
        assert_eq!(s.k, 1);
    }

    #[test]
    fn feasible_v_is_kept() {
        let mut p = one_dim();
        p.fallback_subgradient = Some(vec![123.0]);
        let laws = full_laws(&p);
        let mut s = SolverState::new(&p, &[3.0], 0).unwrap();
        let t = ssp_step(&p, &laws, &mut s, 0.1, 1.0).unwrap();
        assert!(!t.violated());
        assert_eq!(s.z, s.v);
        assert_eq!(s.x, s.v);
    }

    #[test]
    fn hyperplane_projection_with_unit_beta() {
        let p = Problem::new(
            2,
            vec![Component {
                f: SmoothTerm::Linear { a: vec![-1.0, -2.0], b: 0.0 },
                g: vec![],
            }],
            vec![Constraint::Affine { a: vec![1.0, 3.0], b: -1.0 }],
            SimpleSet::Whole,
        )
        .unwrap();
        let laws = full_laws(&p);
        let mut s = SolverState::new(&p, &[0.3, 0.7], 5).unwrap();
        for _ in 0..5 {
            let t = ssp_step(&p, &laws, &mut s, 0.5, 1.0).unwrap();
            assert!(t.violated());
            let g = t.grad_h.unwrap();
            assert!((t.h + dot(&g, &sub(&s.z, &s.v))).abs() <= 1e-12);
        }
    }

    #[test]
    fn zero_subgradient_on_violation_is_an_error() {
        let p = Problem::new(
            1,
            vec![Component {
                f: SmoothTerm::Linear { a: vec![0.0], b: 0.0 },
                g: vec![],
            }],
            vec![Constraint::Affine { a: vec![0.0], b: 1.0 }],
            SimpleSet::Whole,
        )
        .unwrap();
        let laws = full_laws(&p);
        let mut s = SolverState::new(&p, &[0.0], 0).unwrap();
        assert!(matches!(ssp_step(&p, &laws, &mut s, 0.1, 1.0), Err(Error::OracleContract(_))));
    }

    #[test]
    fn epoch_length_rounds_up() {
        let p = crate::problem::make_constrained_lasso(&crate::problem::ConstrainedLassoSpec::new(120, 5, 120, 120, 1)).unwrap();
        let obj = SamplingLaw::partition(120, 20, WeightRule::InverseMarginal).unwrap();
        let con = SamplingLaw::nice(240, 80, WeightRule::Indicator).unwrap();
        assert_eq!(Laws::new(&p, obj, Some(con)).unwrap().epoch_length(), 6);
        let obj = SamplingLaw::nice(120, 7, WeightRule::InverseMarginal).unwrap();
        let con = SamplingLaw::nice(240, 80, WeightRule::Indicator).unwrap();
        assert_eq!(Laws::new(&p, obj, Some(con)).unwrap().epoch_length(), 18);
    }
}
