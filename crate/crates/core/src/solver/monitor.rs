use super::{SolverState, StepTrace};
use crate::error::{check_dim, Error, Result};
use crate::linalg::dist_sq;
use crate::problem::Problem;

/// Called after every step with the updated state.
pub trait StepObserver {
    fn observe(&mut self, problem: &Problem, state: &SolverState, trace: &StepTrace) -> Result<()>;
}

pub struct NoObserver;

impl StepObserver for NoObserver {
    fn observe(&mut self, _: &Problem, _: &SolverState, _: &StepTrace) -> Result<()> {
        Ok(())
    }
}

/// Checks, at every step,
/// `‖x_{k+1} − y‖² ≤ ‖v_k − y‖² − β(2−β)(h(v_k,ξ_k))₊² / 𝓑_h²`
/// for a fixed feasible `y`.
#[derive(Clone, Debug)]
pub struct InvariantMonitor {
    y: Vec<f64>,
    b_h: f64,
    tol: f64,
    /// Right side minus left side, one entry per step.
    pub slacks: Vec<f64>,
    /// Steps whose slack fell below `-tol`.
    pub violations: Vec<usize>,
}

impl InvariantMonitor {
    pub fn worst_slack(&self) -> f64 {
        self.slacks.iter().fold(f64::INFINITY, |m, s| m.min(*s))
    }
}

/// Builds a monitor for `y`; `y` must lie in `Y` and satisfy every constraint.
pub fn attach_invariant_monitor(problem: &Problem, y: &[f64], b_h: f64) -> Result<InvariantMonitor> {
    check_dim(problem.dim, y.len())?;
    if !problem.simple_set.contains(y, 0.0) {
        return Err(Error::Precondition("monitor point lies outside Y".into()));
    }
    let worst = problem.max_violation(y);
    if worst > 0.0 {
        return Err(Error::Precondition(format!("monitor point violates a constraint by {worst:e}")));
    }
    if !(b_h > 0.0) {
        return Err(Error::Precondition(format!("B_h must be positive, got {b_h}")));
    }
    Ok(InvariantMonitor {
        y: y.to_vec(),
        b_h,
        tol: 1e-9,
        slacks: Vec::new(),
        violations: Vec::new(),
    })
}

impl StepObserver for InvariantMonitor {
    fn observe(&mut self, _: &Problem, state: &SolverState, trace: &StepTrace) -> Result<()> {
        let h_plus = trace.h.max(0.0);
        let beta = trace.beta;
        let rhs = dist_sq(&state.v, &self.y) - beta * (2.0 - beta) * h_plus * h_plus / (self.b_h * self.b_h);
        let slack = rhs - dist_sq(&state.x, &self.y);
        if slack < -self.tol {
            self.violations.push(trace.k);
        }
        self.slacks.push(slack);
        Ok(())
    }
}

impl<A: StepObserver, B: StepObserver> StepObserver for (A, B) {
    fn observe(&mut self, problem: &Problem, state: &SolverState, trace: &StepTrace) -> Result<()> {
        self.0.observe(problem, state, trace)?;
        self.1.observe(problem, state, trace)
    }
}

impl<F> StepObserver for F
where
    F: FnMut(&Problem, &SolverState, &StepTrace) -> Result<()>,
{
    fn observe(&mut self, problem: &Problem, state: &SolverState, trace: &StepTrace) -> Result<()> {
        self(problem, state, trace)
    }
}
