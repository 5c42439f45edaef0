use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{ssp_step, Averager, AveragingMode, Laws, NoObserver, SolverState, StepObserver, StepTrace};
use crate::error::{Error, Result};
use crate::metrics::{distance_to_feasible, feasibility_norm, optimality_gap};
use crate::problem::Problem;
use crate::reference::ReferenceSolution;
use crate::stepsize::StepsizeSchedule;

/// Tolerance of the feasibility loop behind the logged distance estimate.
const DIST_TOL: f64 = 1e-9;

/// Stepping with averaging, without any stopping logic.
pub struct Solver<'a> {
    problem: &'a Problem,
    laws: &'a Laws,
    schedule: StepsizeSchedule,
    beta: f64,
    mode: AveragingMode,
    k0: usize,
    state: SolverState,
    acc: Averager,
}

impl<'a> Solver<'a> {
    pub fn new(
        problem: &'a Problem,
        laws: &'a Laws,
        schedule: StepsizeSchedule,
        beta: f64,
        mode: AveragingMode,
        x0: &[f64],
        seed: u64,
    ) -> Result<Self> {
        if !(beta > 0.0 && beta < 2.0) {
            return Err(Error::Config(format!("beta must lie in (0,2), got {beta}")));
        }
        let k0 = match (mode, schedule.switch_point()) {
            (AveragingMode::Convex, _) => 0,
            (AveragingMode::StronglyConvex, Some(k0)) => k0,
            (AveragingMode::StronglyConvex, None) => {
                return Err(Error::Config("strongly convex averaging needs the switching schedule".into()))
            }
        };
        Ok(Solver {
            problem,
            laws,
            schedule,
            beta,
            mode,
            k0,
            state: SolverState::new(problem, x0, seed)?,
            acc: Averager::new(problem.dim),
        })
    }

    pub fn state(&self) -> &SolverState {
        &self.state
    }

    pub fn schedule(&self) -> &StepsizeSchedule {
        &self.schedule
    }

    pub fn averager(&self) -> &Averager {
        &self.acc
    }

    /// Switch point for strongly convex averaging, 0 otherwise.
    pub fn k0(&self) -> usize {
        self.k0
    }

    /// `x̂_k`; an error until the first weighted iterate exists.
    pub fn average(&self) -> Result<Vec<f64>> {
        self.acc.average()
    }

    pub fn step(&mut self, observer: &mut dyn StepObserver) -> Result<StepTrace> {
        let alpha = self.schedule.alpha_at(self.state.k);
        let trace = ssp_step(self.problem, self.laws, &mut self.state, alpha, self.beta)?;
        let j = self.state.k;
        match self.mode {
            AveragingMode::Convex => self.acc.push(self.schedule.convex_weight(j), &self.state.x),
            AveragingMode::StronglyConvex if j > self.k0 => {
                self.acc.push(((j + 1) * (j + 1)) as f64, &self.state.x)
            }
            AveragingMode::StronglyConvex => {}
        }
        observer.observe(self.problem, &self.state, &trace)?;
        Ok(trace)
    }
}

#[derive(Clone, Debug)]
pub struct SolverConfig {
    pub laws: Laws,
    pub schedule: StepsizeSchedule,
    pub beta: f64,
    pub averaging: AveragingMode,
    pub max_epochs: usize,
    pub feasibility_tol: f64,
    pub gap_tol: f64,
    pub seed: u64,
    /// Defaults to the origin.
    pub x0: Option<Vec<f64>>,
    /// Stop on `x_k` instead of `x̂_k`.
    pub stop_on_last_iterate: bool,
    /// Log one record every this many epochs; the final epoch is always logged.
    pub log_every: usize,
    pub record_distance: bool,
    pub record_trajectory: bool,
    pub wall_time: bool,
}

impl SolverConfig {
    pub fn new(laws: Laws, schedule: StepsizeSchedule, averaging: AveragingMode) -> Self {
        SolverConfig {
            laws,
            schedule,
            beta: 1.0,
            averaging,
            max_epochs: 1000,
            feasibility_tol: 1e-2,
            gap_tol: 1e-2,
            seed: 0,
            x0: None,
            stop_on_last_iterate: false,
            log_every: 1,
            record_distance: true,
            record_trajectory: false,
            wall_time: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    Budget,
    Diverged,
}

/// One row of the run log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub epoch: usize,
    pub iteration: usize,
    #[serde(rename = "F_gap")]
    pub f_gap: f64,
    pub feasibility_norm: f64,
    pub dist_estimate: f64,
    pub alpha_k: f64,
    pub wall_time_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub termination: Termination,
    pub averaged: Vec<f64>,
    pub last_iterate: Vec<f64>,
    pub iterations: usize,
    pub epochs: usize,
    pub epoch_length: usize,
    pub final_gap: f64,
    pub final_feasibility: f64,
    pub records: Vec<RunRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectory: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

pub fn run(problem: &Problem, reference: Option<&ReferenceSolution>, cfg: &SolverConfig) -> Result<RunResult> {
    run_observed(problem, reference, cfg, &mut NoObserver)
}

/// Runs until both criteria hold at an epoch boundary or the epoch budget is spent.
///
/// Without a reference only the feasibility criterion is checked and `F_gap` is NaN.
pub fn run_observed(
    problem: &Problem,
    reference: Option<&ReferenceSolution>,
    cfg: &SolverConfig,
    observer: &mut dyn StepObserver,
) -> Result<RunResult> {
    if !(cfg.feasibility_tol > 0.0) || !(cfg.gap_tol > 0.0) {
        return Err(Error::Config("stopping tolerances must be positive".into()));
    }
    let x0 = cfg.x0.clone().unwrap_or_else(|| vec![0.0; problem.dim]);
    let mut solver = Solver::new(problem, &cfg.laws, cfg.schedule.clone(), cfg.beta, cfg.averaging, &x0, cfg.seed)?;
    let epoch_length = cfg.laws.epoch_length();
    let start = Instant::now();
    let elapsed = |on: bool| if on { start.elapsed().as_secs_f64() * 1e3 } else { 0.0 };
    let log_every = cfg.log_every.max(1);

    let gap_at = |x: &[f64]| -> Result<f64> {
        match reference {
            Some(r) => optimality_gap(problem, x, r),
            None => Ok(f64::NAN),
        }
    };
    let dist_at = |x: &[f64]| -> f64 {
        if cfg.record_distance {
            distance_to_feasible(problem, x, DIST_TOL).distance
        } else {
            f64::NAN
        }
    };

    let x_start = solver.state().x.clone();
    let initial_feasibility = feasibility_norm(problem, &x_start);
    let limit = 1e6 * initial_feasibility.max(1.0);
    let mut trajectory = cfg.record_trajectory.then(|| vec![x_start.clone()]);
    let mut records = vec![RunRecord {
        epoch: 0,
        iteration: 0,
        f_gap: gap_at(&x_start)?,
        feasibility_norm: initial_feasibility,
        dist_estimate: dist_at(&x_start),
        alpha_k: cfg.schedule.alpha_at(0),
        wall_time_ms: elapsed(cfg.wall_time),
    }];

    let mut termination = Termination::Budget;
    let mut diagnostic = None;
    let mut epochs = 0;
    let mut eval_point = x_start;
    let mut final_gap = records[0].f_gap;
    let mut final_feasibility = initial_feasibility;
    let mut last_alpha = records[0].alpha_k;

    for epoch in 1..=cfg.max_epochs {
        for _ in 0..epoch_length {
            let trace = solver.step(observer)?;
            last_alpha = trace.alpha;
            if let Some(t) = trajectory.as_mut() {
                t.push(solver.state().x.clone());
            }
            if solver.state().x.iter().any(|v| !v.is_finite()) {
                termination = Termination::Diverged;
                diagnostic = Some(format!("non-finite iterate at iteration {}", trace.k + 1));
                break;
            }
        }
        epochs = epoch;
        if termination == Termination::Diverged {
            break;
        }

        eval_point = if cfg.stop_on_last_iterate || solver.averager().terms() == 0 {
            solver.state().x.clone()
        } else {
            solver.average()?
        };
        final_feasibility = feasibility_norm(problem, &eval_point);
        final_gap = gap_at(&eval_point)?;
        let last_feasibility = feasibility_norm(problem, &solver.state().x);
        let diverged = last_feasibility.max(final_feasibility) > limit;
        let converged = final_feasibility <= cfg.feasibility_tol
            && (reference.is_none() || final_gap <= cfg.gap_tol);
        let done = diverged || converged || epoch == cfg.max_epochs;

        if epoch % log_every == 0 || done {
            records.push(RunRecord {
                epoch,
                iteration: solver.state().k,
                f_gap: final_gap,
                feasibility_norm: final_feasibility,
                dist_estimate: dist_at(&eval_point),
                alpha_k: last_alpha,
                wall_time_ms: elapsed(cfg.wall_time),
            });
        }
        if diverged {
            termination = Termination::Diverged;
            diagnostic = Some(format!(
                "{}",
                Error::Diverged {
                    iteration: solver.state().k,
                    feasibility: last_feasibility.max(final_feasibility),
                    limit,
                }
            ));
            break;
        }
        if converged {
            termination = Termination::Converged;
            break;
        }
    }

    let state = solver.state();
    let averaged = solver.average().unwrap_or_else(|_| eval_point.clone());
    Ok(RunResult {
        termination,
        averaged,
        last_iterate: state.x.clone(),
        iterations: state.k,
        epochs,
        epoch_length,
        final_gap,
        final_feasibility,
        records,
        trajectory,
        diagnostic,
    })
}
