//! Mini-batch size sweeps.

use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use ssp_core::config::{ConstantsSpec, InstanceSource, LoggingSpec, ReferenceSpec, RunConfig, ScheduleSpec, StoppingSpec};
use ssp_core::problem::Problem;
use ssp_core::reference::ReferenceSolution;
use ssp_core::runlog::format_float;
use ssp_core::sampling::LawSpec;
use ssp_core::solver::{run, AveragingMode, RunResult, Termination};

use crate::cache::ReferenceCache;

/// A batch size, or the whole index set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BatchSize {
    Size(usize),
    Keyword(Full),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Full {
    Full,
}

impl BatchSize {
    pub fn resolve(self, universe: usize) -> usize {
        match self {
            BatchSize::Size(t) => t,
            BatchSize::Keyword(Full::Full) => universe,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LawFamily {
    #[default]
    Nice,
    Partition,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub instance: InstanceSource,
    /// `(τ₁, τ₂)` cells.
    pub pairs: Vec<(BatchSize, BatchSize)>,
    #[serde(default = "one")]
    pub replications: usize,
    /// Replication `r` runs with seed `seed + r` in every cell.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub law: LawFamily,
    pub schedule: ScheduleSpec,
    #[serde(default)]
    pub constants: ConstantsSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub averaging: Option<AveragingMode>,
    #[serde(default)]
    pub stopping: StoppingSpec,
    #[serde(default)]
    pub logging: LoggingSpec,
    #[serde(default)]
    pub reference: ReferenceSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
}

fn one() -> usize {
    1
}

/// A spec that cannot be turned into runs.
#[derive(Debug)]
pub struct InvalidSpec(pub String);

impl std::fmt::Display for InvalidSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InvalidSpec {}

impl SweepSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: SweepSpec = serde_json::from_str(text).map_err(|e| anyhow::anyhow!("line {}: {e}", e.line()))?;
        if spec.replications == 0 {
            bail!("replications must be at least 1");
        }
        if spec.pairs.is_empty() {
            bail!("pairs must not be empty");
        }
        Ok(spec)
    }

    fn law(&self, tau: usize) -> LawSpec {
        match self.law {
            LawFamily::Nice => LawSpec::Nice { tau },
            LawFamily::Partition => LawSpec::Partition { tau, blocks: None },
        }
    }

    /// Run configuration of one cell and replication.
    pub fn run_config(&self, problem: &Problem, pair: usize, replication: usize) -> RunConfig {
        let (t1, t2) = self.pairs[pair];
        RunConfig {
            instance: self.instance.clone(),
            objective_law: self.law(t1.resolve(problem.num_components())),
            constraint_law: Some(self.law(t2.resolve(problem.num_constraints().max(1)))),
            schedule: self.schedule.clone(),
            constants: self.constants.clone(),
            averaging: self.averaging,
            stopping: self.stopping.clone(),
            seed: self.seed.wrapping_add(replication as u64),
            logging: self.logging.clone(),
            reference: self.reference.clone(),
            x0: self.x0.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunRow {
    pub tau1: usize,
    pub tau2: usize,
    pub replication: usize,
    pub seed: u64,
    /// `converged`, `budget`, `diverged` or `error`.
    pub outcome: String,
    pub epochs: usize,
    pub iterations: usize,
    pub epoch_length: usize,
    pub final_gap: f64,
    pub final_feasibility: f64,
    pub wall_time_ms: f64,
    pub diagnostic: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TableRow {
    pub tau1: usize,
    pub tau2: usize,
    pub replications: usize,
    /// Arithmetic mean over replications; runs out of budget count their full budget.
    pub mean_epochs: f64,
    pub mean_wall_time_ms: f64,
    pub converged: usize,
    pub diverged: usize,
    pub failed: usize,
    pub total_iterations: usize,
    pub flagged: bool,
}

pub struct SweepOutcome {
    pub table: Vec<TableRow>,
    pub runs: Vec<RunRow>,
    /// Per-run results in `(pair, replication)` order; `None` for runs that errored.
    pub results: Vec<Option<RunResult>>,
}

/// Runs every cell, in parallel on `threads` workers when given.
pub fn execute(
    spec: &SweepSpec,
    base_dir: &Path,
    cache: Option<&ReferenceCache>,
    threads: Option<usize>,
    max_epochs: Option<usize>,
) -> Result<SweepOutcome> {
    let problem = spec.instance.load(base_dir).map_err(|e| InvalidSpec(e.to_string()))?;
    let reference = if spec.reference.enabled {
        Some(match cache {
            Some(c) => c.get_or_solve(&problem, &spec.reference.options)?,
            None => ssp_core::reference::reference_solve_with(&problem, &spec.reference.options)?,
        })
    } else {
        None
    };
    execute_on(spec, &problem, reference.as_ref(), threads, max_epochs)
}

pub fn execute_on(
    spec: &SweepSpec,
    problem: &Problem,
    reference: Option<&ReferenceSolution>,
    threads: Option<usize>,
    max_epochs: Option<usize>,
) -> Result<SweepOutcome> {
    let cells: Vec<(usize, usize)> = (0..spec.pairs.len())
        .flat_map(|p| (0..spec.replications).map(move |r| (p, r)))
        .collect();

    // Every cell must prepare before any run starts.
    let mut prepared = Vec::with_capacity(cells.len());
    for &(p, r) in &cells {
        let mut cfg = spec.run_config(problem, p, r);
        if let Some(m) = max_epochs {
            cfg.stopping.max_epochs = m;
        }
        let (t1, t2) = spec.pairs[p];
        let run = cfg
            .prepare(problem.clone(), reference.cloned())
            .map_err(|e| InvalidSpec(format!("pair ({t1:?}, {t2:?}): {e}")))?;
        prepared.push(run);
    }

    let work = || -> Vec<std::result::Result<RunResult, String>> {
        prepared
            .par_iter()
            .map(|pr| run(&pr.problem, pr.reference.as_ref(), &pr.solver).map_err(|e| e.to_string()))
            .collect()
    };
    let outcomes = match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .context("building the worker pool")?
            .install(work),
        None => work(),
    };

    let mut runs = Vec::with_capacity(cells.len());
    let mut results = Vec::with_capacity(cells.len());
    for ((&(_, r), pr), outcome) in cells.iter().zip(&prepared).zip(outcomes) {
        let tau1 = pr.solver.laws.objective.tau();
        let tau2 = pr.solver.laws.constraint.as_ref().map_or(0, |l| l.tau());
        let seed = pr.solver.seed;
        let row = match &outcome {
            Ok(res) => RunRow {
                tau1,
                tau2,
                replication: r,
                seed,
                outcome: termination_name(res.termination).into(),
                epochs: res.epochs,
                iterations: res.iterations,
                epoch_length: res.epoch_length,
                final_gap: res.final_gap,
                final_feasibility: res.final_feasibility,
                wall_time_ms: res.records.last().map_or(0.0, |rec| rec.wall_time_ms),
                diagnostic: res.diagnostic.clone().unwrap_or_default(),
            },
            Err(msg) => RunRow {
                tau1,
                tau2,
                replication: r,
                seed,
                outcome: "error".into(),
                epochs: 0,
                iterations: 0,
                epoch_length: pr.solver.laws.epoch_length(),
                final_gap: f64::NAN,
                final_feasibility: f64::NAN,
                wall_time_ms: 0.0,
                diagnostic: msg.clone(),
            },
        };
        runs.push(row);
        results.push(outcome.ok());
    }

    let table = runs
        .chunks(spec.replications)
        .map(|rows| {
            let n = rows.len() as f64;
            let count = |o: &str| rows.iter().filter(|r| r.outcome == o).count();
            let (diverged, failed) = (count("diverged"), count("error"));
            TableRow {
                tau1: rows[0].tau1,
                tau2: rows[0].tau2,
                replications: rows.len(),
                mean_epochs: rows.iter().map(|r| r.epochs as f64).sum::<f64>() / n,
                mean_wall_time_ms: rows.iter().map(|r| r.wall_time_ms).sum::<f64>() / n,
                converged: count("converged"),
                diverged,
                failed,
                total_iterations: rows.iter().map(|r| r.iterations).sum(),
                flagged: diverged + failed > 0,
            }
        })
        .collect();
    Ok(SweepOutcome { table, runs, results })
}

pub fn termination_name(t: Termination) -> &'static str {
    match t {
        Termination::Converged => "converged",
        Termination::Budget => "budget",
        Termination::Diverged => "diverged",
    }
}

pub fn write_table<W: Write>(rows: &[TableRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "tau1",
        "tau2",
        "replications",
        "mean_epochs",
        "mean_wall_time_ms",
        "converged",
        "diverged",
        "failed",
        "total_iterations",
        "flagged",
    ])?;
    for r in rows {
        w.write_record([
            r.tau1.to_string(),
            r.tau2.to_string(),
            r.replications.to_string(),
            format_float(r.mean_epochs),
            format_float(r.mean_wall_time_ms),
            r.converged.to_string(),
            r.diverged.to_string(),
            r.failed.to_string(),
            r.total_iterations.to_string(),
            r.flagged.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_runs<W: Write>(rows: &[RunRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "tau1",
        "tau2",
        "replication",
        "seed",
        "outcome",
        "epochs",
        "iterations",
        "epoch_length",
        "final_gap",
        "final_feasibility",
        "wall_time_ms",
        "diagnostic",
    ])?;
    for r in rows {
        w.write_record([
            r.tau1.to_string(),
            r.tau2.to_string(),
            r.replication.to_string(),
            r.seed.to_string(),
            r.outcome.clone(),
            r.epochs.to_string(),
            r.iterations.to_string(),
            r.epoch_length.to_string(),
            format_float(r.final_gap),
            format_float(r.final_feasibility),
            format_float(r.wall_time_ms),
            r.diagnostic.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Per-epoch optimality and feasibility curves of every run.
pub fn write_curves<W: Write>(outcome: &SweepOutcome, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["tau1", "tau2", "replication", "epoch", "iteration", "F_gap", "feasibility_norm"])?;
    for (row, res) in outcome.runs.iter().zip(&outcome.results) {
        let Some(res) = res else { continue };
        for rec in &res.records {
            w.write_record([
                row.tau1.to_string(),
                row.tau2.to_string(),
                row.replication.to_string(),
                rec.epoch.to_string(),
                rec.iteration.to_string(),
                format_float(rec.f_gap),
                format_float(rec.feasibility_norm),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
