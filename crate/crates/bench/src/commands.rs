//! Subcommand implementations. Each returns the process exit code.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use ssp_core::config::{InstanceSource, RunConfig};
use ssp_core::runlog::{format_float, write_run_log};
use ssp_core::solver::{run, RunResult, Termination};

use crate::cache::{write_atomic, ReferenceCache};
use crate::sweep::{self, SweepSpec};

pub const EXIT_CONVERGED: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_BUDGET: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;
pub const EXIT_FAILURE: i32 = 4;

/// Options shared by every subcommand.
#[derive(Clone, Debug)]
pub struct Common {
    pub seed: Option<u64>,
    pub out_dir: PathBuf,
    pub max_epochs: Option<usize>,
    pub threads: Option<usize>,
}

impl Common {
    fn cache(&self) -> ReferenceCache {
        ReferenceCache::new(self.out_dir.join("cache"))
    }

    fn output(&self, input: &Path, suffix: &str) -> Result<PathBuf> {
        fs::create_dir_all(&self.out_dir).with_context(|| format!("creating {}", self.out_dir.display()))?;
        let stem = input.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
        Ok(self.out_dir.join(format!("{stem}.{suffix}")))
    }
}

fn base_dir(path: &Path) -> &Path {
    path.parent().unwrap_or(Path::new("."))
}

fn read(path: &Path) -> std::result::Result<String, i32> {
    fs::read_to_string(path).map_err(|e| {
        eprintln!("error: {}: {e}", path.display());
        EXIT_INVALID
    })
}

fn invalid(path: &Path, msg: impl std::fmt::Display) -> i32 {
    eprintln!("error: {}: {msg}", path.display());
    EXIT_INVALID
}

pub fn exit_code(t: Termination) -> i32 {
    match t {
        Termination::Converged => EXIT_CONVERGED,
        Termination::Budget => EXIT_BUDGET,
        Termination::Diverged => EXIT_DIVERGED,
    }
}

/// Parses a run config and applies the command-line overrides.
pub fn load_run_config(path: &Path, common: &Common) -> std::result::Result<(String, RunConfig), i32> {
    let text = read(path)?;
    let mut cfg = RunConfig::from_json(&text).map_err(|e| invalid(path, e))?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(m) = common.max_epochs {
        cfg.stopping.max_epochs = m;
    }
    Ok((text, cfg))
}

pub fn cmd_run(path: &Path, common: &Common) -> Result<i32> {
    let (text, cfg) = match load_run_config(path, common) {
        Ok(v) => v,
        Err(code) => return Ok(code),
    };
    let problem = match cfg.instance.load(base_dir(path)) {
        Ok(p) => p,
        Err(e) => return Ok(invalid(path, e)),
    };
    let reference = if cfg.needs_reference() {
        Some(common.cache().get_or_solve(&problem, &cfg.reference.options)?)
    } else {
        None
    };
    let prepared = match cfg.prepare(problem, reference) {
        Ok(p) => p,
        Err(e) => return Ok(invalid(path, e.anchor(&text))),
    };
    let result = run(&prepared.problem, prepared.reference.as_ref(), &prepared.solver)?;
    write_run_outputs(path, common, &result)?;

    println!(
        "{}: {} after {} epochs ({} iterations), F_gap {}, feasibility {}",
        path.display(),
        sweep::termination_name(result.termination),
        result.epochs,
        result.iterations,
        format_float(result.final_gap),
        format_float(result.final_feasibility),
    );
    if let Some(d) = &result.diagnostic {
        eprintln!("diagnostic: {d}");
    }
    Ok(exit_code(result.termination))
}

fn write_run_outputs(path: &Path, common: &Common, result: &RunResult) -> Result<()> {
    let mut log = Vec::new();
    write_run_log(&result.records, &mut log)?;
    write_atomic(&common.output(path, "runlog.csv")?, &log)?;
    write_atomic(&common.output(path, "result.json")?, serde_json::to_string_pretty(result)?.as_bytes())?;

    let mut plot = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut plot);
        w.write_record(["epoch", "F_gap", "feasibility_norm"])?;
        for r in &result.records {
            w.write_record([r.epoch.to_string(), format_float(r.f_gap), format_float(r.feasibility_norm)])?;
        }
        w.flush()?;
    }
    write_atomic(&common.output(path, "plot.csv")?, &plot)
}

pub fn cmd_validate(path: &Path, common: &Common) -> Result<i32> {
    let (_, cfg) = match load_run_config(path, common) {
        Ok(v) => v,
        Err(code) => return Ok(code),
    };
    let problem = match cfg.instance.load(base_dir(path)) {
        Ok(p) => p,
        Err(e) => return Ok(invalid(path, e)),
    };
    let reference = if cfg.needs_reference() {
        common.cache().lookup(&problem, &cfg.reference.options)?
    } else {
        None
    };
    let report = cfg.validate(&problem, reference.as_ref());

    let mut out = String::new();
    writeln!(out, "instance: n = {}, N = {}, m = {}", problem.dim, problem.num_components(), problem.num_constraints())?;
    if let Some(e) = report.epoch_length {
        writeln!(out, "epoch length: {e}")?;
    }
    if let Some(s) = &report.scaled {
        writeln!(
            out,
            "scaled constants: B² = {}, L = {}, B_h = {}, c = {}, C = {}",
            s.b_sq, s.l, s.b_h, s.c, s.c_const
        )?;
    }
    if let Some(iv) = &report.interval {
        writeln!(out, "admissible alpha0: ({}, {})", iv.lo, iv.hi)?;
    }
    if let Some(a) = report.alpha0 {
        writeln!(out, "alpha0: {a}")?;
    }
    for n in &report.notes {
        writeln!(out, "note: {n}")?;
    }
    for i in &report.issues {
        writeln!(out, "issue: {i}")?;
    }
    writeln!(out, "{}", if report.ok() { "valid" } else { "invalid" })?;
    std::io::stdout().write_all(out.as_bytes())?;
    Ok(if report.ok() { EXIT_CONVERGED } else { EXIT_INVALID })
}

pub fn cmd_make_instance(path: &Path, output: Option<&Path>, common: &Common) -> Result<i32> {
    let text = match read(path) {
        Ok(t) => t,
        Err(code) => return Ok(code),
    };
    let mut source: InstanceSource = match serde_json::from_str(&text) {
        Ok(s) => s,
        Err(e) => return Ok(invalid(path, format!("line {}: {e}", e.line()))),
    };
    if let Some(seed) = common.seed {
        match &mut source {
            InstanceSource::ConstrainedLasso(s) => s.seed = seed,
            InstanceSource::RobustSvm(s) => s.seed = seed,
            InstanceSource::Inline { .. } | InstanceSource::Path { .. } => {}
        }
    }
    let problem = match source.load(base_dir(path)) {
        Ok(p) => p,
        Err(e) => return Ok(invalid(path, e)),
    };
    let target = match output {
        Some(p) => p.to_path_buf(),
        None => common.output(path, "instance.json")?,
    };
    write_atomic(&target, problem.to_json()?.as_bytes())?;
    println!("{}", target.display());
    Ok(EXIT_CONVERGED)
}

pub fn cmd_sweep(path: &Path, common: &Common) -> Result<i32> {
    let text = match read(path) {
        Ok(t) => t,
        Err(code) => return Ok(code),
    };
    let mut spec = match SweepSpec::from_json(&text) {
        Ok(s) => s,
        Err(e) => return Ok(invalid(path, e)),
    };
    if let Some(s) = common.seed {
        spec.seed = s;
    }
    let outcome = match sweep::execute(&spec, base_dir(path), Some(&common.cache()), common.threads, common.max_epochs) {
        Ok(o) => o,
        Err(e) if e.is::<sweep::InvalidSpec>() => return Ok(invalid(path, e)),
        Err(e) => return Err(e),
    };

    let mut buf = Vec::new();
    sweep::write_table(&outcome.table, &mut buf)?;
    write_atomic(&common.output(path, "table.csv")?, &buf)?;
    buf.clear();
    sweep::write_runs(&outcome.runs, &mut buf)?;
    write_atomic(&common.output(path, "runs.csv")?, &buf)?;
    buf.clear();
    sweep::write_curves(&outcome, &mut buf)?;
    write_atomic(&common.output(path, "curves.csv")?, &buf)?;

    println!("{:>6} {:>6} {:>12} {:>10} {:>9} {:>9}", "tau1", "tau2", "mean_epochs", "converged", "diverged", "flagged");
    for r in &outcome.table {
        println!(
            "{:>6} {:>6} {:>12.1} {:>7}/{:<2} {:>9} {:>9}",
            r.tau1,
            r.tau2,
            r.mean_epochs,
            r.converged,
            r.replications,
            r.diverged,
            if r.flagged { "yes" } else { "" }
        );
    }
    Ok(EXIT_CONVERGED)
}
