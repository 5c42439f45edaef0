//! Run configuration documents.
//!
//! ```json
//! {
//!   "instance": {"kind": "constrained_lasso", "n_components": 120, "dim": 110,
//!                "m_lin": 120, "m_soc": 120, "seed": 7},
//!   "objective_law": {"kind": "nice", "tau": 20},
//!   "constraint_law": {"kind": "nice", "tau": 80},
//!   "schedule": {"mode": "convex_decay", "alpha0": "auto", "gamma": 0.5, "beta": 1.0},
//!   "stopping": {"max_epochs": 1000, "feasibility_tol": 0.01, "gap_tol": 0.01},
//!   "seed": 1
//! }
//! ```

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::dist;
use crate::problem::{
    estimate_constants, make_constrained_lasso, make_robust_svm, ConstantsMode, ConstrainedLassoSpec, Problem,
    ProblemConstants, RobustSvmSpec,
};
use crate::reference::{ReferenceOptions, ReferenceSolution};
use crate::sampling::{scaled_constants, LawSpec, SamplingLaw, ScaledConstants, WeightRule};
use crate::solver::{AveragingMode, Laws, SolverConfig};
use crate::stepsize::{admissible_alpha0_interval, optimal_alpha0, Alpha0Case, OpenInterval, StepsizeSchedule};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InstanceSource {
    ConstrainedLasso(ConstrainedLassoSpec),
    RobustSvm(RobustSvmSpec),
    Inline { problem: Box<Problem> },
    /// Instance JSON file, relative to the config file.
    Path { path: PathBuf },
}

impl InstanceSource {
    pub fn load(&self, base_dir: &Path) -> Result<Problem> {
        match self {
            InstanceSource::ConstrainedLasso(spec) => make_constrained_lasso(spec),
            InstanceSource::RobustSvm(spec) => make_robust_svm(spec),
            InstanceSource::Inline { problem } => {
                problem.validate()?;
                Ok((**problem).clone())
            }
            InstanceSource::Path { path } => Problem::from_json(&std::fs::read_to_string(base_dir.join(path))?),
        }
    }

    /// Generator specs understood by `make-instance`.
    pub fn generate(&self) -> Result<Problem> {
        self.load(Path::new("."))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Alpha0Spec {
    Value(f64),
    Keyword(Alpha0Keyword),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alpha0Keyword {
    Auto,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScheduleSpec {
    ConvexDecay {
        alpha0: Alpha0Spec,
        #[serde(default = "half")]
        gamma: f64,
        #[serde(default = "one")]
        beta: f64,
        #[serde(default = "default_delta")]
        delta: f64,
        /// Distance estimate for `"auto"`; defaults to `‖x₀ − x_ref‖`.
        #[serde(default)]
        r0: Option<f64>,
        /// Allows `γ < 1/2`; requires `B² = 0`.
        #[serde(default)]
        assume_zero_b: bool,
    },
    Switching {
        #[serde(default = "one")]
        beta: f64,
    },
}

impl ScheduleSpec {
    pub fn beta(&self) -> f64 {
        match self {
            ScheduleSpec::ConvexDecay { beta, .. } | ScheduleSpec::Switching { beta } => *beta,
        }
    }

    fn default_averaging(&self) -> AveragingMode {
        match self {
            ScheduleSpec::ConvexDecay { .. } => AveragingMode::Convex,
            ScheduleSpec::Switching { .. } => AveragingMode::StronglyConvex,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConstantsSpec {
    pub mode: ConstantsMode,
    pub c_bar: f64,
    pub q: f64,
    pub b_sq: Option<f64>,
    pub l: Option<f64>,
    pub mu: Option<f64>,
}

impl Default for ConstantsSpec {
    fn default() -> Self {
        ConstantsSpec {
            mode: ConstantsMode::Smooth,
            c_bar: 1.0,
            q: 1.0,
            b_sq: None,
            l: None,
            mu: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StoppingSpec {
    pub max_epochs: usize,
    pub feasibility_tol: f64,
    pub gap_tol: f64,
    pub use_last_iterate: bool,
}

impl Default for StoppingSpec {
    fn default() -> Self {
        StoppingSpec {
            max_epochs: 1000,
            feasibility_tol: 1e-2,
            gap_tol: 1e-2,
            use_last_iterate: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoggingSpec {
    pub every_epochs: usize,
    pub dist_estimate: bool,
    pub trajectory: bool,
    pub wall_time: bool,
}

impl Default for LoggingSpec {
    fn default() -> Self {
        LoggingSpec {
            every_epochs: 1,
            dist_estimate: true,
            trajectory: false,
            wall_time: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReferenceSpec {
    pub enabled: bool,
    #[serde(flatten)]
    pub options: ReferenceOptions,
}

impl Default for ReferenceSpec {
    fn default() -> Self {
        ReferenceSpec {
            enabled: true,
            options: ReferenceOptions::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub instance: InstanceSource,
    pub objective_law: LawSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constraint_law: Option<LawSpec>,
    pub schedule: ScheduleSpec,
    #[serde(default)]
    pub constants: ConstantsSpec,
    /// Defaults to convex for decay schedules, strongly convex for switching.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub averaging: Option<AveragingMode>,
    #[serde(default)]
    pub stopping: StoppingSpec,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub logging: LoggingSpec,
    #[serde(default)]
    pub reference: ReferenceSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
}

fn half() -> f64 {
    0.5
}

fn one() -> f64 {
    1.0
}

fn default_delta() -> f64 {
    0.01
}

/// A configuration problem, optionally tied to a JSON key.
#[derive(Debug)]
pub struct ConfigError {
    pub key: Option<&'static str>,
    pub line: Option<usize>,
    pub error: Error,
}

impl ConfigError {
    fn at(key: &'static str, error: Error) -> Self {
        ConfigError {
            key: Some(key),
            line: None,
            error,
        }
    }

    /// Resolves the line of `key` in the config text.
    pub fn anchor(mut self, text: &str) -> Self {
        if self.line.is_none() {
            self.line = self.key.and_then(|k| key_line(text, k));
        }
        self
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.error),
            None => write!(f, "{}", self.error),
        }
    }
}

impl std::error::Error for ConfigError {}

impl From<Error> for ConfigError {
    fn from(error: Error) -> Self {
        ConfigError {
            key: None,
            line: None,
            error,
        }
    }
}

/// 1-based line of the first occurrence of `"key"` followed by a colon.
pub fn key_line(text: &str, key: &str) -> Option<usize> {
    let needle = format!("\"{key}\"");
    text.lines().enumerate().find_map(|(i, line)| {
        let pos = line.find(&needle)?;
        line[pos + needle.len()..].trim_start().starts_with(':').then_some(i + 1)
    })
}

/// Everything needed to call the solver.
#[derive(Clone, Debug)]
pub struct PreparedRun {
    pub problem: Problem,
    pub reference: Option<ReferenceSolution>,
    pub constants: ProblemConstants,
    pub scaled: ScaledConstants,
    pub solver: SolverConfig,
    pub alpha0_case: Option<Alpha0Case>,
    pub interval: OpenInterval,
}

/// Dry-run findings.
#[derive(Clone, Debug, Default, Serialize)]
pub struct ValidationReport {
    pub issues: Vec<String>,
    pub notes: Vec<String>,
    pub scaled: Option<ScaledConstants>,
    pub interval: Option<OpenInterval>,
    pub alpha0: Option<f64>,
    pub epoch_length: Option<usize>,
}

impl ValidationReport {
    pub fn ok(&self) -> bool {
        self.issues.is_empty()
    }
}

impl RunConfig {
    /// Parses and checks everything that does not need the instance.
    pub fn from_json(text: &str) -> std::result::Result<Self, ConfigError> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| ConfigError {
            key: None,
            line: Some(e.line()),
            error: Error::Json(e),
        })?;
        cfg.check_static().map_err(|e| e.anchor(text))?;
        Ok(cfg)
    }

    fn check_static(&self) -> std::result::Result<(), ConfigError> {
        let beta = self.schedule.beta();
        if !(beta > 0.0 && beta < 2.0) {
            return Err(ConfigError::at("beta", Error::Config(format!("beta must lie in (0,2), got {beta}"))));
        }
        if let ScheduleSpec::ConvexDecay { gamma, delta, assume_zero_b, .. } = &self.schedule {
            let lo = if *assume_zero_b { 0.0 } else { 0.5 };
            if !(*gamma >= lo && *gamma < 1.0) {
                return Err(ConfigError::at(
                    "gamma",
                    Error::Config(format!("gamma must lie in [{lo}, 1), got {gamma}")),
                ));
            }
            if !(*delta > 0.0 && *delta < 0.5) {
                return Err(ConfigError::at("delta", Error::Config(format!("delta must lie in (0, 1/2), got {delta}"))));
            }
        }
        let s = &self.stopping;
        if !(s.feasibility_tol > 0.0) {
            return Err(ConfigError::at("feasibility_tol", Error::Config("feasibility_tol must be positive".into())));
        }
        if !(s.gap_tol > 0.0) {
            return Err(ConfigError::at("gap_tol", Error::Config("gap_tol must be positive".into())));
        }
        if self.averaging == Some(AveragingMode::StronglyConvex) && matches!(self.schedule, ScheduleSpec::ConvexDecay { .. }) {
            return Err(ConfigError::at(
                "averaging",
                Error::Config("strongly convex averaging needs the switching schedule".into()),
            ));
        }
        Ok(())
    }

    pub fn averaging(&self) -> AveragingMode {
        self.averaging.unwrap_or_else(|| self.schedule.default_averaging())
    }

    pub fn needs_reference(&self) -> bool {
        self.reference.enabled
    }

    fn laws(&self, p: &Problem) -> std::result::Result<Laws, ConfigError> {
        let obj = self
            .objective_law
            .build(p.num_components(), WeightRule::InverseMarginal)
            .map_err(|e| ConfigError::at("objective_law", e))?;
        let con = match (&self.constraint_law, p.num_constraints()) {
            (_, 0) => None,
            (Some(spec), m) => Some(
                spec.build(m, WeightRule::Indicator)
                    .map_err(|e| ConfigError::at("constraint_law", e))?,
            ),
            (None, m) => Some(
                SamplingLaw::nice(m, m, WeightRule::Indicator).map_err(|e| ConfigError::at("constraint_law", e))?,
            ),
        };
        Laws::new(p, obj, con).map_err(|e| ConfigError::at("objective_law", e))
    }

    fn x0(&self, p: &Problem) -> std::result::Result<Vec<f64>, ConfigError> {
        match &self.x0 {
            Some(x) if x.len() != p.dim => Err(ConfigError::at(
                "x0",
                Error::Dimension {
                    expected: p.dim,
                    got: x.len(),
                },
            )),
            Some(x) => Ok(x.clone()),
            None => Ok(vec![0.0; p.dim]),
        }
    }

    fn constants(&self, p: &Problem, x_ref: Option<&[f64]>) -> std::result::Result<ProblemConstants, ConfigError> {
        let c = &self.constants;
        let mut k = match &p.constants {
            Some(k) => k.clone(),
            None => {
                let overridden = c.b_sq.is_some() && c.l.is_some() && c.mu.is_some();
                match estimate_constants(p, x_ref, c.mode) {
                    Ok(k) => k,
                    Err(_) if overridden => ProblemConstants {
                        b_sq: 0.0,
                        l: 0.0,
                        mu: 0.0,
                        b_j: p.constraints.iter().map(|h| h.subgradient_bound()).collect(),
                        c_bar: 1.0,
                        q: 1.0,
                        diameter_term_omitted: false,
                    },
                    Err(e) => return Err(ConfigError::at("constants", e)),
                }
            }
        };
        k.c_bar = c.c_bar;
        k.q = c.q;
        if let Some(v) = c.b_sq {
            k.b_sq = v;
        }
        if let Some(v) = c.l {
            k.l = v;
        }
        if let Some(v) = c.mu {
            k.mu = v;
        }
        k.validate().map_err(|e| ConfigError::at("constants", e))?;
        Ok(k)
    }

    fn schedule(
        &self,
        scaled: &ScaledConstants,
        constants: &ProblemConstants,
        r0_default: Option<f64>,
    ) -> std::result::Result<(StepsizeSchedule, Option<Alpha0Case>), ConfigError> {
        match &self.schedule {
            ScheduleSpec::ConvexDecay {
                alpha0,
                gamma,
                delta,
                r0,
                assume_zero_b,
                ..
            } => {
                if *gamma < 0.5 && scaled.b_sq > 0.0 {
                    return Err(ConfigError::at(
                        "gamma",
                        Error::Config(format!("gamma = {gamma} < 1/2 requires B = 0, but B² = {}", constants.b_sq)),
                    ));
                }
                let (a0, case) = match alpha0 {
                    Alpha0Spec::Value(v) => (*v, None),
                    Alpha0Spec::Keyword(Alpha0Keyword::Auto) => {
                        let r0 = r0.or(r0_default).ok_or_else(|| {
                            ConfigError::at(
                                "alpha0",
                                Error::Config("\"auto\" needs r0 or a reference solution".into()),
                            )
                        })?;
                        if scaled.b_sq == 0.0 {
                            let hi = admissible_alpha0_interval(scaled.l).map_err(|e| ConfigError::at("alpha0", e))?.hi;
                            (hi.min(0.5) - delta, Some(Alpha0Case::Interval))
                        } else {
                            let (a, c) = optimal_alpha0(r0.max(f64::MIN_POSITIVE), scaled.b_sq.sqrt(), scaled.l, *delta)
                                .map_err(|e| ConfigError::at("delta", e))?;
                            (a, Some(c))
                        }
                    }
                };
                let s = StepsizeSchedule::convex_decay(a0, *gamma, scaled.l, *assume_zero_b)
                    .map_err(|e| ConfigError::at("alpha0", e))?;
                Ok((s, case))
            }
            ScheduleSpec::Switching { .. } => {
                let s = StepsizeSchedule::switching(scaled.l, constants.mu).map_err(|e| ConfigError::at("schedule", e))?;
                Ok((s, None))
            }
        }
    }

    /// Builds the solver configuration for `problem`.
    pub fn prepare(
        &self,
        problem: Problem,
        reference: Option<ReferenceSolution>,
    ) -> std::result::Result<PreparedRun, ConfigError> {
        let laws = self.laws(&problem)?;
        let x0 = self.x0(&problem)?;
        let x_ref = reference.as_ref().map(|r| r.x_ref.as_slice());
        let constants = self.constants(&problem, x_ref)?;
        let scaled = self.scaled(&laws, &constants)?;
        let r0_default = x_ref.map(|x| dist(&x0, x));
        let (schedule, alpha0_case) = self.schedule(&scaled, &constants, r0_default)?;
        let interval = admissible_alpha0_interval(scaled.l)?;

        let mut solver = SolverConfig::new(laws, schedule, self.averaging());
        solver.beta = self.schedule.beta();
        solver.max_epochs = self.stopping.max_epochs;
        solver.feasibility_tol = self.stopping.feasibility_tol;
        solver.gap_tol = self.stopping.gap_tol;
        solver.stop_on_last_iterate = self.stopping.use_last_iterate;
        solver.seed = self.seed;
        solver.x0 = Some(x0);
        solver.log_every = self.logging.every_epochs;
        solver.record_distance = self.logging.dist_estimate;
        solver.record_trajectory = self.logging.trajectory;
        solver.wall_time = self.logging.wall_time;
        Ok(PreparedRun {
            problem,
            reference,
            constants,
            scaled,
            solver,
            alpha0_case,
            interval,
        })
    }

    fn scaled(&self, laws: &Laws, constants: &ProblemConstants) -> std::result::Result<ScaledConstants, ConfigError> {
        match &laws.constraint {
            Some(con) => scaled_constants(&laws.objective, con, constants, self.schedule.beta())
                .map_err(|e| ConfigError::at("beta", e)),
            None => {
                let f = laws.objective.scaling_factor();
                Ok(ScaledConstants {
                    b_sq: f * constants.b_sq,
                    l: f * constants.l,
                    b_h: 0.0,
                    c: 0.0,
                    c_const: f64::INFINITY,
                })
            }
        }
    }

    /// Dry run: reports every problem found instead of stopping at the first.
    pub fn validate(&self, problem: &Problem, reference: Option<&ReferenceSolution>) -> ValidationReport {
        let mut report = ValidationReport::default();
        if let Err(e) = self.check_static() {
            report.issues.push(e.to_string());
        }
        let laws = match self.laws(problem) {
            Ok(l) => l,
            Err(e) => {
                report.issues.push(e.to_string());
                return report;
            }
        };
        report.epoch_length = Some(laws.epoch_length());
        let x0 = match self.x0(problem) {
            Ok(x) => x,
            Err(e) => {
                report.issues.push(e.to_string());
                return report;
            }
        };
        let x_ref = match reference {
            Some(r) => r.x_ref.clone(),
            None => {
                if self.constants.mode == ConstantsMode::Smooth {
                    report.notes.push("no reference solution: smooth constants evaluated at x0".into());
                }
                x0.clone()
            }
        };
        let constants = match self.constants(problem, Some(&x_ref)) {
            Ok(k) => k,
            Err(e) => {
                report.issues.push(e.to_string());
                return report;
            }
        };
        if constants.diameter_term_omitted {
            report.notes.push("Y is unbounded: the diameter term of B² was omitted".into());
        }
        let scaled = match self.scaled(&laws, &constants) {
            Ok(s) => s,
            Err(e) => {
                report.issues.push(e.to_string());
                return report;
            }
        };
        let interval = admissible_alpha0_interval(scaled.l).ok();
        report.interval = interval;
        report.scaled = Some(scaled.clone());
        if let ScheduleSpec::ConvexDecay { alpha0, gamma, .. } = &self.schedule {
            if *gamma < 0.5 && scaled.b_sq > 0.0 {
                report
                    .issues
                    .push(format!("gamma = {gamma} lies outside [1/2, 1) while B² = {} is nonzero", constants.b_sq));
            }
            if let (Alpha0Spec::Value(a), Some(iv)) = (alpha0, interval) {
                report.alpha0 = Some(*a);
                if !iv.contains(*a) {
                    report
                        .issues
                        .push(format!("alpha0 = {a} lies outside the admissible interval ({}, {})", iv.lo, iv.hi));
                }
            }
        }
        let r0_default = reference.map(|r| dist(&x0, &r.x_ref));
        match self.schedule(&scaled, &constants, r0_default) {
            Ok((s, _)) => report.alpha0 = Some(s.alpha_at(0)),
            Err(e) => {
                let msg = e.to_string();
                if !report.issues.iter().any(|i| msg.contains(i.as_str()) || i.contains(&msg)) {
                    report.issues.push(msg);
                }
            }
        }
        report
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TINY: &str = r#"{
  "instance": {"kind": "constrained_lasso", "n_components": 12, "dim": 4, "m_lin": 6, "m_soc": 0, "seed": 1},
  "objective_law": {"kind": "partition", "tau": 3},
  "constraint_law": {"kind": "nice", "tau": 2},
  "schedule": {"mode": "convex_decay", "alpha0": 0.001, "gamma": 0.5,
               "beta": 2.5},
  "seed": 3
}"#;

    #[test]
    fn beta_outside_range_is_line_anchored() {
        let err = RunConfig::from_json(TINY).unwrap_err();
        assert_eq!(err.line, Some(6));
        assert!(err.to_string().contains("beta must lie in (0,2)"));
    }

    #[test]
    fn syntax_errors_carry_lines() {
        let err = RunConfig::from_json("{\n  \"seed\": 1,\n  oops\n}").unwrap_err();
        assert_eq!(err.line, Some(3));
    }

    #[test]
    fn alpha0_keyword_and_value() {
        let text = TINY.replace("2.5", "1.0").replace("0.001", "\"auto\"");
        let cfg = RunConfig::from_json(&text).unwrap();
        assert!(matches!(
            cfg.schedule,
            ScheduleSpec::ConvexDecay {
                alpha0: Alpha0Spec::Keyword(Alpha0Keyword::Auto),
                ..
            }
        ));
    }

    #[test]
    fn validate_flags_small_gamma_and_alpha0() {
        let text = TINY
            .replace("2.5", "1.0")
            .replace("\"gamma\": 0.5", "\"gamma\": 0.3, \"assume_zero_b\": true")
            .replace("0.001", "0.9");
        let cfg = RunConfig::from_json(&text).unwrap();
        let p = cfg.instance.generate().unwrap();
        let report = cfg.validate(&p, None);
        assert!(report.issues.iter().any(|i| i.contains("gamma = 0.3")));
        assert!(report.issues.iter().any(|i| i.contains("admissible interval")));
        assert_eq!(report.epoch_length, Some(4));
    }

    #[test]
    fn prepare_builds_solver_config() {
        let text = TINY.replace("2.5", "1.0");
        let cfg = RunConfig::from_json(&text).unwrap();
        let p = cfg.instance.generate().unwrap();
        let x_ref = vec![0.0; 4];
        let reference = ReferenceSolution {
            x_ref,
            f_ref: 0.0,
            feasibility_norm_ref: 0.0,
            method: crate::reference::ReferenceMethod::AugmentedLagrangian,
            iterations: 0,
            fingerprint: p.fingerprint(),
        };
        let prepared = cfg.prepare(p, Some(reference)).unwrap();
        assert_eq!(prepared.solver.laws.epoch_length(), 4);
        assert_eq!(prepared.solver.schedule.alpha_at(0), 0.001);
    }
}
