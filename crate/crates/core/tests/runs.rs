use ssp_core::linalg::dot;
use ssp_core::metrics::{feasibility_norm, optimality_gap};
use ssp_core::problem::{
    estimate_constants, make_constrained_lasso, make_robust_svm, Component, ConstantsMode, ConstrainedLassoSpec,
    Constraint, Problem, ProxTerm, QDiagonal, RobustSvmSpec, SimpleSet, SmoothTerm, SvmData,
};
use ssp_core::reference::reference_solve;
use ssp_core::runlog::write_run_log;
use ssp_core::sampling::{scaled_constants, SamplingLaw, WeightRule};
use ssp_core::solver::{
    attach_invariant_monitor, run, ssp_step, AveragingMode, Laws, Solver, SolverConfig, SolverState, Termination,
};
use ssp_core::stepsize::StepsizeSchedule;

fn quad(center: f64) -> SmoothTerm {
    SmoothTerm::SeparableQuadratic { curvature: vec![1.0], center: vec![center], linear: vec![0.0] }
}

fn one_dim() -> Problem {
    Problem::new(
        1,
        vec![Component { f: quad(0.0), g: vec![] }],
        vec![Constraint::Affine { a: vec![-1.0], b: 1.0 }],
        SimpleSet::Whole,
    )
    .unwrap()
}

fn full_laws(p: &Problem) -> Laws {
    let (n, m) = (p.num_components(), p.num_constraints());
    Laws::new(
        p,
        SamplingLaw::nice(n, n, WeightRule::InverseMarginal).unwrap(),
        Some(SamplingLaw::nice(m, m, WeightRule::Indicator).unwrap()),
    )
    .unwrap()
}

#[test]
fn one_dim_run_reaches_closed_form() {
    let p = one_dim();
    let r = reference_solve(&p, 1e-10).unwrap();
    assert!((r.x_ref[0] - 1.0).abs() < 1e-6);
    let cfg = SolverConfig::new(
        full_laws(&p),
        StepsizeSchedule::convex_decay(0.2, 0.5, 4.0, false).unwrap(),
        AveragingMode::Convex,
    );
    let res = run(&p, Some(&r), &cfg).unwrap();
    assert_eq!(res.termination, Termination::Converged);
    assert!((res.averaged[0] - 1.0).abs() <= 1e-2);
    assert!(res.final_feasibility <= 1e-2);
    assert!(res.final_gap <= 1e-2);
}

#[test]
fn zero_epoch_budget_returns_start() {
    let p = one_dim();
    let mut cfg = SolverConfig::new(
        full_laws(&p),
        StepsizeSchedule::convex_decay(0.2, 0.5, 4.0, false).unwrap(),
        AveragingMode::Convex,
    );
    cfg.max_epochs = 0;
    cfg.x0 = Some(vec![3.0]);
    let res = run(&p, None, &cfg).unwrap();
    assert_eq!(res.termination, Termination::Budget);
    assert_eq!(res.averaged, vec![3.0]);
    assert_eq!(res.iterations, 0);
    assert_eq!(res.records.len(), 1);
    assert!(res.records[0].f_gap.is_nan());
}

fn lasso_config(p: &Problem, seed: u64) -> SolverConfig {
    let laws = Laws::new(
        p,
        SamplingLaw::nice(p.num_components(), 4, WeightRule::InverseMarginal).unwrap(),
        Some(SamplingLaw::partition(p.num_constraints(), 4, WeightRule::Indicator).unwrap()),
    )
    .unwrap();
    let mut cfg = SolverConfig::new(
        laws,
        StepsizeSchedule::convex_decay(0.1, 0.5, 0.0, false).unwrap(),
        AveragingMode::Convex,
    );
    cfg.seed = seed;
    cfg.max_epochs = 30;
    cfg.record_trajectory = true;
    cfg
}

#[test]
fn replay_is_bitwise_identical() {
    let p = make_constrained_lasso(&ConstrainedLassoSpec::new(16, 6, 4, 4, 8).with_box(1.0)).unwrap();
    let r = reference_solve(&p, 1e-9).unwrap();
    let csv = |seed| {
        let res = run(&p, Some(&r), &lasso_config(&p, seed)).unwrap();
        let mut out = Vec::new();
        write_run_log(&res.records, &mut out).unwrap();
        (out, serde_json::to_string(&res).unwrap())
    };
    assert_eq!(csv(3), csv(3));
    assert_ne!(csv(3).0, csv(4).0);
}

#[test]
fn trajectory_and_averages_are_consistent() {
    let p = make_constrained_lasso(&ConstrainedLassoSpec::new(16, 6, 4, 4, 8).with_box(1.0)).unwrap();
    let cfg = lasso_config(&p, 1);
    let res = run(&p, None, &cfg).unwrap();
    let traj = res.trajectory.as_ref().unwrap();
    assert_eq!(traj.len(), res.iterations + 1);
    assert_eq!(res.iterations, res.epochs * res.epoch_length);
    assert_eq!(traj.last().unwrap(), &res.last_iterate);
    let direct = ssp_core::solver::average_convex(&traj[1..], &cfg.schedule).unwrap();
    for (a, b) in direct.iter().zip(&res.averaged) {
        assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
    }
    for x in traj {
        assert!(p.simple_set.contains(x, 0.0));
    }
}

#[test]
fn gap_at_reference_and_relaxation() {
    let p = make_constrained_lasso(&ConstrainedLassoSpec::new(10, 4, 3, 3, 2)).unwrap();
    let r = reference_solve(&p, 1e-10).unwrap();
    assert!(optimality_gap(&p, &r.x_ref, &r).unwrap().abs() <= 2.0 * f64::EPSILON * r.f_ref.abs().max(1.0));
    // Shift b so that the unconstrained minimizer violates a constraint.
    let mut q = p.clone();
    q.constraints.push(Constraint::Affine { a: vec![1.0, 0.0, 0.0, 0.0], b: -(r.x_ref[0] - 0.5) });
    let rq = reference_solve(&q, 1e-10).unwrap();
    assert!(optimality_gap(&q, &r.x_ref, &rq).unwrap() < 0.0);
    assert!(optimality_gap(&p, &r.x_ref, &rq).is_err());
}

#[test]
fn svm_two_points_are_classified() {
    let spec = RobustSvmSpec {
        data: Some(SvmData { points: vec![vec![2.0, 1.0], vec![-1.0, -2.0]], labels: vec![1.0, -1.0] }),
        m: 0,
        n: 0,
        seed: 0,
        lambda: 0.1,
        delta: 0.5,
        q_diag: QDiagonal::Uniform(4.0),
        separation: 1.0,
    };
    let p = make_robust_svm(&spec).unwrap();
    let r = reference_solve(&p, 1e-9).unwrap();
    let (w, d) = (&r.x_ref[..2], r.x_ref[2]);
    for (z, y) in [(vec![2.0, 1.0], 1.0), (vec![-1.0, -2.0], -1.0)] {
        assert!(y * (dot(w, &z) + d) > 0.0);
    }
}

#[test]
fn invariant_monitor_on_polyhedral_instance() {
    let p = make_constrained_lasso(&ConstrainedLassoSpec::new(8, 3, 6, 0, 5)).unwrap();
    let laws = Laws::new(
        &p,
        SamplingLaw::nice(8, 2, WeightRule::InverseMarginal).unwrap(),
        Some(SamplingLaw::nice(6, 2, WeightRule::Indicator).unwrap()),
    )
    .unwrap();
    let b_h = p.constraints.iter().map(Constraint::subgradient_bound).fold(0.0, f64::max);
    let mut monitor = attach_invariant_monitor(&p, &[0.0; 3], b_h).unwrap();
    let mut solver = Solver::new(
        &p,
        &laws,
        StepsizeSchedule::convex_decay(0.3, 0.5, 0.0, false).unwrap(),
        1.0,
        AveragingMode::Convex,
        &[4.0, -3.0, 2.0],
        9,
    )
    .unwrap();
    for _ in 0..1000 {
        solver.step(&mut monitor).unwrap();
    }
    assert_eq!(monitor.slacks.len(), 1000);
    assert!(monitor.violations.is_empty(), "worst slack {}", monitor.worst_slack());
    assert!(attach_invariant_monitor(&p, &[100.0, 100.0, 100.0], b_h).is_err());
}

#[test]
fn averaged_gap_shrinks_over_doubling_windows() {
    let p = make_constrained_lasso(&ConstrainedLassoSpec::new(20, 30, 20, 20, 11).with_box(1.0)).unwrap();
    let r = reference_solve(&p, 1e-9).unwrap();
    let laws = Laws::new(
        &p,
        SamplingLaw::nice(20, 20, WeightRule::InverseMarginal).unwrap(),
        Some(SamplingLaw::nice(40, 1, WeightRule::Indicator).unwrap()),
    )
    .unwrap();
    let mut cfg = SolverConfig::new(
        laws,
        StepsizeSchedule::convex_decay(0.1, 0.5, 0.0, false).unwrap(),
        AveragingMode::Convex,
    );
    cfg.max_epochs = 200;
    cfg.feasibility_tol = 1e-300;
    cfg.gap_tol = 1e-300;
    cfg.record_distance = false;
    let res = run(&p, Some(&r), &cfg).unwrap();
    let gap = |e: usize| res.records.iter().find(|rec| rec.epoch == e).unwrap().f_gap.abs();
    let windows = [25, 50, 100, 200].map(gap);
    assert!(windows.windows(2).all(|w| w[1] < w[0]), "{windows:?}");
}

/// Tiny instance with known solution `x* = 0.5`, strongly convex `F` (`μ = 1`),
/// and constraints for which `dist(x, X) <= max_j h_j(x)₊` (so `c̄ = 1`, `q = 1`).
fn recursion_instance() -> Problem {
    let comps = [-1.0, 1.0, 3.0]
        .iter()
        .enumerate()
        .map(|(i, c)| Component {
            f: quad(*c),
            g: if i == 0 { vec![ProxTerm::L1 { terms: vec![(0, 0.2)] }] } else { vec![] },
        })
        .collect();
    Problem::new(
        1,
        comps,
        vec![Constraint::Affine { a: vec![1.0], b: -0.5 }, Constraint::Affine { a: vec![2.0], b: -1.2 }],
        SimpleSet::Whole,
    )
    .unwrap()
}

struct Stats(Vec<f64>);

impl Stats {
    /// Mean minus three standard errors.
    fn lower_bound(&self) -> f64 {
        let n = self.0.len() as f64;
        let mean = self.0.iter().sum::<f64>() / n;
        let var = self.0.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        mean - 3.0 * (var / n).sqrt()
    }
}

// Each replication records `lhs − rhs` of an expectation inequality; the mean must not
// exceed zero by more than three standard errors.
#[test]
fn expected_recursions_hold_statistically() {
    let p = recursion_instance();
    let x_star = 0.5;
    let f_star = p.eval_objective(&[x_star]).unwrap();
    let r = reference_solve(&p, 1e-12).unwrap();
    assert!((r.x_ref[0] - x_star).abs() < 1e-6);

    let laws = Laws::new(
        &p,
        SamplingLaw::nice(3, 1, WeightRule::InverseMarginal).unwrap(),
        Some(SamplingLaw::nice(2, 1, WeightRule::Indicator).unwrap()),
    )
    .unwrap();
    let base = estimate_constants(&p, Some(&[x_star]), ConstantsMode::Smooth).unwrap();
    let beta = 1.0;
    let sc = scaled_constants(&laws.objective, laws.constraint.as_ref().unwrap(), &base, beta).unwrap();
    let mu = 1.0;
    assert!((base.mu - mu).abs() < 1e-9);
    let dist_sq = |x: f64| (x - x_star).max(0.0).powi(2);
    let replications = 4000;

    for x0 in [-1.0, 0.2, 0.5, 1.5, 3.0] {
        let alpha = 0.05;
        let mut basic = Vec::new();
        let mut feas = Vec::new();
        for seed in 0..replications {
            let mut st = SolverState::new(&p, &[x0], seed).unwrap();
            ssp_step(&p, &laws, &mut st, alpha, beta).unwrap();
            let (v, x1) = (st.v[0], st.x[0]);
            let f_gap = p.eval_objective(&[x0]).unwrap() - f_star;
            basic.push(
                (v - x_star).powi(2) - (x0 - x_star).powi(2) + alpha * (2.0 - alpha * sc.l) * f_gap
                    - alpha * alpha * sc.b_sq,
            );
            feas.push((x1 - x_star).powi(2) - (v - x_star).powi(2) + sc.c_const * dist_sq(x1));
        }
        assert!(Stats(basic).lower_bound() <= 0.0, "descent recursion at x0 = {x0}");
        assert!(Stats(feas).lower_bound() <= 0.0, "feasibility recursion at x0 = {x0}");
    }

    let k0 = StepsizeSchedule::switching(sc.l, mu).unwrap().switch_point().unwrap();
    for k in [k0 + 1, k0 + 10, 4 * k0] {
        let gamma = 2.0 / (k + 1) as f64;
        let alpha = 4.0 * gamma / mu;
        let bound = (1.0 + 6.0 / sc.c_const) * 16.0 / (mu * mu) * gamma * gamma * sc.b_sq;
        for x_prev in [-0.5, 0.7, 2.0] {
            let mut diffs = Vec::new();
            for seed in 0..replications {
                let mut st = SolverState::new(&p, &[x_prev], seed).unwrap();
                ssp_step(&p, &laws, &mut st, 1.0 / sc.l, beta).unwrap();
                let v_prev = st.v[0];
                let x_k = st.x[0];
                ssp_step(&p, &laws, &mut st, alpha, beta).unwrap();
                let v_k = st.v[0];
                diffs.push(
                    (v_k - x_star).powi(2) + gamma * (x_k - x_star).powi(2) + sc.c_const / 6.0 * dist_sq(x_k)
                        - (1.0 - gamma) * (v_prev - x_star).powi(2)
                        - bound,
                );
            }
            assert!(Stats(diffs).lower_bound() <= 0.0, "strongly convex recursion at k = {k}, x = {x_prev}");
        }
    }
    assert!(feasibility_norm(&p, &[x_star]) == 0.0);
}
