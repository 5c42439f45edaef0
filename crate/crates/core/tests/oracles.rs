use approx::assert_relative_eq;
use rand::Rng;

use ssp_core::linalg::{dist, dot};
use ssp_core::metrics::distance_to_feasible;
use ssp_core::problem::{
    make_constrained_lasso, Component, ConstrainedLassoSpec, Constraint, Problem, ProxTerm, SimpleSet, SmoothTerm,
};
use ssp_core::reference::reference_solve;
use ssp_core::rng::{stream, stream_rng, StreamRng};
use ssp_core::sampling::{Sample, SamplingLaw, WeightRule};

fn uniform(rng: &mut StreamRng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo..hi)
}

#[test]
fn minibatch_gradient_is_unbiased() {
    let p = make_constrained_lasso(&ConstrainedLassoSpec::new(12, 4, 2, 2, 3)).unwrap();
    let x = [0.3, -0.7, 1.1, 0.2];
    let full = p.grad_f(&x).unwrap();
    for law in [
        SamplingLaw::nice(12, 3, WeightRule::InverseMarginal).unwrap(),
        SamplingLaw::partition(12, 4, WeightRule::InverseMarginal).unwrap(),
    ] {
        let mut rng = stream_rng(5, stream::TEST);
        let trials = 20_000;
        let mut sum = [0.0; 4];
        let mut sum_sq = [0.0; 4];
        for _ in 0..trials {
            let g = p.subgrad_f_minibatch(&x, &law.draw(&mut rng)).unwrap();
            for k in 0..4 {
                sum[k] += g[k];
                sum_sq[k] += g[k] * g[k];
            }
        }
        for k in 0..4 {
            let mean = sum[k] / trials as f64;
            let se = ((sum_sq[k] / trials as f64 - mean * mean) / trials as f64).sqrt();
            assert!((mean - full[k]).abs() <= 4.0 * se + 1e-12, "coord {k}: {mean} vs {}", full[k]);
        }
    }
}

#[test]
fn sampled_objective_is_unbiased() {
    let p = make_constrained_lasso(&ConstrainedLassoSpec::new(10, 3, 1, 1, 9)).unwrap();
    let x = [0.5, -0.25, 0.75];
    let law = SamplingLaw::nice(10, 2, WeightRule::InverseMarginal).unwrap();
    let mut rng = stream_rng(1, stream::TEST);
    let trials = 20_000;
    let vals: Vec<f64> = (0..trials).map(|_| p.eval_objective_sampled(&x, &law.draw(&mut rng)).unwrap()).collect();
    let mean = vals.iter().sum::<f64>() / trials as f64;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (trials - 1) as f64;
    let exact = p.eval_objective(&x).unwrap();
    assert!((mean - exact).abs() <= 4.0 * (var / trials as f64).sqrt());
}

#[test]
fn smooth_gradients_match_finite_differences() {
    let mut rng = stream_rng(2, stream::TEST);
    let n = 4;
    for _ in 0..50 {
        let mut v = |lo, hi| (0..n).map(|_| uniform(&mut rng, lo, hi)).collect::<Vec<f64>>();
        let terms = [
            SmoothTerm::LeastSquares { a: v(-2.0, 2.0), b: 0.3 },
            SmoothTerm::Linear { a: v(-2.0, 2.0), b: -1.0 },
            SmoothTerm::SeparableQuadratic { curvature: v(0.0, 3.0), center: v(-1.0, 1.0), linear: v(-1.0, 1.0) },
        ];
        let x = v(-2.0, 2.0);
        for t in &terms {
            let g = t.gradient(&x);
            for k in 0..n {
                let h = 1e-6;
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[k] += h;
                xm[k] -= h;
                let fd = (t.value(&xp) - t.value(&xm)) / (2.0 * h);
                assert_relative_eq!(g[k], fd, epsilon = 1e-6, max_relative = 1e-6);
            }
        }
    }
}

#[test]
fn constraint_subgradients_match_finite_differences() {
    let p = make_constrained_lasso(&ConstrainedLassoSpec::new(3, 5, 4, 4, 21)).unwrap();
    let x = [0.4, -0.3, 0.8, 1.2, -0.6];
    for h in &p.constraints {
        let g = h.subgradient(&x);
        for k in 0..5 {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[k] += 1e-6;
            xm[k] -= 1e-6;
            let fd = (h.value(&xp) - h.value(&xm)) / 2e-6;
            assert_relative_eq!(g[k], fd, epsilon = 1e-6, max_relative = 1e-6);
        }
    }
}

/// Minimizes a convex scalar function by a dense grid followed by a local grid refinement.
fn grid_min_1d(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    let mut best = lo;
    let steps = 40_000;
    for i in 0..=steps {
        let u = lo + (hi - lo) * i as f64 / steps as f64;
        if f(u) < f(best) {
            best = u;
        }
    }
    let h = (hi - lo) / steps as f64;
    let (a, b) = (best - h, best + h);
    for i in 0..=2000 {
        let u = a + (b - a) * i as f64 / 2000.0;
        if f(u) < f(best) {
            best = u;
        }
    }
    best
}

#[test]
fn prox_matches_grid_minimization() {
    let mut rng = stream_rng(3, stream::TEST);
    for case in 0..100 {
        let big_n = rng.random_range(1..6usize);
        let weights: Vec<f64> = (0..big_n).map(|_| uniform(&mut rng, 0.0, 2.0)).collect();
        let p = Problem::new(
            1,
            weights
                .iter()
                .map(|w| Component {
                    f: SmoothTerm::Linear { a: vec![0.0], b: 0.0 },
                    g: vec![ProxTerm::L1 { terms: vec![(0, *w)] }],
                })
                .collect(),
            vec![],
            SimpleSet::Whole,
        )
        .unwrap();
        let law = SamplingLaw::nice(big_n, rng.random_range(1..=big_n), WeightRule::InverseMarginal).unwrap();
        let sample: Sample = law.draw(&mut rng);
        let x = uniform(&mut rng, -5.0, 5.0);
        let alpha = uniform(&mut rng, 0.01, 3.0);
        let u = p.prox_g_minibatch(&[x], alpha, &sample).unwrap()[0];
        let t: f64 = sample.iter().map(|(i, z)| z * weights[i]).sum::<f64>() * alpha / big_n as f64;
        let obj = |v: f64| 0.5 * (v - x).powi(2) + t * v.abs();
        let g = grid_min_1d(obj, -6.0, 6.0);
        assert!((u - g).abs() <= 1e-3, "case {case}: prox {u} grid {g}");
    }
}

/// Exact projection onto `{x : a_jᵀx + b_j <= 0}` in the plane by enumerating active sets.
fn project_polyhedron_2d(cons: &[(Vec<f64>, f64)], x: &[f64]) -> Vec<f64> {
    let feasible = |y: &[f64]| cons.iter().all(|(a, b)| dot(a, y) + b <= 1e-12);
    let mut candidates = vec![x.to_vec()];
    for (a, b) in cons {
        let s = (dot(a, x) + b) / dot(a, a);
        candidates.push(vec![x[0] - s * a[0], x[1] - s * a[1]]);
    }
    for i in 0..cons.len() {
        for j in i + 1..cons.len() {
            let (a1, b1) = &cons[i];
            let (a2, b2) = &cons[j];
            let det = a1[0] * a2[1] - a1[1] * a2[0];
            if det.abs() > 1e-12 {
                candidates.push(vec![(-b1 * a2[1] + b2 * a1[1]) / det, (-a1[0] * b2 + a2[0] * b1) / det]);
            }
        }
    }
    candidates
        .into_iter()
        .filter(|c| feasible(c))
        .min_by(|p, q| dist(p, x).partial_cmp(&dist(q, x)).unwrap())
        .unwrap()
}

#[test]
fn distance_estimate_matches_active_set_projection() {
    let mut rng = stream_rng(4, stream::TEST);
    for _ in 0..200 {
        let theta = uniform(&mut rng, 0.0, std::f64::consts::TAU);
        let spread = uniform(&mut rng, 0.5, 2.5);
        let cons: Vec<(Vec<f64>, f64)> = [theta, theta + spread]
            .iter()
            .map(|t| (vec![t.cos(), t.sin()], -uniform(&mut rng, 0.2, 1.0)))
            .collect();
        let p = Problem::new(
            2,
            vec![Component { f: SmoothTerm::Linear { a: vec![0.0, 0.0], b: 0.0 }, g: vec![] }],
            cons.iter().map(|(a, b)| Constraint::Affine { a: a.clone(), b: *b }).collect(),
            SimpleSet::Whole,
        )
        .unwrap();
        let x = [uniform(&mut rng, -4.0, 4.0), uniform(&mut rng, -4.0, 4.0)];
        let exact = dist(&x, &project_polyhedron_2d(&cons, &x));
        let est = distance_to_feasible(&p, &x, 1e-12);
        assert!(est.converged);
        assert!(est.distance >= exact - 1e-9);
        // The loop stops on the first face it reaches; when the normals are less than a right
        // angle apart that point can sit past the true projection.
        let slack = if spread >= std::f64::consts::FRAC_PI_2 { 1.05 } else { 1.15 };
        assert!(est.distance <= slack * exact + 1e-9, "spread {spread}: estimate {} exact {exact}", est.distance);
    }
}

#[test]
fn reference_matches_brute_force_grid_in_2d() {
    for seed in 0..5 {
        let p = make_constrained_lasso(&ConstrainedLassoSpec::new(6, 2, 1, 0, 100 + seed)).unwrap();
        let r = reference_solve(&p, 1e-9).unwrap();
        let mut best = (f64::INFINITY, [0.0, 0.0]);
        let scan = |best: &mut (f64, [f64; 2]), c: [f64; 2], half: f64, steps: usize| {
            for i in 0..=steps {
                for j in 0..=steps {
                    let x = [
                        c[0] - half + 2.0 * half * i as f64 / steps as f64,
                        c[1] - half + 2.0 * half * j as f64 / steps as f64,
                    ];
                    if p.max_violation(&x) <= 0.0 {
                        let f = p.eval_objective(&x).unwrap();
                        if f < best.0 {
                            *best = (f, x);
                        }
                    }
                }
            }
        };
        scan(&mut best, [0.0, 0.0], 4.0, 400);
        let c = best.1;
        scan(&mut best, c, 0.04, 400);
        assert!((best.0 - r.f_ref).abs() <= 1e-2, "seed {seed}: grid {} ref {}", best.0, r.f_ref);
        assert!(best.0 >= r.f_ref - 1e-6);
    }
}
