use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Component, Constraint, Problem, ProxTerm, SimpleSet, SmoothTerm};
use crate::error::{Error, Result};
use crate::rng::{stream, stream_rng, StreamRng};

/// Scale parameters for the random constrained-Lasso data.
///
/// Gaussian blocks are `scale * N(0,1)`; positive diagonals are
/// `|N(0,1)| + shift`; offsets are `|N(0,1)| + shift` so the origin is
/// strictly feasible.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LassoScales {
    pub a: f64,
    pub b: f64,
    pub delta_shift: f64,
    pub c: f64,
    pub d_shift: f64,
    pub q_shift: f64,
    pub cone_c: f64,
    pub cone_d_shift: f64,
}

impl Default for LassoScales {
    fn default() -> Self {
        LassoScales {
            a: 1.0,
            b: 1.0,
            delta_shift: 0.1,
            c: 1.0,
            d_shift: 1.0,
            q_shift: 0.1,
            cone_c: 1.0,
            cone_d_shift: 1.0,
        }
    }
}

/// Random instance of `min ½‖Ax − b‖² + ‖Δx‖₁` s.t. `Cx + d >= 0`,
/// `c_iᵀx + d_i >= ‖Q_i^{-1/2}x‖`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstrainedLassoSpec {
    /// Number of rows of `A` (objective components).
    pub n_components: usize,
    pub dim: usize,
    pub m_lin: usize,
    pub m_soc: usize,
    pub seed: u64,
    #[serde(default)]
    pub scales: LassoScales,
    /// Optional cube `[-r, r]^n` used as `Y`; whole space otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub box_radius: Option<f64>,
}

impl ConstrainedLassoSpec {
    pub fn new(n_components: usize, dim: usize, m_lin: usize, m_soc: usize, seed: u64) -> Self {
        ConstrainedLassoSpec {
            n_components,
            dim,
            m_lin,
            m_soc,
            seed,
            scales: LassoScales::default(),
            box_radius: None,
        }
    }

    pub fn with_box(mut self, radius: f64) -> Self {
        self.box_radius = Some(radius);
        self
    }
}

fn normal(rng: &mut StreamRng) -> f64 {
    rng.sample(StandardNormal)
}

fn positive(rng: &mut StreamRng, shift: f64) -> f64 {
    normal(rng).abs() + shift
}

pub fn make_constrained_lasso(spec: &ConstrainedLassoSpec) -> Result<Problem> {
    let (big_n, n) = (spec.n_components, spec.dim);
    if big_n == 0 || n == 0 {
        return Err(Error::Config("lasso dimensions must be positive".into()));
    }
    let s = &spec.scales;
    let mut rng = stream_rng(spec.seed, stream::GENERATOR);

    let rows: Vec<Vec<f64>> = (0..big_n)
        .map(|_| (0..n).map(|_| s.a * normal(&mut rng)).collect())
        .collect();
    let b: Vec<f64> = (0..big_n).map(|_| s.b * normal(&mut rng)).collect();
    let delta: Vec<f64> = (0..big_n.min(n))
        .map(|_| positive(&mut rng, s.delta_shift))
        .collect();

    let components = rows
        .into_iter()
        .zip(b)
        .enumerate()
        .map(|(i, (a, b))| Component {
            f: SmoothTerm::LeastSquares { a, b },
            g: match delta.get(i) {
                Some(w) => vec![ProxTerm::L1 { terms: vec![(i, *w)] }],
                None => vec![],
            },
        })
        .collect();

    let mut constraints = Vec::with_capacity(spec.m_lin + spec.m_soc);
    for _ in 0..spec.m_lin {
        let row: Vec<f64> = (0..n).map(|_| s.c * normal(&mut rng)).collect();
        let d = positive(&mut rng, s.d_shift);
        // Cx + d >= 0  <=>  -(Cx + d) <= 0
        constraints.push(Constraint::Affine {
            a: row.iter().map(|v| -v).collect(),
            b: -d,
        });
    }
    for _ in 0..spec.m_soc {
        let scale: Vec<f64> = (0..n)
            .map(|_| 1.0 / positive(&mut rng, s.q_shift).sqrt())
            .collect();
        let c: Vec<f64> = (0..n).map(|_| s.cone_c * normal(&mut rng)).collect();
        let d = positive(&mut rng, s.cone_d_shift);
        constraints.push(Constraint::SecondOrderCone {
            scale,
            a: c.iter().map(|v| -v).collect(),
            b: -d,
        });
    }

    let simple_set = match spec.box_radius {
        Some(r) => SimpleSet::cube(n, r),
        None => SimpleSet::Whole,
    };
    Problem::new(n, components, constraints, simple_set)
}

/// How the diagonal `Q_i` matrices of the robust SVM are chosen.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QDiagonal {
    /// Entries `|N(0,1)| + 0.1`.
    Random,
    /// `Q_i = v I`, so the cone term is `‖w‖ / √v`.
    Uniform(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvmData {
    pub points: Vec<Vec<f64>>,
    pub labels: Vec<f64>,
}

/// Robust sparse SVM over the packed variable `(w, d, u) ∈ R^{n+1+m}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobustSvmSpec {
    /// Training points; generated from `seed` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<SvmData>,
    #[serde(default)]
    pub m: usize,
    #[serde(default)]
    pub n: usize,
    #[serde(default)]
    pub seed: u64,
    pub lambda: f64,
    pub delta: f64,
    pub q_diag: QDiagonal,
    /// Half-distance between the two generated class means.
    #[serde(default = "default_separation")]
    pub separation: f64,
}

fn default_separation() -> f64 {
    1.0
}

impl RobustSvmSpec {
    /// Balanced two-class Gaussian data: the first `⌈m/2⌉` points are labeled `+1`.
    pub fn generate_data(&self) -> SvmData {
        let mut rng = stream_rng(self.seed, stream::GENERATOR);
        let mut points = Vec::with_capacity(self.m);
        let mut labels = Vec::with_capacity(self.m);
        for i in 0..self.m {
            let y = if i < self.m.div_ceil(2) { 1.0 } else { -1.0 };
            points.push(
                (0..self.n)
                    .map(|_| y * self.separation + normal(&mut rng))
                    .collect(),
            );
            labels.push(y);
        }
        SvmData { points, labels }
    }
}

pub fn make_robust_svm(spec: &RobustSvmSpec) -> Result<Problem> {
    let data = match &spec.data {
        Some(d) => d.clone(),
        None => spec.generate_data(),
    };
    let m = data.points.len();
    if m == 0 || data.labels.len() != m {
        return Err(Error::Config("svm data needs one label per point".into()));
    }
    let n = data.points[0].len();
    if n == 0 || data.points.iter().any(|p| p.len() != n) {
        return Err(Error::Config("svm points must share a positive dimension".into()));
    }
    if data.labels.iter().any(|y| *y != 1.0 && *y != -1.0) {
        return Err(Error::Config("svm labels must be +1 or -1".into()));
    }
    if !(spec.lambda >= 0.0 && spec.delta > 0.0) {
        return Err(Error::Config("svm needs lambda >= 0 and delta > 0".into()));
    }
    let dim = n + 1 + m;
    let u_at = |i: usize| n + 1 + i;

    let mut curvature = vec![0.0; dim];
    curvature[..n].fill(spec.lambda);
    let l1 = ProxTerm::L1 {
        terms: (0..n).map(|k| (k, 1.0)).collect(),
    };
    let components = (0..m)
        .map(|i| {
            let mut linear = vec![0.0; dim];
            linear[u_at(i)] = spec.delta * m as f64;
            Component {
                f: SmoothTerm::SeparableQuadratic {
                    curvature: curvature.clone(),
                    center: vec![0.0; dim],
                    linear,
                },
                g: vec![l1.clone()],
            }
        })
        .collect();

    let mut rng = stream_rng(spec.seed, stream::GENERATOR + 100);
    let mut constraints = Vec::with_capacity(2 * m);
    let mut cones = Vec::with_capacity(m);
    for (i, (z, y)) in data.points.iter().zip(&data.labels).enumerate() {
        // -y (wᵀz + d) - u_i, shared by both constraint rows
        let mut a = vec![0.0; dim];
        for k in 0..n {
            a[k] = -y * z[k];
        }
        a[n] = -y;
        a[u_at(i)] = -1.0;
        constraints.push(Constraint::Affine { a: a.clone(), b: 1.0 });

        let mut scale = vec![0.0; dim];
        for s in scale.iter_mut().take(n) {
            let q = match spec.q_diag {
                QDiagonal::Random => positive(&mut rng, 0.1),
                QDiagonal::Uniform(v) => v,
            };
            *s = 1.0 / q.sqrt();
        }
        cones.push(Constraint::SecondOrderCone { scale, a, b: 0.0 });
    }
    constraints.extend(cones);

    let mut lower = vec![None; dim];
    for i in 0..m {
        lower[u_at(i)] = Some(0.0);
    }
    let simple_set = SimpleSet::Box {
        lower,
        upper: vec![None; dim],
    };
    Problem::new(dim, components, constraints, simple_set)
}
