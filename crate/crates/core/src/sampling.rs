//! Probability laws over index subsets and the sampling vectors they induce.
//!
//! An objective law produces `ζ^i = 1/p_i` on the drawn set, so that
//! `E[ζ^i] = 1`. A constraint law produces the indicator `ξ^j = 1` on the
//! drawn set. Indices are 0-based.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::ProblemConstants;
use crate::rng::StreamRng;
use crate::stepsize::c_constant;

/// Which sampling vector a law produces.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightRule {
    /// `ζ^i = 1_{i∈S} / p_i`
    InverseMarginal,
    /// `ξ^j = 1_{j∈S}`
    Indicator,
}

#[derive(Clone, Debug, PartialEq)]
pub enum LawKind {
    Partition { blocks: Vec<Vec<usize>> },
    Nice,
    Custom { subsets: Vec<Vec<usize>>, probs: Vec<f64> },
}

/// An immutable, proper sampling law.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplingLaw {
    kind: LawKind,
    universe: usize,
    tau: usize,
    marginals: Vec<f64>,
    rule: WeightRule,
    cumulative: Vec<f64>,
}

/// A realized sample: sorted indices with their weights.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub indices: Vec<usize>,
    pub weights: Vec<f64>,
}

impl Sample {
    pub fn new(indices: Vec<usize>, weights: Vec<f64>) -> Self {
        assert_eq!(indices.len(), weights.len());
        Sample { indices, weights }
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().copied().zip(self.weights.iter().copied())
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Dense sampling vector of length `universe`.
    pub fn dense(&self, universe: usize) -> Vec<f64> {
        let mut v = vec![0.0; universe];
        for (i, w) in self.iter() {
            v[i] = w;
        }
        v
    }
}

/// Law description as it appears in run configs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LawSpec {
    /// Uniform choice among equal blocks; contiguous blocks unless given.
    Partition {
        tau: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        blocks: Option<Vec<Vec<usize>>>,
    },
    /// Uniform over all subsets of size `tau`.
    Nice { tau: usize },
    Custom {
        subsets: Vec<Vec<usize>>,
        probabilities: Vec<f64>,
    },
}

impl LawSpec {
    pub fn build(&self, universe: usize, rule: WeightRule) -> Result<SamplingLaw> {
        match self {
            LawSpec::Partition { tau, blocks: None } => SamplingLaw::partition(universe, *tau, rule),
            LawSpec::Partition { blocks: Some(b), .. } => {
                SamplingLaw::partition_with_blocks(universe, b.clone(), rule)
            }
            LawSpec::Nice { tau } => SamplingLaw::nice(universe, *tau, rule),
            LawSpec::Custom {
                subsets,
                probabilities,
            } => SamplingLaw::custom(universe, subsets.clone(), probabilities.clone(), rule),
        }
    }

    pub fn tau(&self) -> Option<usize> {
        match self {
            LawSpec::Partition { tau, .. } | LawSpec::Nice { tau } => Some(*tau),
            LawSpec::Custom { .. } => None,
        }
    }
}

impl SamplingLaw {
    pub fn partition(universe: usize, tau: usize, rule: WeightRule) -> Result<Self> {
        check_tau(universe, tau)?;
        if !universe.is_multiple_of(tau) {
            return Err(Error::Config(format!(
                "partition sampling needs tau | universe, got tau={tau}, universe={universe}"
            )));
        }
        let blocks = (0..universe / tau)
            .map(|b| (b * tau..(b + 1) * tau).collect())
            .collect();
        Self::partition_with_blocks(universe, blocks, rule)
    }

    pub fn partition_with_blocks(universe: usize, mut blocks: Vec<Vec<usize>>, rule: WeightRule) -> Result<Self> {
        let tau = blocks.first().map_or(0, Vec::len);
        check_tau(universe, tau)?;
        let mut seen = vec![false; universe];
        for b in blocks.iter_mut() {
            if b.len() != tau {
                return Err(Error::Config("partition blocks must have equal cardinality".into()));
            }
            b.sort_unstable();
            for &i in b.iter() {
                if i >= universe {
                    return Err(Error::Index { index: i, size: universe });
                }
                if std::mem::replace(&mut seen[i], true) {
                    return Err(Error::Config(format!("index {i} appears in two partition blocks")));
                }
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Config("partition blocks must cover the universe".into()));
        }
        let p = 1.0 / blocks.len() as f64;
        let cumulative = (1..=blocks.len()).map(|k| k as f64 * p).collect();
        Ok(SamplingLaw {
            kind: LawKind::Partition { blocks },
            universe,
            tau,
            marginals: vec![tau as f64 / universe as f64; universe],
            rule,
            cumulative,
        })
    }

    pub fn nice(universe: usize, tau: usize, rule: WeightRule) -> Result<Self> {
        check_tau(universe, tau)?;
        Ok(SamplingLaw {
            kind: LawKind::Nice,
            universe,
            tau,
            marginals: vec![tau as f64 / universe as f64; universe],
            rule,
            cumulative: Vec::new(),
        })
    }

    pub fn custom(universe: usize, mut subsets: Vec<Vec<usize>>, probs: Vec<f64>, rule: WeightRule) -> Result<Self> {
        if universe == 0 {
            return Err(Error::Config("sampling universe must be nonempty".into()));
        }
        if subsets.is_empty() || subsets.len() != probs.len() {
            return Err(Error::Config("custom law needs one probability per subset".into()));
        }
        if probs.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
            return Err(Error::Config("custom law probabilities must be nonnegative".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Config(format!("custom law probabilities sum to {total}, not 1")));
        }
        let mut marginals = vec![0.0; universe];
        for (s, p) in subsets.iter_mut().zip(&probs) {
            s.sort_unstable();
            s.dedup();
            for &i in s.iter() {
                if i >= universe {
                    return Err(Error::Index { index: i, size: universe });
                }
                marginals[i] += p;
            }
        }
        if let Some(i) = marginals.iter().position(|p| *p <= 0.0) {
            return Err(Error::Config(format!(
                "improper sampling: index {i} has zero marginal probability"
            )));
        }
        let mut cumulative = Vec::with_capacity(probs.len());
        let mut acc = 0.0;
        for p in &probs {
            acc += p;
            cumulative.push(acc);
        }
        let expected: f64 = subsets.iter().zip(&probs).map(|(s, p)| p * s.len() as f64).sum();
        Ok(SamplingLaw {
            kind: LawKind::Custom { subsets, probs },
            universe,
            tau: expected.round().max(1.0) as usize,
            marginals,
            rule,
            cumulative,
        })
    }

    pub fn kind(&self) -> &LawKind {
        &self.kind
    }

    pub fn universe(&self) -> usize {
        self.universe
    }

    /// Batch size; the rounded expected cardinality for custom laws.
    pub fn tau(&self) -> usize {
        self.tau
    }

    pub fn marginals(&self) -> &[f64] {
        &self.marginals
    }

    pub fn rule(&self) -> WeightRule {
        self.rule
    }

    fn weight(&self, i: usize) -> f64 {
        match self.rule {
            WeightRule::InverseMarginal => 1.0 / self.marginals[i],
            WeightRule::Indicator => 1.0,
        }
    }

    fn pick(&self, rng: &mut StreamRng) -> usize {
        let u: f64 = rng.random();
        let k = self.cumulative.partition_point(|c| *c <= u);
        k.min(self.cumulative.len() - 1)
    }

    pub fn draw(&self, rng: &mut StreamRng) -> Sample {
        let indices = match &self.kind {
            LawKind::Partition { blocks } => blocks[self.pick(rng)].clone(),
            LawKind::Nice => {
                if self.tau == self.universe {
                    (0..self.universe).collect()
                } else {
                    let mut v = index::sample(rng, self.universe, self.tau).into_vec();
                    v.sort_unstable();
                    v
                }
            }
            LawKind::Custom { subsets, .. } => subsets[self.pick(rng)].clone(),
        };
        let weights = indices.iter().map(|&i| self.weight(i)).collect();
        Sample { indices, weights }
    }

    /// `E[‖ζ‖²] = Σ_S p_S Σ_{i∈S} 1/p_i²` for the inverse-marginal weights.
    ///
    /// Closed form `N²/τ` for partition and nice laws; exact enumeration of the
    /// listed subsets for custom laws.
    pub fn expected_sq_norm(&self) -> f64 {
        match &self.kind {
            LawKind::Partition { .. } | LawKind::Nice => {
                let n = self.universe as f64;
                n * n / self.tau as f64
            }
            LawKind::Custom { subsets, probs } => subsets
                .iter()
                .zip(probs)
                .map(|(s, p)| p * s.iter().map(|&i| self.weight(i).powi(2)).sum::<f64>())
                .sum(),
        }
    }

    /// `E[‖ζ‖²] / N`, the factor scaling `B²` and `L`.
    pub fn scaling_factor(&self) -> f64 {
        match &self.kind {
            LawKind::Partition { .. } | LawKind::Nice => self.universe as f64 / self.tau as f64,
            LawKind::Custom { .. } => self.expected_sq_norm() / self.universe as f64,
        }
    }

    pub fn min_marginal(&self) -> f64 {
        self.marginals.iter().fold(f64::INFINITY, |m, p| m.min(*p))
    }

    /// Largest possible weight `ξ̄` (indicator laws) or `max 1/p_i`.
    pub fn max_weight(&self) -> f64 {
        (0..self.universe).map(|i| self.weight(i)).fold(0.0, f64::max)
    }
}

fn check_tau(universe: usize, tau: usize) -> Result<()> {
    if universe == 0 {
        return Err(Error::Config("sampling universe must be nonempty".into()));
    }
    if tau == 0 || tau > universe {
        return Err(Error::Config(format!(
            "batch size must lie in 1..={universe}, got {tau}"
        )));
    }
    Ok(())
}

/// Empirical moments of the sampling vector.
#[derive(Clone, Debug, Serialize)]
pub struct UnbiasednessReport {
    pub trials: usize,
    pub means: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub expected: Vec<f64>,
    pub max_observed: f64,
    /// Indices whose empirical mean is more than 3 standard errors from the target.
    pub violations: Vec<usize>,
    /// Indicator laws only: an observed weight exceeded 1.
    pub bound_violated: bool,
}

impl UnbiasednessReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty() && !self.bound_violated
    }
}

/// Monte-Carlo check that `E[ζ^i] = 1` (objective laws) or `E[ξ^j] = p_j`
/// with `ξ^j <= 1` (constraint laws).
pub fn check_unbiasedness(law: &SamplingLaw, trials: usize, rng: &mut StreamRng) -> Result<UnbiasednessReport> {
    if trials < 10_000 {
        return Err(Error::Precondition(format!("need at least 10^4 trials, got {trials}")));
    }
    let n = law.universe();
    let mut sum = vec![0.0; n];
    let mut sum_sq = vec![0.0; n];
    let mut max_observed: f64 = 0.0;
    for _ in 0..trials {
        for (i, w) in law.draw(rng).iter() {
            sum[i] += w;
            sum_sq[i] += w * w;
            max_observed = max_observed.max(w);
        }
    }
    let t = trials as f64;
    let expected: Vec<f64> = match law.rule() {
        WeightRule::InverseMarginal => vec![1.0; n],
        WeightRule::Indicator => law.marginals().to_vec(),
    };
    let means: Vec<f64> = sum.iter().map(|s| s / t).collect();
    let std_errors: Vec<f64> = means
        .iter()
        .zip(&sum_sq)
        .map(|(m, s2)| ((s2 / t - m * m).max(0.0) / (t - 1.0) * t / t).sqrt() * (t / (t - 1.0)).sqrt())
        .collect();
    let violations = (0..n)
        .filter(|&i| (means[i] - expected[i]).abs() > 3.0 * std_errors[i] + 1e-12)
        .collect();
    Ok(UnbiasednessReport {
        trials,
        means,
        std_errors,
        expected,
        max_observed,
        violations,
        bound_violated: law.rule() == WeightRule::Indicator && max_observed > 1.0,
    })
}

/// Constants of the stochastic reformulation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaledConstants {
    /// `𝓑²`
    pub b_sq: f64,
    /// `𝓛`
    pub l: f64,
    /// `𝓑_h`
    pub b_h: f64,
    /// `c`
    pub c: f64,
    /// `C = β(2−β)/(c 𝓑_h²)`
    pub c_const: f64,
}

pub fn scaled_constants(
    obj_law: &SamplingLaw,
    con_law: &SamplingLaw,
    base: &ProblemConstants,
    beta: f64,
) -> Result<ScaledConstants> {
    if !(beta > 0.0 && beta < 2.0) {
        return Err(Error::Config(format!("beta must lie in (0,2), got {beta}")));
    }
    let factor = obj_law.scaling_factor();
    let b_h = match con_law.rule() {
        WeightRule::Indicator => base.max_b_j(),
        WeightRule::InverseMarginal => con_law.max_weight() * base.max_b_j(),
    };
    let c = match con_law.kind() {
        LawKind::Partition { .. } | LawKind::Nice => {
            base.c_bar * con_law.universe() as f64 / con_law.tau() as f64
        }
        LawKind::Custom { .. } => base.c_bar / con_law.min_marginal(),
    };
    let c_const = if b_h > 0.0 { c_constant(beta, c, b_h)? } else { f64::INFINITY };
    Ok(ScaledConstants {
        b_sq: factor * base.b_sq,
        l: factor * base.l,
        b_h,
        c,
        c_const,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, stream_rng};

    fn base(b_sq: f64, l: f64) -> ProblemConstants {
        ProblemConstants {
            b_sq,
            l,
            mu: 0.0,
            b_j: vec![1.0, 3.0, 2.0],
            c_bar: 1.0,
            q: 1.0,
            diameter_term_omitted: false,
        }
    }

    #[test]
    fn partition_draws_whole_blocks() {
        let law = SamplingLaw::partition(4, 2, WeightRule::InverseMarginal).unwrap();
        let mut rng = stream_rng(1, stream::TEST);
        for _ in 0..100 {
            let s = law.draw(&mut rng);
            assert!(s.indices == vec![0, 1] || s.indices == vec![2, 3]);
            assert_eq!(s.weights, vec![2.0, 2.0]);
        }
    }

    #[test]
    fn full_nice_batch_is_everything() {
        let law = SamplingLaw::nice(5, 5, WeightRule::InverseMarginal).unwrap();
        let s = law.draw(&mut stream_rng(0, stream::TEST));
        assert_eq!(s.indices, vec![0, 1, 2, 3, 4]);
        assert_eq!(s.weights, vec![1.0; 5]);
    }

    #[test]
    fn nice_pair_frequencies() {
        let law = SamplingLaw::nice(5, 2, WeightRule::Indicator).unwrap();
        let mut rng = stream_rng(17, stream::TEST);
        let trials = 100_000;
        let mut single = [0usize; 5];
        let mut pairs = [[0usize; 5]; 5];
        for _ in 0..trials {
            let s = law.draw(&mut rng);
            assert_eq!(s.len(), 2);
            single[s.indices[0]] += 1;
            single[s.indices[1]] += 1;
            pairs[s.indices[0]][s.indices[1]] += 1;
        }
        let t = trials as f64;
        let se = |p: f64| (p * (1.0 - p) / t).sqrt();
        for c in single {
            assert!((c as f64 / t - 0.4).abs() <= 3.0 * se(0.4));
        }
        for i in 0..5 {
            for j in i + 1..5 {
                assert!((pairs[i][j] as f64 / t - 0.1).abs() <= 3.0 * se(0.1));
            }
        }
    }

    #[test]
    fn draws_have_exact_weights() {
        let obj = SamplingLaw::nice(7, 3, WeightRule::InverseMarginal).unwrap();
        let con = SamplingLaw::partition(6, 2, WeightRule::Indicator).unwrap();
        let mut rng = stream_rng(3, stream::TEST);
        for _ in 0..1000 {
            assert!(obj.draw(&mut rng).weights.iter().all(|w| *w == 7.0 / 3.0));
            assert!(con.draw(&mut rng).weights.iter().all(|w| *w == 1.0));
        }
    }

    #[test]
    fn unbiasedness_reports() {
        let mut rng = stream_rng(8, stream::TEST);
        let full = SamplingLaw::nice(6, 6, WeightRule::InverseMarginal).unwrap();
        let r = check_unbiasedness(&full, 10_000, &mut rng).unwrap();
        assert!(r.ok());
        assert!(r.means.iter().all(|m| *m == 1.0));
        assert!(r.std_errors.iter().all(|s| *s == 0.0));

        let part = SamplingLaw::partition(4, 2, WeightRule::InverseMarginal).unwrap();
        assert!(check_unbiasedness(&part, 20_000, &mut rng).unwrap().ok());

        let con = SamplingLaw::nice(10, 2, WeightRule::Indicator).unwrap();
        let r = check_unbiasedness(&con, 20_000, &mut rng).unwrap();
        assert!(r.ok());
        assert!(r.means.iter().all(|m| (m - 0.2).abs() < 0.02));
        assert!(r.max_observed <= 1.0);

        assert!(check_unbiasedness(&con, 10, &mut rng).is_err());
    }

    #[test]
    fn law_validation() {
        assert!(SamplingLaw::partition(10, 3, WeightRule::Indicator).is_err());
        assert!(SamplingLaw::nice(4, 0, WeightRule::Indicator).is_err());
        assert!(SamplingLaw::nice(4, 5, WeightRule::Indicator).is_err());
        assert!(SamplingLaw::partition_with_blocks(4, vec![vec![0, 1], vec![1, 2]], WeightRule::Indicator).is_err());
        assert!(SamplingLaw::custom(3, vec![vec![0, 1]], vec![1.0], WeightRule::Indicator).is_err());
        assert!(SamplingLaw::custom(2, vec![vec![0], vec![1]], vec![0.5, 0.4], WeightRule::Indicator).is_err());
    }

    #[test]
    fn custom_law_constants_by_enumeration() {
        let law = SamplingLaw::custom(
            3,
            vec![vec![0, 1], vec![2], vec![0, 2]],
            vec![0.5, 0.25, 0.25],
            WeightRule::InverseMarginal,
        )
        .unwrap();
        // p = (0.75, 0.5, 0.5)
        let expected = 0.5 * (1.0 / 0.5625 + 4.0) + 0.25 * 4.0 + 0.25 * (1.0 / 0.5625 + 4.0);
        assert!((law.expected_sq_norm() - expected).abs() < 1e-12);
    }

    #[test]
    fn closed_form_scaling() {
        let b = base(10.0, 2.0);
        let full_obj = SamplingLaw::nice(120, 120, WeightRule::InverseMarginal).unwrap();
        let full_con = SamplingLaw::nice(3, 3, WeightRule::Indicator).unwrap();
        let s = scaled_constants(&full_obj, &full_con, &b, 1.0).unwrap();
        assert_eq!((s.b_sq, s.l, s.c, s.b_h), (10.0, 2.0, 1.0, 3.0));

        let single = SamplingLaw::nice(120, 1, WeightRule::InverseMarginal).unwrap();
        assert_eq!(scaled_constants(&single, &full_con, &b, 1.0).unwrap().b_sq, 1200.0);

        let obj = SamplingLaw::partition(120, 20, WeightRule::InverseMarginal).unwrap();
        let con = SamplingLaw::nice(240, 80, WeightRule::Indicator).unwrap();
        let s = scaled_constants(&obj, &con, &b, 1.0).unwrap();
        assert_eq!(s.b_sq, 60.0);
        assert_eq!(s.c, 3.0);

        assert!(matches!(scaled_constants(&obj, &con, &b, 2.5), Err(Error::Config(_))));
    }

    #[test]
    fn scaling_is_monotone_in_batch_size() {
        let b = base(1.0, 1.0);
        let con = SamplingLaw::nice(3, 1, WeightRule::Indicator).unwrap();
        let mut prev = f64::INFINITY;
        for tau in 1..=24 {
            let obj = SamplingLaw::nice(24, tau, WeightRule::InverseMarginal).unwrap();
            let s = scaled_constants(&obj, &con, &b, 1.0).unwrap();
            assert!(s.b_sq <= prev);
            prev = s.b_sq;
        }
        let obj = SamplingLaw::nice(3, 3, WeightRule::InverseMarginal).unwrap();
        let mut prev = f64::INFINITY;
        for tau in [1, 2, 3, 4, 6, 12] {
            let con = SamplingLaw::partition(12, tau, WeightRule::Indicator).unwrap();
            let s = scaled_constants(&obj, &con, &b, 1.0).unwrap();
            assert!(s.c <= prev);
            prev = s.c;
        }
    }
}
