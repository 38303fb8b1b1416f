//! Deterministic numeric primitives shared by the whole pipeline.
//!
//! Everything here is pure and reentrant. Entropy is measured in nats; the
//! objective minimized during acquisition is the negative entropy, so the two
//! are kept as exact negations of each other.

use rand::seq::SliceRandom;
use rand::{Rng as _, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Absolute tolerance on the sum of a probability vector.
pub const PROB_SUM_TOL: f64 = 1e-9;

/// Probabilities are clamped to this floor inside logarithms so the
/// entropy objective stays finite during optimization.
pub const LOG_CLAMP: f64 = 1e-12;

/// Default step width for the finite-difference gradient oracle.
pub const FD_EPS: f64 = 1e-5;

/// A per-class probability distribution: entries in `[0, 1]` summing to 1
/// within [`PROB_SUM_TOL`].
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if p.is_empty() {
            return Err(Error::InvalidInput("probability vector is empty".into()));
        }
        for (i, &v) in p.iter().enumerate() {
            if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidInput(format!(
                    "probability entry {i} = {v} outside [0, 1]"
                )));
            }
        }
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > PROB_SUM_TOL {
            return Err(Error::InvalidInput(format!(
                "probabilities sum to {sum}, expected 1 within {PROB_SUM_TOL}"
            )));
        }
        Ok(Self(p))
    }

    /// Uniform distribution over `c` classes.
    pub fn uniform(c: usize) -> Self {
        assert!(c > 0, "class count must be positive");
        Self(vec![1.0 / c as f64; c])
    }

    /// Internal constructor for outputs that are valid by construction
    /// (softmax). Checked in debug builds only.
    pub(crate) fn from_normalized(p: Vec<f64>) -> Self {
        debug_assert!(Self::new(p.clone()).is_ok());
        Self(p)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl std::ops::Deref for ProbVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Exp-normalized probabilities with max-subtraction for stability.
///
/// Requires at least two finite logits.
pub fn softmax(logits: &[f64]) -> Result<ProbVector> {
    if logits.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "softmax needs at least 2 logits, got {}",
            logits.len()
        )));
    }
    if let Some(bad) = logits.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("softmax input contains {bad}")));
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    for e in &mut exps {
        *e /= sum;
    }
    Ok(ProbVector::from_normalized(exps))
}

/// Shannon entropy in nats, −Σ p log p, with the 0·log 0 = 0 convention.
pub fn entropy(p: &ProbVector) -> f64 {
    -p.iter().map(|&q| q * q.max(LOG_CLAMP).ln()).sum::<f64>()
}

/// The acquisition objective Σ p log p, exactly −[`entropy`]. Minimizing it
/// maximizes entropy.
pub fn neg_entropy_objective(p: &ProbVector) -> f64 {
    -entropy(p)
}

/// Index of the maximum entry; exact ties resolve to the lowest index.
pub fn argmax_tiebreak(v: &[f64]) -> Result<usize> {
    if v.is_empty() {
        return Err(Error::InvalidInput("argmax of empty vector".into()));
    }
    if let Some(bad) = v.iter().find(|x| !x.is_finite()) {
        return Err(Error::NonFinite(format!("argmax input contains {bad}")));
    }
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    Ok(best)
}

/// Central-difference gradient of `f` at `x`: the test oracle every analytic
/// gradient in this crate is checked against.
pub fn finite_diff_grad<F>(f: F, x: &[f64], eps: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64,
{
    if !(eps > 0.0) {
        return Err(Error::InvalidInput(format!("eps must be positive, got {eps}")));
    }
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        probe[i] = x[i] + eps;
        let up = f(&probe);
        probe[i] = x[i] - eps;
        let down = f(&probe);
        probe[i] = x[i];
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::NonFinite(format!(
                "f evaluated non-finite near coordinate {i}: f+={up}, f-={down}"
            )));
        }
        grad.push((up - down) / (2.0 * eps));
    }
    Ok(grad)
}

/// Seeded, counter-based random stream. Identical seeds give bitwise-equal
/// draw sequences across runs.
///
/// Instances are single-owner; concurrent work uses independently derived
/// streams via [`Rng::substream`].
#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

/// Stream tags for [`Rng::substream`] derivation, so the independent parts of
/// an experiment never share a stream.
pub mod streams {
    pub const WORLD: u64 = 0x01;
    pub const TEST_SET: u64 = 0x02;
    pub const SEED_SET: u64 = 0x03;
    pub const TRAIN: u64 = 0x04;
    pub const ACQUISITION: u64 = 0x05;
    pub const POOL: u64 = 0x06;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Derive an independent stream from a base seed and a tag path.
    /// The derivation folds each tag through splitmix64, so
    /// `substream(s, &[a, b])` and `substream(s, &[b, a])` differ.
    pub fn substream(seed: u64, tags: &[u64]) -> Self {
        let mut s = splitmix64(seed);
        for &t in tags {
            s = splitmix64(s ^ t);
        }
        Self::new(s)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform draw in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    /// Standard normal draw.
    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    pub fn normal_vec(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.standard_normal()).collect()
    }

    /// Uniform index in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "cannot draw from an empty range");
        self.inner.random_range(0..n)
    }

    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        xs.shuffle(&mut self.inner);
    }

    /// Draw an index from a categorical distribution given by `weights`
    /// (non-negative, summing to ~1).
    pub fn categorical(&mut self, weights: &[f64]) -> usize {
        debug_assert!(!weights.is_empty());
        let u = self.uniform();
        let mut acc = 0.0;
        for (i, &w) in weights.iter().enumerate() {
            acc += w;
            if u < acc {
                return i;
            }
        }
        weights.len() - 1
    }
}

/// Serializable architecture tag shared by learner configs and checkpoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ArchitectureTag {
    LinearSoftmax,
    OneHidden { width: usize },
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::{prop_assert, prop_assert_eq, proptest};

    // Frozen from an independent 50-digit evaluation of the direct formulas.
    const SOFTMAX_123: [f64; 3] = [
        0.090030573170380458,
        0.244728471054797652,
        0.665240955774821890,
    ];
    const ENTROPY_07_03: f64 = 0.610864302054893463;
    const LN_10: f64 = 2.302585092994045684;

    #[test]
    fn softmax_symmetry() {
        let p = softmax(&[0.0, 0.0]).unwrap();
        assert_eq!(p.as_slice(), &[0.5, 0.5]);
    }

    #[test]
    fn softmax_extreme_logits_do_not_overflow() {
        let p = softmax(&[1000.0, 0.0]).unwrap();
        assert!(p[0] > 1.0 - 1e-12);
        assert!(p[1] < 1e-12);
        assert!(p.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn softmax_matches_high_precision_oracle() {
        let p = softmax(&[1.0, 2.0, 3.0]).unwrap();
        for (got, want) in p.iter().zip(SOFTMAX_123) {
            assert_relative_eq!(got, &want, max_relative = 1e-14);
        }
    }

    #[test]
    fn softmax_rejects_bad_input() {
        assert!(matches!(softmax(&[1.0]), Err(Error::InvalidInput(_))));
        assert!(matches!(
            softmax(&[f64::NAN, 0.0]),
            Err(Error::NonFinite(_))
        ));
        assert!(matches!(
            softmax(&[f64::INFINITY, 0.0]),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn entropy_uniform_is_log_c() {
        let h = entropy(&ProbVector::uniform(10));
        assert_relative_eq!(h, LN_10, max_relative = 1e-14);
    }

    #[test]
    fn entropy_one_hot_is_zero() {
        let mut p = vec![0.0; 10];
        p[3] = 1.0;
        let h = entropy(&ProbVector::new(p).unwrap());
        assert_eq!(h, 0.0);
    }

    #[test]
    fn entropy_matches_direct_formula_oracle() {
        let p = ProbVector::new(vec![0.7, 0.3]).unwrap();
        assert_relative_eq!(entropy(&p), ENTROPY_07_03, max_relative = 1e-14);
    }

    #[test]
    fn neg_entropy_is_exact_negation() {
        let p = softmax(&[0.3, -1.2, 2.4, 0.0]).unwrap();
        assert_eq!(neg_entropy_objective(&p) + entropy(&p), 0.0);
        let u = ProbVector::uniform(7);
        assert_relative_eq!(
            neg_entropy_objective(&u),
            -(7.0f64.ln()),
            max_relative = 1e-14
        );
    }

    #[test]
    fn argmax_basic_and_tiebreak() {
        assert_eq!(argmax_tiebreak(&[0.1, 0.8, 0.1]).unwrap(), 1);
        assert_eq!(argmax_tiebreak(&[0.5, 0.5]).unwrap(), 0);
        assert!(matches!(
            argmax_tiebreak(&[]),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn finite_diff_on_quadratic() {
        let g = finite_diff_grad(|x| x.iter().map(|v| v * v).sum(), &[1.0, 2.0], FD_EPS).unwrap();
        assert_relative_eq!(g[0], 2.0, max_relative = 1e-8);
        assert_relative_eq!(g[1], 4.0, max_relative = 1e-8);
    }

    #[test]
    fn finite_diff_on_linear_recovers_weights() {
        let w = [0.3, -1.7, 2.2];
        let f = |x: &[f64]| x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>();
        let g = finite_diff_grad(f, &[5.0, -3.0, 0.1], FD_EPS).unwrap();
        for (gi, wi) in g.iter().zip(w) {
            assert_relative_eq!(gi, &wi, max_relative = 1e-8);
        }
    }

    #[test]
    fn finite_diff_propagates_non_finite() {
        let r = finite_diff_grad(|x| (x[0] - 1.0).ln(), &[1.0], 1e-5);
        assert!(matches!(r, Err(Error::NonFinite(_))));
        assert!(matches!(
            finite_diff_grad(|x| x[0], &[0.0], 0.0),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn rng_streams_are_reproducible() {
        let mut a = Rng::new(42);
        let mut b = Rng::new(42);
        let xs: Vec<u64> = (0..100).map(|_| a.next_u64()).collect();
        let ys: Vec<u64> = (0..100).map(|_| b.next_u64()).collect();
        assert_eq!(xs, ys);

        let mut c = Rng::new(42);
        let mut d = Rng::new(42);
        let fs: Vec<f64> = (0..100).map(|_| c.standard_normal()).collect();
        let gs: Vec<f64> = (0..100).map(|_| d.standard_normal()).collect();
        assert_eq!(fs, gs); // bitwise
    }

    #[test]
    fn substreams_differ_by_tag_and_order() {
        let mut a = Rng::substream(1, &[streams::TRAIN, 0]);
        let mut b = Rng::substream(1, &[streams::ACQUISITION, 0]);
        let mut c = Rng::substream(1, &[0, streams::TRAIN]);
        let (a, b, c) = (a.next_u64(), b.next_u64(), c.next_u64());
        assert_ne!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn categorical_respects_point_mass() {
        let mut rng = Rng::new(9);
        for _ in 0..100 {
            assert_eq!(rng.categorical(&[0.0, 1.0, 0.0]), 1);
        }
    }

    proptest! {
        #[test]
        fn prop_entropy_bounds(raw in proptest::collection::vec(-1e6f64..1e6, 2..12)) {
            let p = softmax(&raw).unwrap();
            let c = p.len() as f64;
            let h = entropy(&p);
            prop_assert!(h >= -1e-12);
            prop_assert!(h <= c.ln() + 1e-9);
        }

        #[test]
        fn prop_softmax_output_is_valid_probvector(raw in proptest::collection::vec(-1e6f64..1e6, 2..12)) {
            let p = softmax(&raw).unwrap();
            prop_assert!(ProbVector::new(p.into_vec()).is_ok());
        }

        #[test]
        fn prop_argmax_matches_linear_scan(v in proptest::collection::vec(-1e3f64..1e3, 1..20)) {
            let got = argmax_tiebreak(&v).unwrap();
            let mut want = 0;
            for i in 0..v.len() {
                if v[i] > v[want] { want = i; }
            }
            prop_assert_eq!(got, want);
        }
    }
}
