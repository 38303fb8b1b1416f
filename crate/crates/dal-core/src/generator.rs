//! The simulated world: a class-conditional linear decoder with a confusion
//! model standing in for imperfect disentanglement.
//!
//! Requesting class code `c` draws the class actually realized from row `c`
//! of a confusion matrix, then emits `x = A_k·z + b_k + σ·ε` for the realized
//! class `k`. The realized class and the noise draw are frozen at generation
//! time, so `x` stays an exact linear (hence differentiable) function of `z`
//! while its ground truth never moves during latent optimization. Ground
//! truth is visible only to the simulated oracle and to diagnostics.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::numerics::Rng;
use crate::{Error, Result};

/// Generator input: continuous noise vector plus a discrete class code.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentInput {
    pub z: Array1<f64>,
    /// Class index in `0..class_count`, the one-hot discrete code.
    pub code: usize,
}

impl LatentInput {
    /// One-hot encoding of the discrete code.
    pub fn one_hot(&self, class_count: usize) -> Vec<f64> {
        let mut v = vec![0.0; class_count];
        v[self.code] = 1.0;
        v
    }
}

/// World description: per-class affine decoders, additive noise scale, and
/// the confusion matrix `M` where `M[c][k]` is the probability that
/// requesting code `c` realizes true class `k`. `diag(M)` is the per-class
/// generation accuracy.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub class_count: usize,
    pub latent_dim: usize,
    pub feature_dim: usize,
    /// `A_k`, one `feature_dim × latent_dim` matrix per class.
    pub decoders: Vec<Array2<f64>>,
    /// `b_k`, one offset per class; the class prototypes.
    pub offsets: Vec<Array1<f64>>,
    /// Additive noise scale σ used for generation.
    pub sigma: f64,
    /// Noise scale of the world's "real" data distribution (defaults to
    /// `sigma`; set higher `sigma` to model a generator that is noisier than
    /// the data it imitates).
    pub real_sigma: f64,
    pub confusion: Vec<Vec<f64>>,
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<()> {
        let c = self.class_count;
        if c < 2 {
            return Err(Error::Config(format!("class_count must be >= 2, got {c}")));
        }
        if self.latent_dim == 0 || self.feature_dim == 0 {
            return Err(Error::Config("latent_dim and feature_dim must be positive".into()));
        }
        if self.decoders.len() != c || self.offsets.len() != c || self.confusion.len() != c {
            return Err(Error::Config(
                "decoders, offsets and confusion must have one entry per class".into(),
            ));
        }
        for (k, a) in self.decoders.iter().enumerate() {
            if a.dim() != (self.feature_dim, self.latent_dim) {
                return Err(Error::Config(format!(
                    "decoder {k} has shape {:?}, expected ({}, {})",
                    a.dim(),
                    self.feature_dim,
                    self.latent_dim
                )));
            }
        }
        for (k, b) in self.offsets.iter().enumerate() {
            if b.len() != self.feature_dim {
                return Err(Error::Config(format!(
                    "offset {k} has length {}, expected {}",
                    b.len(),
                    self.feature_dim
                )));
            }
        }
        for i in 0..c {
            for j in (i + 1)..c {
                let d2: f64 = (&self.offsets[i] - &self.offsets[j])
                    .iter()
                    .map(|v| v * v)
                    .sum();
                if d2 == 0.0 {
                    return Err(Error::Config(format!(
                        "class prototypes {i} and {j} coincide"
                    )));
                }
            }
        }
        if !(self.sigma >= 0.0) || !(self.real_sigma >= 0.0) {
            return Err(Error::Config("noise scales must be non-negative".into()));
        }
        for (i, row) in self.confusion.iter().enumerate() {
            if row.len() != c {
                return Err(Error::Config(format!("confusion row {i} has wrong length")));
            }
            if row.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
                return Err(Error::Config(format!(
                    "confusion row {i} has entries outside [0, 1]"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::Config(format!(
                    "confusion row {i} sums to {sum}, expected 1 within 1e-9"
                )));
            }
        }
        Ok(())
    }

    /// Per-class generation accuracy, `diag(M)`.
    pub fn generation_diagonal(&self) -> Vec<f64> {
        (0..self.class_count).map(|c| self.confusion[c][c]).collect()
    }

    /// The world's "real" data distribution: identity confusion (codes always
    /// realize their own class) at the real noise scale.
    pub fn real_world(&self) -> GeneratorSpec {
        let mut real = self.clone();
        real.sigma = self.real_sigma;
        let c = self.class_count;
        real.confusion = (0..c)
            .map(|i| (0..c).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        real
    }
}

/// Knobs for the procedurally built synthetic world.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WorldParams {
    pub class_count: usize,
    pub latent_dim: usize,
    pub feature_dim: usize,
    pub sigma: f64,
    pub real_sigma: f64,
    /// Norm of the class prototypes `b_k`.
    pub prototype_scale: f64,
    /// Magnitude of the decoder maps; the within-class spread along any
    /// direction is roughly this value.
    pub decoder_scale: f64,
    /// Minimum pairwise prototype distance, enforced by redrawing.
    pub min_prototype_gap: f64,
    /// `diag(M)`: per-class generation accuracy.
    pub gen_accuracy: Vec<f64>,
    /// Groups of mutually confusable classes; off-diagonal confusion mass
    /// concentrates within a class's group.
    pub confusable: Vec<Vec<usize>>,
    /// Fraction of each class's off-diagonal mass placed on its group
    /// partners (the rest spreads uniformly over remaining classes).
    pub partner_mass: f64,
    pub world_seed: u64,
}

impl Default for WorldParams {
    fn default() -> Self {
        Self {
            class_count: 10,
            latent_dim: 8,
            feature_dim: 16,
            sigma: 0.3,
            real_sigma: 0.3,
            prototype_scale: 3.2,
            decoder_scale: 1.0,
            min_prototype_gap: 1.2, // 4σ at the default σ = 0.3
            gen_accuracy: vec![0.9; 10],
            confusable: vec![vec![0, 1], vec![2, 3], vec![4, 5], vec![6, 7], vec![8, 9]],
            partner_mass: 0.8,
            world_seed: 7,
        }
    }
}

/// Build a confusion matrix from its diagonal: for class `c`, `partner_mass`
/// of the off-diagonal probability goes to `c`'s group partners and the rest
/// spreads uniformly over the remaining classes.
pub fn confusion_from_diagonal(
    diag: &[f64],
    groups: &[Vec<usize>],
    partner_mass: f64,
) -> Result<Vec<Vec<f64>>> {
    let c = diag.len();
    if c < 2 {
        return Err(Error::Config("need at least 2 classes".into()));
    }
    if diag.iter().any(|&a| !(0.0..=1.0).contains(&a)) {
        return Err(Error::Config("generation accuracies must lie in [0, 1]".into()));
    }
    if !(0.0..=1.0).contains(&partner_mass) {
        return Err(Error::Config("partner_mass must lie in [0, 1]".into()));
    }
    for g in groups {
        if g.iter().any(|&i| i >= c) {
            return Err(Error::Config(format!(
                "confusable group {g:?} references a class >= {c}"
            )));
        }
    }
    let mut m = vec![vec![0.0; c]; c];
    for i in 0..c {
        let partners: Vec<usize> = groups
            .iter()
            .filter(|g| g.contains(&i))
            .flat_map(|g| g.iter().copied())
            .filter(|&j| j != i)
            .collect();
        let off = 1.0 - diag[i];
        m[i][i] = diag[i];
        let others: Vec<usize> = (0..c).filter(|&j| j != i && !partners.contains(&j)).collect();
        let (to_partners, to_others) = if partners.is_empty() {
            (0.0, off)
        } else if others.is_empty() {
            (off, 0.0)
        } else {
            (off * partner_mass, off * (1.0 - partner_mass))
        };
        for &j in &partners {
            m[i][j] += to_partners / partners.len() as f64;
        }
        for &j in &others {
            m[i][j] += to_others / others.len() as f64;
        }
        // exact row normalization guards accumulated rounding
        let sum: f64 = m[i].iter().sum();
        for v in &mut m[i] {
            *v /= sum;
        }
    }
    Ok(m)
}

/// Deterministically build a [`GeneratorSpec`] from [`WorldParams`]:
/// prototypes are random directions of fixed norm with a minimum pairwise
/// gap, decoders are dense random maps scaled so the within-class spread is
/// about `decoder_scale`.
pub fn build_world(params: &WorldParams) -> Result<GeneratorSpec> {
    let c = params.class_count;
    if params.gen_accuracy.len() != c {
        return Err(Error::Config(format!(
            "gen_accuracy has {} entries, expected {c}",
            params.gen_accuracy.len()
        )));
    }
    let mut rng = Rng::substream(params.world_seed, &[crate::numerics::streams::WORLD]);
    let d_x = params.feature_dim;
    let d_z = params.latent_dim;

    let mut offsets: Vec<Array1<f64>> = Vec::with_capacity(c);
    let mut attempts = 0;
    while offsets.len() < c {
        attempts += 1;
        if attempts > 10_000 {
            return Err(Error::Config(
                "could not place class prototypes with the requested minimum gap".into(),
            ));
        }
        let raw = Array1::from(rng.normal_vec(d_x));
        let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let candidate = raw * (params.prototype_scale / norm);
        let ok = offsets.iter().all(|b| {
            let d2: f64 = (&candidate - b).iter().map(|v| v * v).sum();
            d2.sqrt() >= params.min_prototype_gap
        });
        if ok {
            offsets.push(candidate);
        }
    }

    let decoder_sd = params.decoder_scale / (d_z as f64).sqrt();
    let decoders: Vec<Array2<f64>> = (0..c)
        .map(|_| {
            let data = rng.normal_vec(d_x * d_z);
            Array2::from_shape_vec((d_x, d_z), data).expect("shape matches data length") * decoder_sd
        })
        .collect();

    let confusion =
        confusion_from_diagonal(&params.gen_accuracy, &params.confusable, params.partner_mass)?;

    let spec = GeneratorSpec {
        class_count: c,
        latent_dim: d_z,
        feature_dim: d_x,
        decoders,
        offsets,
        sigma: params.sigma,
        real_sigma: params.real_sigma,
        confusion,
    };
    spec.validate()?;
    Ok(spec)
}

/// One generated sample. `realized_class` and `noise` are immutable after
/// generation; re-evaluating at a new `z` keeps both frozen.
#[derive(Debug, Clone)]
pub struct GeneratedSample {
    pub x: Array1<f64>,
    pub latent: LatentInput,
    /// The class component actually used; the sample's ground truth.
    pub realized_class: usize,
    /// The frozen draw of ε.
    pub noise: Array1<f64>,
}

/// Draw a latent input: `z` i.i.d. standard normal, code fixed to `c`.
pub fn sample_latent(spec: &GeneratorSpec, code: usize, rng: &mut Rng) -> Result<LatentInput> {
    if code >= spec.class_count {
        return Err(Error::InvalidInput(format!(
            "code {code} out of range for {} classes",
            spec.class_count
        )));
    }
    Ok(LatentInput {
        z: Array1::from(rng.normal_vec(spec.latent_dim)),
        code,
    })
}

fn assemble(spec: &GeneratorSpec, realized: usize, z: &Array1<f64>, noise: &Array1<f64>) -> Array1<f64> {
    spec.decoders[realized].dot(z) + &spec.offsets[realized] + &(noise * spec.sigma)
}

/// Realize a sample: draw the realized class from the code's confusion row,
/// draw ε once, and assemble `x`.
pub fn generate(spec: &GeneratorSpec, latent: LatentInput, rng: &mut Rng) -> Result<GeneratedSample> {
    spec.validate()?;
    if latent.code >= spec.class_count || latent.z.len() != spec.latent_dim {
        return Err(Error::InvalidInput("latent input incompatible with spec".into()));
    }
    let realized_class = rng.categorical(&spec.confusion[latent.code]);
    let noise = Array1::from(rng.normal_vec(spec.feature_dim));
    let x = assemble(spec, realized_class, &latent.z, &noise);
    Ok(GeneratedSample {
        x,
        latent,
        realized_class,
        noise,
    })
}

/// Decoder output at a new `z` with the sample's frozen realized class and ε.
pub fn reevaluate(sample: &GeneratedSample, z_new: &Array1<f64>, spec: &GeneratorSpec) -> Result<Array1<f64>> {
    if z_new.len() != spec.latent_dim {
        return Err(Error::InvalidInput(format!(
            "z has length {}, expected {}",
            z_new.len(),
            spec.latent_dim
        )));
    }
    Ok(assemble(spec, sample.realized_class, z_new, &sample.noise))
}

/// `dx/dz` of [`reevaluate`]: the realized class's decoder matrix.
pub fn jacobian_z<'s>(sample: &GeneratedSample, spec: &'s GeneratorSpec) -> &'s Array2<f64> {
    &spec.decoders[sample.realized_class]
}

/// The simulated oracle's answer: the realized class.
///
/// Callers inside the active learning loop must route queries through the
/// loop's budget accounting rather than calling this directly.
pub fn oracle_label(sample: &GeneratedSample) -> usize {
    sample.realized_class
}

/// For each class code, the fraction of `n_per_class` generations whose
/// realized class matches the code. The realized class is independent of the
/// continuous draws, so only the confusion rows are sampled.
pub fn measure_generation_accuracy(spec: &GeneratorSpec, n_per_class: usize, rng: &mut Rng) -> Vec<f64> {
    assert!(n_per_class >= 1);
    (0..spec.class_count)
        .map(|c| {
            let hits = (0..n_per_class)
                .filter(|_| rng.categorical(&spec.confusion[c]) == c)
                .count();
            hits as f64 / n_per_class as f64
        })
        .collect()
}

/// Draw a labeled dataset with exact round-robin class balance; labels are
/// the realized (ground-truth) classes.
pub fn draw_dataset(spec: &GeneratorSpec, n: usize, rng: &mut Rng) -> Result<Vec<(Array1<f64>, usize)>> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let latent = sample_latent(spec, i % spec.class_count, rng)?;
        let sample = generate(spec, latent, rng)?;
        out.push((sample.x, sample.realized_class));
    }
    Ok(out)
}
