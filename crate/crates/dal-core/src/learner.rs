//! The active learner: a small classifier retrained from scratch every
//! cycle, exposing class probabilities and the input-space gradient of the
//! negative-entropy objective used by acquisition.
//!
//! Two architectures: plain linear-softmax (closed-form verifiable) and one
//! tanh hidden layer (the default; smooth, so the input gradient exists
//! everywhere). Training is mini-batch SGD on mean cross-entropy with L2
//! weight decay and early stopping on a validation split.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::numerics::{argmax_tiebreak, entropy, softmax, ArchitectureTag, ProbVector, Rng, LOG_CLAMP};
use crate::{Error, Result};

/// Anything the learner is allowed to see during training and evaluation:
/// features and the assigned label, nothing else. Ground-truth fields stay
/// out of reach by construction.
pub trait Example {
    fn features(&self) -> &Array1<f64>;
    fn label(&self) -> usize;
}

impl Example for (Array1<f64>, usize) {
    fn features(&self) -> &Array1<f64> {
        &self.0
    }
    fn label(&self) -> usize {
        self.1
    }
}

/// Trained classifier parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum LearnerModel {
    Linear {
        /// `class_count × input_dim`
        w: Array2<f64>,
        b: Array1<f64>,
    },
    OneHidden {
        /// `width × input_dim`
        w1: Array2<f64>,
        b1: Array1<f64>,
        /// `class_count × width`
        w2: Array2<f64>,
        b2: Array1<f64>,
    },
}

impl LearnerModel {
    pub fn class_count(&self) -> usize {
        match self {
            LearnerModel::Linear { b, .. } => b.len(),
            LearnerModel::OneHidden { b2, .. } => b2.len(),
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            LearnerModel::Linear { w, .. } => w.dim().1,
            LearnerModel::OneHidden { w1, .. } => w1.dim().1,
        }
    }

    /// All-zero parameters; outputs the uniform distribution everywhere.
    pub fn zeroed(arch: ArchitectureTag, class_count: usize, input_dim: usize) -> Self {
        match arch {
            ArchitectureTag::LinearSoftmax => LearnerModel::Linear {
                w: Array2::zeros((class_count, input_dim)),
                b: Array1::zeros(class_count),
            },
            ArchitectureTag::OneHidden { width } => LearnerModel::OneHidden {
                w1: Array2::zeros((width, input_dim)),
                b1: Array1::zeros(width),
                w2: Array2::zeros((class_count, width)),
                b2: Array1::zeros(class_count),
            },
        }
    }

    fn logits(&self, x: &Array1<f64>) -> Array1<f64> {
        debug_assert_eq!(x.len(), self.input_dim());
        match self {
            LearnerModel::Linear { w, b } => w.dot(x) + b,
            LearnerModel::OneHidden { w1, b1, w2, b2 } => {
                let hidden = (w1.dot(x) + b1).mapv(f64::tanh);
                w2.dot(&hidden) + b2
            }
        }
    }

    pub fn architecture(&self) -> ArchitectureTag {
        match self {
            LearnerModel::Linear { .. } => ArchitectureTag::LinearSoftmax,
            LearnerModel::OneHidden { w1, .. } => ArchitectureTag::OneHidden { width: w1.dim().0 },
        }
    }

    /// Flatten into the checkpoint container.
    pub fn to_flat(&self) -> FlatModel {
        let mut values = Vec::new();
        match self {
            LearnerModel::Linear { w, b } => {
                values.extend(w.iter());
                values.extend(b.iter());
            }
            LearnerModel::OneHidden { w1, b1, w2, b2 } => {
                values.extend(w1.iter());
                values.extend(b1.iter());
                values.extend(w2.iter());
                values.extend(b2.iter());
            }
        }
        FlatModel {
            architecture: self.architecture(),
            class_count: self.class_count(),
            input_dim: self.input_dim(),
            values,
        }
    }

    pub fn from_flat(flat: &FlatModel) -> Result<Self> {
        let c = flat.class_count;
        let d = flat.input_dim;
        let take = |vals: &[f64], start: usize, n: usize| -> Result<Vec<f64>> {
            vals.get(start..start + n)
                .map(|s| s.to_vec())
                .ok_or_else(|| Error::InvalidInput("checkpoint value buffer too short".into()))
        };
        let model = match flat.architecture {
            ArchitectureTag::LinearSoftmax => {
                let expect = c * d + c;
                if flat.values.len() != expect {
                    return Err(Error::InvalidInput(format!(
                        "checkpoint has {} values, expected {expect}",
                        flat.values.len()
                    )));
                }
                LearnerModel::Linear {
                    w: Array2::from_shape_vec((c, d), take(&flat.values, 0, c * d)?)
                        .expect("length checked"),
                    b: Array1::from(take(&flat.values, c * d, c)?),
                }
            }
            ArchitectureTag::OneHidden { width } => {
                let expect = width * d + width + c * width + c;
                if flat.values.len() != expect {
                    return Err(Error::InvalidInput(format!(
                        "checkpoint has {} values, expected {expect}",
                        flat.values.len()
                    )));
                }
                let mut at = 0;
                let w1 = Array2::from_shape_vec((width, d), take(&flat.values, at, width * d)?)
                    .expect("length checked");
                at += width * d;
                let b1 = Array1::from(take(&flat.values, at, width)?);
                at += width;
                let w2 = Array2::from_shape_vec((c, width), take(&flat.values, at, c * width)?)
                    .expect("length checked");
                at += c * width;
                let b2 = Array1::from(take(&flat.values, at, c)?);
                LearnerModel::OneHidden { w1, b1, w2, b2 }
            }
        };
        Ok(model)
    }
}

/// Flat checkpoint container: architecture header plus parameter values in a
/// fixed documented order (layer by layer, weights then biases, row-major).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlatModel {
    pub architecture: ArchitectureTag,
    pub class_count: usize,
    pub input_dim: usize,
    pub values: Vec<f64>,
}

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// "one-hidden" or "linear-softmax".
    pub architecture: String,
    pub hidden_width: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Early stopping: stop after this many consecutive epochs without
    /// validation-loss improvement.
    pub patience: usize,
    pub validation_fraction: f64,
    pub weight_decay: f64,
    /// Base seed mixed into per-cycle training streams.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            architecture: "one-hidden".into(),
            hidden_width: 32,
            learning_rate: 0.1,
            batch_size: 32,
            max_epochs: 100,
            patience: 10,
            validation_fraction: 0.1,
            weight_decay: 1e-4,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn arch(&self) -> Result<ArchitectureTag> {
        match self.architecture.as_str() {
            "linear-softmax" => Ok(ArchitectureTag::LinearSoftmax),
            "one-hidden" => {
                if self.hidden_width == 0 {
                    return Err(Error::Config("train.hidden_width must be positive".into()));
                }
                Ok(ArchitectureTag::OneHidden { width: self.hidden_width })
            }
            other => Err(Error::Config(format!(
                "train.architecture must be \"one-hidden\" or \"linear-softmax\", got {other:?}"
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.arch()?;
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("train.learning_rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("train.batch_size must be positive".into()));
        }
        if self.max_epochs == 0 || self.max_epochs > 100 {
            return Err(Error::Config("train.max_epochs must be in 1..=100".into()));
        }
        if self.patience == 0 {
            return Err(Error::Config("train.patience must be positive".into()));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction <= 0.5) {
            return Err(Error::Config(
                "train.validation_fraction must lie in (0, 0.5]".into(),
            ));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::Config("train.weight_decay must be non-negative".into()));
        }
        Ok(())
    }
}

/// Per-epoch training record.
#[derive(Debug, Clone)]
pub struct TrainReport {
    pub epochs_run: usize,
    /// Mean cross-entropy + decay term on the training split after each epoch.
    pub train_objective: Vec<f64>,
    /// Mean cross-entropy on the validation split after each epoch (empty if
    /// the split was empty).
    pub val_loss: Vec<f64>,
}

/// Class probabilities at `x`: softmax of the model logits.
pub fn predict_proba(model: &LearnerModel, x: &Array1<f64>) -> Result<ProbVector> {
    if x.len() != model.input_dim() {
        return Err(Error::InvalidInput(format!(
            "input has length {}, model expects {}",
            x.len(),
            model.input_dim()
        )));
    }
    softmax(model.logits(x).as_slice().expect("contiguous"))
}

/// Objective Σ p log p and its gradient with respect to the input, derived
/// analytically for each architecture.
///
/// With `H = entropy(p)`, the logit-space gradient is
/// `g_j = p_j·(log p_j + H)`; backpropagating through the (linear or tanh)
/// layers gives the input gradient.
pub fn objective_and_input_gradient(model: &LearnerModel, x: &Array1<f64>) -> (f64, Array1<f64>) {
    assert_eq!(x.len(), model.input_dim(), "input dimension mismatch");
    match model {
        LearnerModel::Linear { w, b } => {
            let logits = w.dot(x) + b;
            let p = softmax(logits.as_slice().expect("contiguous")).expect("finite logits");
            let h = entropy(&p);
            let g_logits = Array1::from_iter(p.iter().map(|&q| q * (q.max(LOG_CLAMP).ln() + h)));
            (-h, w.t().dot(&g_logits))
        }
        LearnerModel::OneHidden { w1, b1, w2, b2 } => {
            let pre = w1.dot(x) + b1;
            let hidden = pre.mapv(f64::tanh);
            let logits = w2.dot(&hidden) + b2;
            let p = softmax(logits.as_slice().expect("contiguous")).expect("finite logits");
            let h = entropy(&p);
            let g_logits = Array1::from_iter(p.iter().map(|&q| q * (q.max(LOG_CLAMP).ln() + h)));
            let g_hidden = w2.t().dot(&g_logits);
            let g_pre = Array1::from_iter(
                hidden.iter().zip(g_hidden.iter()).map(|(&t, &g)| (1.0 - t * t) * g),
            );
            (-h, w1.t().dot(&g_pre))
        }
    }
}

/// Gradient of `Σ p log p` (the acquisition objective) with respect to `x`.
pub fn input_gradient(model: &LearnerModel, x: &Array1<f64>) -> Array1<f64> {
    objective_and_input_gradient(model, x).1
}

struct Gradients {
    gw1: Array2<f64>,
    gb1: Array1<f64>,
    gw2: Array2<f64>,
    gb2: Array1<f64>,
}

fn accumulate_example(
    model: &LearnerModel,
    x: &Array1<f64>,
    label: usize,
    grads: &mut Gradients,
) -> f64 {
    match model {
        LearnerModel::Linear { w, b } => {
            let logits = w.dot(x) + b;
            let p = softmax(logits.as_slice().expect("contiguous")).expect("finite logits");
            let loss = -p[label].max(LOG_CLAMP).ln();
            for (j, &pj) in p.iter().enumerate() {
                let d = pj - if j == label { 1.0 } else { 0.0 };
                grads.gb2[j] += d;
                for (i, &xi) in x.iter().enumerate() {
                    grads.gw2[(j, i)] += d * xi;
                }
            }
            loss
        }
        LearnerModel::OneHidden { w1, b1, w2, b2 } => {
            let pre = w1.dot(x) + b1;
            let hidden = pre.mapv(f64::tanh);
            let logits = w2.dot(&hidden) + b2;
            let p = softmax(logits.as_slice().expect("contiguous")).expect("finite logits");
            let loss = -p[label].max(LOG_CLAMP).ln();
            let mut d_hidden = Array1::<f64>::zeros(hidden.len());
            for (j, &pj) in p.iter().enumerate() {
                let d = pj - if j == label { 1.0 } else { 0.0 };
                grads.gb2[j] += d;
                for (i, &hi) in hidden.iter().enumerate() {
                    grads.gw2[(j, i)] += d * hi;
                    d_hidden[i] += d * w2[(j, i)];
                }
            }
            for (i, &t) in hidden.iter().enumerate() {
                let dp = (1.0 - t * t) * d_hidden[i];
                grads.gb1[i] += dp;
                for (k, &xk) in x.iter().enumerate() {
                    grads.gw1[(i, k)] += dp * xk;
                }
            }
            loss
        }
    }
}

fn mean_cross_entropy<E: Example>(model: &LearnerModel, data: &[E], idx: &[usize]) -> f64 {
    let total: f64 = idx
        .iter()
        .map(|&i| {
            let p = predict_proba(model, data[i].features()).expect("dims checked at entry");
            -p[data[i].label()].max(LOG_CLAMP).ln()
        })
        .sum();
    total / idx.len() as f64
}

fn decay_term(model: &LearnerModel, weight_decay: f64) -> f64 {
    let sq = |m: &Array2<f64>| m.iter().map(|v| v * v).sum::<f64>();
    let total = match model {
        LearnerModel::Linear { w, .. } => sq(w),
        LearnerModel::OneHidden { w1, w2, .. } => sq(w1) + sq(w2),
    };
    0.5 * weight_decay * total
}

fn init_model(arch: ArchitectureTag, class_count: usize, input_dim: usize, rng: &mut Rng) -> LearnerModel {
    let mut draw_matrix = |rows: usize, cols: usize| {
        let sd = 1.0 / (cols as f64).sqrt();
        Array2::from_shape_vec((rows, cols), rng.normal_vec(rows * cols))
            .expect("shape matches data length")
            * sd
    };
    match arch {
        ArchitectureTag::LinearSoftmax => LearnerModel::Linear {
            w: draw_matrix(class_count, input_dim),
            b: Array1::zeros(class_count),
        },
        ArchitectureTag::OneHidden { width } => LearnerModel::OneHidden {
            w1: draw_matrix(width, input_dim),
            b1: Array1::zeros(width),
            w2: draw_matrix(class_count, width),
            b2: Array1::zeros(class_count),
        },
    }
}

fn apply_step(model: &mut LearnerModel, grads: &Gradients, scale: f64, lr: f64, wd: f64) {
    match model {
        LearnerModel::Linear { w, b } => {
            for ((i, j), v) in w.indexed_iter_mut() {
                *v -= lr * (grads.gw2[(i, j)] * scale + wd * *v);
            }
            for (i, v) in b.iter_mut().enumerate() {
                *v -= lr * grads.gb2[i] * scale;
            }
        }
        LearnerModel::OneHidden { w1, b1, w2, b2 } => {
            for ((i, j), v) in w1.indexed_iter_mut() {
                *v -= lr * (grads.gw1[(i, j)] * scale + wd * *v);
            }
            for (i, v) in b1.iter_mut().enumerate() {
                *v -= lr * grads.gb1[i] * scale;
            }
            for ((i, j), v) in w2.indexed_iter_mut() {
                *v -= lr * (grads.gw2[(i, j)] * scale + wd * *v);
            }
            for (i, v) in b2.iter_mut().enumerate() {
                *v -= lr * grads.gb2[i] * scale;
            }
        }
    }
}

/// Train a fresh model on `data`. The result depends only on the data, the
/// config, and the RNG stream, never on any previous model. The class count
/// is inferred from the labels (at least 2).
pub fn train<E: Example>(data: &[E], cfg: &TrainConfig, rng: &mut Rng) -> Result<LearnerModel> {
    train_with_report(data, cfg, rng).map(|(m, _)| m)
}

/// [`train`] plus per-epoch loss trajectories.
pub fn train_with_report<E: Example>(
    data: &[E],
    cfg: &TrainConfig,
    rng: &mut Rng,
) -> Result<(LearnerModel, TrainReport)> {
    if data.is_empty() {
        return Err(Error::InvalidInput("training data is empty".into()));
    }
    let class_count = data
        .iter()
        .map(|e| e.label() + 1)
        .max()
        .expect("nonempty")
        .max(2);
    train_for_classes(data, class_count, cfg, rng)
}

/// Train with an explicit output class count, so the model covers classes
/// the current labeled set happens to miss.
pub fn train_for_classes<E: Example>(
    data: &[E],
    class_count: usize,
    cfg: &TrainConfig,
    rng: &mut Rng,
) -> Result<(LearnerModel, TrainReport)> {
    if data.is_empty() {
        return Err(Error::InvalidInput("training data is empty".into()));
    }
    cfg.validate()?;
    if class_count < 2 {
        return Err(Error::InvalidInput("class_count must be at least 2".into()));
    }
    let input_dim = data[0].features().len();
    for e in data {
        if e.label() >= class_count {
            return Err(Error::InvalidInput(format!(
                "label {} out of range for {class_count} classes",
                e.label()
            )));
        }
    }
    for e in data {
        if e.features().len() != input_dim {
            return Err(Error::InvalidInput("inconsistent feature dimensions".into()));
        }
        if e.features().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("training features contain non-finite values".into()));
        }
    }

    let n = data.len();
    let mut indices: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut indices);
    let val_n = ((cfg.validation_fraction * n as f64).floor() as usize).min(n - 1);
    let (val_idx, train_idx_base) = indices.split_at(val_n);
    let val_idx = val_idx.to_vec();
    let mut train_idx = train_idx_base.to_vec();

    let mut model = init_model(cfg.arch()?, class_count, input_dim, rng);
    let mut best = model.clone();
    let mut best_metric = f64::INFINITY;
    let mut stall = 0usize;
    let mut report = TrainReport {
        epochs_run: 0,
        train_objective: Vec::new(),
        val_loss: Vec::new(),
    };

    let zero_grads = || Gradients {
        gw1: match cfg.arch().expect("validated") {
            ArchitectureTag::OneHidden { width } => Array2::zeros((width, input_dim)),
            ArchitectureTag::LinearSoftmax => Array2::zeros((0, 0)),
        },
        gb1: match cfg.arch().expect("validated") {
            ArchitectureTag::OneHidden { width } => Array1::zeros(width),
            ArchitectureTag::LinearSoftmax => Array1::zeros(0),
        },
        gw2: match cfg.arch().expect("validated") {
            ArchitectureTag::OneHidden { width } => Array2::zeros((class_count, width)),
            ArchitectureTag::LinearSoftmax => Array2::zeros((class_count, input_dim)),
        },
        gb2: Array1::zeros(class_count),
    };

    for _epoch in 0..cfg.max_epochs {
        rng.shuffle(&mut train_idx);
        for batch in train_idx.chunks(cfg.batch_size) {
            let mut grads = zero_grads();
            for &i in batch {
                accumulate_example(&model, data[i].features(), data[i].label(), &mut grads);
            }
            let scale = 1.0 / batch.len() as f64;
            apply_step(&mut model, &grads, scale, cfg.learning_rate, cfg.weight_decay);
        }
        report.epochs_run += 1;
        let train_obj =
            mean_cross_entropy(&model, data, &train_idx) + decay_term(&model, cfg.weight_decay);
        report.train_objective.push(train_obj);

        let metric = if val_idx.is_empty() {
            train_obj
        } else {
            let v = mean_cross_entropy(&model, data, &val_idx);
            report.val_loss.push(v);
            v
        };
        if metric < best_metric {
            best_metric = metric;
            best = model.clone();
            stall = 0;
        } else {
            stall += 1;
            if stall >= cfg.patience {
                break;
            }
        }
    }
    Ok((best, report))
}

/// Fraction of test examples whose argmax prediction equals their label.
pub fn evaluate<E: Example>(model: &LearnerModel, test: &[E]) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::InvalidInput("test set is empty".into()));
    }
    let mut hits = 0usize;
    for e in test {
        let p = predict_proba(model, e.features())?;
        if argmax_tiebreak(&p)? == e.label() {
            hits += 1;
        }
    }
    Ok(hits as f64 / test.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{finite_diff_grad, neg_entropy_objective, FD_EPS};
    use approx::assert_relative_eq;

    fn two_clusters(n_per: usize, seed: u64) -> Vec<(Array1<f64>, usize)> {
        let mut rng = Rng::new(seed);
        let mut data = Vec::new();
        for i in 0..(2 * n_per) {
            let label = i % 2;
            let center = if label == 0 { 3.0 } else { -3.0 };
            let x = Array1::from(vec![
                center + 0.3 * rng.standard_normal(),
                -center + 0.3 * rng.standard_normal(),
            ]);
            data.push((x, label));
        }
        data
    }

    fn random_matrix(rows: usize, cols: usize, rng: &mut Rng) -> Array2<f64> {
        Array2::from_shape_vec((rows, cols), rng.normal_vec(rows * cols)).unwrap()
            * (1.0 / (cols as f64).sqrt())
    }

    fn random_model(arch: ArchitectureTag, c: usize, d: usize, rng: &mut Rng) -> LearnerModel {
        match arch {
            ArchitectureTag::LinearSoftmax => LearnerModel::Linear {
                w: random_matrix(c, d, rng),
                b: Array1::from(rng.normal_vec(c)),
            },
            ArchitectureTag::OneHidden { width } => LearnerModel::OneHidden {
                w1: random_matrix(width, d, rng),
                b1: Array1::from(rng.normal_vec(width)),
                w2: random_matrix(c, width, rng),
                b2: Array1::from(rng.normal_vec(c)),
            },
        }
    }

    #[test]
    fn separable_clusters_reach_high_training_accuracy() {
        let data = two_clusters(50, 1);
        let cfg = TrainConfig::default();
        let mut rng = Rng::new(2);
        let model = train(&data, &cfg, &mut rng).unwrap();
        let acc = evaluate(&model, &data).unwrap();
        assert!(acc >= 0.99, "training accuracy {acc}");
    }

    #[test]
    fn single_class_data_predicts_that_class() {
        let mut rng = Rng::new(3);
        let data: Vec<(Array1<f64>, usize)> = (0..20)
            .map(|_| (Array1::from(rng.normal_vec(4)), 0usize))
            .collect();
        let model = train(&data, &TrainConfig::default(), &mut Rng::new(4)).unwrap();
        for e in &data {
            let p = predict_proba(&model, e.features()).unwrap();
            assert_eq!(argmax_tiebreak(&p).unwrap(), 0);
        }
    }

    #[test]
    fn training_is_bitwise_deterministic() {
        let data = two_clusters(30, 5);
        let cfg = TrainConfig::default();
        let a = train(&data, &cfg, &mut Rng::new(7)).unwrap();
        let b = train(&data, &cfg, &mut Rng::new(7)).unwrap();
        assert_eq!(a.to_flat().values, b.to_flat().values);
    }

    #[test]
    fn empty_data_is_rejected() {
        let data: Vec<(Array1<f64>, usize)> = vec![];
        assert!(matches!(
            train(&data, &TrainConfig::default(), &mut Rng::new(0)),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn zero_weight_model_outputs_uniform() {
        let model = LearnerModel::zeroed(ArchitectureTag::LinearSoftmax, 10, 4);
        let p = predict_proba(&model, &Array1::from(vec![1.0, -2.0, 0.5, 3.0])).unwrap();
        for &v in p.iter() {
            assert_relative_eq!(v, 0.1, max_relative = 1e-15);
        }
    }

    #[test]
    fn predict_rejects_dimension_mismatch() {
        let model = LearnerModel::zeroed(ArchitectureTag::LinearSoftmax, 3, 4);
        assert!(matches!(
            predict_proba(&model, &Array1::zeros(5)),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn linear_two_class_probabilities_follow_logistic_curve() {
        // rows: w0 = w, w1 = 0 → p0(x) = 1 / (1 + exp(−w·x))
        let w_dir = vec![0.8, -0.4, 1.1];
        let mut w = Array2::zeros((2, 3));
        for (j, &v) in w_dir.iter().enumerate() {
            w[(0, j)] = v;
        }
        let model = LearnerModel::Linear { w, b: Array1::zeros(2) };
        for t in [-4.0, -1.5, 0.0, 0.3, 2.0, 5.0] {
            let x = Array1::from(w_dir.iter().map(|&v| v * t).collect::<Vec<_>>());
            let margin: f64 = w_dir.iter().map(|&v| v * v * t).sum();
            let expect = 1.0 / (1.0 + (-margin).exp());
            let p = predict_proba(&model, &x).unwrap();
            assert_relative_eq!(p[0], expect, max_relative = 1e-12);
        }
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let mut rng = Rng::new(11);
        for trial in 0..20 {
            let arch = if trial % 2 == 0 {
                ArchitectureTag::LinearSoftmax
            } else {
                ArchitectureTag::OneHidden { width: 8 }
            };
            let model = random_model(arch, 5, 6, &mut rng);
            let x = Array1::from(rng.normal_vec(6));
            let analytic = input_gradient(&model, &x);
            let f = |v: &[f64]| {
                let p = predict_proba(&model, &Array1::from(v.to_vec())).unwrap();
                neg_entropy_objective(&p)
            };
            let numeric = finite_diff_grad(f, x.as_slice().unwrap(), FD_EPS).unwrap();
            let num_norm: f64 = numeric.iter().map(|v| v * v).sum::<f64>().sqrt();
            let diff: f64 = analytic
                .iter()
                .zip(numeric.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            assert!(
                diff <= 1e-4 * num_norm.max(1e-8),
                "trial {trial}: rel err {}",
                diff / num_norm.max(1e-8)
            );
        }
    }

    #[test]
    fn input_gradient_zero_at_uniform_output() {
        let model = LearnerModel::zeroed(ArchitectureTag::OneHidden { width: 16 }, 10, 4);
        let g = input_gradient(&model, &Array1::from(vec![0.2, -0.7, 1.5, 0.0]));
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn input_gradient_vanishes_in_saturated_region() {
        let mut w = Array2::zeros((2, 2));
        w[(0, 0)] = 50.0;
        let model = LearnerModel::Linear { w, b: Array1::zeros(2) };
        let g = input_gradient(&model, &Array1::from(vec![10.0, 0.0]));
        let norm: f64 = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(norm < 1e-6, "gradient norm {norm}");
    }

    #[test]
    fn evaluate_perfect_constant_and_hand_counted() {
        let data = two_clusters(50, 13);
        let model = train(&data, &TrainConfig::default(), &mut Rng::new(14)).unwrap();
        let perfect: Vec<(Array1<f64>, usize)> = data
            .iter()
            .map(|e| {
                let p = predict_proba(&model, &e.0).unwrap();
                (e.0.clone(), argmax_tiebreak(&p).unwrap())
            })
            .collect();
        assert_eq!(evaluate(&model, &perfect).unwrap(), 1.0);

        // constant (uniform) model on a balanced 4-class set: argmax tie-break
        // always answers 0, so accuracy is exactly 1/C
        let constant = LearnerModel::zeroed(ArchitectureTag::LinearSoftmax, 4, 2);
        let balanced: Vec<(Array1<f64>, usize)> = (0..40)
            .map(|i| (Array1::from(vec![i as f64, 1.0]), i % 4))
            .collect();
        assert_relative_eq!(evaluate(&constant, &balanced).unwrap(), 0.25);

        // hand-counted 10-item set: w = I picks class = argmax coordinate
        let w = Array2::from_shape_vec((2, 2), vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let ident = LearnerModel::Linear { w, b: Array1::zeros(2) };
        let mut ten = Vec::new();
        for i in 0..10 {
            let up = i < 6; // 6 points above the diagonal
            let x = Array1::from(if up { vec![0.0, 1.0] } else { vec![1.0, 0.0] });
            // mislabel two of the six "up" points
            let label = if up && i < 2 { 0 } else if up { 1 } else { 0 };
            ten.push((x, label));
        }
        // correct: 4 of the up points labeled 1, all 4 down points labeled 0 → 8/10
        assert_relative_eq!(evaluate(&ident, &ten).unwrap(), 0.8);

        let empty: Vec<(Array1<f64>, usize)> = vec![];
        assert!(evaluate(&ident, &empty).is_err());
    }

    #[test]
    fn full_batch_small_lr_training_objective_is_monotone() {
        let data = two_clusters(20, 17);
        let cfg = TrainConfig {
            architecture: "one-hidden".into(),
            hidden_width: 8,
            learning_rate: 0.01,
            batch_size: 1024, // full batch
            max_epochs: 60,
            patience: 60,
            validation_fraction: 0.1,
            weight_decay: 0.0,
            seed: 0,
        };
        let (_, report) = train_with_report(&data, &cfg, &mut Rng::new(18)).unwrap();
        for pair in report.train_objective.windows(2) {
            assert!(
                pair[1] <= pair[0] + 1e-8,
                "objective increased: {} -> {}",
                pair[0],
                pair[1]
            );
        }
    }

    #[test]
    fn checkpoint_roundtrip_preserves_model() {
        let mut rng = Rng::new(23);
        for arch in [ArchitectureTag::LinearSoftmax, ArchitectureTag::OneHidden { width: 5 }] {
            let model = random_model(arch, 3, 4, &mut rng);
            let flat = model.to_flat();
            let back = LearnerModel::from_flat(&flat).unwrap();
            assert_eq!(model, back);
        }
        // corrupted buffer is rejected
        let model = random_model(ArchitectureTag::LinearSoftmax, 3, 4, &mut rng);
        let mut flat = model.to_flat();
        flat.values.pop();
        assert!(LearnerModel::from_flat(&flat).is_err());
    }
}
