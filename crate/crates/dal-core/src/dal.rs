//! The labeling state machine: agreement-based decisions, label correction
//! over previously auto-labeled points, oracle budget accounting, and the
//! cycle loop.
//!
//! Per cycle: train from scratch on the labeled set, synthesize m uncertain
//! samples, re-decide every auto-labeled example (label correction), decide
//! each new sample (agreement between the learner's argmax and the sample's
//! class code auto-labels it; disagreement pays an oracle query), then
//! evaluate on the held-out test set.

use std::time::Instant;

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::acquisition::{synthesize_uncertain, AcquisitionConfig, CodePolicy};
use crate::config::ExperimentConfig;
use crate::generator::{draw_dataset, generate, oracle_label, sample_latent, GeneratedSample, GeneratorSpec};
use crate::learner::{evaluate, predict_proba, train_for_classes, Example, LearnerModel, TrainConfig};
use crate::numerics::{argmax_tiebreak, streams, Rng};
use crate::{Error, Result};

/// Where an example's current label came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Source {
    /// Initial oracle-labeled set; excluded from the oracle budget counter.
    Seed,
    /// Paid oracle query (new disagreement or later correction).
    Oracle,
    /// Auto-labeled by learner/code agreement; member of D_A.
    Auto,
}

/// Element of the labeled set.
///
/// `ground_truth` is simulation-only: the training, prediction, and decision
/// paths cannot reach it (training sees examples through the
/// [`Example`] trait), only the simulated oracle and noise diagnostics read it.
#[derive(Debug, Clone)]
pub struct LabeledExample {
    pub x: Array1<f64>,
    pub label: usize,
    pub source: Source,
    pub cycle_added: usize,
    ground_truth: usize,
}

impl LabeledExample {
    pub fn new(x: Array1<f64>, label: usize, source: Source, cycle_added: usize, ground_truth: usize) -> Self {
        Self { x, label, source, cycle_added, ground_truth }
    }

    /// Simulation-only field; never consulted by learning or decisions.
    pub fn ground_truth(&self) -> usize {
        self.ground_truth
    }
}

impl Example for LabeledExample {
    fn features(&self) -> &Array1<f64> {
        &self.x
    }
    fn label(&self) -> usize {
        self.label
    }
}

/// Outcome of a labeling decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelDecision {
    /// Trust the class code / stored label.
    Auto(usize),
    /// Pay an oracle query.
    RouteToOracle,
}

/// Agreement rule for a new sample: auto-label with the code class iff the
/// learner's argmax prediction equals it.
pub fn decide_new(model: &LearnerModel, sample: &GeneratedSample) -> Result<LabelDecision> {
    let p = predict_proba(model, &sample.x)?;
    let predicted = argmax_tiebreak(&p)?;
    if predicted == sample.latent.code {
        Ok(LabelDecision::Auto(sample.latent.code))
    } else {
        Ok(LabelDecision::RouteToOracle)
    }
}

/// Re-decision for an auto-labeled example: keep it while the current model
/// still agrees with the stored label, otherwise route to the oracle. Only
/// valid for `Auto`-sourced examples.
pub fn decide_revisit(model: &LearnerModel, example: &LabeledExample) -> Result<LabelDecision> {
    if example.source != Source::Auto {
        return Err(Error::Contract(format!(
            "decide_revisit called on a {:?}-sourced example",
            example.source
        )));
    }
    let p = predict_proba(model, &example.x)?;
    let predicted = argmax_tiebreak(&p)?;
    if predicted == example.label {
        Ok(LabelDecision::Auto(example.label))
    } else {
        Ok(LabelDecision::RouteToOracle)
    }
}

/// Per-cycle record of the quantities the figures plot.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CycleMetrics {
    pub cycle: usize,
    pub test_accuracy: f64,
    pub oracle_this_cycle: usize,
    pub auto_this_cycle: usize,
    pub cumulative_oracle: usize,
    pub cumulative_auto: usize,
    /// Oracle-labeled / auto-labeled this cycle; +inf when labels were
    /// assigned but none automatically.
    pub alpha: f64,
    /// Fraction of current auto-labeled examples whose label differs from
    /// ground truth (simulation-only diagnostic).
    pub noise_rate: f64,
}

/// Instrumentation of one cycle's decisions, indexed into the labeled set.
#[derive(Debug, Clone, Default)]
pub struct CycleAudit {
    /// Examples re-decided this cycle (all of D_A when correction is on).
    pub revisited: Vec<usize>,
    /// Subset of `revisited` that was routed to the oracle and corrected.
    pub corrected: Vec<usize>,
    /// Newly inserted examples that were auto-labeled.
    pub new_auto: Vec<usize>,
    /// Newly inserted examples that were oracle-labeled.
    pub new_oracle: Vec<usize>,
    /// Latent-descent steps rejected for non-finite gradients.
    pub rejected_steps: usize,
}

/// The loop's mutable state.
#[derive(Debug, Clone)]
pub struct DalState {
    /// D_l; the `Auto`-sourced subset is D_A.
    pub examples: Vec<LabeledExample>,
    pub model: Option<LearnerModel>,
    /// Completed cycles.
    pub cycle: usize,
    /// Cumulative paid oracle queries (Seed excluded).
    pub oracle_count: usize,
    /// Cumulative auto-label assignments (never decremented by corrections).
    pub auto_count: usize,
    pub history: Vec<CycleMetrics>,
}

impl DalState {
    pub fn new(seed_set: Vec<LabeledExample>) -> Self {
        Self {
            examples: seed_set,
            model: None,
            cycle: 0,
            oracle_count: 0,
            auto_count: 0,
            history: Vec::new(),
        }
    }

    /// Indices of the current D_A members, insertion order.
    pub fn auto_indices(&self) -> Vec<usize> {
        self.examples
            .iter()
            .enumerate()
            .filter(|(_, e)| e.source == Source::Auto)
            .map(|(i, _)| i)
            .collect()
    }

    /// Residual label noise over D_A: mislabeled / max(|D_A|, 1).
    pub fn noise_rate(&self) -> f64 {
        let auto: Vec<&LabeledExample> =
            self.examples.iter().filter(|e| e.source == Source::Auto).collect();
        let noisy = auto.iter().filter(|e| e.label != e.ground_truth).count();
        noisy as f64 / auto.len().max(1) as f64
    }
}

/// Strategy switches for the shared cycle loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LoopOptions {
    /// Run the latent entropy descent (otherwise candidates stay random).
    pub optimize: bool,
    /// Apply the agreement rule to new samples (otherwise every sample pays
    /// an oracle query).
    pub auto_labeling: bool,
    /// Re-decide all of D_A each cycle (label correction).
    pub correction: bool,
    pub code_policy: CodePolicy,
}

impl LoopOptions {
    /// The full method: optimization, agreement labeling, and correction.
    pub fn dal() -> Self {
        Self {
            optimize: true,
            auto_labeling: true,
            correction: true,
            code_policy: CodePolicy::UniformRandom,
        }
    }
}

pub(crate) fn alpha_ratio(oracle: usize, auto: usize) -> f64 {
    if auto > 0 {
        oracle as f64 / auto as f64
    } else if oracle == 0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Initial labeled set: `n_seed` generated points, codes round-robin over
/// classes, oracle-labeled (source `Seed`, not counted against the budget).
pub fn make_seed_set(spec: &GeneratorSpec, n_seed: usize, rng: &mut Rng) -> Result<Vec<LabeledExample>> {
    let mut out = Vec::with_capacity(n_seed);
    for i in 0..n_seed {
        let latent = sample_latent(spec, i % spec.class_count, rng)?;
        let sample = generate(spec, latent, rng)?;
        let truth = oracle_label(&sample);
        out.push(LabeledExample::new(sample.x, truth, Source::Seed, 0, truth));
    }
    Ok(out)
}

fn acq_config_for(opts: &LoopOptions, acq: &AcquisitionConfig) -> AcquisitionConfig {
    let mut cfg = acq.clone();
    cfg.code_policy = opts.code_policy;
    if !opts.optimize {
        cfg.steps = 0;
        cfg.batch_size = cfg.per_cycle;
    }
    cfg
}

/// One full cycle. Returns the metrics row and the decision audit.
///
/// The same model trained at the start of the cycle makes every decision in
/// it; D_A is re-decided before new samples are inserted; corrections relabel
/// in place, so `|D_l|` grows by exactly m.
pub fn run_cycle(
    state: &mut DalState,
    spec: &GeneratorSpec,
    acq_cfg: &AcquisitionConfig,
    train_cfg: &TrainConfig,
    opts: &LoopOptions,
    test_set: &[(Array1<f64>, usize)],
    run_seed: u64,
) -> Result<CycleMetrics> {
    run_cycle_audited(state, spec, acq_cfg, train_cfg, opts, test_set, run_seed).map(|(m, _)| m)
}

pub fn run_cycle_audited(
    state: &mut DalState,
    spec: &GeneratorSpec,
    acq_cfg: &AcquisitionConfig,
    train_cfg: &TrainConfig,
    opts: &LoopOptions,
    test_set: &[(Array1<f64>, usize)],
    run_seed: u64,
) -> Result<(CycleMetrics, CycleAudit)> {
    let cycle = state.cycle + 1;
    let mut audit = CycleAudit::default();

    // (a) train from scratch on the current labeled set
    let mut train_rng = Rng::substream(run_seed, &[streams::TRAIN, train_cfg.seed, cycle as u64]);
    let (model, _) = train_for_classes(&state.examples, spec.class_count, train_cfg, &mut train_rng)?;

    // (b) synthesize this cycle's candidates
    let mut acq_rng = Rng::substream(run_seed, &[streams::ACQUISITION, cycle as u64]);
    let effective_acq = acq_config_for(opts, acq_cfg);
    let synthesis = synthesize_uncertain(&model, spec, &effective_acq, &mut acq_rng)?;
    audit.rejected_steps = synthesis.rejected_steps;

    let mut oracle_this = 0usize;
    let mut auto_this = 0usize;

    // (c) label correction: re-decide all current auto-labeled examples
    if opts.correction {
        for idx in state.auto_indices() {
            audit.revisited.push(idx);
            match decide_revisit(&model, &state.examples[idx])? {
                LabelDecision::Auto(_) => {}
                LabelDecision::RouteToOracle => {
                    let example = &mut state.examples[idx];
                    example.label = example.ground_truth;
                    example.source = Source::Oracle;
                    state.oracle_count += 1;
                    oracle_this += 1;
                    audit.corrected.push(idx);
                }
            }
        }
    }

    // (d)-(f) decide and insert the new samples
    for sample in &synthesis.samples {
        let decision = if opts.auto_labeling {
            decide_new(&model, sample)?
        } else {
            LabelDecision::RouteToOracle
        };
        let truth = oracle_label(sample);
        let idx = state.examples.len();
        match decision {
            LabelDecision::Auto(code_class) => {
                state
                    .examples
                    .push(LabeledExample::new(sample.x.clone(), code_class, Source::Auto, cycle, truth));
                state.auto_count += 1;
                auto_this += 1;
                audit.new_auto.push(idx);
            }
            LabelDecision::RouteToOracle => {
                state
                    .examples
                    .push(LabeledExample::new(sample.x.clone(), truth, Source::Oracle, cycle, truth));
                state.oracle_count += 1;
                oracle_this += 1;
                audit.new_oracle.push(idx);
            }
        }
    }

    // (g)-(h) evaluate and record
    let test_accuracy = evaluate(&model, test_set)?;
    state.model = Some(model);
    state.cycle = cycle;
    let metrics = CycleMetrics {
        cycle,
        test_accuracy,
        oracle_this_cycle: oracle_this,
        auto_this_cycle: auto_this,
        cumulative_oracle: state.oracle_count,
        cumulative_auto: state.auto_count,
        alpha: alpha_ratio(oracle_this, auto_this),
        noise_rate: state.noise_rate(),
    };
    state.history.push(metrics.clone());
    Ok((metrics, audit))
}

/// One seed's trajectory.
#[derive(Debug, Clone)]
pub struct SeedRun {
    pub seed: u64,
    pub cycles: Vec<CycleMetrics>,
    pub audits: Vec<CycleAudit>,
}

/// A whole experiment: per-seed trajectories plus aggregate summaries.
#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub strategy_name: String,
    pub runs: Vec<SeedRun>,
    pub wall_time_secs: f64,
}

impl ExperimentResult {
    /// Mean and (population) standard deviation of final-cycle test accuracy
    /// across seeds.
    pub fn final_accuracy(&self) -> (f64, f64) {
        let finals: Vec<f64> = self
            .runs
            .iter()
            .filter_map(|r| r.cycles.last().map(|c| c.test_accuracy))
            .collect();
        mean_std(&finals)
    }

    pub fn mean_total_oracle(&self) -> f64 {
        let totals: Vec<f64> = self
            .runs
            .iter()
            .filter_map(|r| r.cycles.last().map(|c| c.cumulative_oracle as f64))
            .collect();
        mean_std(&totals).0
    }
}

pub(crate) fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / xs.len() as f64;
    (mean, var.sqrt())
}

/// Build the shared held-out test set: drawn from the world's real
/// distribution, identical across strategies and run seeds.
pub fn make_test_set(spec: &GeneratorSpec, n: usize, world_seed: u64) -> Result<Vec<(Array1<f64>, usize)>> {
    let mut rng = Rng::substream(world_seed, &[streams::TEST_SET]);
    draw_dataset(&spec.real_world(), n, &mut rng)
}

/// Run the loop for one seed under the given strategy switches.
pub fn run_seed_loop(
    cfg: &ExperimentConfig,
    spec: &GeneratorSpec,
    test_set: &[(Array1<f64>, usize)],
    opts: &LoopOptions,
    run_seed: u64,
) -> Result<SeedRun> {
    let mut seed_rng = Rng::substream(run_seed, &[streams::SEED_SET]);
    let seed_set = make_seed_set(spec, cfg.n_seed, &mut seed_rng)?;
    let mut state = DalState::new(seed_set);

    // cycle-0 row: evaluation of the model trained on the seed set alone
    let mut train_rng = Rng::substream(run_seed, &[streams::TRAIN, cfg.train.seed, 0]);
    let (seed_model, _) =
        train_for_classes(&state.examples, spec.class_count, &cfg.train, &mut train_rng)?;
    let seed_accuracy = evaluate(&seed_model, test_set)?;
    state.model = Some(seed_model);
    let row0 = CycleMetrics {
        cycle: 0,
        test_accuracy: seed_accuracy,
        oracle_this_cycle: 0,
        auto_this_cycle: 0,
        cumulative_oracle: 0,
        cumulative_auto: 0,
        alpha: 0.0,
        noise_rate: 0.0,
    };
    state.history.push(row0);

    let mut audits = vec![CycleAudit::default()];
    while state.cycle < cfg.max_cycles && state.oracle_count < cfg.budget {
        let (_, audit) = run_cycle_audited(
            &mut state,
            spec,
            &cfg.acquisition_config(),
            &cfg.train,
            opts,
            test_set,
            run_seed,
        )?;
        audits.push(audit);
    }
    Ok(SeedRun {
        seed: run_seed,
        cycles: state.history,
        audits,
    })
}

/// The full method over all configured seeds: entropy-guided synthesis,
/// agreement labeling, and label correction, looping until the oracle budget
/// or the cycle cap is reached.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    run_with_options(cfg, &LoopOptions::dal(), "dal")
}

pub(crate) fn run_with_options(
    cfg: &ExperimentConfig,
    opts: &LoopOptions,
    strategy_name: &str,
) -> Result<ExperimentResult> {
    cfg.validate()?;
    let started = Instant::now();
    let spec = cfg.build_world()?;
    let test_set = make_test_set(&spec, cfg.test_size, cfg.world.world_seed)?;
    let mut runs = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        runs.push(run_seed_loop(cfg, &spec, &test_set, opts, seed)?);
    }
    Ok(ExperimentResult {
        strategy_name: strategy_name.to_string(),
        runs,
        wall_time_secs: started.elapsed().as_secs_f64(),
    })
}
