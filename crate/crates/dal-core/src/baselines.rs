//! Comparison strategies. Every strategy shares the same world, learner,
//! test set, seeds, and per-cycle sample count, so curve differences are
//! attributable to the strategy alone.

use serde::{Deserialize, Serialize};

use crate::acquisition::CodePolicy;
use crate::config::ExperimentConfig;
use crate::dal::{
    alpha_ratio, make_test_set, mean_std, run_with_options, CycleAudit, CycleMetrics,
    ExperimentResult, LoopOptions, SeedRun,
};
use crate::generator::draw_dataset;
use crate::learner::{evaluate, train_for_classes};
use crate::numerics::{streams, Rng};
use crate::{Error, Result};

/// The implemented strategies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StrategyKind {
    /// Entropy-optimized synthesis + agreement labeling + label correction.
    Dal,
    /// Ablation: agreement labeling without the correction pass.
    DalNoCorrection,
    /// Entropy-optimized synthesis, every sample oracle-labeled.
    GaalEntropy,
    /// Entropy-optimized synthesis with exact per-class uniform codes, every
    /// sample oracle-labeled.
    GaalUniformClasses,
    /// Unoptimized generation, every sample oracle-labeled.
    RandomGenerated,
    /// One-shot training on a pool-sized oracle-labeled generated dataset.
    FullSupervisedGenerated,
    /// One-shot training on a pool-sized dataset from the real distribution.
    FullSupervisedReal,
}

pub const ALL_STRATEGIES: [StrategyKind; 7] = [
    StrategyKind::Dal,
    StrategyKind::DalNoCorrection,
    StrategyKind::GaalEntropy,
    StrategyKind::GaalUniformClasses,
    StrategyKind::RandomGenerated,
    StrategyKind::FullSupervisedGenerated,
    StrategyKind::FullSupervisedReal,
];

impl StrategyKind {
    pub fn name(&self) -> &'static str {
        match self {
            StrategyKind::Dal => "dal",
            StrategyKind::DalNoCorrection => "dal-no-correction",
            StrategyKind::GaalEntropy => "gaal-entropy",
            StrategyKind::GaalUniformClasses => "gaal-uniform",
            StrategyKind::RandomGenerated => "random-generated",
            StrategyKind::FullSupervisedGenerated => "full-supervised-generated",
            StrategyKind::FullSupervisedReal => "full-supervised-real",
        }
    }

    pub fn from_name(s: &str) -> Result<Self> {
        ALL_STRATEGIES
            .iter()
            .find(|k| k.name() == s)
            .copied()
            .ok_or_else(|| {
                let names: Vec<&str> = ALL_STRATEGIES.iter().map(|k| k.name()).collect();
                Error::Config(format!(
                    "unknown strategy {s:?}; expected one of {}",
                    names.join(", ")
                ))
            })
    }

    /// Loop switches for the cycle-based strategies; `None` for the one-shot
    /// fully supervised baselines.
    pub fn loop_options(&self) -> Option<LoopOptions> {
        match self {
            StrategyKind::Dal => Some(LoopOptions::dal()),
            StrategyKind::DalNoCorrection => Some(LoopOptions {
                correction: false,
                ..LoopOptions::dal()
            }),
            StrategyKind::GaalEntropy => Some(LoopOptions {
                auto_labeling: false,
                correction: false,
                ..LoopOptions::dal()
            }),
            StrategyKind::GaalUniformClasses => Some(LoopOptions {
                auto_labeling: false,
                correction: false,
                code_policy: CodePolicy::RoundRobin,
                ..LoopOptions::dal()
            }),
            StrategyKind::RandomGenerated => Some(LoopOptions {
                optimize: false,
                auto_labeling: false,
                correction: false,
                code_policy: CodePolicy::UniformRandom,
            }),
            StrategyKind::FullSupervisedGenerated | StrategyKind::FullSupervisedReal => None,
        }
    }
}

impl Serialize for StrategyKind {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for StrategyKind {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = String::deserialize(d)?;
        StrategyKind::from_name(&raw).map_err(serde::de::Error::custom)
    }
}

/// Run one strategy end to end.
pub fn run_strategy(kind: StrategyKind, cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    match kind.loop_options() {
        Some(opts) => run_with_options(cfg, &opts, kind.name()),
        None => run_full_supervised(kind, cfg),
    }
}

/// The one-shot baselines: train once per seed on a pool-sized dataset
/// (generated with the configured confusion, or drawn from the real
/// distribution) and report a single row charging the whole pool to the
/// oracle.
fn run_full_supervised(kind: StrategyKind, cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let started = std::time::Instant::now();
    let spec = cfg.build_world()?;
    let train_spec = match kind {
        StrategyKind::FullSupervisedGenerated => spec.clone(),
        StrategyKind::FullSupervisedReal => spec.real_world(),
        other => {
            return Err(Error::Contract(format!(
                "{} is not a one-shot baseline",
                other.name()
            )))
        }
    };
    let test_set = make_test_set(&spec, cfg.test_size, cfg.world.world_seed)?;
    let mut runs = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        let mut pool_rng = Rng::substream(seed, &[streams::POOL]);
        let pool = draw_dataset(&train_spec, cfg.pool_size, &mut pool_rng)?;
        let mut train_rng = Rng::substream(seed, &[streams::TRAIN, cfg.train.seed, 0]);
        let (model, _) = train_for_classes(&pool, spec.class_count, &cfg.train, &mut train_rng)?;
        let accuracy = evaluate(&model, &test_set)?;
        let row = CycleMetrics {
            cycle: 0,
            test_accuracy: accuracy,
            oracle_this_cycle: cfg.pool_size,
            auto_this_cycle: 0,
            cumulative_oracle: cfg.pool_size,
            cumulative_auto: 0,
            alpha: alpha_ratio(cfg.pool_size, 0),
            noise_rate: 0.0,
        };
        runs.push(SeedRun {
            seed,
            cycles: vec![row],
            audits: vec![CycleAudit::default()],
        });
    }
    Ok(ExperimentResult {
        strategy_name: kind.name().to_string(),
        runs,
        wall_time_secs: started.elapsed().as_secs_f64(),
    })
}

/// Convenience: mean final accuracy across seeds for a result.
pub fn mean_final_accuracy(result: &ExperimentResult) -> f64 {
    let finals: Vec<f64> = result
        .runs
        .iter()
        .filter_map(|r| r.cycles.last().map(|c| c.test_accuracy))
        .collect();
    mean_std(&finals).0
}
