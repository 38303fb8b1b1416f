//! Experiment configuration: a TOML document with nested sections, named
//! presets, and dotted-path overrides.
//!
//! `strategy` and `output_dir` are required; everything else defaults.
//! A `preset` expands to a world plus (n_seed, samples_per_cycle); explicit
//! keys in the document override the preset, and `--set` overrides win over
//! both. Unknown keys anywhere are rejected.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use toml::Value;

use crate::acquisition::{AcquisitionConfig, CodePolicy};
use crate::baselines::StrategyKind;
use crate::generator::{build_world, GeneratorSpec, WorldParams};
use crate::learner::TrainConfig;
use crate::{Error, Result};

/// Per-class generation accuracy: one value for all classes or one per class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DiagSpec {
    Uniform(f64),
    PerClass(Vec<f64>),
}

impl DiagSpec {
    pub fn resolve(&self, class_count: usize) -> Result<Vec<f64>> {
        match self {
            DiagSpec::Uniform(a) => Ok(vec![*a; class_count]),
            DiagSpec::PerClass(v) => {
                if v.len() != class_count {
                    return Err(Error::Config(format!(
                        "world.gen_accuracy has {} entries, expected {class_count}",
                        v.len()
                    )));
                }
                Ok(v.clone())
            }
        }
    }

    pub fn mean(&self, class_count: usize) -> f64 {
        match self {
            DiagSpec::Uniform(a) => *a,
            DiagSpec::PerClass(v) => v.iter().sum::<f64>() / class_count as f64,
        }
    }
}

/// The `[world]` section: parameters of the procedurally built world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    pub class_count: usize,
    pub latent_dim: usize,
    pub feature_dim: usize,
    pub sigma: f64,
    pub real_sigma: f64,
    pub prototype_scale: f64,
    pub decoder_scale: f64,
    pub min_prototype_gap: f64,
    pub gen_accuracy: DiagSpec,
    pub confusable: Vec<Vec<usize>>,
    pub partner_mass: f64,
    pub world_seed: u64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        let p = WorldParams::default();
        Self {
            class_count: p.class_count,
            latent_dim: p.latent_dim,
            feature_dim: p.feature_dim,
            sigma: p.sigma,
            real_sigma: p.real_sigma,
            prototype_scale: p.prototype_scale,
            decoder_scale: p.decoder_scale,
            min_prototype_gap: p.min_prototype_gap,
            gen_accuracy: DiagSpec::Uniform(0.9),
            confusable: p.confusable,
            partner_mass: p.partner_mass,
            world_seed: p.world_seed,
        }
    }
}

impl WorldConfig {
    pub fn to_params(&self) -> Result<WorldParams> {
        Ok(WorldParams {
            class_count: self.class_count,
            latent_dim: self.latent_dim,
            feature_dim: self.feature_dim,
            sigma: self.sigma,
            real_sigma: self.real_sigma,
            prototype_scale: self.prototype_scale,
            decoder_scale: self.decoder_scale,
            min_prototype_gap: self.min_prototype_gap,
            gen_accuracy: self.gen_accuracy.resolve(self.class_count)?,
            confusable: self.confusable.clone(),
            partner_mass: self.partner_mass,
            world_seed: self.world_seed,
        })
    }
}

/// The `[acquisition]` section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AcquisitionSection {
    pub steps: usize,
    pub learning_rate: f64,
    /// 0 means "4 × samples_per_cycle".
    pub batch_size: usize,
    /// "uniform" or "round-robin".
    pub code_policy: String,
}

impl Default for AcquisitionSection {
    fn default() -> Self {
        Self {
            steps: 100,
            learning_rate: 0.001,
            batch_size: 0,
            code_policy: "uniform".into(),
        }
    }
}

impl AcquisitionSection {
    fn policy(&self) -> Result<CodePolicy> {
        match self.code_policy.as_str() {
            "uniform" => Ok(CodePolicy::UniformRandom),
            "round-robin" => Ok(CodePolicy::RoundRobin),
            other => Err(Error::Config(format!(
                "acquisition.code_policy must be \"uniform\" or \"round-robin\", got {other:?}"
            ))),
        }
    }
}

/// Fully resolved experiment configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub strategy: StrategyKind,
    pub n_seed: usize,
    #[serde(rename = "samples_per_cycle")]
    pub per_cycle: usize,
    /// Total oracle queries allowed (seed set excluded); cycles stop once the
    /// counter reaches it.
    pub budget: usize,
    pub max_cycles: usize,
    /// Dataset size of the one-shot fully supervised baselines.
    pub pool_size: usize,
    pub test_size: usize,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    pub world: WorldConfig,
    pub acquisition: AcquisitionSection,
    pub train: TrainConfig,
}

impl ExperimentConfig {
    /// Defaults in the standard world; used as the base every parse starts
    /// from.
    pub fn default_world_config() -> Self {
        Self {
            strategy: StrategyKind::Dal,
            n_seed: 100,
            per_cycle: 50,
            budget: 1000,
            max_cycles: 15,
            pool_size: 4000,
            test_size: 2000,
            seeds: vec![0, 1, 2, 3, 4],
            output_dir: PathBuf::from("out"),
            world: WorldConfig::default(),
            acquisition: AcquisitionSection::default(),
            train: TrainConfig::default(),
        }
    }

    pub fn acquisition_config(&self) -> AcquisitionConfig {
        let batch = if self.acquisition.batch_size == 0 {
            4 * self.per_cycle
        } else {
            self.acquisition.batch_size
        };
        AcquisitionConfig {
            per_cycle: self.per_cycle,
            batch_size: batch,
            steps: self.acquisition.steps,
            learning_rate: self.acquisition.learning_rate,
            code_policy: self.acquisition.policy().unwrap_or(CodePolicy::UniformRandom),
        }
    }

    pub fn build_world(&self) -> Result<GeneratorSpec> {
        build_world(&self.world.to_params()?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_seed == 0 {
            return Err(Error::Config("n_seed must be at least 1".into()));
        }
        if self.per_cycle == 0 {
            return Err(Error::Config("samples_per_cycle must be at least 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must not be empty".into()));
        }
        if self.test_size == 0 {
            return Err(Error::Config("test_size must be at least 1".into()));
        }
        if self.pool_size == 0 {
            return Err(Error::Config("pool_size must be at least 1".into()));
        }
        self.world.to_params()?;
        self.acquisition.policy()?;
        self.acquisition_config().validate()?;
        self.train.validate()?;
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self)
            .map_err(|e| Error::Config(format!("could not serialize config: {e}")))
    }
}

/// A named preset: world plus the (n_seed, samples_per_cycle) pair it fixes.
pub struct Preset {
    pub name: &'static str,
    pub n_seed: usize,
    pub per_cycle: usize,
    pub description: &'static str,
    pub world: WorldConfig,
}

/// The three built-in worlds. Generation-accuracy diagonals follow the
/// measured per-class accuracies of the corresponding benchmark generators;
/// confusable groups hold the classes that absorb each other's confusion
/// mass.
pub fn presets() -> Vec<Preset> {
    let mnist = WorldConfig {
        gen_accuracy: DiagSpec::PerClass(vec![
            0.996, 1.0, 0.982, 0.988, 0.97, 0.945, 0.993, 0.99, 0.988, 0.994,
        ]),
        confusable: vec![vec![3, 5, 8], vec![4, 9], vec![1, 7]],
        ..WorldConfig::default()
    };
    let fmnist = WorldConfig {
        gen_accuracy: DiagSpec::PerClass(vec![
            0.785, 0.998, 0.376, 0.821, 0.397, 0.728, 0.185, 0.715, 0.994, 0.974,
        ]),
        confusable: vec![vec![0, 3], vec![2, 4, 6], vec![5, 7, 9]],
        ..WorldConfig::default()
    };
    let cifar = WorldConfig {
        gen_accuracy: DiagSpec::PerClass(vec![
            0.819, 0.868, 0.535, 0.583, 0.591, 0.523, 0.889, 0.866, 0.819, 0.858,
        ]),
        confusable: vec![vec![2, 3, 4, 5], vec![0, 8], vec![1, 9], vec![6, 7]],
        ..WorldConfig::default()
    };
    vec![
        Preset {
            name: "mnist-like",
            n_seed: 100,
            per_cycle: 50,
            description: "high disentanglement (mean generation accuracy 0.985)",
            world: mnist,
        },
        Preset {
            name: "fmnist-like",
            n_seed: 100,
            per_cycle: 100,
            description: "low disentanglement with three confusable groups (mean 0.697)",
            world: fmnist,
        },
        Preset {
            name: "cifar-like",
            n_seed: 1000,
            per_cycle: 1000,
            description: "moderate disentanglement (mean 0.735)",
            world: cifar,
        },
    ]
}

fn preset_value(name: &str) -> Result<Value> {
    let preset = presets()
        .into_iter()
        .find(|p| p.name == name)
        .ok_or_else(|| {
            let names: Vec<&str> = presets().iter().map(|p| p.name).collect();
            Error::Config(format!(
                "unknown preset {name:?}; expected one of {}",
                names.join(", ")
            ))
        })?;
    let mut table = toml::map::Map::new();
    table.insert("n_seed".into(), Value::Integer(preset.n_seed as i64));
    table.insert(
        "samples_per_cycle".into(),
        Value::Integer(preset.per_cycle as i64),
    );
    table.insert(
        "world".into(),
        Value::try_from(&preset.world).map_err(|e| Error::Config(e.to_string()))?,
    );
    Ok(Value::Table(table))
}

/// Raw document shape; every absent field falls back to
/// [`ExperimentConfig::default_world_config`].
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[allow(dead_code)]
    preset: Option<String>,
    strategy: StrategyKind,
    n_seed: Option<usize>,
    samples_per_cycle: Option<usize>,
    budget: Option<usize>,
    max_cycles: Option<usize>,
    pool_size: Option<usize>,
    test_size: Option<usize>,
    seeds: Option<Vec<u64>>,
    output_dir: PathBuf,
    world: Option<WorldConfig>,
    acquisition: Option<AcquisitionSection>,
    train: Option<TrainConfig>,
}

fn deep_merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Table(b), Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => deep_merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Set `path` (dotted) to `value` inside a TOML tree, creating intermediate
/// tables. The value text is parsed as TOML; if that fails it is taken as a
/// bare string.
pub fn set_by_path(root: &mut Value, path: &str, value: &str) -> Result<()> {
    let parsed: Value = match toml::from_str::<toml::Table>(&format!("x = {value}")) {
        Ok(mut t) => t.remove("x").expect("key x just inserted"),
        Err(_) => Value::String(value.to_string()),
    };
    let mut node = root;
    let parts: Vec<&str> = path.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("invalid override path {path:?}")));
    }
    for (i, part) in parts.iter().enumerate() {
        let table = node
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override path {path:?} crosses a non-table")))?;
        if i == parts.len() - 1 {
            table.insert(part.to_string(), parsed);
            return Ok(());
        }
        node = table
            .entry(part.to_string())
            .or_insert_with(|| Value::Table(toml::map::Map::new()));
    }
    unreachable!("loop returns on last segment")
}

const REQUIRED_FIELDS: [&str; 2] = ["output_dir", "strategy"];

/// Parse and validate a configuration document.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    parse_config_with_overrides(text, &[])
}

/// Parse with `--set path=value` overrides applied on top of the document.
pub fn parse_config_with_overrides(
    text: &str,
    overrides: &[(String, String)],
) -> Result<ExperimentConfig> {
    let mut user: Value = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    for (path, value) in overrides {
        set_by_path(&mut user, path, value)?;
    }

    let missing: Vec<&str> = REQUIRED_FIELDS
        .iter()
        .filter(|k| user.get(k).is_none())
        .copied()
        .collect();
    if !missing.is_empty() {
        return Err(Error::Config(format!(
            "missing required fields: {}",
            missing.join(", ")
        )));
    }

    let merged = match user.get("preset").and_then(|v| v.as_str()) {
        Some(name) => {
            let mut base = preset_value(name)?;
            deep_merge(&mut base, user);
            base
        }
        None => {
            if user.get("preset").is_some() {
                return Err(Error::Config("preset must be a string".into()));
            }
            user
        }
    };

    let raw: RawConfig = merged
        .try_into()
        .map_err(|e| Error::Config(e.to_string()))?;
    let base = ExperimentConfig::default_world_config();
    let cfg = ExperimentConfig {
        strategy: raw.strategy,
        n_seed: raw.n_seed.unwrap_or(base.n_seed),
        per_cycle: raw.samples_per_cycle.unwrap_or(base.per_cycle),
        budget: raw.budget.unwrap_or(base.budget),
        max_cycles: raw.max_cycles.unwrap_or(base.max_cycles),
        pool_size: raw.pool_size.unwrap_or(base.pool_size),
        test_size: raw.test_size.unwrap_or(base.test_size),
        seeds: raw.seeds.unwrap_or(base.seeds),
        output_dir: raw.output_dir,
        world: raw.world.unwrap_or(base.world),
        acquisition: raw.acquisition.unwrap_or(base.acquisition),
        train: raw.train.unwrap_or(base.train),
    };
    cfg.validate()?;
    Ok(cfg)
}
