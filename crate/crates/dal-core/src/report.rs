//! Metrics persistence and comparison: the per-cycle CSV, the summary
//! document, plot-ready figure files, and the oracle-cost comparison table.
//!
//! Outputs are deterministic byte-for-byte given the same configuration,
//! except for the wall-time line of the summary document.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::baselines::run_strategy;
use crate::config::ExperimentConfig;
use crate::dal::{mean_std, ExperimentResult};
use crate::{Error, Result};

/// Column order of `metrics.csv`.
pub const CSV_HEADER: &str =
    "strategy,seed,cycle,cumulative_oracle,cumulative_auto,test_accuracy,alpha,noise_rate";

/// One `metrics.csv` row: one per (strategy, seed, cycle).
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub strategy: String,
    pub seed: u64,
    pub cycle: usize,
    pub cumulative_oracle: usize,
    pub cumulative_auto: usize,
    pub test_accuracy: f64,
    pub alpha: f64,
    pub noise_rate: f64,
}

impl MetricsRow {
    fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{:.6},{:.6},{:.6}",
            self.strategy,
            self.seed,
            self.cycle,
            self.cumulative_oracle,
            self.cumulative_auto,
            self.test_accuracy,
            self.alpha,
            self.noise_rate
        )
    }
}

/// Flatten a result into rows, seeds in configuration order, cycles ascending.
pub fn rows_from_result(result: &ExperimentResult) -> Vec<MetricsRow> {
    let mut rows = Vec::new();
    for run in &result.runs {
        for c in &run.cycles {
            rows.push(MetricsRow {
                strategy: result.strategy_name.clone(),
                seed: run.seed,
                cycle: c.cycle,
                cumulative_oracle: c.cumulative_oracle,
                cumulative_auto: c.cumulative_auto,
                test_accuracy: c.test_accuracy,
                alpha: c.alpha,
                noise_rate: c.noise_rate,
            });
        }
    }
    rows
}

pub fn render_metrics_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&row.to_csv_line());
        out.push('\n');
    }
    out
}

/// Paths written by [`run`].
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub metrics_path: PathBuf,
    pub summary_path: PathBuf,
    pub figure_paths: Vec<PathBuf>,
    pub result: ExperimentResult,
}

/// Execute the configured strategy and persist all outputs in
/// `cfg.output_dir`. A `.partial` marker exists while the run is in flight
/// and is removed on success, so an interrupted run leaves it behind.
pub fn run(cfg: &ExperimentConfig) -> Result<RunArtifacts> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.output_dir)?;
    let marker = cfg.output_dir.join(".partial");
    fs::write(&marker, "run in progress\n")?;

    let result = run_strategy(cfg.strategy, cfg)?;
    let rows = rows_from_result(&result);

    let metrics_path = cfg.output_dir.join("metrics.csv");
    fs::write(&metrics_path, render_metrics_csv(&rows))?;

    let summary_path = cfg.output_dir.join("summary.txt");
    fs::write(&summary_path, render_summary(cfg, &result))?;

    let resolved_path = cfg.output_dir.join("config.toml");
    fs::write(&resolved_path, cfg.to_toml()?)?;

    let fig_acc = cfg.output_dir.join("fig_accuracy_vs_oracle.csv");
    fs::write(&fig_acc, render_accuracy_vs_oracle(&result))?;
    let fig_corr = cfg.output_dir.join("fig_correction.csv");
    fs::write(&fig_corr, render_correction_quantities(&result))?;
    let fig_alpha = cfg.output_dir.join("fig_alpha_vs_cycle.csv");
    fs::write(&fig_alpha, render_alpha_vs_cycle(&result))?;

    fs::remove_file(&marker)?;
    Ok(RunArtifacts {
        metrics_path,
        summary_path,
        figure_paths: vec![fig_acc, fig_corr, fig_alpha],
        result,
    })
}

fn render_summary(cfg: &ExperimentConfig, result: &ExperimentResult) -> String {
    let (acc_mean, acc_std) = result.final_accuracy();
    let mut s = String::new();
    let _ = writeln!(s, "strategy: {}", result.strategy_name);
    let _ = writeln!(
        s,
        "world: {} classes, latent dim {}, feature dim {}, sigma {}, mean generation accuracy {:.4}",
        cfg.world.class_count,
        cfg.world.latent_dim,
        cfg.world.feature_dim,
        cfg.world.sigma,
        cfg.world.gen_accuracy.mean(cfg.world.class_count),
    );
    let _ = writeln!(s, "seeds: {:?}", cfg.seeds);
    let _ = writeln!(
        s,
        "cycles per seed: {:?}",
        result.runs.iter().map(|r| r.cycles.len() - 1).collect::<Vec<_>>()
    );
    let _ = writeln!(s, "final test accuracy: {acc_mean:.4} +/- {acc_std:.4}");
    let _ = writeln!(
        s,
        "total oracle labels (mean across seeds): {:.1}",
        result.mean_total_oracle()
    );
    let _ = writeln!(s, "wall time: {:.3} s", result.wall_time_secs);
    s
}

/// Mean over seeds of a per-cycle quantity; cycles missing in a seed (budget
/// stop) are aggregated over the seeds that have them.
fn per_cycle_stats(
    result: &ExperimentResult,
    quantity: impl Fn(&crate::dal::CycleMetrics) -> f64,
) -> Vec<(usize, f64, f64, usize)> {
    let max_cycle = result
        .runs
        .iter()
        .filter_map(|r| r.cycles.last().map(|c| c.cycle))
        .max()
        .unwrap_or(0);
    (0..=max_cycle)
        .filter_map(|k| {
            let vals: Vec<f64> = result
                .runs
                .iter()
                .filter_map(|r| r.cycles.iter().find(|c| c.cycle == k).map(&quantity))
                .collect();
            if vals.is_empty() {
                return None;
            }
            let (m, s) = mean_std(&vals);
            Some((k, m, s, vals.len()))
        })
        .collect()
}

fn render_accuracy_vs_oracle(result: &ExperimentResult) -> String {
    let oracle = per_cycle_stats(result, |c| c.cumulative_oracle as f64);
    let acc = per_cycle_stats(result, |c| c.test_accuracy);
    let mut s = String::from("cycle,mean_cumulative_oracle,mean_test_accuracy,std_test_accuracy,n_seeds\n");
    for ((k, o, _, n), (_, a, a_std, _)) in oracle.iter().zip(acc.iter()) {
        let _ = writeln!(s, "{k},{o:.6},{a:.6},{a_std:.6},{n}");
    }
    s
}

fn render_correction_quantities(result: &ExperimentResult) -> String {
    let acc = per_cycle_stats(result, |c| c.test_accuracy);
    let noise = per_cycle_stats(result, |c| c.noise_rate);
    let mut s =
        String::from("cycle,mean_test_accuracy,std_test_accuracy,mean_noise_rate,std_noise_rate\n");
    for ((k, a, a_std, _), (_, nr, nr_std, _)) in acc.iter().zip(noise.iter()) {
        let _ = writeln!(s, "{k},{a:.6},{a_std:.6},{nr:.6},{nr_std:.6}");
    }
    s
}

/// Trailing mean over a window of up to `window` values ending at each index.
pub fn smooth_trailing(xs: &[f64], window: usize) -> Vec<f64> {
    assert!(window >= 1);
    xs.iter()
        .enumerate()
        .map(|(i, _)| {
            let lo = i.saturating_sub(window - 1);
            let slice = &xs[lo..=i];
            slice.iter().sum::<f64>() / slice.len() as f64
        })
        .collect()
}

fn render_alpha_vs_cycle(result: &ExperimentResult) -> String {
    let alpha: Vec<(usize, f64, f64, usize)> = per_cycle_stats(result, |c| c.alpha)
        .into_iter()
        .filter(|(k, ..)| *k >= 1)
        .collect();
    let means: Vec<f64> = alpha.iter().map(|(_, m, ..)| *m).collect();
    let smoothed = smooth_trailing(&means, 3);
    let mut s = String::from("cycle,mean_alpha,smoothed_mean_alpha\n");
    for ((k, m, _, _), sm) in alpha.iter().zip(smoothed.iter()) {
        let _ = writeln!(s, "{k},{m:.6},{sm:.6}");
    }
    s
}

/// Parsed metrics file.
#[derive(Debug, Clone)]
pub struct MetricsFile {
    pub path: PathBuf,
    pub rows: Vec<MetricsRow>,
}

/// Read and validate a metrics CSV against the fixed schema.
pub fn read_metrics_csv(path: &Path) -> Result<MetricsFile> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Schema(format!("{}: empty file", path.display())))?;
    if header != CSV_HEADER {
        return Err(Error::Schema(format!(
            "{}: expected columns [{}], got [{}]",
            path.display(),
            CSV_HEADER,
            header
        )));
    }
    let mut rows = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 8 {
            return Err(Error::Schema(format!(
                "{}:{}: expected 8 fields, got {}",
                path.display(),
                lineno + 2,
                parts.len()
            )));
        }
        let field = |i: usize| -> &str { parts[i] };
        let parse_err = |col: &str| {
            Error::Schema(format!(
                "{}:{}: could not parse column {col}",
                path.display(),
                lineno + 2
            ))
        };
        rows.push(MetricsRow {
            strategy: field(0).to_string(),
            seed: field(1).parse().map_err(|_| parse_err("seed"))?,
            cycle: field(2).parse().map_err(|_| parse_err("cycle"))?,
            cumulative_oracle: field(3).parse().map_err(|_| parse_err("cumulative_oracle"))?,
            cumulative_auto: field(4).parse().map_err(|_| parse_err("cumulative_auto"))?,
            test_accuracy: field(5).parse().map_err(|_| parse_err("test_accuracy"))?,
            alpha: field(6).parse().map_err(|_| parse_err("alpha"))?,
            noise_rate: field(7).parse().map_err(|_| parse_err("noise_rate"))?,
        });
    }
    Ok(MetricsFile {
        path: path.to_path_buf(),
        rows,
    })
}

/// Mean oracle labels needed to first reach each accuracy level, per strategy
/// column; `None` when any seed never reaches the level.
#[derive(Debug, Clone)]
pub struct ComparisonTable {
    pub levels: Vec<f64>,
    /// (column label, per-level mean oracle cost)
    pub columns: Vec<(String, Vec<Option<f64>>)>,
}

pub const DEFAULT_LEVELS: [f64; 6] = [0.70, 0.75, 0.80, 0.85, 0.90, 0.95];

/// Oracle labels at which each seed first reaches `level`; `None` if any seed
/// never does.
pub fn oracle_cost_to_reach(rows: &[MetricsRow], level: f64) -> Option<f64> {
    let mut seeds: Vec<u64> = rows.iter().map(|r| r.seed).collect();
    seeds.sort_unstable();
    seeds.dedup();
    let mut costs = Vec::with_capacity(seeds.len());
    for seed in seeds {
        let mut per_seed: Vec<&MetricsRow> = rows.iter().filter(|r| r.seed == seed).collect();
        per_seed.sort_by_key(|r| r.cycle);
        match per_seed.iter().find(|r| r.test_accuracy >= level) {
            Some(row) => costs.push(row.cumulative_oracle as f64),
            None => return None,
        }
    }
    Some(costs.iter().sum::<f64>() / costs.len() as f64)
}

/// Build the comparison table over ≥ 2 metrics files.
pub fn compare(paths: &[PathBuf], levels: &[f64]) -> Result<ComparisonTable> {
    if paths.len() < 2 {
        return Err(Error::InvalidInput(
            "compare needs at least two metrics files".into(),
        ));
    }
    let mut columns: Vec<(String, Vec<Option<f64>>)> = Vec::new();
    for path in paths {
        let file = read_metrics_csv(path)?;
        let mut strategies: Vec<String> = file.rows.iter().map(|r| r.strategy.clone()).collect();
        strategies.sort();
        strategies.dedup();
        for strategy in strategies {
            let rows: Vec<MetricsRow> = file
                .rows
                .iter()
                .filter(|r| r.strategy == strategy)
                .cloned()
                .collect();
            let costs: Vec<Option<f64>> = levels
                .iter()
                .map(|&level| oracle_cost_to_reach(&rows, level))
                .collect();
            let mut label = strategy;
            let duplicates = columns.iter().filter(|(l, _)| l.split(" #").next() == Some(&label)).count();
            if duplicates > 0 {
                label = format!("{label} #{}", duplicates + 1);
            }
            columns.push((label, costs));
        }
    }
    Ok(ComparisonTable {
        levels: levels.to_vec(),
        columns,
    })
}

impl ComparisonTable {
    /// Plain-text table: one row per accuracy level, one column per strategy,
    /// cells are mean oracle labels to first reach the level.
    pub fn render(&self) -> String {
        const NOT_REACHED: &str = "not reached";
        let mut widths: Vec<usize> = self
            .columns
            .iter()
            .map(|(label, _)| label.len().max(NOT_REACHED.len()))
            .collect();
        for (j, (_, cells)) in self.columns.iter().enumerate() {
            for cell in cells {
                let text = match cell {
                    Some(v) => format!("{v:.1}"),
                    None => NOT_REACHED.to_string(),
                };
                widths[j] = widths[j].max(text.len());
            }
        }
        let mut s = String::new();
        let _ = write!(s, "{:<10}", "accuracy");
        for ((label, _), w) in self.columns.iter().zip(&widths) {
            let _ = write!(s, "  {label:>w$}");
        }
        s.push('\n');
        for (i, level) in self.levels.iter().enumerate() {
            let _ = write!(s, "{:<10.2}", level);
            for ((_, cells), w) in self.columns.iter().zip(&widths) {
                let text = match cells[i] {
                    Some(v) => format!("{v:.1}"),
                    None => NOT_REACHED.to_string(),
                };
                let _ = write!(s, "  {text:>w$}");
            }
            s.push('\n');
        }
        s
    }
}
