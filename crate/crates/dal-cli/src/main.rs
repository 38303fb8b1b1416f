//! `dal` — run active learning simulations and compare their oracle costs.
//!
//! Exit codes: 0 success, 1 configuration error, 2 runtime error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dal_core::config::{parse_config_with_overrides, presets};
use dal_core::report::{compare, run, DEFAULT_LEVELS};
use dal_core::Error;

#[derive(Parser)]
#[command(name = "dal", version, about = "Active learning by query synthesis from a disentangled generator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured strategy and write metrics, summary, and figure data.
    Run {
        /// Path to the TOML configuration.
        #[arg(long)]
        config: PathBuf,
        /// Override any config field by dotted path, e.g. --set train.learning_rate=0.05
        #[arg(long = "set", value_name = "PATH=VALUE")]
        overrides: Vec<String>,
        /// Shorthand for --set output_dir=...
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Tabulate oracle labels needed to reach accuracy levels across runs.
    Compare {
        /// Two or more metrics.csv files.
        files: Vec<PathBuf>,
        /// Comma-separated accuracy levels (default 0.70,0.75,0.80,0.85,0.90,0.95).
        #[arg(long)]
        levels: Option<String>,
    },
    /// List the built-in world presets.
    Presets,
}

fn split_override(raw: &str) -> Result<(String, String), Error> {
    match raw.split_once('=') {
        Some((path, value)) if !path.is_empty() => Ok((path.to_string(), value.to_string())),
        _ => Err(Error::Config(format!(
            "override {raw:?} must have the form path=value"
        ))),
    }
}

fn run_command(command: Command) -> Result<(), Error> {
    match command {
        Command::Run { config, overrides, output_dir } => {
            let text = std::fs::read_to_string(&config)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", config.display())))?;
            let mut pairs = Vec::with_capacity(overrides.len() + 1);
            for raw in &overrides {
                pairs.push(split_override(raw)?);
            }
            if let Some(dir) = output_dir {
                pairs.push(("output_dir".into(), dir.display().to_string()));
            }
            let cfg = parse_config_with_overrides(&text, &pairs)?;
            let artifacts = run(&cfg)?;
            let (acc, std) = artifacts.result.final_accuracy();
            println!(
                "{}: final accuracy {:.4} +/- {:.4}, mean oracle labels {:.1}",
                artifacts.result.strategy_name,
                acc,
                std,
                artifacts.result.mean_total_oracle()
            );
            println!("metrics: {}", artifacts.metrics_path.display());
            println!("summary: {}", artifacts.summary_path.display());
            for p in &artifacts.figure_paths {
                println!("figure data: {}", p.display());
            }
            Ok(())
        }
        Command::Compare { files, levels } => {
            let levels: Vec<f64> = match levels {
                None => DEFAULT_LEVELS.to_vec(),
                Some(raw) => raw
                    .split(',')
                    .map(|s| {
                        s.trim()
                            .parse::<f64>()
                            .map_err(|_| Error::Config(format!("bad accuracy level {s:?}")))
                    })
                    .collect::<Result<_, _>>()?,
            };
            let table = compare(&files, &levels)?;
            print!("{}", table.render());
            Ok(())
        }
        Command::Presets => {
            for p in presets() {
                println!(
                    "{:<12} n_seed={:<5} samples_per_cycle={:<5} {}",
                    p.name, p.n_seed, p.per_cycle, p.description
                );
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run_command(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
