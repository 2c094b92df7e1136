//! Command-line front end: training comparison, alpha sweep, evaluation,
//! latency bench, and a guidance prompt preview.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use hric::harness::{
    cli_bench, cli_evaluate, cli_guidance_dry_run, cli_sweep_alpha, cli_train, load_config,
    ExperimentConfig,
};

#[derive(Parser)]
#[command(name = "hric", version, about = "IAB power-allocation laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand; each one overrides the corresponding
/// config key when given.
#[derive(Args)]
struct Common {
    /// Experiment config file (TOML); omitted keys take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for CSVs, checkpoints, and the manifest.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Comma-separated seeds, e.g. 1,2,3.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Guidance provider.
    #[arg(long, value_parser = ["heuristic", "endpoint"])]
    provider: Option<String>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut config = match &self.config {
            Some(path) => load_config(path)
                .with_context(|| format!("loading config {}", path.display()))?,
            None => ExperimentConfig::default(),
        };
        if let Some(output) = &self.output {
            config.output_dir = output.clone();
        }
        if let Some(seeds) = &self.seeds {
            config.seeds = seeds.clone();
        }
        if let Some(provider) = &self.provider {
            config.guidance.provider = provider.clone();
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train the configured methods over the configured seeds and write
    /// training curves plus a summary table.
    Train {
        #[command(flatten)]
        common: Common,
        /// Comma-separated methods: hric, hric-w0.9, dln, dcn, epa.
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<String>>,
        /// Training epochs per run.
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Evaluate methods across a grid of bandwidth-partition ratios.
    SweepAlpha {
        #[command(flatten)]
        common: Common,
        /// Comma-separated alpha grid, each in [0,1].
        #[arg(long, value_delimiter = ',', default_value = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9")]
        alphas: Vec<f64>,
        /// Test episodes (network drops) per grid cell.
        #[arg(long, default_value_t = 20)]
        drops: usize,
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<String>>,
    },
    /// Evaluate one method over noise-free test episodes.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        method: String,
        /// Directory holding agent checkpoints written by `train`.
        #[arg(long)]
        checkpoint_dir: Option<PathBuf>,
        #[arg(long, default_value_t = 50)]
        episodes: usize,
    },
    /// Measure policy inference latency and write one row per sample.
    Bench {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 500)]
        samples: usize,
    },
    /// Print the guidance prompt for a synthetic scenario without
    /// contacting any endpoint.
    GuidanceDryRun {
        #[command(flatten)]
        common: Common,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Train {
            common,
            methods,
            epochs,
        } => {
            let mut config = common.load()?;
            if let Some(methods) = methods {
                config.methods = methods;
            }
            if let Some(epochs) = epochs {
                config.epochs = epochs;
                // A stale schedule for a different epoch count would fail
                // validation; let it re-derive from the new total.
                config.schedule = None;
            }
            config.validate()?;
            let rows = cli_train(&config)?;
            println!("method,median_final10_throughput");
            for row in rows {
                println!("{},{}", row.method, row.median_final10_throughput);
            }
        }
        Command::SweepAlpha {
            common,
            alphas,
            drops,
            methods,
        } => {
            if alphas.is_empty() {
                bail!("alpha grid must not be empty");
            }
            let mut config = common.load()?;
            if let Some(methods) = methods {
                config.methods = methods;
            }
            let rows = cli_sweep_alpha(&config, &alphas, drops)?;
            println!("alpha,method,mean_throughput,stderr");
            for row in rows {
                println!(
                    "{},{},{},{}",
                    row.alpha, row.method, row.mean_throughput, row.stderr
                );
            }
        }
        Command::Evaluate {
            common,
            method,
            checkpoint_dir,
            episodes,
        } => {
            let config = common.load()?;
            let report = cli_evaluate(&config, &method, checkpoint_dir.as_deref(), episodes)?;
            println!(
                "{}: mean total throughput {} bit/s over {} episodes",
                report.method,
                report.mean_total_throughput,
                report.per_episode.len()
            );
        }
        Command::Bench { common, samples } => {
            let config = common.load()?;
            let report = cli_bench(&config, samples)?;
            println!(
                "policy inference over {} samples: min {:.6} ms, median {:.6} ms, p99 {:.6} ms",
                report.samples.len(),
                report.min_ms,
                report.median_ms,
                report.p99_ms
            );
            println!("({})", report.footnote);
        }
        Command::GuidanceDryRun { common } => {
            let config = common.load()?;
            print!("{}", cli_guidance_dry_run(&config)?);
        }
    }
    Ok(())
}
