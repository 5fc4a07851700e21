use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use nestedrank::config::RunConfig;
use nestedrank::pipeline::{self, RunPaths, DEGENERATE_NOTICE};
use nestedrank::primitives::LabelKind;

/// Learning-to-rank with nested (two-level feed) feedback on a simulated world.
#[derive(Debug, Parser)]
#[command(name = "nestedrank", version)]
struct Cli {
    /// Run configuration (TOML). Defaults to the built-in desk profile.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory; overrides the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads. All stages currently run on one thread; values above 1
    /// are accepted and have no effect.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build the world and simulate logging sessions.
    Simulate,
    /// Label the logs and write train/validation/test datasets.
    Prepare {
        /// Replace L1 rewards by their inverse-propensity estimates.
        #[arg(long)]
        debias_l1: bool,
    },
    /// Tune and train a ranker per label.
    Train {
        /// Labels to train (repeatable). Defaults to all seven.
        #[arg(long = "label", value_name = "LABEL")]
        labels: Vec<LabelKind>,
    },
    /// Write the percent-DCG-loss matrix of the S1/S2/S3 models.
    EvaluateOffline,
    /// Compare the S1/S2/S3 models on the simulated online metric.
    EvaluateOnline,
    /// Run every stage and check the expected orderings.
    Reproduce {
        #[arg(long)]
        debias_l1: bool,
    },
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.out = out.clone();
    }
    if let Command::Prepare { debias_l1: true } | Command::Reproduce { debias_l1: true } = cli.command
    {
        config.labeling.debias_l1 = true;
    }
    config.validate()?;
    Ok(config)
}

fn run(cli: Cli) -> Result<ExitCode> {
    if cli.threads == 0 {
        bail!("--threads must be at least 1");
    }
    let config = load_config(&cli)?;
    let out = RunPaths::new(&config.out).root;
    match &cli.command {
        Command::Simulate => {
            let summary = pipeline::cmd_simulate(&config)?;
            println!("{}", summary.render());
        }
        Command::Prepare { .. } => {
            if config.world.l2_size == 0 {
                println!("{DEGENERATE_NOTICE}");
            }
            for s in pipeline::cmd_prepare(&config)? {
                println!(
                    "{:<10} groups {:>6}  rows {:>8}  positive rate {:.4}",
                    s.split.name(),
                    s.groups,
                    s.rows,
                    s.positive_rate
                );
            }
        }
        Command::Train { labels } => {
            let labels = if labels.is_empty() { LabelKind::ALL.to_vec() } else { labels.clone() };
            for s in pipeline::cmd_train(&config, &labels)? {
                println!(
                    "{:<7} trials {:>3}  best trial {:>3}  trees {:>4}  validation DCG@{} {:.5}",
                    s.label.to_string(),
                    s.trials,
                    s.best_trial,
                    s.trees,
                    config.training.early_stopping_k,
                    s.validation_dcg
                );
            }
        }
        Command::EvaluateOffline => {
            let matrix = pipeline::cmd_evaluate_offline(&config)?;
            print!("{}", matrix.render());
        }
        Command::EvaluateOnline => {
            let report = pipeline::cmd_evaluate_online(&config)?;
            print!("{}", report.render());
        }
        Command::Reproduce { .. } => {
            let outcome = pipeline::cmd_reproduce(&config)?;
            println!("{}\n", outcome.simulate.render());
            print!("{}\n{}\n", outcome.matrix.render(), outcome.online.render());
            println!("{}", outcome.render_checks());
            println!("artifacts in {}", out.display());
            if !outcome.checks.passed() {
                return Ok(ExitCode::from(2));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli).context("nestedrank failed") {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
