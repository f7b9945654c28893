//! `sentibar` command-line driver.
//!
//! Exit codes: 0 success, 2 usage error, 3 parse error, 4 validation
//! error, 5 runtime error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sentibar::pipeline::{self, ErrorCategory, PipelineError, RunConfig};
use sentibar::synth::SynthConfig;

#[derive(Parser)]
#[command(name = "sentibar", version, about = "Sentiment-driven intraday direction pipeline")]
struct Cli {
    /// Run config (TOML).
    #[arg(long, global = true, default_value = "sentibar.toml")]
    config: PathBuf,
    /// Overrides the output directory from the config.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// error, warn, info, debug or trace.
    #[arg(long, global = true, default_value = "info")]
    log_level: log::LevelFilter,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and clean the raw bars and tweets.
    Ingest,
    /// Score tweets and build the feature matrix.
    Featurize,
    /// Walk-forward training and prediction.
    Train,
    /// Trade the predictions against random baselines.
    Backtest,
    /// Write the text summary.
    Report,
    /// Run every stage in order.
    Run,
    /// Write a synthetic dataset and a config for it.
    Synth {
        /// Target directory.
        dir: PathBuf,
        #[arg(long, default_value_t = 80)]
        days: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn exit_code(category: ErrorCategory) -> u8 {
    match category {
        ErrorCategory::Parse => 3,
        ErrorCategory::Validation => 4,
        ErrorCategory::Runtime => 5,
    }
}

fn load(cli: &Cli) -> Result<RunConfig, PipelineError> {
    let mut cfg = RunConfig::load(&cli.config)?;
    if let Some(out) = &cli.output {
        cfg.paths.output = out.clone();
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), PipelineError> {
    match &cli.command {
        Command::Synth { dir, days, seed } => {
            let mut synth = SynthConfig {
                days: *days,
                ..Default::default()
            };
            if let Some(s) = seed {
                synth.seed = *s;
            }
            pipeline::write_demo(dir, &synth)?;
            println!("{}", dir.join(pipeline::DEMO_CONFIG_FILE).display());
        }
        Command::Ingest => {
            let s = pipeline::ingest(&load(cli)?)?;
            println!(
                "{} bars, {} trading days, {} tweets kept of {}",
                s.bars, s.trading_days, s.tweets.kept, s.tweets.input
            );
        }
        Command::Featurize => {
            let m = pipeline::featurize(&load(cli)?)?;
            println!("{} rows, {} columns, {} days", m.rows, m.columns.len(), m.days);
        }
        Command::Train => {
            let s = pipeline::train(&load(cli)?)?;
            let auc = s.metrics.auc.map_or("undefined".to_string(), |a| format!("{a:.4}"));
            println!("{} predictions from {} folds, auc {auc}", s.metrics.n, s.folds);
        }
        Command::Backtest => {
            let c = pipeline::run_backtest(&load(cli)?)?.comparison;
            println!(
                "model {} random mean {} excess {} (beats {} of {})",
                c.model_total, c.baseline_mean_total, c.excess, c.models_beaten, c.n_models
            );
        }
        Command::Report => print!("{}", pipeline::report(&load(cli)?)?),
        Command::Run => print!("{}", pipeline::run_all(&load(cli)?)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(cli.log_level)
        .format_timestamp(None)
        .init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.category()))
        }
    }
}
