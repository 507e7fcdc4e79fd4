use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use glfm_cli::commands;
use glfm_cli::config::LoadedConfig;
use glfm_cli::corpus::CorpusConfig;

#[derive(Parser)]
#[command(name = "glfm", version, about = "Multi-class point-cloud anomaly detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Use only this many training clouds per class.
    #[arg(long)]
    train_per_class: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Fabricate anomalous copies of the training clouds.
    Synth(RunArgs),
    /// Extract local patch features.
    Features(RunArgs),
    /// Train the segmentation head on synthetic anomalies.
    Adapt(RunArgs),
    /// Build the global and local memory banks.
    Fit(RunArgs),
    /// Score the test clouds.
    Detect(RunArgs),
    /// Compute O-ROC, P-ROC and P-PRO.
    Eval(RunArgs),
    /// Write the built-in synthetic two-class corpus and a config for it.
    GenCorpus {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 2)]
        k: usize,
    },
}

fn load(args: &RunArgs) -> Result<LoadedConfig> {
    LoadedConfig::load(&args.config)?.with_train_per_class(args.train_per_class)
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Ok(n) = std::env::var("GLFM_THREADS") {
        let n: usize = n.parse().context("GLFM_THREADS must be a positive integer")?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let cli = Cli::parse();
    let started = std::time::Instant::now();
    match &cli.command {
        Command::Synth(a) => {
            commands::cmd_synth(&load(a)?)?;
        }
        Command::Features(a) => {
            commands::cmd_features(&load(a)?)?;
        }
        Command::Adapt(a) => {
            commands::cmd_adapt(&load(a)?)?;
        }
        Command::Fit(a) => {
            commands::cmd_fit(&load(a)?)?;
        }
        Command::Detect(a) => {
            commands::cmd_detect(&load(a)?)?;
        }
        Command::Eval(a) => {
            commands::cmd_eval(&load(a)?)?;
        }
        Command::GenCorpus { out, seed, k } => {
            let path = commands::cmd_gen_corpus(out, *seed, *k, &CorpusConfig::default())?;
            println!("{}", path.display());
        }
    }
    log::info!("done in {:.2} s", started.elapsed().as_secs_f64());
    Ok(())
}
