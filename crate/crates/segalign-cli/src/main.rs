//! `segalign`: synthetic data, training, decoding and evaluation from the
//! command line.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "segalign", version, about = "Transcript-constrained action segmentation with a segment-level beam search")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Flat TOML configuration file.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    /// Override one configuration key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    sets: Vec<String>,
    /// Master seed; falls back to the configuration, then $SEGALIGN_SEED.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Dataset directory.
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for per-video work (0: all cores).
    #[arg(short, long, global = true)]
    jobs: Option<usize>,
    /// Duration model used for decoding: durnet, poisson or uniform.
    #[arg(long, global = true)]
    duration_model: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset.
    Synth,
    /// Fit all models on the training references without realignment.
    Fit,
    /// Fit, then realign and retrain the frame recognizer for `rounds` rounds.
    Train {
        /// Keep existing models instead of training.
        #[arg(long)]
        resume: bool,
    },
    /// Decode a split with the trained models.
    Align {
        #[arg(long)]
        split: Option<String>,
        #[arg(long)]
        beam_size: Option<usize>,
    },
    /// Score alignments against the references of a split.
    Eval {
        #[arg(long)]
        split: Option<String>,
        /// Predicted alignments; defaults to `<out>/aligned`.
        #[arg(long)]
        pred: Option<PathBuf>,
        /// Decode with the trained models instead of reading predictions.
        #[arg(long, conflicts_with = "pred")]
        decode: bool,
    },
    /// Duration model by step mode grid.
    Ablate,
    /// Summarize a dataset and trained models.
    Inspect,
}

fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    let mut sets = g.sets.clone();
    let mut flag = |key: &str, value: Option<String>| {
        if let Some(v) = value {
            sets.push(format!("{key}={}", toml::Value::String(v)));
        }
    };
    flag("data", g.data.as_ref().map(|p| p.display().to_string()));
    flag("out", g.out.as_ref().map(|p| p.display().to_string()));
    flag("duration_model", g.duration_model.clone());
    match &cli.command {
        Command::Align { split, .. } | Command::Eval { split, .. } => flag("split", split.clone()),
        _ => {}
    }
    if let Command::Align { beam_size: Some(b), .. } = &cli.command {
        sets.push(format!("beam_size={b}"));
    }
    if let Some(j) = g.jobs {
        sets.push(format!("jobs={j}"));
    }
    let cfg = config::resolve(g.config.as_deref(), &sets, g.seed)?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build_global()
        .context("starting the worker pool")?;
    log::debug!("config hash {}", cfg.hash());

    match cli.command {
        Command::Synth => commands::synth(&cfg),
        Command::Fit => commands::fit(&cfg),
        Command::Train { resume } => commands::train(&cfg, resume),
        Command::Align { .. } => commands::align(&cfg),
        Command::Eval { pred, decode: false, .. } => commands::eval(&cfg, pred.as_deref()),
        Command::Eval { decode: true, .. } => commands::decode_and_eval(&cfg),
        Command::Ablate => commands::ablate(&cfg),
        Command::Inspect => commands::inspect(&cfg),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e:#}");
            ExitCode::FAILURE
        }
    }
}
