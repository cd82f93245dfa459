use std::path::PathBuf;

use anyhow::Context;
use clap::{Parser, Subcommand};

mod commands;

#[derive(Parser)]
#[command(name = "amcmc", about = "Accelerated sampling on discrete state spaces", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment from a JSON config file or a built-in preset.
    Run {
        /// Path to a JSON experiment config.
        #[arg(long, conflicts_with = "preset")]
        config: Option<PathBuf>,
        /// Built-in preset name.
        #[arg(long)]
        preset: Option<String>,
        /// Overrides the seed from the config/preset.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory for trajectory CSVs and the run manifest.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Eigenstructure report for a graph/target pair.
    Spectrum {
        /// Graph spec, inline JSON or a path to a JSON file.
        #[arg(long)]
        graph: String,
        /// Target spec, inline JSON or a path to a JSON file.
        #[arg(long)]
        target: String,
        /// Damping for the accelerated system matrix (default: critical).
        #[arg(long)]
        damping: Option<f64>,
    },
    /// Fast invariant suite; nonzero exit on any failure.
    Validate,
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            preset,
            seed,
            out,
        } => {
            let mut cfg = match (&config, &preset) {
                (Some(path), None) => {
                    let text = std::fs::read_to_string(path)
                        .with_context(|| format!("reading {}", path.display()))?;
                    serde_json::from_str(&text)
                        .with_context(|| format!("parsing {}", path.display()))?
                }
                (None, Some(name)) => amcmc::presets::get(name)?,
                _ => anyhow::bail!("provide exactly one of --config or --preset"),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            cfg.validate()?;
            commands::run(&cfg, &out)
        }
        Command::Spectrum {
            graph,
            target,
            damping,
        } => commands::spectrum(&graph, &target, damping),
        Command::Validate => commands::validate(),
    }
}
