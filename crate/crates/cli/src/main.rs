use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rgd_core::error::RgdError;

mod artifacts;
mod commands;
mod config;
mod manifest;
mod plot;

/// Offline black-box optimization with proxy-guided conditional diffusion.
///
/// Configuration is layered: built-in defaults, then `--config`, then `RGD_*`
/// environment variables (`RGD_SAMPLER__STEPS=250` sets `sampler.steps`),
/// then the flags below.
#[derive(Parser, Debug)]
#[command(name = "rgd", version)]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Global {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory; every artifact lands here under a fixed name.
    #[arg(long, global = true)]
    pub out: Option<String>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Sampling strategy, e.g. `rgd`, `fixed_omega`, `cosine_increase:0,4`.
    #[arg(long, global = true)]
    pub strategy: Option<String>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate the capped offline dataset.
    GenData,
    /// Train the proxy or the score network.
    Train {
        #[arg(long, value_enum)]
        which: Which,
        /// Continue from the existing checkpoint and its optimizer state.
        #[arg(long)]
        resume: bool,
        /// Steps to run (defaults to the configured count).
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Refine the proxy against the diffusion posterior.
    Refine {
        /// Hold α fixed at this value instead of adapting it.
        #[arg(long)]
        freeze_alpha: Option<f64>,
    },
    /// Draw candidate designs.
    Sample {
        /// Seed group; each group gets its own chain seeds.
        #[arg(long, default_value_t = 0)]
        group: u64,
        #[arg(long, value_enum, default_value_t = ProxyChoice::Auto)]
        proxy: ProxyChoice,
    },
    /// Score a candidate file with the oracle.
    Evaluate {
        /// Defaults to the candidate file of the configured strategy.
        #[arg(long)]
        candidates: Option<PathBuf>,
    },
    /// Run every ablation variant across seed groups and the configured sweeps.
    Ablate,
    /// Write a static SVG figure.
    Plot {
        #[arg(value_enum)]
        kind: PlotKind,
        /// fig1: strategy whose candidates form the proxy-free baseline.
        #[arg(long, default_value = "fixed_omega")]
        baseline: String,
    },
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Which {
    Proxy,
    Diffusion,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProxyChoice {
    /// Refined proxy when present, otherwise the trained one.
    Auto,
    Refined,
    Unrefined,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    Fig1,
    Fig4,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let numerical = err
        .chain()
        .any(|e| e.downcast_ref::<RgdError>().is_some_and(RgdError::is_numerical));
    if numerical {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
