use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod config;
mod output;

use config::ExperimentConfig;

/// Bayesian estimation of temperature-dependent thermal conductivity.
#[derive(Debug, Parser)]
#[command(name = "heatcond", version)]
struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve the forward problem for the truth model.
    Simulate(Common),
    /// Write synthetic noisy measurements.
    GenerateData {
        #[command(flatten)]
        common: Common,
        /// Write noiseless data (D = T).
        #[arg(long)]
        noise_off: bool,
    },
    /// Finite-difference sensitivity matrix and identifiability report.
    Sensitivity(Common),
    /// Run adaptive and fixed-proposal MCMC and summarize the posterior.
    Infer {
        #[command(flatten)]
        common: Common,
        /// Number of independent chains, seeded consecutively.
        #[arg(long)]
        chains: Option<usize>,
        /// Seed of the synthetic data (the sampler seed is `--seed`).
        #[arg(long)]
        data_seed: Option<u64>,
        #[arg(long, value_enum, default_value_t = Scale::Full)]
        scale: Scale,
    },
    /// Recompute summaries and bands from stored chains.
    Report {
        /// Run directory written by `infer`.
        run: PathBuf,
        /// Override the stored burn-in.
        #[arg(long)]
        burn_in: Option<usize>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Scale {
    /// Budgets as configured.
    Full,
    /// Sampler budgets divided by ten, or the preset's desk budgets.
    Desk,
}

#[derive(Debug, Args)]
struct Common {
    /// Built-in experiment preset.
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    /// JSON experiment configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of finite elements.
    #[arg(long)]
    elements: Option<usize>,
    /// Random seed (data noise, or the sampler for `infer`).
    #[arg(long)]
    seed: Option<u64>,
    /// Output root directory.
    #[arg(long, env = "HEATCOND_OUT", default_value = "heatcond-out")]
    out: PathBuf,
}

impl Common {
    fn load(&self) -> anyhow::Result<ExperimentConfig> {
        let mut cfg = match (&self.preset, &self.config) {
            (Some(p), _) => ExperimentConfig::preset(p)?,
            (None, Some(path)) => ExperimentConfig::load(path)?,
            (None, None) => ExperimentConfig::preset("reference-forward")?,
        };
        if let Some(n) = self.elements {
            cfg.elements = n;
        }
        Ok(cfg)
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let argv: Vec<String> = std::env::args().collect();
    match cli.command {
        Command::Simulate(c) => {
            let mut cfg = c.load()?;
            if let Some(s) = c.seed {
                cfg.data.seed = s;
            }
            commands::simulate(&cfg, &c.out, &argv)
        }
        Command::GenerateData {
            common: c,
            noise_off,
        } => {
            let mut cfg = c.load()?;
            if let Some(s) = c.seed {
                cfg.data.seed = s;
            }
            if noise_off {
                cfg.data.noise_scale = 0.0;
            }
            commands::generate_data(&cfg, &c.out, &argv)
        }
        Command::Sensitivity(c) => {
            let mut cfg = c.load()?;
            if let Some(s) = c.seed {
                cfg.data.seed = s;
            }
            commands::sensitivity(&cfg, &c.out, &argv)
        }
        Command::Infer {
            common: c,
            chains,
            data_seed,
            scale,
        } => {
            let mut cfg = c.load()?;
            if let Some(s) = c.seed {
                cfg.inference.seed = s;
            }
            if let Some(s) = data_seed {
                cfg.data.seed = s;
            }
            if let Some(k) = chains {
                cfg.inference.chains = k;
            }
            if scale == Scale::Desk {
                cfg.inference.apply_desk_scale();
            }
            commands::infer(&cfg, &c.out, &argv, scale)
        }
        Command::Report { run, burn_in } => commands::report(&run, burn_in),
    }
}

/// 2 for configuration and input errors, 3 for numerical failures.
fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<heatcond::Error>() {
        Some(e) if e.is_numerical() => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
