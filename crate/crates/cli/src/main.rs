//! `msm`: fit multiscale stick-breaking mixtures, calibrate priors, simulate
//! benchmark data and run replicated studies.

mod commands;
mod config;
mod error;
mod fit;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::RecipeOverrides;
use crate::config::FitConfig;
use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "msm", version, about = "Multiscale stick-breaking mixture density estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a single density to a CSV with a `y` column.
    Fit {
        #[arg(long)]
        data: PathBuf,
        /// JSON fit configuration; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the configured seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Fit group-specific densities with shared kernels to a CSV with `y,group` columns.
    FitGrouped {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Find alpha giving a prior expected scale for a given delta.
    Calibrate {
        #[arg(long, allow_negative_numbers = true)]
        delta: f64,
        #[arg(long)]
        expected_scale: f64,
        /// Print a JSON record instead of the bare value.
        #[arg(long)]
        json: bool,
        /// Also write the JSON record to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Draw a sample from a named scenario and tabulate its true density.
    Simulate {
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = msm_core::density::DEFAULT_GRID_POINTS)]
        grid_points: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// L1 distance and KL divergence between an estimate and a true density.
    Evaluate {
        #[arg(long)]
        estimate: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a replicated study: `delta_robustness` or `scenario_table`.
    Experiment {
        #[arg(long)]
        recipe: String,
        /// JSON recipe configuration; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        replicates: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        burn_in: Option<usize>,
        #[arg(long)]
        max_depth: Option<u32>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Prior mean scale totals over a grid of alpha and delta values.
    PriorWeights {
        #[arg(long, value_delimiter = ',', default_value = "1,5", allow_negative_numbers = true)]
        alphas: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "0,0.25,0.5,0.9")]
        deltas: Vec<f64>,
        #[arg(long, default_value_t = 10)]
        max_scale: u32,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_fit_config(path: Option<PathBuf>, seed: Option<u64>) -> CliResult<FitConfig> {
    let mut cfg = match path {
        Some(p) => FitConfig::load(&p)?,
        None => FitConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Fit {
            data,
            config,
            out,
            seed,
        } => fit::cmd_fit(&data, &load_fit_config(config, seed)?, out),
        Command::FitGrouped {
            data,
            config,
            out,
            seed,
        } => fit::cmd_fit_grouped(&data, &load_fit_config(config, seed)?, out),
        Command::Calibrate {
            delta,
            expected_scale,
            json,
            out,
        } => commands::cmd_calibrate(delta, expected_scale, json, out.as_deref()),
        Command::Simulate {
            scenario,
            n,
            seed,
            grid_points,
            out,
        } => commands::cmd_simulate(&scenario, n, seed, grid_points, &out),
        Command::Evaluate { estimate, truth, out } => commands::cmd_evaluate(&estimate, &truth, out.as_deref()),
        Command::Experiment {
            recipe,
            config,
            replicates,
            seed,
            n,
            iterations,
            burn_in,
            max_depth,
            out,
        } => {
            let over = RecipeOverrides {
                replicates,
                seed,
                n,
                iterations,
                burn_in,
                max_depth,
            };
            commands::cmd_experiment(&recipe, config.as_deref(), &over, &out)
        }
        Command::PriorWeights {
            alphas,
            deltas,
            max_scale,
            out,
        } => commands::cmd_prior_weights(&alphas, &deltas, max_scale, &out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let err = CliError::Usage(e.to_string().trim().to_string());
            eprintln!("{}", err.to_json());
            return ExitCode::from(err.exit_code());
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code())
        }
    }
}
