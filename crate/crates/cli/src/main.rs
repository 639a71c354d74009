use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use cotton_phenology::GddConvention;
use cotton_phenology_cli::commands;
use cotton_phenology_cli::config::{Overrides, PipelineConfig};
use cotton_phenology_cli::exit_code;

#[derive(Clone, Copy, Debug, ValueEnum)]
enum GddArg {
    Mean,
    Paper,
}

impl From<GddArg> for GddConvention {
    fn from(g: GddArg) -> Self {
        match g {
            GddArg::Mean => GddConvention::Mean,
            GddArg::Paper => GddConvention::Paper,
        }
    }
}

/// Within-season cotton phenology estimation with fuzzy c-means.
#[derive(Debug, Parser)]
#[command(name = "phenofcm", version)]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for clustering, feature search, validation split and synth.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// First day of year of the season window.
    #[arg(long, global = true)]
    start_doy: Option<u32>,
    /// Last day of year of the season window.
    #[arg(long, global = true)]
    end_doy: Option<u32>,
    /// Daily growing-degree-day formula.
    #[arg(long, global = true, value_enum)]
    gdd_convention: Option<GddArg>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a phenology model on training-season data.
    Fit,
    /// Predict stage metaclasses day by day.
    Predict {
        /// Model or ensemble file.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        satellite: Option<PathBuf>,
        #[arg(long)]
        weather: Option<PathBuf>,
    },
    /// Score predictions against ground observations.
    Evaluate {
        #[arg(long)]
        predictions: Option<PathBuf>,
        #[arg(long)]
        ground_truth: Option<PathBuf>,
        /// Predictions of a comparison model.
        #[arg(long)]
        baseline: Option<PathBuf>,
    },
    /// Two-phase feature-subset search and ensemble construction.
    Search,
    /// Generate a synthetic dataset with known stages.
    Synth {
        #[arg(long)]
        fields: Option<usize>,
        /// Noise level; 0 gives clean, cloud-free data.
        #[arg(long)]
        noise: Option<f64>,
    },
    /// Figures and their data tables.
    Report {
        #[arg(long)]
        predictions: Option<PathBuf>,
        #[arg(long)]
        satellite: Option<PathBuf>,
        #[arg(long)]
        ground_truth: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> cotton_phenology::Result<commands::Outcome> {
    let overrides = Overrides {
        seed: cli.seed,
        start_doy: cli.start_doy,
        end_doy: cli.end_doy,
        gdd_convention: cli.gdd_convention.map(Into::into),
        out_dir: cli.out,
    };
    let mut cfg = PipelineConfig::load(cli.config.as_deref(), &overrides)?;
    match cli.command {
        Command::Fit => commands::cmd_fit(&cfg),
        Command::Predict {
            model,
            satellite,
            weather,
        } => commands::cmd_predict(&cfg, model.as_deref(), satellite.as_deref(), weather.as_deref()),
        Command::Evaluate {
            predictions,
            ground_truth,
            baseline,
        } => commands::cmd_evaluate(
            &cfg,
            predictions.as_deref(),
            ground_truth.as_deref(),
            baseline.as_deref(),
        ),
        Command::Search => commands::cmd_search(&cfg),
        Command::Synth { fields, noise } => {
            if let Some(f) = fields {
                cfg.synth.fields = f;
            }
            if let Some(n) = noise {
                cfg.synth.noise = n;
            }
            cfg.validate()?;
            commands::cmd_synth(&cfg)
        }
        Command::Report {
            predictions,
            satellite,
            ground_truth,
        } => commands::cmd_report(
            &cfg,
            predictions.as_deref(),
            satellite.as_deref(),
            ground_truth.as_deref(),
        ),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(outcome) => {
            println!("{}", outcome.summary);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
