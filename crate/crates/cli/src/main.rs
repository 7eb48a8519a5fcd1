//! `glmf`: simulate, fit, impute, cross-validate and report.

mod commands;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Args, Parser, Subcommand};
use glmf_core::Method;

#[derive(Debug, Parser)]
#[command(name = "glmf", version, about = "Linked matrix factorization for batter-versus-pitcher batting averages")]
pub struct Cli {
    /// TOML file with defaults for any flag.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Worker threads for grid cells and folds (results do not depend on it).
    #[arg(long, global = true, value_parser = positive)]
    pub jobs: Option<usize>,
    /// Master seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the simulation study over a parameter grid.
    Simulate(SimulateArgs),
    /// Factorize a dataset, missing cells initialized as in imputation.
    Fit(FitArgs),
    /// Impute every matchup probability with one method.
    Impute(ImputeArgs),
    /// K-fold cross-validation of the imputation methods.
    Cv(CvArgs),
    /// List the most favorable matchups of an imputation.
    Report(ReportArgs),
    /// Write season tables for a synthetic league.
    SynthData(SynthArgs),
}

fn positive(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(v) => Ok(v),
        Err(e) => Err(e.to_string()),
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Score/loading standard deviations.
    #[arg(long, value_delimiter = ',')]
    pub sigma: Vec<f64>,
    /// Maximum at-bats per cell.
    #[arg(long, value_delimiter = ',')]
    pub nmax: Vec<u32>,
    /// True ranks (also the fitted rank).
    #[arg(long, value_delimiter = ',', value_parser = positive)]
    pub rank: Vec<usize>,
    /// Replicates per grid cell.
    #[arg(long, value_parser = positive)]
    pub reps: Option<usize>,
    /// Block sizes as m1,n1,m2,n2.
    #[arg(long, value_delimiter = ',', num_args = 1, value_parser = positive)]
    pub dims: Vec<usize>,
    /// Share of X cells hidden and scored.
    #[arg(long)]
    pub missing: Option<f64>,
    /// Noise variance of Y and Z.
    #[arg(long)]
    pub error_variance: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub methods: Vec<Method>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Data directory (season tables or saved blocks).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// `glmf` or `lmf`.
    #[arg(long)]
    pub method: Option<Method>,
    #[arg(long, value_parser = positive)]
    pub rank: Option<usize>,
    /// Factorization JSON to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ImputeArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub method: Option<Method>,
    #[arg(long, value_parser = positive)]
    pub rank: Option<usize>,
    /// Factorization from `glmf fit` used as the first pass.
    #[arg(long, value_name = "FILE")]
    pub warm_start: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CvArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, value_parser = positive)]
    pub folds: Option<usize>,
    #[arg(long, value_delimiter = ',', value_parser = positive)]
    pub ranks: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    pub methods: Vec<Method>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// `p_hat.csv` or the `impute` output directory holding it.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub top: usize,
    /// CSV file to write instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory; defaults to the data directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_parser = positive)]
    pub batters: Option<usize>,
    #[arg(long, value_parser = positive)]
    pub pitchers: Option<usize>,
    /// Players below the roster thresholds.
    #[arg(long)]
    pub short_batters: Option<usize>,
    #[arg(long)]
    pub short_pitchers: Option<usize>,
    /// Matchups with at least one at-bat.
    #[arg(long, value_parser = positive)]
    pub observed: Option<usize>,
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
    match commands::run(cli) {
        Ok(commands::Outcome::Success) => ExitCode::SUCCESS,
        Ok(commands::Outcome::PartialFailure(n)) => {
            eprintln!("error: {n} unit(s) of work failed; see the outputs for details");
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
