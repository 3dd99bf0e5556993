use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;

/// Minimum reservoir rule curves from historical inflows.
#[derive(Debug, Parser)]
#[command(name = "rulecurve", version)]
struct Cli {
    /// Only print warnings and errors.
    #[arg(short, long, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compute a rule curve.
    #[command(alias = "rulecurve")]
    Run(RunArgs),
    /// Support statistics, confidence matching and curve comparison.
    Analyze(AnalyzeArgs),
    /// Write a synthetic discharge dataset.
    Synth(SynthArgs),
}

#[derive(Debug, Args, Clone, Default)]
pub struct CommonArgs {
    /// TOML file with default values for any option.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Daily discharge CSV (river,date,discharge_m3s).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Reservoir spec TOML; the bundled Eupen dam when omitted.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// daily, weekly, monthly or custom:N.
    #[arg(long)]
    pub grid: Option<String>,
    /// Calendar month on which each year starts.
    #[arg(long)]
    pub year_start_month: Option<u32>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads; 0 uses every core, 1 runs sequentially.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Per-scenario solver: simplex or chain.
    #[arg(long)]
    pub solver: Option<String>,
}

#[derive(Debug, Args, Clone, Default)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// stochastic or robust.
    #[arg(long)]
    pub model: Option<String>,
    /// Scenario generation for the stochastic model: merge or mix.
    #[arg(long = "gen")]
    pub generation: Option<String>,
    /// Years per scenario (direct solves) or scenario length (with --mpc).
    #[arg(short)]
    pub k: Option<usize>,
    /// Build the curve with the receding-horizon loop.
    #[arg(long)]
    pub mpc: bool,
    /// Guarantee horizon of each receding-horizon window, in years.
    #[arg(long)]
    pub window_years: Option<usize>,
    /// Confidence level of the robust model.
    #[arg(long)]
    pub level: Option<f64>,
    /// One-sided confidence interval.
    #[arg(long)]
    pub one_sided: bool,
}

#[derive(Debug, Args, Clone, Default)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Scenario generation for the stochastic model: merge or mix.
    #[arg(long = "gen")]
    pub generation: Option<String>,
    /// Years per scenario.
    #[arg(short)]
    pub k: Option<usize>,
    /// Build the compared curves with the receding-horizon loop.
    #[arg(long)]
    pub mpc: bool,
    /// Candidate robust levels, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub levels: Option<Vec<f64>>,
    /// Current rule curve CSV (step,storage_m3) to compare against.
    #[arg(long)]
    pub current: Option<PathBuf>,
    /// Further rulecurve.json files to include in the comparison.
    #[arg(long = "curve")]
    pub curves: Vec<PathBuf>,
}

#[derive(Debug, Args, Clone, Default)]
pub struct SynthArgs {
    /// TOML file with default values for any option.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of calendar years.
    #[arg(long)]
    pub years: Option<usize>,
    #[arg(long)]
    pub first_year: Option<i32>,
    /// default, generous, marginal or stationary.
    #[arg(long)]
    pub preset: Option<String>,
    /// Output CSV path, `-` for stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = if cli.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .format_target(false)
        .init();

    let result = match cli.command {
        Command::Run(a) => commands::run(&a),
        Command::Analyze(a) => commands::analyze(&a),
        Command::Synth(a) => commands::synth(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let infeasible = e
                .chain()
                .any(|c| matches!(c.downcast_ref::<rulecurve_core::Error>(), Some(e) if e.is_infeasible()));
            ExitCode::from(if infeasible { 2 } else { 1 })
        }
    }
}
