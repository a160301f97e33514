//! Command-line front end: cohort simulation, replicated experiments, and
//! landmark analysis of cohort CSVs. Every command writes a `RunManifest`.

mod commands;
mod error;
mod manifest;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use commands::{analyze, experiment, km, simulate};
pub use error::CliError;
pub use manifest::{canonical_json, config_hash, RunManifest};

#[derive(Debug, Parser)]
#[command(name = "breakthrough", version, about = "Mechanism tests for post-vaccination breakthrough infections")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one left-truncated analytic cohort from a JSON cohort config.
    Simulate(SimulateArgs),
    /// Run a replicated simulation grid and write metrics and plot data.
    Experiment(ExperimentArgs),
    /// Mechanism test and proposed-versus-naive model comparison on a cohort CSV.
    Analyze(AnalyzeArgs),
    /// Kaplan-Meier curves stratified by vaccination offset.
    Km(KmArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Cohort config (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Output CSV with columns z_delta,T,C[,x1].
    #[arg(long)]
    pub out: PathBuf,
    /// Also write a dated cohort CSV plus its analysis config (`<stem>.config.json`).
    #[arg(long)]
    pub dated_out: Option<PathBuf>,
    /// Calendar date of simulation day 0 for the dated export.
    #[arg(long, default_value = "2021-01-01")]
    pub origin: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PaperGrid {
    #[value(name = "no_subgroup")]
    NoSubgroup,
    #[value(name = "with_subgroup")]
    WithSubgroup,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// Experiment config (JSON).
    #[arg(long, conflicts_with = "paper_grid", required_unless_present = "paper_grid")]
    pub config: Option<PathBuf>,
    /// Use the published simulation grid.
    #[arg(long, value_enum)]
    pub paper_grid: Option<PaperGrid>,
    /// Cap replications at 500 and drop cells with N above 10000 (default for --paper-grid).
    #[arg(long, conflicts_with = "full_scale")]
    pub desk_scale: bool,
    /// Run the paper grid at full size, including N = 100000.
    #[arg(long)]
    pub full_scale: bool,
    /// Override the number of replications per cell.
    #[arg(long)]
    pub replications: Option<usize>,
    /// Override the base seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; a performance hint that never changes results.
    #[arg(long, env = "BREAKTHROUGH_WORKERS")]
    pub workers: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CohortInput {
    /// Cohort CSV.
    #[arg(long)]
    pub cohort: PathBuf,
    /// Schema and analysis window (JSON).
    #[arg(long)]
    pub config: PathBuf,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub input: CohortInput,
    /// Offset cap in days for the sensitivity analysis (default from the config, else 90).
    #[arg(long)]
    pub sensitivity_cap: Option<f64>,
    /// Skip the sensitivity analysis.
    #[arg(long, conflicts_with = "sensitivity_cap")]
    pub no_sensitivity: bool,
    /// Significance level for the report's interpretation.
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TimeZeroArg {
    Landmark,
    Vaccination,
}

#[derive(Debug, Args)]
pub struct KmArgs {
    #[command(flatten)]
    pub input: CohortInput,
    /// Offset bin width in days.
    #[arg(long, default_value_t = 30.0)]
    pub bin_width: f64,
    #[arg(long, value_enum, default_value = "landmark")]
    pub time_zero: TimeZeroArg,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(a) => simulate(&a),
        Command::Experiment(a) => experiment(&a),
        Command::Analyze(a) => analyze(&a).map(|_| ()),
        Command::Km(a) => km(&a),
    }
}
