use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "povmap", version, about = "Small-area poverty mapping pipeline")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Direct estimates, adjusted sample sizes and smoothed sampling variances per area.
    Direct(DirectArgs),
    /// Fits an area-level model with HMC.
    Fit(FitArgs),
    /// Ranks fitted models by PSIS-LOO elpd.
    Compare(CompareArgs),
    /// Area, contribution and district tables plus an annotated GeoJSON.
    Report(ReportArgs),
    /// Generates a synthetic survey with known truth.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
pub struct DirectArgs {
    /// Person-level survey CSV.
    #[arg(long)]
    pub persons: PathBuf,
    /// Area frame CSV; when given, every surveyed area must appear in it.
    #[arg(long)]
    pub areas: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("input").required(true).args(["design", "persons"])))]
pub struct FitArgs {
    /// Model configuration JSON.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory of `povmap direct`.
    #[arg(long)]
    pub design: Option<PathBuf>,
    /// Person-level survey CSV (direct estimation runs first).
    #[arg(long)]
    pub persons: Option<PathBuf>,
    /// Area frame CSV with covariates.
    #[arg(long)]
    pub areas: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub chains: Option<usize>,
    /// Iterations per chain, warmup included.
    #[arg(long = "iter")]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub warmup: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; defaults to the number of chains.
    #[arg(long, env = "POVMAP_THREADS")]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Output directories of `povmap fit`.
    #[arg(required = true)]
    pub fits: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Output directory of `povmap fit`.
    #[arg(long)]
    pub fit: PathBuf,
    /// Area frame CSV; its `population` column weights the district aggregates.
    #[arg(long)]
    pub areas: Option<PathBuf>,
    /// GeoJSON FeatureCollection of the areas.
    #[arg(long)]
    pub geojson: Option<PathBuf>,
    /// Feature property holding the area id.
    #[arg(long, default_value = "area_id")]
    pub key: String,
    /// CSV with columns `area_id,district_id`.
    #[arg(long, requires_all = ["persons", "areas"])]
    pub district_map: Option<PathBuf>,
    /// Person-level survey CSV, for the district direct estimates.
    #[arg(long)]
    pub persons: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Simulation configuration JSON; defaults apply to omitted keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
    /// Also run the direct-estimator unbiasedness check over this many replications.
    #[arg(long, num_args = 0..=1, default_missing_value = "200")]
    pub validate: Option<usize>,
}
