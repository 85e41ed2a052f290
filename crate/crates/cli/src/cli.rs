//! Command-line surface.
//!
//! Flags are optional at the clap level; [`crate::config`] resolves them
//! against the config file, environment, and built-in defaults, with flags
//! winning.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use hubnet::estimator::{ModelKind, RankSpec};
use hubnet::moments::{Mode, MomentPath};
use hubnet::spectral::RankRule;

#[derive(Debug, Parser)]
#[command(
    name = "hubnet",
    about = "Latent hub-network estimation for directed flow time series",
    version
)]
pub struct Cli {
    /// Plain key=value config file; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic flow series with known ground truth.
    Simulate(SimulateArgs),
    /// Read long CSV flow data into a validated panel.
    Ingest(IngestArgs),
    /// Print rank estimates and the eigenvalue table for one window.
    Rank(RankArgs),
    /// Fit one factor model on the whole series.
    Estimate(EstimationArgs),
    /// Fit rolling windows with rotation, normalization, and alignment.
    Rolling(EstimationArgs),
    /// Cluster entities by their loading patterns (Ward linkage).
    Cluster(ClusterArgs),
    /// Rebuild hub-network node/edge tables from rolling artifacts.
    ExportNetwork(ExportNetworkArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Seed for all randomness in this run.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,

    /// Force bit-stable sequential computation paths.
    #[arg(long, global = true, num_args = 0..=1, default_missing_value = "true")]
    pub determinism: Option<bool>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Number of entities.
    #[arg(long)]
    pub n: Option<usize>,

    /// Number of hubs (left side; also the right side unless --r2 is given).
    #[arg(long)]
    pub r: Option<usize>,

    #[arg(long)]
    pub r1: Option<usize>,

    #[arg(long)]
    pub r2: Option<usize>,

    /// Truth family: sym (shared loading) or two (separate loadings).
    #[arg(long)]
    pub model: Option<ModelKind>,

    /// Months to generate.
    #[arg(long)]
    pub t: Option<usize>,

    /// First month, YYYY-MM.
    #[arg(long)]
    pub start: Option<String>,

    /// AR(1) coefficient of every factor entry.
    #[arg(long)]
    pub phi: Option<f64>,

    #[arg(long = "sigma-f")]
    pub sigma_f: Option<f64>,

    #[arg(long = "sigma-e")]
    pub sigma_e: Option<f64>,

    /// Loading generator: gaussian or planted.
    #[arg(long)]
    pub loading: Option<String>,

    /// Dominant-entity weight for planted loadings.
    #[arg(long)]
    pub dominance: Option<f64>,

    /// Equicorrelation of noise cells within a month.
    #[arg(long = "noise-rho")]
    pub noise_rho: Option<f64>,

    /// Keep the diagonal defined instead of masking it.
    #[arg(long = "keep-diagonal", num_args = 0..=1, default_missing_value = "true")]
    pub keep_diagonal: Option<bool>,

    #[arg(long)]
    pub out: PathBuf,

    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Long CSV with header exporter,importer,year,month,value.
    #[arg(long)]
    pub input: Option<PathBuf>,

    /// Exporter-reported flows (mirror mode).
    #[arg(long)]
    pub exports: Option<PathBuf>,

    /// Importer-reported flows (mirror mode); cell (i,j) is j's reported
    /// import from i and takes precedence.
    #[arg(long)]
    pub imports: Option<PathBuf>,

    /// Error on missing off-diagonal cells (default true); false zero-fills
    /// with a count.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub strict: Option<bool>,

    /// Apply the centered three-month average.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub smooth: Option<bool>,

    /// Output form: long (one CSV) or matrices (one CSV per month).
    #[arg(long)]
    pub emit: Option<String>,

    #[arg(long)]
    pub out: PathBuf,

    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct RankArgs {
    #[arg(long)]
    pub input: PathBuf,

    /// Maximum lag of the moment accumulation.
    #[arg(long)]
    pub h0: Option<usize>,

    /// Moment orientation: col, row, or both.
    #[arg(long)]
    pub mode: Option<Mode>,

    /// Subtract per-cell temporal means first.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub center: Option<bool>,

    /// Evaluation path: fast or naive.
    #[arg(long)]
    pub path: Option<MomentPath>,

    /// Search bound for the ratio estimator: ceil-half or ceil-third.
    #[arg(long = "r-max-rule")]
    pub r_max_rule: Option<RankRule>,

    /// Cumulative-share threshold of the scree estimator.
    #[arg(long = "scree-threshold")]
    pub scree_threshold: Option<f64>,

    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub strict: Option<bool>,

    /// Also dump the accumulated moment matrix.
    #[arg(long = "dump-m", num_args = 0..=1, default_missing_value = "true")]
    pub dump_m: Option<bool>,

    /// Output directory; without it the eigenvalue table prints to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,

    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct EstimationArgs {
    #[arg(long)]
    pub input: PathBuf,

    /// Model family: sym (shared loading) or two (separate loadings).
    #[arg(long)]
    pub model: Option<ModelKind>,

    /// Hubs for the (left) loading: a count or auto.
    #[arg(long)]
    pub r: Option<RankSpec>,

    /// Hubs for the right loading (two-sided model).
    #[arg(long)]
    pub r2: Option<RankSpec>,

    #[arg(long)]
    pub h0: Option<usize>,

    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub center: Option<bool>,

    /// Evaluation path: fast or naive.
    #[arg(long)]
    pub path: Option<MomentPath>,

    #[arg(long = "r-max-rule")]
    pub r_max_rule: Option<RankRule>,

    #[arg(long = "scree-threshold")]
    pub scree_threshold: Option<f64>,

    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub strict: Option<bool>,

    /// Apply the centered three-month average before fitting.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub smooth: Option<bool>,

    /// Window length in months (rolling only).
    #[arg(long)]
    pub window: Option<usize>,

    /// Step between window starts in months (rolling only).
    #[arg(long)]
    pub step: Option<usize>,

    /// Comma-separated anchor entities, strongest first.
    #[arg(long)]
    pub anchors: Option<String>,

    /// Ground-truth JSON (from simulate) to score the fit against.
    #[arg(long)]
    pub truth: Option<PathBuf>,

    /// Comma-separated plot exports: heatmap,network,dendrogram,scree.
    #[arg(long)]
    pub exports: Option<String>,

    #[arg(long)]
    pub out: PathBuf,

    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    /// Rolling output directory holding heatmap artifacts.
    #[arg(long = "rolling-dir")]
    pub rolling_dir: Option<PathBuf>,

    /// Heatmap CSV to cluster (overrides --rolling-dir).
    #[arg(long)]
    pub heatmap: Option<PathBuf>,

    /// Which heatmap of a two-sided run: export or import.
    #[arg(long)]
    pub side: Option<String>,

    /// Number of clusters.
    #[arg(long)]
    pub k: Option<usize>,

    /// Cluster each window separately instead of concatenating windows.
    #[arg(long = "per-window", num_args = 0..=1, default_missing_value = "true")]
    pub per_window: Option<bool>,

    #[arg(long)]
    pub out: PathBuf,

    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct ExportNetworkArgs {
    /// Rolling output directory with per-window artifacts.
    #[arg(long = "rolling-dir")]
    pub rolling_dir: PathBuf,

    /// Window label to export; empty exports every window.
    #[arg(long)]
    pub window: Option<String>,

    #[arg(long)]
    pub out: PathBuf,

    #[command(flatten)]
    pub common: CommonArgs,
}
