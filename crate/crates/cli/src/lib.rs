//! The `heatlab` batch driver.

mod commands;
mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use heatlab_core::ErrorClass;

pub use manifest::{config_hash, RunManifest, MANIFEST_DIR};

pub const WORKSPACES_ENV: &str = "HEATLAB_WORKSPACES";

#[derive(Debug, Parser)]
#[command(
    name = "heatlab",
    version,
    about = "Urban heat island analysis, forecasting and greening simulation"
)]
pub struct Cli {
    /// Scene-level worker threads; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,
    /// Log verbosity: error, warn, info, debug or trace.
    #[arg(long, global = true, default_value = "warn")]
    pub log_level: String,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic city workspace with planted cooling physics.
    Synth(SynthArgs),
    /// Validate a workspace, optionally importing land cover or a GeoTIFF band.
    Ingest(IngestArgs),
    /// Cooling profiles, urban gradient or source/sink table.
    Analyze(AnalyzeArgs),
    /// Fit the linear baseline predictor.
    FitBaseline(FitArgs),
    /// Write a variant's LST predictions for every filtered scene.
    Predict(PredictArgs),
    /// Compare predictions with ground truth.
    Eval(EvalArgs),
    /// Split scenes into train/val/test.
    Split(SplitArgs),
    /// UHI extent under a climate scenario.
    Forecast(ForecastArgs),
    /// Simulate a greening intervention.
    Inpaint(InpaintArgs),
    /// Serve the HTTP API.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Args)]
pub struct WorkspaceArg {
    /// Workspace directory; relative paths resolve under $HEATLAB_WORKSPACES when set.
    #[arg(short, long)]
    pub workspace: PathBuf,
    /// Overrides the workspace seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output workspace directory.
    #[arg(long)]
    pub out: PathBuf,
    /// `default` or a JSON file of world parameters.
    #[arg(long, default_value = "default")]
    pub config: String,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub size: Option<usize>,
    /// Per-pixel LST noise standard deviation, °C.
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub scenes: Option<usize>,
    #[arg(long)]
    pub city_id: Option<String>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[command(flatten)]
    pub ws: WorkspaceArg,
    /// Land-cover grid or GeoTIFF, majority-resampled onto the workspace grid.
    #[arg(long)]
    pub lulc: Option<PathBuf>,
    /// GeoTIFF band to import into an existing scene.
    #[arg(long, requires_all = ["scene", "band"])]
    pub geotiff: Option<PathBuf>,
    #[arg(long)]
    pub scene: Option<String>,
    #[arg(long)]
    pub band: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Analysis {
    Cooling,
    Gradient,
    SourceSink,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AxisArg {
    Deciles,
    Radial,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    pub analysis: Analysis,
    #[command(flatten)]
    pub ws: WorkspaceArg,
    /// Analyze a predictor's output instead of ground truth.
    #[arg(long)]
    pub variant: Option<String>,
    #[arg(long, value_enum, default_value = "deciles")]
    pub axis: AxisArg,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub ws: WorkspaceArg,
    /// Split plan from `heatlab split`; trains on its train and val scenes.
    #[arg(long)]
    pub split: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub ws: WorkspaceArg,
    #[arg(long, default_value = "baseline")]
    pub variant: String,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Workspace whose ground truth is the reference.
    #[arg(short, long, conflicts_with_all = ["truth", "pred"])]
    pub workspace: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub variant: Option<String>,
    /// Split plan; adds an extrapolation report over its test scenes.
    #[arg(long)]
    pub split: Option<PathBuf>,
    /// Directory of truth grids paired with `--pred` by scene id.
    #[arg(long, requires = "pred")]
    pub truth: Option<PathBuf>,
    #[arg(long, requires = "truth")]
    pub pred: Option<PathBuf>,
    /// Report path for directory mode; defaults to `<pred>/eval.json`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StrategyArg {
    Random,
    HighHeat,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[command(flatten)]
    pub ws: WorkspaceArg,
    #[arg(long, value_enum)]
    pub strategy: StrategyArg,
    /// High-heat quantile; overrides the workspace config.
    #[arg(long)]
    pub q: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ForecastArgs {
    #[command(flatten)]
    pub ws: WorkspaceArg,
    #[arg(long)]
    pub rcp: String,
    #[arg(long)]
    pub year: u32,
    #[arg(long, default_value = "baseline")]
    pub variant: String,
    /// Overrides the UHI exceedance threshold, °C.
    #[arg(long)]
    pub threshold: Option<f64>,
}

#[derive(Debug, Args)]
pub struct InpaintArgs {
    #[command(flatten)]
    pub ws: WorkspaceArg,
    /// Intervention spec JSON (polygon in workspace CRS metres plus options).
    #[arg(long)]
    pub spec: PathBuf,
    /// Scene to edit; defaults to the first filtered scene.
    #[arg(long)]
    pub scene: Option<String>,
    #[arg(long, default_value = "baseline")]
    pub variant: String,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    /// Directory of workspaces; defaults to $HEATLAB_WORKSPACES.
    #[arg(long)]
    pub workspaces: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] heatlab_core::Error),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(e) => match e.class() {
                ErrorClass::Data => 3,
                ErrorClass::Invariant => 4,
            },
            CliError::Internal(_) => 4,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Resolves a relative path under `$HEATLAB_WORKSPACES` when it is set.
pub fn resolve(path: &Path) -> PathBuf {
    match std::env::var_os(WORKSPACES_ENV) {
        Some(root) if path.is_relative() => PathBuf::from(root).join(path),
        _ => path.to_path_buf(),
    }
}

/// Runs a parsed command; `argv` (without the program name) goes into the manifest.
pub fn run(cli: Cli, argv: Vec<String>) -> CliResult<()> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs)
        .build()
        .map_err(|e| CliError::Internal(e.to_string()))?;
    pool.install(|| commands::dispatch(cli.command, argv))
}

pub fn main_with_args(args: impl IntoIterator<Item = String>) -> ExitCode {
    let args: Vec<String> = args.into_iter().collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let level = cli.log_level.parse().unwrap_or(tracing::Level::WARN);
    let _ = tracing_subscriber::fmt()
        .with_max_level(level)
        .with_writer(std::io::stderr)
        .try_init();
    match run(cli, args.into_iter().skip(1).collect()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
