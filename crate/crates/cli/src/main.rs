mod augment;
mod config;
mod error;
mod preview;
mod stats;
mod synthesize;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use patchstitch::dataset::{load_csv_manifest, scan_directory};
use patchstitch::{DatasetManifest, Method};

use crate::config::ConfigFile;
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "patchstitch",
    version,
    about = "Patch-stitching synthesis of labeled image patches"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Synthesize K images per class from P same-class sources each.
    Synthesize(SynthesizeArgs),
    /// Render a side-by-side montage of both partition methods.
    Preview(PreviewArgs),
    /// Print per-class counts and the imbalance ratio.
    Stats(StatsArgs),
    /// Apply the random augmentation pipeline to a directory tree.
    Augment(AugmentArgs),
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Dataset root with one subdirectory per class.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// `path,label` manifest (alternative to --input).
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SlicArgs {
    /// Target superpixel count for the slic method.
    #[arg(long)]
    pub superpixels: Option<usize>,
    /// SLIC compactness.
    #[arg(long)]
    pub compactness: Option<f64>,
    /// SLIC assignment iterations.
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Relative balance tolerance of merged regions.
    #[arg(long)]
    pub tau: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SynthesizeArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub method: Option<Method>,
    /// Sources per synthesized image (2, 4 or 9 in the reference setup).
    #[arg(long)]
    pub p: Option<usize>,
    /// Images synthesized per class.
    #[arg(long)]
    pub k: Option<usize>,
    /// Master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Working canvas size; sources are resized to size×size.
    #[arg(long)]
    pub size: Option<u32>,
    #[command(flatten)]
    pub slic: SlicArgs,
    /// Worker threads (0 = all cores). Never changes output bytes.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Print the summary as JSON.
    #[arg(long)]
    pub json: bool,
    /// Permit p = 1, which copies one source unchanged.
    #[arg(long)]
    pub allow_single_source: bool,
    /// Settings file of `key = value` lines; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PreviewArgs {
    /// Source images; the first p are used, in order.
    #[arg(required = true)]
    pub images: Vec<PathBuf>,
    /// Montage PNG path; partition maps are written beside it.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub size: Option<u32>,
    #[command(flatten)]
    pub slic: SlicArgs,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub json: bool,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    /// Directory tree of images.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Output root; the input tree is mirrored beneath it as PNG.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub json: bool,
    /// Settings file; also accepts the augmentation range keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// Loads the manifest named by `--input` or `--csv` (flag or config key).
pub fn load_manifest(args: &InputArgs, cfg: &ConfigFile) -> Result<DatasetManifest, CliError> {
    let input = cfg.pick_opt(args.input.clone(), "input")?;
    let csv = cfg.pick_opt(args.csv.clone(), "csv")?;
    match (input, csv) {
        (Some(root), None) => Ok(scan_directory(&root)?),
        (None, Some(csv)) => Ok(load_csv_manifest(&csv)?),
        (Some(_), Some(_)) => Err(CliError::usage("give either --input or --csv, not both")),
        (None, None) => Err(CliError::usage("one of --input or --csv is required")),
    }
}

/// Runs `f` on a pool of `threads` workers (0 = rayon's default).
pub fn with_pool<T>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T, CliError>
where
    T: Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::usage(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

pub fn require_dir(path: &Path, flag: &str) -> Result<(), CliError> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(CliError::usage(format!(
            "{flag} {}: not a directory",
            path.display()
        )))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synthesize(args) => synthesize::run(&args),
        Command::Preview(args) => preview::run(&args),
        Command::Stats(args) => stats::run(&args),
        Command::Augment(args) => augment::run(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
