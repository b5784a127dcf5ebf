use std::path::PathBuf;
use std::time::Instant;

use patchstitch::partition::DEFAULT_BALANCE_TOLERANCE;
use patchstitch::stitch::{run_batch, BatchSummary};
use patchstitch::{BatchConfig, BatchPlan, Method, SlicParams};
use serde::Serialize;

use crate::config::ConfigFile;
use crate::error::CliError;
use crate::{load_manifest, with_pool, SlicArgs, SynthesizeArgs};

const KEYS: &[&str] = &[
    "input",
    "csv",
    "out",
    "method",
    "p",
    "k",
    "seed",
    "size",
    "superpixels",
    "compactness",
    "iterations",
    "tau",
    "threads",
];

pub const MIN_SIZE: u32 = 32;

/// SLIC parameters and balance tolerance from flags over config over defaults.
pub fn slic_settings(args: &SlicArgs, cfg: &ConfigFile) -> Result<(SlicParams, f64), CliError> {
    let base = SlicParams::default();
    let params = SlicParams {
        target_superpixels: cfg.pick(args.superpixels, "superpixels", base.target_superpixels)?,
        compactness: cfg.pick(args.compactness, "compactness", base.compactness)?,
        iterations: cfg.pick(args.iterations, "iterations", base.iterations)?,
        ..base
    };
    params
        .validate()
        .map_err(|e| CliError::usage(e.to_string()))?;
    let tau = cfg.pick(args.tau, "tau", DEFAULT_BALANCE_TOLERANCE)?;
    if !(tau >= 0.0 && tau.is_finite()) {
        return Err(CliError::usage(format!(
            "--tau {tau} must be a non-negative number"
        )));
    }
    Ok((params, tau))
}

#[derive(Serialize)]
struct Report<'a> {
    #[serde(flatten)]
    summary: &'a BatchSummary,
    out: &'a str,
    wall_seconds: f64,
    images_per_second: f64,
}

pub fn run(args: &SynthesizeArgs) -> Result<(), CliError> {
    let cfg = ConfigFile::load(args.config.as_deref())?;
    cfg.check_keys(KEYS)?;
    let out: PathBuf = cfg
        .pick_opt(args.out.clone(), "out")?
        .ok_or_else(|| CliError::usage("--out is required"))?;
    let method = cfg.pick(args.method, "method", Method::Rec)?;
    let p = cfg.pick(args.p, "p", 4usize)?;
    if p == 0 || (p == 1 && !args.allow_single_source) {
        return Err(CliError::usage(format!(
            "--p {p}: at least 2 sources are needed to mix (p = 1 requires --allow-single-source)"
        )));
    }
    let k = cfg.pick(args.k, "k", 600usize)?;
    let seed = cfg.pick(args.seed, "seed", 0u64)?;
    let size = cfg.pick(args.size, "size", 512u32)?;
    if size < MIN_SIZE {
        return Err(CliError::usage(format!(
            "--size {size} is below the minimum {MIN_SIZE}"
        )));
    }
    let (slic, tau) = slic_settings(&args.slic, &cfg)?;
    let threads = cfg.pick(args.threads, "threads", 0usize)?;
    let manifest = load_manifest(&args.input, &cfg)?;

    let config = BatchConfig {
        method,
        p,
        k_per_class: k,
        master_seed: seed,
        slic,
        tolerance: tau,
        working_width: size,
        working_height: size,
        ..BatchConfig::default()
    };
    let start = Instant::now();
    let summary = with_pool(threads, || -> Result<BatchSummary, CliError> {
        eprintln!(
            "preparing {} sources in {} classes ({method}, p = {p})",
            manifest.total(),
            manifest.class_count()
        );
        let plan = BatchPlan::prepare(&manifest, config)?;
        eprintln!(
            "synthesizing {} images into {}",
            k * manifest.class_count(),
            out.display()
        );
        Ok(run_batch(&plan, &out)?)
    })??;
    let wall = start.elapsed().as_secs_f64();
    let rate = if wall > 0.0 {
        summary.total as f64 / wall
    } else {
        0.0
    };
    eprintln!("done");

    if args.json {
        let report = Report {
            summary: &summary,
            out: &out.to_string_lossy(),
            wall_seconds: wall,
            images_per_second: rate,
        };
        println!(
            "{}",
            serde_json::to_string(&report).expect("summary serializes")
        );
    } else {
        println!("method {}, p = {}", summary.method, summary.p);
        let width = summary
            .outputs_per_class
            .iter()
            .map(|(c, _)| c.len())
            .max()
            .unwrap_or(0)
            .max(5);
        println!("{:<width$}  {:>8}", "class", "outputs");
        for (class, n) in &summary.outputs_per_class {
            println!("{class:<width$}  {n:>8}");
        }
        println!("{:<width$}  {:>8}", "total", summary.total);
        println!("wall time {wall:.2} s, {rate:.1} images/s");
        println!("balance warnings {}", summary.balance_warnings);
        println!("log {}", out.join(&summary.log).display());
    }
    Ok(())
}
