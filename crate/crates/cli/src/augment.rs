use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use patchstitch::augment::{random_pipeline, AppliedOps, AugmentConfig, OptionalOp};
use patchstitch::raster::{decode_image, encode_png};
use patchstitch::seed::{derive_seed, rng_from_seed};
use patchstitch::stitch::write_atomic;
use rayon::prelude::*;
use serde::Serialize;
use walkdir::WalkDir;

use crate::config::ConfigFile;
use crate::error::CliError;
use crate::{require_dir, with_pool, AugmentArgs};

const RUN_KEYS: &[&str] = &["input", "out", "seed", "threads"];
const IMAGE_EXTENSIONS: &[&str] = &["png", "jpg", "jpeg"];

#[derive(Debug, Default, Serialize)]
pub struct AugmentSummary {
    pub outputs: usize,
    pub skipped: usize,
    /// Times each operation was applied, flips included.
    pub histogram: BTreeMap<String, usize>,
}

fn is_hidden(entry: &walkdir::DirEntry) -> bool {
    entry.depth() > 0 && entry.file_name().to_string_lossy().starts_with('.')
}

/// Image files under `root`, relative, in sorted walk order.
pub fn collect_images(root: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut files = Vec::new();
    for entry in WalkDir::new(root)
        .sort_by_file_name()
        .into_iter()
        .filter_entry(|e| !is_hidden(e))
    {
        let entry = entry.map_err(|e| CliError::usage(e.to_string()))?;
        if !entry.file_type().is_file() {
            continue;
        }
        let ext = entry
            .path()
            .extension()
            .map(|e| e.to_string_lossy().to_ascii_lowercase())
            .unwrap_or_default();
        if IMAGE_EXTENSIONS.contains(&ext.as_str()) {
            let rel = entry
                .path()
                .strip_prefix(root)
                .expect("walk stays under root");
            files.push(rel.to_path_buf());
        }
    }
    Ok(files)
}

enum Outcome {
    Written(AppliedOps),
    Skipped(String),
}

fn augment_one(
    input: &Path,
    out: &Path,
    rel: &Path,
    seed: u64,
    config: &AugmentConfig,
) -> Result<Outcome, CliError> {
    let src = input.join(rel);
    let bytes = match fs::read(&src) {
        Ok(b) => b,
        Err(e) => return Ok(Outcome::Skipped(format!("{}: {e}", src.display()))),
    };
    let image = match decode_image(&bytes) {
        Ok(img) => img,
        Err(e) => return Ok(Outcome::Skipped(format!("{}: {e}", src.display()))),
    };
    let (result, applied) = random_pipeline(&image, config, &mut rng_from_seed(seed));
    let dest = out.join(rel).with_extension("png");
    if let Some(dir) = dest.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::write(dir, e))?;
    }
    let png = encode_png(&result).map_err(|e| CliError::write(&dest, e))?;
    write_atomic(&dest, &png).map_err(|e| CliError::Io(e.to_string()))?;
    Ok(Outcome::Written(applied))
}

pub fn run(args: &AugmentArgs) -> Result<(), CliError> {
    let cfg = ConfigFile::load(args.config.as_deref())?;
    let mut config = AugmentConfig::default();
    for (key, value) in cfg.iter().filter(|(k, _)| !RUN_KEYS.contains(k)) {
        config
            .set(key, value)
            .map_err(|e| CliError::usage(e.to_string()))?;
    }
    config
        .validate()
        .map_err(|e| CliError::usage(e.to_string()))?;
    let input: PathBuf = cfg
        .pick_opt(args.input.clone(), "input")?
        .ok_or_else(|| CliError::usage("--input is required"))?;
    let out: PathBuf = cfg
        .pick_opt(args.out.clone(), "out")?
        .ok_or_else(|| CliError::usage("--out is required"))?;
    let seed = cfg.pick(args.seed, "seed", 0u64)?;
    let threads = cfg.pick(args.threads, "threads", 0usize)?;
    require_dir(&input, "--input")?;

    let files = collect_images(&input)?;
    eprintln!("augmenting {} images from {}", files.len(), input.display());
    fs::create_dir_all(&out).map_err(|e| CliError::write(&out, e))?;
    let outcomes = with_pool(threads, || {
        files
            .par_iter()
            .enumerate()
            .map(|(i, rel)| augment_one(&input, &out, rel, derive_seed(seed, i as u64, 0), &config))
            .collect::<Result<Vec<_>, _>>()
    })??;

    let mut summary = AugmentSummary::default();
    for name in ["flip_h", "flip_v"]
        .into_iter()
        .chain(OptionalOp::ALL.iter().map(|op| op.name()))
    {
        summary.histogram.insert(name.to_string(), 0);
    }
    for outcome in outcomes {
        match outcome {
            Outcome::Written(applied) => {
                summary.outputs += 1;
                let mut bump =
                    |name: &str| *summary.histogram.get_mut(name).expect("known op") += 1;
                if applied.flip_h {
                    bump("flip_h");
                }
                if applied.flip_v {
                    bump("flip_v");
                }
                for op in applied.ops {
                    bump(op.name());
                }
            }
            Outcome::Skipped(reason) => {
                eprintln!("warning: skipping {reason}");
                summary.skipped += 1;
            }
        }
    }

    if args.json {
        println!(
            "{}",
            serde_json::to_string(&summary).expect("summary serializes")
        );
    } else {
        println!("outputs {}", summary.outputs);
        println!("skipped {}", summary.skipped);
        for (name, count) in &summary.histogram {
            println!("{name:<16}{count:>8}");
        }
    }
    Ok(())
}
