//! Two-row montage: for each method, the sources, the template with its
//! partition boundaries drawn in black, and the stitched result.

use std::fs;
use std::path::{Path, PathBuf};

use patchstitch::raster::{decode_image, encode_png, resize_bilinear, rgb_to_lab};
use patchstitch::seed::{derive_seed, rng_from_seed};
use patchstitch::slic::count_superpixels;
use patchstitch::stitch::{select_template, write_atomic};
use patchstitch::{merge_superpixels, rect_partition, segment, stitch, PartitionMap, RasterImage};

use crate::config::ConfigFile;
use crate::error::CliError;
use crate::synthesize::{slic_settings, MIN_SIZE};
use crate::PreviewArgs;

const KEYS: &[&str] = &[
    "out",
    "p",
    "seed",
    "size",
    "superpixels",
    "compactness",
    "iterations",
    "tau",
];
const GUTTER: u32 = 4;

/// Copy of `image` with partition boundary pixels painted black, and the
/// number of pixels painted.
pub fn boundary_overlay(image: &RasterImage, partition: &PartitionMap) -> (RasterImage, usize) {
    let mut out = image.clone();
    let mask = partition.boundary_mask();
    for (px, _) in out
        .pixels_mut()
        .chunks_exact_mut(3)
        .zip(&mask)
        .filter(|(_, &edge)| edge)
    {
        px.fill(0);
    }
    (out, mask.iter().filter(|&&e| e).count())
}

/// Lays equal-sized panels out row by row on a white canvas.
pub fn montage(rows: &[Vec<&RasterImage>]) -> RasterImage {
    let (pw, ph) = rows[0][0].dimensions();
    let cols = rows.iter().map(Vec::len).max().unwrap_or(1) as u32;
    let width = cols * pw + (cols + 1) * GUTTER;
    let height = rows.len() as u32 * ph + (rows.len() as u32 + 1) * GUTTER;
    let mut canvas = RasterImage::filled(width, height, [255; 3]);
    for (r, row) in rows.iter().enumerate() {
        let y0 = GUTTER + r as u32 * (ph + GUTTER);
        for (c, panel) in row.iter().enumerate() {
            let x0 = GUTTER + c as u32 * (pw + GUTTER);
            for y in 0..ph {
                for x in 0..pw {
                    canvas.set(x0 + x, y0 + y, panel.get(x, y));
                }
            }
        }
    }
    canvas
}

fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "preview".into());
    out.with_file_name(format!("{stem}_{suffix}"))
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    write_atomic(path, bytes).map_err(|e| CliError::Io(e.to_string()))
}

pub fn run(args: &PreviewArgs) -> Result<(), CliError> {
    let cfg = ConfigFile::load(args.config.as_deref())?;
    cfg.check_keys(KEYS)?;
    let out: PathBuf = cfg.pick(args.out.clone(), "out", PathBuf::from("preview.png"))?;
    let p = cfg.pick(args.p, "p", 4usize)?;
    let seed = cfg.pick(args.seed, "seed", 0u64)?;
    let size = cfg.pick(args.size, "size", 256u32)?;
    if p == 0 {
        return Err(CliError::usage("--p must be ≥ 1"));
    }
    if size < MIN_SIZE {
        return Err(CliError::usage(format!(
            "--size {size} is below the minimum {MIN_SIZE}"
        )));
    }
    let (slic, tau) = slic_settings(&args.slic, &cfg)?;
    if let Some(missing) = args.images.iter().find(|p| !p.is_file()) {
        return Err(CliError::usage(format!(
            "{}: no such file",
            missing.display()
        )));
    }
    if args.images.len() < p {
        return Err(CliError::usage(format!(
            "{} images given, p = {p} needs at least {p}",
            args.images.len()
        )));
    }

    let sources = args.images[..p]
        .iter()
        .map(|path| {
            let bytes =
                fs::read(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
            let image = decode_image(&bytes)
                .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
            resize_bilinear(&image, size, size).map_err(|e| CliError::usage(e.to_string()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let refs: Vec<&RasterImage> = sources.iter().collect();

    let rect = rect_partition(size, size, p).map_err(|e| CliError::usage(e.to_string()))?;
    let (rect_image, _) = stitch(&refs, &rect).map_err(CliError::from)?;
    let (rect_overlay, rect_edges) = boundary_overlay(refs[0], &rect);

    let maps = refs
        .iter()
        .map(|img| segment(&rgb_to_lab(img), &slic))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::usage(e.to_string()))?;
    let counts: Vec<usize> = maps.iter().map(count_superpixels).collect();
    let template = select_template(&counts);
    let mut rng = rng_from_seed(derive_seed(seed, 0, 0));
    let merged = merge_superpixels(&maps[template], p, tau, &mut rng)
        .map_err(|e| CliError::usage(e.to_string()))?;
    let (slic_image, _) = stitch(&refs, &merged.map).map_err(CliError::from)?;
    let (slic_overlay, slic_edges) = boundary_overlay(refs[template], &merged.map);

    let mut rec_row = refs.clone();
    rec_row.extend([&rect_overlay, &rect_image]);
    let mut slic_row = refs.clone();
    slic_row.extend([&slic_overlay, &slic_image]);
    let canvas = montage(&[rec_row, slic_row]);

    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::write(dir, e))?;
    }
    let encode = |e: patchstitch::RasterError| CliError::Io(e.to_string());
    write(&out, &encode_png(&canvas).map_err(encode)?)?;
    let part = |e: patchstitch::PartitionError| CliError::Io(e.to_string());
    write(
        &sibling(&out, "rec_partition.png"),
        &rect.to_png8().map_err(part)?,
    )?;
    write(
        &sibling(&out, "slic_partition.png"),
        &merged.map.to_png8().map_err(part)?,
    )?;
    let sp = &maps[template];
    let png16 = sp.to_png16().map_err(|e| CliError::Io(e.to_string()))?;
    write(&sibling(&out, "superpixels.png"), &png16)?;
    write(&sibling(&out, "superpixels.txt"), sp.sidecar().as_bytes())?;

    println!("montage {}", out.display());
    println!("rec boundary pixels {rect_edges}");
    println!(
        "slic boundary pixels {slic_edges} (template {template}, {} superpixels{})",
        counts[template],
        if merged.balance_warning {
            ", unbalanced"
        } else {
            ""
        }
    );
    Ok(())
}
