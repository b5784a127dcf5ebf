//! Synthetic stand-ins for pathology patches: colored blob noise laid out in
//! class-named directories, plus CSV manifests with the published class
//! structure.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use rand::Rng;

use crate::raster::{encode_png, RasterImage};
use crate::seed::{derive_seed, rng_from_seed};

/// Class labels of the colorectal grading datasets.
pub const GRADING_CLASSES: [&str; 4] = ["BN", "WD", "MD", "PD"];
/// Per-class patch counts of the published split, in `GRADING_CLASSES` order.
pub const GRADING_COUNTS: [usize; 4] = [1600, 2322, 4105, 1830];
/// The same split at 1/100 scale, rounded.
pub const SCALED_COUNTS: [usize; 4] = [16, 23, 41, 18];

fn class_palette(class_index: usize) -> ([f64; 3], [f64; 3]) {
    // (stroma, nuclei) base colors in RGB; later classes get denser, darker nuclei.
    const STROMA: [[f64; 3]; 4] = [
        [236.0, 190.0, 214.0],
        [228.0, 176.0, 206.0],
        [220.0, 165.0, 200.0],
        [212.0, 150.0, 192.0],
    ];
    const NUCLEI: [[f64; 3]; 4] = [
        [120.0, 80.0, 160.0],
        [105.0, 65.0, 150.0],
        [90.0, 50.0, 140.0],
        [70.0, 35.0, 125.0],
    ];
    (STROMA[class_index % 4], NUCLEI[class_index % 4])
}

/// Tissue-like image: tinted background, elliptical nuclei blobs, and
/// per-pixel jitter. Fully determined by the rng state.
pub fn tissue_image<R: Rng + ?Sized>(
    width: u32,
    height: u32,
    class_index: usize,
    rng: &mut R,
) -> RasterImage {
    let (stroma, nuclei) = class_palette(class_index);
    let tint: [f64; 3] = std::array::from_fn(|_| rng.random_range(-12.0..12.0));
    let mut acc: Vec<[f64; 3]> =
        vec![std::array::from_fn(|c| stroma[c] + tint[c]); width as usize * height as usize];
    let area = width as f64 * height as f64;
    let blob_count = ((area / 1500.0) * (1.0 + class_index as f64 * 0.4)).ceil() as usize;
    let max_radius = (width.min(height) as f64 / 10.0).max(2.0);
    for _ in 0..blob_count {
        let cx = rng.random_range(0.0..width as f64);
        let cy = rng.random_range(0.0..height as f64);
        let rx = rng.random_range(1.0..=max_radius);
        let ry = rng.random_range(1.0..=max_radius);
        let shade = rng.random_range(0.7..1.1);
        let x0 = (cx - rx).floor().max(0.0) as u32;
        let x1 = ((cx + rx).ceil() as u32).min(width - 1);
        let y0 = (cy - ry).floor().max(0.0) as u32;
        let y1 = ((cy + ry).ceil() as u32).min(height - 1);
        for y in y0..=y1 {
            for x in x0..=x1 {
                let dx = (x as f64 - cx) / rx;
                let dy = (y as f64 - cy) / ry;
                if dx * dx + dy * dy <= 1.0 {
                    acc[(y * width + x) as usize] = std::array::from_fn(|c| nuclei[c] * shade);
                }
            }
        }
    }
    let mut image = RasterImage::filled(width, height, [0; 3]);
    for (px, value) in image.pixels_mut().chunks_exact_mut(3).zip(&acc) {
        for c in 0..3 {
            px[c] = (value[c] + rng.random_range(-6.0..6.0))
                .round()
                .clamp(0.0, 255.0) as u8;
        }
    }
    image
}

/// Writes `counts[i]` PNGs under `root/classes[i]/` and returns their paths
/// grouped by class. Image `j` of class `i` depends only on `(seed, i, j)`.
pub fn write_class_tree(
    root: &Path,
    classes: &[&str],
    counts: &[usize],
    width: u32,
    height: u32,
    seed: u64,
) -> io::Result<Vec<Vec<PathBuf>>> {
    assert_eq!(classes.len(), counts.len(), "one count per class");
    let mut out = Vec::with_capacity(classes.len());
    for (ci, (name, &count)) in classes.iter().zip(counts).enumerate() {
        let dir = root.join(name);
        fs::create_dir_all(&dir)?;
        let mut paths = Vec::with_capacity(count);
        for j in 0..count {
            let mut rng = rng_from_seed(derive_seed(seed, ci as u64, j as u64));
            let image = tissue_image(width, height, ci, &mut rng);
            let bytes = encode_png(&image).map_err(io::Error::other)?;
            let path = dir.join(format!("{name}_{j:05}.png"));
            fs::write(&path, bytes)?;
            paths.push(path);
        }
        out.push(paths);
    }
    Ok(out)
}

/// Writes a `path,label` manifest with `counts[i]` rows labelled
/// `classes[i]`. The referenced files are not created.
pub fn write_manifest_csv(path: &Path, classes: &[&str], counts: &[usize]) -> io::Result<()> {
    assert_eq!(classes.len(), counts.len(), "one count per class");
    let mut out = io::BufWriter::new(fs::File::create(path)?);
    writeln!(out, "path,label")?;
    for (name, &count) in classes.iter().zip(counts) {
        for j in 0..count {
            writeln!(out, "patches/{name}/{name}_{j:05}.png,{name}")?;
        }
    }
    out.flush()
}
