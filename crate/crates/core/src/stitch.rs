//! Patch stitching synthesis.
//!
//! One synthesized image is made by sampling `p` distinct images of a single
//! class, choosing one of them as the template whose partition divides the
//! canvas, and copying region `i` of the canvas from source `i` at the same
//! coordinates. The rectangular variant partitions with a fixed grid; the
//! superpixel variant segments every sampled source, takes the one with the
//! most superpixels as template and merges its superpixels into `p` balanced
//! regions.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::{Arc, OnceLock};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{sample_category, DatasetError, DatasetManifest, ImageId};
use crate::partition::{self, merge_superpixels, rect_partition, PartitionError, PartitionMap};
use crate::raster::{self, resize_bilinear, rgb_to_lab, RasterError, RasterImage};
use crate::seed::{derive_seed, rng_from_seed};
use crate::slic::{self, SlicError, SlicParams, SuperpixelMap};

#[derive(Debug, Error)]
pub enum StitchError {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("class {class}: {reason}")]
    Infeasible { class: String, reason: String },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error(transparent)]
    Slic(#[from] SlicError),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl StitchError {
    /// Whether the error stems from the inputs being unusable for the
    /// requested synthesis rather than from I/O.
    pub fn is_feasibility(&self) -> bool {
        matches!(
            self,
            StitchError::Argument(_)
                | StitchError::Infeasible { .. }
                | StitchError::Dataset(DatasetError::Infeasible { .. })
                | StitchError::Partition(_)
                | StitchError::Slic(_)
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Rec,
    Slic,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Rec => "rec",
            Method::Slic => "slic",
        })
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "rec" => Ok(Method::Rec),
            "slic" => Ok(Method::Slic),
            other => Err(format!("unknown method `{other}` (expected rec or slic)")),
        }
    }
}

/// Everything needed to reproduce one synthesized image.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct StitchRecipe {
    pub category: usize,
    pub method: Method,
    pub p: usize,
    /// Sources in draw order; region `i` of the canvas comes from entry `i`.
    pub source_ids: Vec<ImageId>,
    /// Position in `source_ids` of the image whose partition divides the
    /// canvas.
    pub template_index: usize,
    pub seed: u64,
}

/// Index of the largest count, earliest position on ties.
pub fn select_template(counts: &[usize]) -> usize {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    best
}

/// Samples `p` distinct images of `category` and picks the template.
///
/// The rectangular method draws the template uniformly. The superpixel
/// method needs `superpixel_counts` for every sampled image and takes the
/// one with the most superpixels.
pub fn plan_recipe<R: Rng + ?Sized>(
    manifest: &DatasetManifest,
    category: usize,
    method: Method,
    p: usize,
    seed: u64,
    rng: &mut R,
    superpixel_counts: Option<&dyn Fn(ImageId) -> Option<usize>>,
) -> Result<StitchRecipe, StitchError> {
    if p == 0 {
        return Err(StitchError::Argument("p must be ≥ 1".into()));
    }
    let source_ids = sample_category(manifest, category, p, rng)?;
    let template_index = match method {
        Method::Rec => rng.random_range(0..p),
        Method::Slic => {
            let lookup = superpixel_counts.ok_or_else(|| {
                StitchError::Argument("superpixel counts are required for the slic method".into())
            })?;
            let counts = source_ids
                .iter()
                .map(|&id| {
                    lookup(id).ok_or_else(|| {
                        StitchError::Argument(format!(
                            "missing superpixel count for {}",
                            manifest.display_id(id)
                        ))
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            select_template(&counts)
        }
    };
    Ok(StitchRecipe {
        category,
        method,
        p,
        source_ids,
        template_index,
        seed,
    })
}

/// Which source supplied each output pixel.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProvenanceMap {
    width: u32,
    height: u32,
    source_index: Vec<u32>,
    sources: usize,
}

impl ProvenanceMap {
    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn source_index(&self) -> &[u32] {
        &self.source_index
    }

    #[inline]
    pub fn source_at(&self, x: u32, y: u32) -> u32 {
        self.source_index[y as usize * self.width as usize + x as usize]
    }

    /// Pixel count per source.
    pub fn histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.sources];
        for &s in &self.source_index {
            h[s as usize] += 1;
        }
        h
    }

    pub fn to_png8(&self) -> Result<Vec<u8>, StitchError> {
        if self.sources > 256 {
            return Err(StitchError::Argument(format!(
                "{} sources do not fit an 8-bit PNG",
                self.sources
            )));
        }
        let data: Vec<u8> = self.source_index.iter().map(|&s| s as u8).collect();
        Ok(raster::encode_gray8_png(self.width, self.height, &data)?)
    }

    pub fn as_partition(&self) -> PartitionMap {
        PartitionMap::new(
            self.width,
            self.height,
            self.source_index.clone(),
            self.sources,
        )
        .expect("provenance is built from a valid partition")
    }
}

/// Copies region `i` of `partition` from `sources[i]`.
pub fn stitch(
    sources: &[&RasterImage],
    partition: &PartitionMap,
) -> Result<(RasterImage, ProvenanceMap), StitchError> {
    let p = partition.region_count();
    if sources.len() != p {
        return Err(StitchError::Argument(format!(
            "{} sources for a {p}-region partition",
            sources.len()
        )));
    }
    let dims = partition.dimensions();
    if let Some((i, s)) = sources
        .iter()
        .enumerate()
        .find(|(_, s)| s.dimensions() != dims)
    {
        return Err(StitchError::Argument(format!(
            "source {i} is {}x{}, partition is {}x{}",
            s.width(),
            s.height(),
            dims.0,
            dims.1
        )));
    }
    let mut pixels = vec![0u8; partition.regions().len() * 3];
    for (i, (&r, out)) in partition
        .regions()
        .iter()
        .zip(pixels.chunks_exact_mut(3))
        .enumerate()
    {
        out.copy_from_slice(&sources[r as usize].pixels()[i * 3..i * 3 + 3]);
    }
    let image = RasterImage::new(dims.0, dims.1, pixels)?;
    let provenance = ProvenanceMap {
        width: dims.0,
        height: dims.1,
        source_index: partition.regions().to_vec(),
        sources: p,
    };
    Ok((image, provenance))
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatchConfig {
    pub method: Method,
    pub p: usize,
    pub k_per_class: usize,
    pub master_seed: u64,
    pub slic: SlicParams,
    pub tolerance: f64,
    pub working_width: u32,
    pub working_height: u32,
    /// Decoded sources (and superpixel maps) are kept in memory when their
    /// total size stays under this many bytes.
    pub cache_budget_bytes: usize,
}

impl Default for BatchConfig {
    fn default() -> Self {
        Self {
            method: Method::Rec,
            p: 4,
            k_per_class: 600,
            master_seed: 0,
            slic: SlicParams::default(),
            tolerance: partition::DEFAULT_BALANCE_TOLERANCE,
            working_width: 512,
            working_height: 512,
            cache_budget_bytes: 2 << 30,
        }
    }
}

/// A manifest checked for feasibility, with per-source work cached.
pub struct BatchPlan<'m> {
    manifest: &'m DatasetManifest,
    config: BatchConfig,
    retain: bool,
    images: Vec<Vec<OnceLock<Arc<RasterImage>>>>,
    maps: Vec<Vec<OnceLock<Arc<SuperpixelMap>>>>,
    counts: Vec<Vec<usize>>,
}

/// One synthesized image with its provenance.
#[derive(Clone, Debug)]
pub struct Synthesized {
    pub image: RasterImage,
    pub provenance: ProvenanceMap,
    pub recipe: StitchRecipe,
    pub balance_warning: bool,
}

impl<'m> BatchPlan<'m> {
    /// Checks every class before any work is written: enough images for
    /// `p`, a partition that fits the working size, and (for the superpixel
    /// method) enough superpixels. Every source is decoded once here.
    pub fn prepare(
        manifest: &'m DatasetManifest,
        config: BatchConfig,
    ) -> Result<Self, StitchError> {
        let (w, h) = (config.working_width, config.working_height);
        if w == 0 || h == 0 {
            return Err(StitchError::Argument(
                "working size must be positive".into(),
            ));
        }
        if config.p == 0 {
            return Err(StitchError::Argument("p must be ≥ 1".into()));
        }
        for (c, class) in manifest.classes().iter().enumerate() {
            if manifest.count(c) < config.p {
                return Err(StitchError::Infeasible {
                    class: class.clone(),
                    reason: format!("{} images, p = {}", manifest.count(c), config.p),
                });
            }
        }
        match config.method {
            Method::Rec => {
                rect_partition(w, h, config.p)?;
            }
            Method::Slic => {
                config.slic.validate()?;
                if config.slic.target_superpixels > w as usize * h as usize {
                    return Err(SlicError::TooManySuperpixels {
                        target: config.slic.target_superpixels,
                        pixels: w as usize * h as usize,
                    }
                    .into());
                }
            }
        }

        let per_image = w as usize * h as usize * 3
            + if config.method == Method::Slic {
                w as usize * h as usize * 4
            } else {
                0
            };
        let retain = manifest.total().saturating_mul(per_image) <= config.cache_budget_bytes;
        let images = (0..manifest.class_count())
            .map(|c| (0..manifest.count(c)).map(|_| OnceLock::new()).collect())
            .collect();
        let maps = (0..manifest.class_count())
            .map(|c| (0..manifest.count(c)).map(|_| OnceLock::new()).collect())
            .collect();
        let mut plan = Self {
            manifest,
            config,
            retain,
            images,
            maps,
            counts: Vec::new(),
        };

        let ids: Vec<ImageId> = manifest.ids().collect();
        let counts: Vec<Option<usize>> = ids
            .par_iter()
            .map(|&id| -> Result<Option<usize>, StitchError> {
                let image = plan.source(id)?;
                match plan.config.method {
                    Method::Rec => Ok(None),
                    Method::Slic => {
                        let map = plan.compute_superpixels(&image)?;
                        let count = slic::count_superpixels(&map);
                        if plan.retain {
                            let _ = plan.maps[id.category][id.index].set(Arc::new(map));
                        }
                        Ok(Some(count))
                    }
                }
            })
            .collect::<Result<_, _>>()?;
        if plan.config.method == Method::Slic {
            let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); manifest.class_count()];
            for (id, count) in ids.iter().zip(counts) {
                per_class[id.category].push(count.expect("slic counts"));
            }
            let p = plan.config.p;
            for (c, counts) in per_class.iter().enumerate() {
                // A draw fails only if all p sampled images have fewer than p
                // superpixels, which needs at least p such images.
                let short = counts.iter().filter(|&&n| n < p).count();
                if short >= p {
                    return Err(StitchError::Infeasible {
                        class: manifest.classes()[c].clone(),
                        reason: format!("{short} images segment into fewer than {p} superpixels"),
                    });
                }
            }
            plan.counts = per_class;
        }
        Ok(plan)
    }

    pub fn manifest(&self) -> &DatasetManifest {
        self.manifest
    }

    pub fn config(&self) -> &BatchConfig {
        &self.config
    }

    fn load_resized(&self, id: ImageId) -> Result<RasterImage, StitchError> {
        let image = self.manifest.load(id)?;
        Ok(resize_bilinear(
            &image,
            self.config.working_width,
            self.config.working_height,
        )?)
    }

    /// Source at working size.
    pub fn source(&self, id: ImageId) -> Result<Arc<RasterImage>, StitchError> {
        if !self.retain {
            return Ok(Arc::new(self.load_resized(id)?));
        }
        let slot = &self.images[id.category][id.index];
        if let Some(image) = slot.get() {
            return Ok(Arc::clone(image));
        }
        let image = Arc::new(self.load_resized(id)?);
        Ok(Arc::clone(slot.get_or_init(|| image)))
    }

    fn compute_superpixels(&self, image: &RasterImage) -> Result<SuperpixelMap, StitchError> {
        Ok(slic::segment(&rgb_to_lab(image), &self.config.slic)?)
    }

    pub fn superpixels(&self, id: ImageId) -> Result<Arc<SuperpixelMap>, StitchError> {
        if let Some(map) = self.maps[id.category][id.index].get() {
            return Ok(Arc::clone(map));
        }
        let image = self.source(id)?;
        Ok(Arc::new(self.compute_superpixels(&image)?))
    }

    pub fn superpixel_count(&self, id: ImageId) -> Option<usize> {
        self.counts.get(id.category)?.get(id.index).copied()
    }

    /// Seed of output `index` of `category`.
    pub fn output_seed(&self, category: usize, index: usize) -> u64 {
        derive_seed(self.config.master_seed, category as u64, index as u64)
    }

    /// Produces output `index` of `category`; a pure function of the plan.
    pub fn synthesize_one(
        &self,
        category: usize,
        index: usize,
    ) -> Result<Synthesized, StitchError> {
        let seed = self.output_seed(category, index);
        let mut rng = rng_from_seed(seed);
        let counts = |id: ImageId| self.superpixel_count(id);
        let recipe = plan_recipe(
            self.manifest,
            category,
            self.config.method,
            self.config.p,
            seed,
            &mut rng,
            Some(&counts),
        )?;
        let sources = recipe
            .source_ids
            .iter()
            .map(|&id| self.source(id))
            .collect::<Result<Vec<_>, _>>()?;
        let (partition, balance_warning) = match self.config.method {
            Method::Rec => (
                rect_partition(
                    self.config.working_width,
                    self.config.working_height,
                    self.config.p,
                )?,
                false,
            ),
            Method::Slic => {
                let map = self.superpixels(recipe.source_ids[recipe.template_index])?;
                let outcome =
                    merge_superpixels(&map, self.config.p, self.config.tolerance, &mut rng)?;
                (outcome.map, outcome.balance_warning)
            }
        };
        let refs: Vec<&RasterImage> = sources.iter().map(Arc::as_ref).collect();
        let (image, provenance) = stitch(&refs, &partition)?;
        Ok(Synthesized {
            image,
            provenance,
            recipe,
            balance_warning,
        })
    }
}

/// File stem `synth_{method}_{p}_{class}_{index:06}`.
pub fn output_stem(method: Method, p: usize, class: &str, index: usize) -> String {
    format!("synth_{method}_{p}_{class}_{index:06}")
}

/// One line of the JSON-lines batch log.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BatchLogEntry {
    pub category: String,
    pub method: Method,
    pub p: usize,
    pub source_ids: Vec<String>,
    pub template_index: usize,
    pub seed: u64,
    pub output: String,
    pub provenance: String,
    pub balance_warning: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BatchSummary {
    pub method: Method,
    pub p: usize,
    pub outputs_per_class: Vec<(String, usize)>,
    pub total: usize,
    pub balance_warnings: usize,
    pub log: String,
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> StitchError + '_ {
    move |source| StitchError::Io {
        path: path.to_owned(),
        source,
    }
}

/// Writes `bytes` to a temporary sibling and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), StitchError> {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    let mut file = fs::File::create(&tmp).map_err(io_error(&tmp))?;
    file.write_all(bytes).map_err(io_error(&tmp))?;
    file.sync_all().map_err(io_error(&tmp))?;
    drop(file);
    fs::rename(&tmp, path).map_err(io_error(path))
}

/// Log file name for a batch.
pub fn log_name(method: Method, p: usize) -> String {
    format!("synth_{method}_{p}.jsonl")
}

/// Synthesizes `k_per_class` images per class into `out_dir`, together with
/// 8-bit provenance PNGs and a JSON-lines log. Jobs run on the current rayon
/// pool; output bytes do not depend on its size.
pub fn run_batch(plan: &BatchPlan<'_>, out_dir: &Path) -> Result<BatchSummary, StitchError> {
    fs::create_dir_all(out_dir).map_err(io_error(out_dir))?;
    let manifest = plan.manifest;
    let cfg = &plan.config;
    let jobs: Vec<(usize, usize)> = (0..manifest.class_count())
        .flat_map(|c| (0..cfg.k_per_class).map(move |j| (c, j)))
        .collect();
    let entries: Vec<BatchLogEntry> = jobs
        .par_iter()
        .map(|&(c, j)| -> Result<BatchLogEntry, StitchError> {
            let out = plan.synthesize_one(c, j)?;
            let stem = output_stem(cfg.method, cfg.p, &manifest.classes()[c], j);
            let image_name = format!("{stem}.png");
            let prov_name = format!("{stem}.provenance.png");
            write_atomic(&out_dir.join(&image_name), &raster::encode_png(&out.image)?)?;
            write_atomic(&out_dir.join(&prov_name), &out.provenance.to_png8()?)?;
            Ok(BatchLogEntry {
                category: manifest.classes()[c].clone(),
                method: cfg.method,
                p: cfg.p,
                source_ids: out
                    .recipe
                    .source_ids
                    .iter()
                    .map(|&id| manifest.display_id(id))
                    .collect(),
                template_index: out.recipe.template_index,
                seed: out.recipe.seed,
                output: image_name,
                provenance: prov_name,
                balance_warning: out.balance_warning,
            })
        })
        .collect::<Result<_, _>>()?;

    let mut log = String::new();
    for entry in &entries {
        log.push_str(&serde_json::to_string(entry).expect("log entries serialize"));
        log.push('\n');
    }
    let log_file = log_name(cfg.method, cfg.p);
    write_atomic(&out_dir.join(&log_file), log.as_bytes())?;

    Ok(BatchSummary {
        method: cfg.method,
        p: cfg.p,
        outputs_per_class: manifest
            .classes()
            .iter()
            .map(|c| (c.clone(), cfg.k_per_class))
            .collect(),
        total: entries.len(),
        balance_warnings: entries.iter().filter(|e| e.balance_warning).count(),
        log: log_file,
    })
}
