//! Class-labeled image collections: directory and CSV ingestion, per-class
//! sampling and imbalance statistics.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::raster::{self, RasterError, RasterImage};

const IMAGE_EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}: no class subdirectories found")]
    EmptyRoot(PathBuf),
    #[error("class directory {0} contains no images")]
    EmptyClass(PathBuf),
    #[error("{path}, line {line}: {message}")]
    Csv {
        path: PathBuf,
        line: u64,
        message: String,
    },
    #[error("{path}: duplicate image {image} on lines {first} and {second}")]
    DuplicatePath {
        path: PathBuf,
        image: String,
        first: u64,
        second: u64,
    },
    #[error("invalid manifest: {0}")]
    Invalid(String),
    #[error("unknown class index {0}")]
    UnknownCategory(usize),
    #[error("class {class} has {available} images, {requested} requested")]
    Infeasible {
        class: String,
        available: usize,
        requested: usize,
    },
    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: RasterError,
    },
}

/// Position of an image inside a manifest.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct ImageId {
    pub category: usize,
    pub index: usize,
}

/// Ordered catalog of images per class. Ordering is deterministic and part of
/// the seeding contract: classes and entries are sorted lexicographically.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetManifest {
    root: PathBuf,
    classes: Vec<String>,
    entries: Vec<Vec<PathBuf>>,
}

impl DatasetManifest {
    /// Builds a manifest from `(class, paths)` groups, sorting both levels.
    pub fn new(
        root: impl Into<PathBuf>,
        groups: impl IntoIterator<Item = (String, Vec<PathBuf>)>,
    ) -> Result<Self, DatasetError> {
        let mut by_class: BTreeMap<String, Vec<PathBuf>> = BTreeMap::new();
        for (class, paths) in groups {
            if class.is_empty() {
                return Err(DatasetError::Invalid("empty class name".into()));
            }
            if by_class.insert(class.clone(), paths).is_some() {
                return Err(DatasetError::Invalid(format!("class {class} listed twice")));
            }
        }
        if by_class.is_empty() {
            return Err(DatasetError::Invalid("no classes".into()));
        }
        let mut classes = Vec::with_capacity(by_class.len());
        let mut entries = Vec::with_capacity(by_class.len());
        for (class, mut paths) in by_class {
            if paths.is_empty() {
                return Err(DatasetError::Invalid(format!(
                    "class {class} has no images"
                )));
            }
            paths.sort();
            classes.push(class);
            entries.push(paths);
        }
        Ok(Self {
            root: root.into(),
            classes,
            entries,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn class_count(&self) -> usize {
        self.classes.len()
    }

    pub fn entries(&self, category: usize) -> &[PathBuf] {
        &self.entries[category]
    }

    pub fn count(&self, category: usize) -> usize {
        self.entries[category].len()
    }

    pub fn total(&self) -> usize {
        self.entries.iter().map(Vec::len).sum()
    }

    pub fn category_index(&self, name: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == name)
    }

    pub fn path(&self, id: ImageId) -> &Path {
        &self.entries[id.category][id.index]
    }

    /// Path relative to the manifest root when possible; used as the stable
    /// image identifier in logs.
    pub fn display_id(&self, id: ImageId) -> String {
        let path = self.path(id);
        path.strip_prefix(&self.root)
            .unwrap_or(path)
            .to_string_lossy()
            .replace('\\', "/")
    }

    /// All image ids in manifest order.
    pub fn ids(&self) -> impl Iterator<Item = ImageId> + '_ {
        self.entries
            .iter()
            .enumerate()
            .flat_map(|(category, paths)| {
                (0..paths.len()).map(move |index| ImageId { category, index })
            })
    }

    /// Reads and decodes one entry.
    pub fn load(&self, id: ImageId) -> Result<RasterImage, DatasetError> {
        let path = self.path(id);
        let bytes = fs::read(path).map_err(|source| DatasetError::Io {
            path: path.to_owned(),
            source,
        })?;
        raster::decode_image(&bytes).map_err(|source| DatasetError::Image {
            path: path.to_owned(),
            source,
        })
    }

    /// Eager validation: every entry exists and decodes.
    pub fn validate(&self) -> Result<(), DatasetError> {
        for id in self.ids() {
            self.load(id)?;
        }
        Ok(())
    }
}

fn is_image(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| IMAGE_EXTENSIONS.iter().any(|x| x.eq_ignore_ascii_case(e)))
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_owned(),
        source,
    }
}

/// Reads `root/<class>/<image>` trees. Hidden entries and non-image files
/// are ignored.
pub fn scan_directory(root: &Path) -> Result<DatasetManifest, DatasetError> {
    let mut groups = Vec::new();
    let mut dirs: Vec<PathBuf> = Vec::new();
    for entry in fs::read_dir(root).map_err(io_err(root))? {
        let entry = entry.map_err(io_err(root))?;
        let name = entry.file_name();
        if name.to_string_lossy().starts_with('.') {
            continue;
        }
        if entry.file_type().map_err(io_err(root))?.is_dir() {
            dirs.push(entry.path());
        }
    }
    if dirs.is_empty() {
        return Err(DatasetError::EmptyRoot(root.to_owned()));
    }
    dirs.sort();
    for dir in dirs {
        let class = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        let mut images = Vec::new();
        for entry in fs::read_dir(&dir).map_err(io_err(&dir))? {
            let entry = entry.map_err(io_err(&dir))?;
            let path = entry.path();
            let hidden = entry.file_name().to_string_lossy().starts_with('.');
            if !hidden && entry.file_type().map_err(io_err(&dir))?.is_file() && is_image(&path) {
                images.push(path);
            }
        }
        if images.is_empty() {
            return Err(DatasetError::EmptyClass(dir));
        }
        groups.push((class, images));
    }
    DatasetManifest::new(root, groups)
}

/// Reads a `path,label` CSV. Relative paths resolve against the CSV's
/// directory; files are not touched until [`DatasetManifest::validate`] or
/// [`DatasetManifest::load`].
pub fn load_csv_manifest(path: &Path) -> Result<DatasetManifest, DatasetError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let csv_err = |line: u64, message: String| DatasetError::Csv {
        path: path.to_owned(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| csv_err(1, e.to_string()))?
        .clone();
    let names: Vec<&str> = headers.iter().collect();
    let path_col = names.iter().position(|h| *h == "path");
    let label_col = names.iter().position(|h| *h == "label");
    let (Some(path_col), Some(label_col)) = (path_col, label_col) else {
        return Err(csv_err(
            1,
            format!("expected header `path,label`, found `{}`", names.join(",")),
        ));
    };
    if let Some(extra) = names.iter().find(|h| **h != "path" && **h != "label") {
        return Err(csv_err(1, format!("unknown column `{extra}`")));
    }
    if names.len() != 2 {
        return Err(csv_err(1, "header repeats a column".into()));
    }

    let mut groups: BTreeMap<String, Vec<PathBuf>> = BTreeMap::new();
    let mut first_seen: HashMap<PathBuf, u64> = HashMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            csv_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let raw_path = record.get(path_col).unwrap_or_default();
        let label = record.get(label_col).unwrap_or_default();
        if raw_path.is_empty() {
            return Err(csv_err(line, "empty path".into()));
        }
        if label.is_empty() {
            return Err(csv_err(line, "empty label".into()));
        }
        let resolved = base.join(raw_path);
        if let Some(&first) = first_seen.get(&resolved) {
            return Err(DatasetError::DuplicatePath {
                path: path.to_owned(),
                image: raw_path.to_owned(),
                first,
                second: line,
            });
        }
        first_seen.insert(resolved.clone(), line);
        groups.entry(label.to_owned()).or_default().push(resolved);
    }
    if groups.is_empty() {
        return Err(csv_err(1, "no rows".into()));
    }
    DatasetManifest::new(base, groups)
}

/// Uniform sample of `p` distinct images from one class, in draw order.
pub fn sample_category<R: Rng + ?Sized>(
    manifest: &DatasetManifest,
    category: usize,
    p: usize,
    rng: &mut R,
) -> Result<Vec<ImageId>, DatasetError> {
    if category >= manifest.class_count() {
        return Err(DatasetError::UnknownCategory(category));
    }
    let available = manifest.count(category);
    if available < p {
        return Err(DatasetError::Infeasible {
            class: manifest.classes[category].clone(),
            available,
            requested: p,
        });
    }
    Ok(rand::seq::index::sample(rng, available, p)
        .into_iter()
        .map(|index| ImageId { category, index })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClassCount {
    pub class: String,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClassStats {
    pub classes: Vec<ClassCount>,
    pub total: usize,
    /// Largest class count over smallest.
    pub imbalance_ratio: f64,
}

pub fn class_stats(manifest: &DatasetManifest) -> ClassStats {
    let classes: Vec<ClassCount> = manifest
        .classes
        .iter()
        .zip(&manifest.entries)
        .map(|(class, paths)| ClassCount {
            class: class.clone(),
            count: paths.len(),
        })
        .collect();
    let max = classes.iter().map(|c| c.count).max().unwrap_or(0);
    let min = classes.iter().map(|c| c.count).min().unwrap_or(0);
    ClassStats {
        total: classes.iter().map(|c| c.count).sum(),
        imbalance_ratio: if min == 0 {
            1.0
        } else {
            max as f64 / min as f64
        },
        classes,
    }
}

impl ClassStats {
    /// Plain-text table: one row per class, then total and ratio.
    pub fn to_table(&self) -> String {
        let width = self
            .classes
            .iter()
            .map(|c| c.class.len())
            .max()
            .unwrap_or(0)
            .max(5);
        let mut out = format!("{:<width$}  {:>8}\n", "class", "images");
        for c in &self.classes {
            out.push_str(&format!("{:<width$}  {:>8}\n", c.class, c.count));
        }
        out.push_str(&format!("{:<width$}  {:>8}\n", "total", self.total));
        out.push_str(&format!("imbalance ratio {:.4}\n", self.imbalance_ratio));
        out
    }
}
