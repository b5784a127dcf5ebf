//! Patch-stitching image synthesis for class-imbalanced patch datasets.
//!
//! A synthetic image of class `c` is assembled from `p` distinct class-`c`
//! sources: the canvas is partitioned into `p` regions (a rectangular grid,
//! or balanced merges of SLIC superpixels of a template source) and region
//! `i` is copied from source `i`.

pub mod augment;
pub mod dataset;
pub mod fixtures;
pub mod partition;
pub mod raster;
pub mod seed;
pub mod slic;
pub mod stitch;

pub use dataset::{DatasetError, DatasetManifest, ImageId};
pub use partition::{merge_superpixels, rect_partition, PartitionError, PartitionMap};
pub use raster::{RasterError, RasterImage};
pub use slic::{segment, SlicError, SlicParams, SuperpixelMap};
pub use stitch::{stitch, BatchConfig, BatchPlan, Method, ProvenanceMap, StitchError};
