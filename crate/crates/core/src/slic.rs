//! SLIC superpixels: windowed k-means in joint (L, a, b, x, y) space.
//!
//! Seeds sit on a regular grid with interval `S = sqrt(N / k)` and are nudged
//! to the lowest-gradient pixel of their 3×3 neighborhood. Each round assigns
//! every pixel to the closest center among those whose `2S × 2S` window covers
//! it, using `D² = d_lab² + (d_xy / S)² · m²`, then moves every center to the
//! mean of its members. A final pass absorbs small disconnected fragments so
//! that every label is 4-connected.
//!
//! All reductions run over fixed row blocks combined in block order, so the
//! result does not depend on the rayon pool size.

use std::collections::BTreeMap;

use rayon::prelude::*;
use thiserror::Error;

use crate::raster::{self, LabImage, RasterError};

/// Rows per reduction block. Fixed so center sums are combined in the same
/// order at any thread count.
const ROW_BLOCK: usize = 16;

#[derive(Debug, Error)]
pub enum SlicError {
    #[error("invalid SLIC parameters: {0}")]
    Params(String),
    #[error("target of {target} superpixels exceeds the {pixels} available pixels")]
    TooManySuperpixels { target: usize, pixels: usize },
    #[error("invalid superpixel map: {0}")]
    InvalidMap(String),
    #[error(transparent)]
    Raster(#[from] RasterError),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SlicParams {
    pub target_superpixels: usize,
    /// Compactness `m`; larger values favor square, grid-like superpixels.
    pub compactness: f64,
    pub iterations: usize,
    /// Fragments smaller than this fraction of the mean superpixel area are
    /// merged into a neighbor.
    pub min_region_fraction: f64,
}

impl Default for SlicParams {
    fn default() -> Self {
        Self {
            target_superpixels: 256,
            compactness: 10.0,
            iterations: 10,
            min_region_fraction: 0.25,
        }
    }
}

impl SlicParams {
    pub fn validate(&self) -> Result<(), SlicError> {
        if self.target_superpixels < 1 {
            return Err(SlicError::Params("target_superpixels must be ≥ 1".into()));
        }
        if self.iterations < 1 {
            return Err(SlicError::Params("iterations must be ≥ 1".into()));
        }
        if !(self.compactness > 0.0 && self.compactness.is_finite()) {
            return Err(SlicError::Params(format!(
                "compactness must be positive, got {}",
                self.compactness
            )));
        }
        if !(self.min_region_fraction > 0.0 && self.min_region_fraction <= 1.0) {
            return Err(SlicError::Params(format!(
                "min_region_fraction must lie in (0, 1], got {}",
                self.min_region_fraction
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClusterCenter {
    pub lab: [f64; 3],
    pub x: f64,
    pub y: f64,
}

/// Per-pixel superpixel labels, dense in `0..label_count`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SuperpixelMap {
    width: u32,
    height: u32,
    labels: Vec<u32>,
    label_count: usize,
}

impl SuperpixelMap {
    /// Wraps a label field, checking that every label in `0..label_count`
    /// is present and nothing lies outside it.
    pub fn new(width: u32, height: u32, labels: Vec<u32>) -> Result<Self, SlicError> {
        if width == 0 || height == 0 || labels.len() != width as usize * height as usize {
            return Err(SlicError::InvalidMap(format!(
                "{} labels for a {width}x{height} map",
                labels.len()
            )));
        }
        let max = *labels.iter().max().expect("non-empty") as usize;
        let mut seen = vec![false; max + 1];
        for &l in &labels {
            seen[l as usize] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(SlicError::InvalidMap(format!(
                "label {missing} never occurs"
            )));
        }
        Ok(Self {
            width,
            height,
            labels,
            label_count: max + 1,
        })
    }

    /// Relabels an arbitrary label field to `0..n` in first-occurrence
    /// scan order.
    pub fn compacted(width: u32, height: u32, labels: &[u32]) -> Result<Self, SlicError> {
        if width == 0 || height == 0 || labels.len() != width as usize * height as usize {
            return Err(SlicError::InvalidMap(format!(
                "{} labels for a {width}x{height} map",
                labels.len()
            )));
        }
        let mut remap: BTreeMap<u32, u32> = BTreeMap::new();
        let mut out = Vec::with_capacity(labels.len());
        for &l in labels {
            let next = remap.len() as u32;
            out.push(*remap.entry(l).or_insert(next));
        }
        Ok(Self {
            width,
            height,
            labels: out,
            label_count: remap.len(),
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn label_count(&self) -> usize {
        self.label_count
    }

    #[inline]
    pub fn label_at(&self, x: u32, y: u32) -> u32 {
        self.labels[y as usize * self.width as usize + x as usize]
    }

    /// Pixel count per label.
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.label_count];
        for &l in &self.labels {
            sizes[l as usize] += 1;
        }
        sizes
    }

    /// Number of horizontally or vertically adjacent pixel pairs whose labels
    /// differ.
    pub fn boundary_length(&self) -> usize {
        let w = self.width as usize;
        let mut count = 0;
        for (i, &l) in self.labels.iter().enumerate() {
            let x = i % w;
            if x + 1 < w && self.labels[i + 1] != l {
                count += 1;
            }
            if i + w < self.labels.len() && self.labels[i + w] != l {
                count += 1;
            }
        }
        count
    }

    /// 16-bit grayscale PNG with one label per pixel.
    pub fn to_png16(&self) -> Result<Vec<u8>, SlicError> {
        if self.label_count > u16::MAX as usize + 1 {
            return Err(SlicError::InvalidMap(format!(
                "{} labels do not fit a 16-bit PNG",
                self.label_count
            )));
        }
        let data: Vec<u16> = self.labels.iter().map(|&l| l as u16).collect();
        Ok(raster::encode_gray16_png(self.width, self.height, &data)?)
    }

    /// Sidecar text record accompanying [`Self::to_png16`].
    pub fn sidecar(&self) -> String {
        format!(
            "width={}\nheight={}\nlabel_count={}\n",
            self.width, self.height, self.label_count
        )
    }

    /// Reads a map written by [`Self::to_png16`], checking it against the
    /// sidecar's `label_count`.
    pub fn from_png16(png: &[u8], sidecar: &str) -> Result<Self, SlicError> {
        let (w, h, data) = raster::decode_gray_png(png)?;
        let map = Self::new(w, h, data.into_iter().map(u32::from).collect())?;
        let declared = sidecar
            .lines()
            .find_map(|line| line.trim().strip_prefix("label_count="))
            .and_then(|v| v.trim().parse::<usize>().ok())
            .ok_or_else(|| SlicError::InvalidMap("sidecar lacks label_count".into()))?;
        if declared != map.label_count {
            return Err(SlicError::InvalidMap(format!(
                "sidecar declares {declared} labels, image holds {}",
                map.label_count
            )));
        }
        Ok(map)
    }
}

/// Grid interval `S = sqrt(N / k)`.
pub fn grid_interval(width: u32, height: u32, target: usize) -> f64 {
    (width as f64 * height as f64 / target as f64).sqrt()
}

/// Seed grid shape (columns, rows) approximating `target` cells of roughly
/// square aspect. Ties prefer more columns.
fn grid_shape(width: u32, height: u32, target: usize) -> (usize, usize) {
    let (w, h) = (width as usize, height as usize);
    let mut best = (1, 1);
    let mut best_score = f64::INFINITY;
    for rows in 1..=h.min(target) {
        let cols = ((target as f64 / rows as f64).round() as usize).clamp(1, w);
        let count = (cols * rows) as f64;
        let aspect = (w as f64 / cols as f64) / (h as f64 / rows as f64);
        let score = (count / target as f64).ln().abs() + 0.5 * aspect.ln().abs();
        if score < best_score - 1e-12 || ((score - best_score).abs() <= 1e-12 && cols > best.0) {
            best = (cols, rows);
            best_score = score;
        }
    }
    best
}

#[inline]
fn sq_dist3(a: [f64; 3], b: [f64; 3]) -> f64 {
    let d0 = a[0] - b[0];
    let d1 = a[1] - b[1];
    let d2 = a[2] - b[2];
    d0 * d0 + d1 * d1 + d2 * d2
}

/// Squared Lab difference of the horizontal neighbors plus that of the
/// vertical neighbors, with coordinates clamped at the border.
pub fn gradient_at(lab: &LabImage, x: u32, y: u32) -> f64 {
    let (w, h) = (lab.width(), lab.height());
    let left = lab.get(x.saturating_sub(1), y);
    let right = lab.get((x + 1).min(w - 1), y);
    let up = lab.get(x, y.saturating_sub(1));
    let down = lab.get(x, (y + 1).min(h - 1));
    sq_dist3(right, left) + sq_dist3(down, up)
}

/// Places seeds on the regular grid and moves each to the lowest-gradient
/// position of its 3×3 neighborhood. A seed only moves on a strictly lower
/// gradient; among equal lower values the first in scan order wins.
pub fn init_centers(lab: &LabImage, params: &SlicParams) -> Result<Vec<ClusterCenter>, SlicError> {
    params.validate()?;
    let (w, h) = (lab.width(), lab.height());
    let pixels = w as usize * h as usize;
    if params.target_superpixels > pixels {
        return Err(SlicError::TooManySuperpixels {
            target: params.target_superpixels,
            pixels,
        });
    }
    let (cols, rows) = grid_shape(w, h, params.target_superpixels);
    let cell_w = w as f64 / cols as f64;
    let cell_h = h as f64 / rows as f64;
    let mut centers = Vec::with_capacity(cols * rows);
    for r in 0..rows {
        let gy = (r as f64 + 0.5) * cell_h - 0.5;
        for c in 0..cols {
            let gx = (c as f64 + 0.5) * cell_w - 0.5;
            let ax = (gx.round() as u32).min(w - 1);
            let ay = (gy.round() as u32).min(h - 1);
            let mut best = (ax, ay);
            let mut best_grad = gradient_at(lab, ax, ay);
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let nx = ax as i64 + dx;
                    let ny = ay as i64 + dy;
                    if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                        continue;
                    }
                    let g = gradient_at(lab, nx as u32, ny as u32);
                    if g < best_grad {
                        best_grad = g;
                        best = (nx as u32, ny as u32);
                    }
                }
            }
            let (x, y) = if best == (ax, ay) {
                (gx, gy)
            } else {
                (best.0 as f64, best.1 as f64)
            };
            centers.push(ClusterCenter {
                lab: lab.get(best.0, best.1),
                x,
                y,
            });
        }
    }
    Ok(centers)
}

/// Assigns every pixel to its nearest windowed center; pixels no window
/// covers fall back to the globally nearest center.
fn assign(
    lab: &LabImage,
    centers: &[ClusterCenter],
    s: f64,
    spatial_weight: f64,
    labels: &mut [u32],
) {
    let w = lab.width() as usize;
    let h = lab.height() as usize;
    let values = lab.values();
    labels.par_chunks_mut(w).enumerate().for_each_init(
        || vec![f64::INFINITY; w],
        |best, (y, row)| {
            best.fill(f64::INFINITY);
            let yf = y as f64;
            for (k, c) in centers.iter().enumerate() {
                let dy = yf - c.y;
                if dy.abs() > s {
                    continue;
                }
                let x0 = (c.x - s).ceil().max(0.0) as usize;
                let x1 = ((c.x + s).floor() as i64).min(w as i64 - 1);
                if x1 < x0 as i64 {
                    continue;
                }
                for x in x0..=x1 as usize {
                    let i = (y * w + x) * 3;
                    let px = [values[i], values[i + 1], values[i + 2]];
                    let dx = x as f64 - c.x;
                    let d = sq_dist3(px, c.lab) + (dx * dx + dy * dy) * spatial_weight;
                    if d < best[x] {
                        best[x] = d;
                        row[x] = k as u32;
                    }
                }
            }
            for x in 0..w {
                if best[x].is_infinite() {
                    let i = (y * w + x) * 3;
                    let px = [values[i], values[i + 1], values[i + 2]];
                    let mut nearest = (f64::INFINITY, 0u32);
                    for (k, c) in centers.iter().enumerate() {
                        let dx = x as f64 - c.x;
                        let dy = yf - c.y;
                        let d = sq_dist3(px, c.lab) + (dx * dx + dy * dy) * spatial_weight;
                        if d < nearest.0 {
                            nearest = (d, k as u32);
                        }
                    }
                    row[x] = nearest.1;
                }
            }
        },
    );
    debug_assert_eq!(labels.len(), w * h);
}

/// Moves each center to the mean (L, a, b, x, y) of its members. Centers
/// that lost all members stay put.
fn update(lab: &LabImage, labels: &[u32], centers: &mut [ClusterCenter]) {
    let w = lab.width() as usize;
    let k = centers.len();
    let values = lab.values();
    let partials: Vec<Vec<[f64; 6]>> = labels
        .par_chunks(w * ROW_BLOCK)
        .enumerate()
        .map(|(block, chunk)| {
            let mut acc = vec![[0.0f64; 6]; k];
            let base = block * ROW_BLOCK * w;
            for (off, &l) in chunk.iter().enumerate() {
                let i = base + off;
                let a = &mut acc[l as usize];
                a[0] += values[i * 3];
                a[1] += values[i * 3 + 1];
                a[2] += values[i * 3 + 2];
                a[3] += (i % w) as f64;
                a[4] += (i / w) as f64;
                a[5] += 1.0;
            }
            acc
        })
        .collect();
    let mut totals = vec![[0.0f64; 6]; k];
    for part in &partials {
        for (t, p) in totals.iter_mut().zip(part) {
            for j in 0..6 {
                t[j] += p[j];
            }
        }
    }
    for (c, t) in centers.iter_mut().zip(&totals) {
        if t[5] > 0.0 {
            c.lab = [t[0] / t[5], t[1] / t[5], t[2] / t[5]];
            c.x = t[3] / t[5];
            c.y = t[4] / t[5];
        }
    }
}

/// Runs SLIC and returns a connected, compacted superpixel map.
pub fn segment(lab: &LabImage, params: &SlicParams) -> Result<SuperpixelMap, SlicError> {
    let mut centers = init_centers(lab, params)?;
    let (w, h) = (lab.width(), lab.height());
    let s = grid_interval(w, h, params.target_superpixels);
    let spatial_weight = params.compactness * params.compactness / (s * s);
    let mut labels = vec![0u32; w as usize * h as usize];
    for round in 0..params.iterations {
        assign(lab, &centers, s, spatial_weight, &mut labels);
        if round + 1 < params.iterations {
            update(lab, &labels, &mut centers);
        }
    }
    let raw = SuperpixelMap::compacted(w, h, &labels)?;
    Ok(enforce_connectivity(&raw, params.min_region_fraction))
}

/// Number of superpixels in the map.
pub fn count_superpixels(map: &SuperpixelMap) -> usize {
    map.label_count
}

struct Components {
    /// Component id per pixel, ids assigned in scan order.
    of_pixel: Vec<u32>,
    label: Vec<u32>,
    members: Vec<Vec<u32>>,
}

fn connected_components(map: &SuperpixelMap) -> Components {
    let w = map.width as usize;
    let h = map.height as usize;
    let n = w * h;
    let mut of_pixel = vec![u32::MAX; n];
    let mut label = Vec::new();
    let mut members = Vec::new();
    let mut stack = Vec::new();
    for start in 0..n {
        if of_pixel[start] != u32::MAX {
            continue;
        }
        let id = label.len() as u32;
        let l = map.labels[start];
        let mut pixels = Vec::new();
        of_pixel[start] = id;
        stack.push(start);
        while let Some(i) = stack.pop() {
            pixels.push(i as u32);
            let (x, y) = (i % w, i / w);
            let mut visit = |j: usize| {
                if of_pixel[j] == u32::MAX && map.labels[j] == l {
                    of_pixel[j] = id;
                    stack.push(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < w {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - w);
            }
            if y + 1 < h {
                visit(i + w);
            }
        }
        label.push(l);
        members.push(pixels);
    }
    Components {
        of_pixel,
        label,
        members,
    }
}

fn find(parent: &mut [u32], mut x: u32) -> u32 {
    while parent[x as usize] != x {
        let p = parent[x as usize];
        parent[x as usize] = parent[p as usize];
        x = p;
    }
    x
}

/// Splits every label into its 4-connected components and merges components
/// smaller than `min_region_fraction × (N / label_count)` into the adjacent
/// component sharing the longest boundary (ties: lowest label, then earliest
/// component). Output labels are compacted in first-occurrence scan order.
pub fn enforce_connectivity(map: &SuperpixelMap, min_region_fraction: f64) -> SuperpixelMap {
    let w = map.width as usize;
    let h = map.height as usize;
    let n = w * h;
    let threshold = min_region_fraction * n as f64 / map.label_count as f64;
    let comps = connected_components(map);
    let count = comps.label.len();
    let mut parent: Vec<u32> = (0..count as u32).collect();
    let mut members = comps.members;
    let mut order: Vec<u32> = (0..count as u32)
        .filter(|&c| (members[c as usize].len() as f64) < threshold)
        .collect();
    order.sort_by_key(|&c| (members[c as usize].len(), c));

    for c in order {
        let root = find(&mut parent, c);
        if members[root as usize].len() as f64 >= threshold {
            continue;
        }
        let mut shared: BTreeMap<u32, usize> = BTreeMap::new();
        for &p in &members[root as usize] {
            let i = p as usize;
            let (x, y) = (i % w, i / w);
            let mut neighbors = [usize::MAX; 4];
            if x > 0 {
                neighbors[0] = i - 1;
            }
            if x + 1 < w {
                neighbors[1] = i + 1;
            }
            if y > 0 {
                neighbors[2] = i - w;
            }
            if y + 1 < h {
                neighbors[3] = i + w;
            }
            for j in neighbors.into_iter().filter(|&j| j != usize::MAX) {
                let other = find(&mut parent, comps.of_pixel[j]);
                if other != root {
                    *shared.entry(other).or_insert(0) += 1;
                }
            }
        }
        let target = shared
            .iter()
            .max_by(|a, b| {
                a.1.cmp(b.1)
                    .then_with(|| comps.label[*b.0 as usize].cmp(&comps.label[*a.0 as usize]))
                    .then_with(|| b.0.cmp(a.0))
            })
            .map(|(&t, _)| t);
        if let Some(target) = target {
            parent[root as usize] = target;
            let moved = std::mem::take(&mut members[root as usize]);
            members[target as usize].extend(moved);
        }
    }

    let labels: Vec<u32> = (0..n)
        .map(|i| find(&mut parent, comps.of_pixel[i]))
        .collect();
    SuperpixelMap::compacted(map.width, map.height, &labels).expect("dimensions unchanged")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::{rgb_to_lab, RasterImage};

    fn uniform_lab(w: u32, h: u32) -> LabImage {
        rgb_to_lab(&RasterImage::filled(w, h, [180, 120, 160]))
    }

    fn params(target: usize, m: f64, iterations: usize) -> SlicParams {
        SlicParams {
            target_superpixels: target,
            compactness: m,
            iterations,
            ..SlicParams::default()
        }
    }

    /// Labels of each pixel are reachable from every other same-label pixel.
    fn assert_connected(map: &SuperpixelMap) {
        let comps = connected_components(map);
        assert_eq!(comps.label.len(), map.label_count(), "some label is split");
    }

    #[test]
    fn params_validation() {
        assert!(SlicParams::default().validate().is_ok());
        assert!(params(0, 10.0, 10).validate().is_err());
        assert!(params(4, 0.0, 10).validate().is_err());
        assert!(params(4, 10.0, 0).validate().is_err());
        let mut p = SlicParams {
            min_region_fraction: 0.0,
            ..SlicParams::default()
        };
        assert!(p.validate().is_err());
        p.min_region_fraction = 1.0;
        assert!(p.validate().is_ok());
    }

    #[test]
    fn grid_of_512_at_256() {
        assert_eq!(grid_interval(512, 512, 256), 32.0);
        let centers = init_centers(&uniform_lab(512, 512), &params(256, 10.0, 10)).unwrap();
        assert_eq!(centers.len(), 256);
        // Uniform image: nothing moves off the grid.
        for (i, c) in centers.iter().enumerate() {
            assert_eq!(c.x, (i % 16) as f64 * 32.0 + 15.5);
            assert_eq!(c.y, (i / 16) as f64 * 32.0 + 15.5);
        }
    }

    #[test]
    fn too_many_superpixels() {
        let err = init_centers(&uniform_lab(4, 4), &params(17, 10.0, 1)).unwrap_err();
        assert!(matches!(
            err,
            SlicError::TooManySuperpixels {
                target: 17,
                pixels: 16
            }
        ));
    }

    #[test]
    fn grid_shape_prefers_columns_on_ties() {
        assert_eq!(grid_shape(64, 64, 2), (2, 1));
        assert_eq!(grid_shape(64, 64, 4), (2, 2));
        assert_eq!(grid_shape(64, 64, 1), (1, 1));
        assert_eq!(grid_shape(100, 4, 1), (1, 1));
    }

    #[test]
    fn seed_moves_off_high_contrast_neighbor() {
        // 9×9 field with one bright pixel right of the single grid seed (4, 4).
        let img = RasterImage::from_fn(9, 9, |x, y| {
            if (x, y) == (5, 4) {
                [250, 250, 250]
            } else {
                [20, 20, 20]
            }
        });
        let lab = rgb_to_lab(&img);
        let d = sq_dist3(srgb_lab(250), srgb_lab(20));
        // Hand-derived gradient table over the seed's 3×3 neighborhood.
        let expected = [[0.0, 0.0, d], [0.0, d, 0.0], [0.0, 0.0, d]];
        for (row, dy) in expected.iter().zip(3u32..=5) {
            for (&want, dx) in row.iter().zip(3u32..=5) {
                assert!(
                    (gradient_at(&lab, dx, dy) - want).abs() < 1e-9,
                    "({dx},{dy})"
                );
            }
        }
        let centers = init_centers(&lab, &params(1, 10.0, 1)).unwrap();
        assert_eq!(centers.len(), 1);
        assert_eq!((centers[0].x, centers[0].y), (3.0, 3.0));
        assert_ne!((centers[0].x, centers[0].y), (5.0, 4.0));
    }

    fn srgb_lab(v: u8) -> [f64; 3] {
        crate::raster::srgb_to_lab([v, v, v])
    }

    #[test]
    fn single_target_gives_single_label() {
        let img = RasterImage::from_fn(37, 23, |x, y| [(x * 7) as u8, (y * 11) as u8, 40]);
        let map = segment(&rgb_to_lab(&img), &params(1, 10.0, 5)).unwrap();
        assert_eq!(map.label_count(), 1);
        assert!(map.labels().iter().all(|&l| l == 0));
    }

    #[test]
    fn uniform_64_gives_quadrants() {
        let map = segment(&uniform_lab(64, 64), &params(4, 10.0, 10)).unwrap();
        assert_eq!(map.label_count(), 4);
        for size in map.sizes() {
            assert!((960..=1088).contains(&size), "{size}");
        }
        assert_connected(&map);
        // Voronoi cells of the 2×2 seed grid are the quadrants.
        assert_eq!(map.label_at(0, 0), map.label_at(31, 31));
        assert_ne!(map.label_at(31, 0), map.label_at(32, 0));
        assert_ne!(map.label_at(0, 31), map.label_at(0, 32));
    }

    /// Brute-force nearest-center labelling with fixed centers at the true
    /// half centroids: the oracle for the two-tone fixture.
    fn brute_force_halves(lab: &LabImage, m: f64, s: f64) -> Vec<u32> {
        let centers = [(lab.get(0, 0), 15.5, 31.5), (lab.get(63, 0), 47.5, 31.5)];
        let mut out = Vec::new();
        for y in 0..64u32 {
            for x in 0..64u32 {
                let p = lab.get(x, y);
                let d: Vec<f64> = centers
                    .iter()
                    .map(|(c, cx, cy)| {
                        let dl: f64 = (0..3).map(|i| (p[i] - c[i]).powi(2)).sum();
                        let dxy = ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)).sqrt();
                        (dl + (dxy / s).powi(2) * m * m).sqrt()
                    })
                    .collect();
                out.push(if d[1] < d[0] { 1 } else { 0 });
            }
        }
        out
    }

    #[test]
    fn two_tone_halves() {
        let img = RasterImage::from_fn(
            64,
            64,
            |x, _| if x < 32 { [255, 0, 0] } else { [0, 0, 255] },
        );
        let lab = rgb_to_lab(&img);
        let map = segment(&lab, &params(2, 1.0, 10)).unwrap();
        assert_eq!(count_superpixels(&map), 2);
        let oracle = brute_force_halves(&lab, 1.0, grid_interval(64, 64, 2));
        let truth: Vec<u32> = (0..64 * 64).map(|i| u32::from(i % 64 >= 32)).collect();
        assert_eq!(oracle, truth);
        let agree = map
            .labels()
            .iter()
            .zip(&truth)
            .filter(|(a, b)| a == b)
            .count();
        assert!(agree as f64 >= 0.99 * 4096.0, "agreement {agree}");
    }

    #[test]
    fn connectivity_fixed_point() {
        let labels: Vec<u32> = (0..64).map(|i| u32::from(i % 8 >= 4)).collect();
        let map = SuperpixelMap::new(8, 8, labels).unwrap();
        assert_eq!(enforce_connectivity(&map, 0.25), map);
    }

    #[test]
    fn stray_pixel_absorbed() {
        let mut labels = vec![0u32; 64];
        labels[27] = 1;
        let map = SuperpixelMap::new(8, 8, labels).unwrap();
        let out = enforce_connectivity(&map, 0.25);
        assert_eq!(out.label_count(), 1);
        assert!(out.labels().iter().all(|&l| l == 0));
    }

    fn grid_map(rows: &[&str]) -> SuperpixelMap {
        let w = rows[0].len() as u32;
        let labels: Vec<u32> = rows
            .iter()
            .flat_map(|row| row.bytes().map(|b| (b - b'A') as u32))
            .collect();
        SuperpixelMap::new(w, rows.len() as u32, labels).unwrap()
    }

    #[test]
    fn split_label_keeps_body_and_reassigns_fragment() {
        // Four labels on 16×8, so N / label_count = 32 and the threshold is
        // 0.25 × 32 = 8. Label A has a 60-pixel body and a detached 3-pixel
        // fragment at row 6, x = 13..15. The fragment touches B three times
        // (above) and D four times (left once, below three times).
        let map = grid_map(&[
            "AAAAAAAAAABBBBBB",
            "AAAAAAAAAABBBBBB",
            "AAAAAAAAAABBBBBB",
            "AAAAAAAAAABBBBBB",
            "AAAAAAAAAABBBBBB",
            "AAAAAAAAAABBBBBB",
            "CCCCCCCCDDDDDAAA",
            "CCCCCCCCDDDDDDDD",
        ]);
        assert_eq!(map.sizes(), vec![63, 36, 16, 13]);
        let comp_sizes: Vec<usize> = connected_components(&map)
            .members
            .iter()
            .map(Vec::len)
            .collect();
        assert_eq!(comp_sizes, vec![60, 36, 16, 13, 3]);

        let out = enforce_connectivity(&map, 0.25);
        assert_connected(&out);
        assert_eq!(out.label_count(), 4);
        assert_eq!(out.sizes(), vec![60, 36, 16, 16]);
        for x in 13..16 {
            assert_eq!(out.label_at(x, 6), out.label_at(8, 7));
        }
    }

    #[test]
    fn fragment_tie_goes_to_lowest_label() {
        // Center pixel of label B touches A twice and C twice; A wins.
        let map = grid_map(&["AAAAA", "AABCC", "CCCCC"]);
        let out = enforce_connectivity(&map, 1.0);
        assert_eq!(out.label_at(2, 1), out.label_at(0, 0));
    }

    #[test]
    fn uniform_512_count_and_scale() {
        let map = segment(&uniform_lab(512, 512), &SlicParams::default()).unwrap();
        let count = count_superpixels(&map);
        assert!((200..=300).contains(&count), "{count}");
        let mean = 512.0 * 512.0 / count as f64;
        for size in map.sizes() {
            let r = size as f64 / mean;
            assert!((0.5..=2.0).contains(&r), "{r}");
        }
        assert_connected(&map);
    }

    #[test]
    fn deterministic_across_pools() {
        let img = RasterImage::from_fn(96, 80, |x, y| {
            let v = ((x * 31 + y * 17) % 97) as u8;
            [v, 255 - v, (x * 2) as u8]
        });
        let lab = rgb_to_lab(&img);
        let p = params(30, 5.0, 6);
        let one = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let four = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap();
        let a = one.install(|| segment(&lab, &p).unwrap());
        let b = four.install(|| segment(&lab, &p).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn png16_roundtrip_with_sidecar() {
        let map = segment(&uniform_lab(64, 64), &params(16, 10.0, 3)).unwrap();
        let png = map.to_png16().unwrap();
        let back = SuperpixelMap::from_png16(&png, &map.sidecar()).unwrap();
        assert_eq!(back, map);
        assert!(SuperpixelMap::from_png16(&png, "label_count=3\n").is_err());
    }

    #[test]
    fn map_validation() {
        assert!(SuperpixelMap::new(2, 2, vec![0, 2, 2, 0]).is_err());
        assert!(SuperpixelMap::new(2, 2, vec![0, 1, 1]).is_err());
        let m = SuperpixelMap::compacted(2, 2, &[7, 3, 3, 9]).unwrap();
        assert_eq!(m.labels(), &[0, 1, 1, 2]);
        assert_eq!(m.label_count(), 3);
    }
}
