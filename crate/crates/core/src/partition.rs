//! Disjoint-region decompositions of the canvas: a rectangular grid, or a
//! balanced merge of superpixels into `p` connected regions.

use std::collections::{BTreeSet, VecDeque};

use rand::Rng;
use thiserror::Error;

use crate::raster::{self, RasterError};
use crate::slic::SuperpixelMap;

/// Default relative balance tolerance τ for merged regions.
pub const DEFAULT_BALANCE_TOLERANCE: f64 = 0.3;

const MAX_REFINE_SWEEPS: usize = 10;

#[derive(Debug, Error)]
pub enum PartitionError {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("cannot form {p} regions from {available} superpixels")]
    Infeasible { p: usize, available: usize },
    #[error(transparent)]
    Raster(#[from] RasterError),
}

/// Region index per pixel, every index in `0..region_count` non-empty.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PartitionMap {
    width: u32,
    height: u32,
    regions: Vec<u32>,
    region_count: usize,
}

impl PartitionMap {
    pub fn new(
        width: u32,
        height: u32,
        regions: Vec<u32>,
        region_count: usize,
    ) -> Result<Self, PartitionError> {
        if width == 0 || height == 0 || regions.len() != width as usize * height as usize {
            return Err(PartitionError::Argument(format!(
                "{} region indices for a {width}x{height} canvas",
                regions.len()
            )));
        }
        let mut seen = vec![false; region_count];
        for &r in &regions {
            match seen.get_mut(r as usize) {
                Some(s) => *s = true,
                None => {
                    return Err(PartitionError::Argument(format!(
                        "region index {r} outside 0..{region_count}"
                    )))
                }
            }
        }
        if let Some(empty) = seen.iter().position(|s| !s) {
            return Err(PartitionError::Argument(format!("region {empty} is empty")));
        }
        Ok(Self {
            width,
            height,
            regions,
            region_count,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dimensions(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn regions(&self) -> &[u32] {
        &self.regions
    }

    pub fn region_count(&self) -> usize {
        self.region_count
    }

    #[inline]
    pub fn region_at(&self, x: u32, y: u32) -> u32 {
        self.regions[y as usize * self.width as usize + x as usize]
    }

    /// Pixels whose right or lower neighbor lies in a different region.
    pub fn boundary_mask(&self) -> Vec<bool> {
        let w = self.width as usize;
        let n = self.regions.len();
        (0..n)
            .map(|i| {
                let r = self.regions[i];
                (i % w + 1 < w && self.regions[i + 1] != r)
                    || (i + w < n && self.regions[i + w] != r)
            })
            .collect()
    }

    /// 8-bit grayscale PNG of the region indices.
    pub fn to_png8(&self) -> Result<Vec<u8>, PartitionError> {
        if self.region_count > 256 {
            return Err(PartitionError::Argument(format!(
                "{} regions do not fit an 8-bit PNG",
                self.region_count
            )));
        }
        let data: Vec<u8> = self.regions.iter().map(|&r| r as u8).collect();
        Ok(raster::encode_gray8_png(self.width, self.height, &data)?)
    }

    pub fn from_png8(png: &[u8]) -> Result<Self, PartitionError> {
        let (w, h, data) = raster::decode_gray_png(png)?;
        let regions: Vec<u32> = data.into_iter().map(u32::from).collect();
        let count = regions.iter().max().map_or(0, |&m| m as usize + 1);
        Self::new(w, h, regions, count)
    }
}

/// Pixel count per region.
pub fn region_sizes(map: &PartitionMap) -> Vec<usize> {
    let mut sizes = vec![0; map.region_count];
    for &r in &map.regions {
        sizes[r as usize] += 1;
    }
    sizes
}

/// Grid shape `(rows, cols)` for `p` cells: rows is the largest divisor of
/// `p` not exceeding `sqrt(p)`.
pub fn grid_shape(p: usize) -> (usize, usize) {
    let rows = (1..=p)
        .take_while(|r| r * r <= p)
        .filter(|&r| p.is_multiple_of(r))
        .last()
        .unwrap_or(1);
    (rows, p / rows)
}

fn boundaries(len: u32, cells: usize) -> Vec<u32> {
    // round(i·len / cells), halves rounded up
    (0..=cells)
        .map(|i| ((2 * i as u64 * len as u64 + cells as u64) / (2 * cells as u64)) as u32)
        .collect()
}

/// Splits the canvas into a `rows × cols` grid, cells indexed row-major.
pub fn rect_partition(width: u32, height: u32, p: usize) -> Result<PartitionMap, PartitionError> {
    if p == 0 {
        return Err(PartitionError::Argument("p must be ≥ 1".into()));
    }
    if p as u64 > width as u64 * height as u64 {
        return Err(PartitionError::Argument(format!(
            "{p} regions exceed the {} pixels of a {width}x{height} canvas",
            width as u64 * height as u64
        )));
    }
    let (rows, cols) = grid_shape(p);
    if rows > height as usize || cols > width as usize {
        return Err(PartitionError::Argument(format!(
            "a {rows}x{cols} grid does not fit a {width}x{height} canvas"
        )));
    }
    let ys = boundaries(height, rows);
    let xs = boundaries(width, cols);
    let mut col_of = vec![0u32; width as usize];
    for c in 0..cols {
        for x in xs[c]..xs[c + 1] {
            col_of[x as usize] = c as u32;
        }
    }
    let mut regions = Vec::with_capacity(width as usize * height as usize);
    for r in 0..rows {
        for _ in ys[r]..ys[r + 1] {
            regions.extend(col_of.iter().map(|&c| r as u32 * cols as u32 + c));
        }
    }
    PartitionMap::new(width, height, regions, p)
}

/// A merged partition plus the conditions under which it was produced.
#[derive(Clone, Debug, PartialEq)]
pub struct MergeOutcome {
    pub map: PartitionMap,
    /// Some region falls outside `[1 − τ, 1 + τ] × N / p`.
    pub balance_warning: bool,
    /// The superpixel adjacency graph was disconnected, so regions may be
    /// disconnected too.
    pub disconnected: bool,
}

/// Region-adjacency graph over superpixels.
struct AdjacencyGraph {
    sizes: Vec<usize>,
    centroids: Vec<(f64, f64)>,
    neighbors: Vec<Vec<usize>>,
}

impl AdjacencyGraph {
    fn build(map: &SuperpixelMap) -> Self {
        let n = map.label_count();
        let w = map.width() as usize;
        let labels = map.labels();
        let mut sizes = vec![0usize; n];
        let mut sums = vec![(0.0f64, 0.0f64); n];
        let mut edges: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
        for (i, &l) in labels.iter().enumerate() {
            let l = l as usize;
            sizes[l] += 1;
            sums[l].0 += (i % w) as f64;
            sums[l].1 += (i / w) as f64;
            if i % w + 1 < w {
                let r = labels[i + 1] as usize;
                if r != l {
                    edges[l].insert(r);
                    edges[r].insert(l);
                }
            }
            if i + w < labels.len() {
                let d = labels[i + w] as usize;
                if d != l {
                    edges[l].insert(d);
                    edges[d].insert(l);
                }
            }
        }
        let centroids = sums
            .iter()
            .zip(&sizes)
            .map(|(&(sx, sy), &s)| (sx / s as f64, sy / s as f64))
            .collect();
        Self {
            sizes,
            centroids,
            neighbors: edges.into_iter().map(|e| e.into_iter().collect()).collect(),
        }
    }

    fn len(&self) -> usize {
        self.sizes.len()
    }
}

fn sq_dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)
}

/// Region id per atom, `usize::MAX` while unassigned.
const UNASSIGNED: usize = usize::MAX;

struct Growth<'g> {
    graph: &'g AdjacencyGraph,
    region_of: Vec<usize>,
    sizes: Vec<usize>,
    sums: Vec<(f64, f64)>,
}

impl<'g> Growth<'g> {
    fn new(graph: &'g AdjacencyGraph, p: usize) -> Self {
        Self {
            graph,
            region_of: vec![UNASSIGNED; graph.len()],
            sizes: vec![0; p],
            sums: vec![(0.0, 0.0); p],
        }
    }

    fn assign(&mut self, atom: usize, region: usize) {
        let s = self.graph.sizes[atom] as f64;
        let c = self.graph.centroids[atom];
        if self.region_of[atom] != UNASSIGNED {
            let old = self.region_of[atom];
            self.sizes[old] -= self.graph.sizes[atom];
            self.sums[old].0 -= c.0 * s;
            self.sums[old].1 -= c.1 * s;
        }
        self.region_of[atom] = region;
        self.sizes[region] += self.graph.sizes[atom];
        self.sums[region].0 += c.0 * s;
        self.sums[region].1 += c.1 * s;
    }

    fn centroid(&self, region: usize) -> (f64, f64) {
        let s = self.sizes[region] as f64;
        (self.sums[region].0 / s, self.sums[region].1 / s)
    }

    /// Unassigned atom adjacent to `region` whose centroid is nearest the
    /// region's centroid (ties: lowest label).
    fn nearest_frontier(&self, region: usize) -> Option<usize> {
        let center = self.centroid(region);
        let mut best: Option<(f64, usize)> = None;
        for (atom, &r) in self.region_of.iter().enumerate() {
            if r != region {
                continue;
            }
            for &nb in &self.graph.neighbors[atom] {
                if self.region_of[nb] != UNASSIGNED {
                    continue;
                }
                let d = sq_dist(self.graph.centroids[nb], center);
                let better = match best {
                    None => true,
                    Some((bd, ba)) => d < bd || (d == bd && nb < ba),
                };
                if better {
                    best = Some((d, nb));
                }
            }
        }
        best.map(|(_, a)| a)
    }

    /// Whether the atoms of `region` other than `removed` stay connected.
    fn connected_without(&self, region: usize, removed: usize) -> bool {
        let members: Vec<usize> = (0..self.region_of.len())
            .filter(|&a| a != removed && self.region_of[a] == region)
            .collect();
        let Some(&start) = members.first() else {
            return false;
        };
        let mut seen = vec![false; self.region_of.len()];
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        let mut reached = 1;
        while let Some(a) = queue.pop_front() {
            for &nb in &self.graph.neighbors[a] {
                if nb != removed && !seen[nb] && self.region_of[nb] == region {
                    seen[nb] = true;
                    reached += 1;
                    queue.push_back(nb);
                }
            }
        }
        reached == members.len()
    }
}

/// Connected components of the atoms that satisfy `keep`, in label order.
fn components_where(graph: &AdjacencyGraph, keep: impl Fn(usize) -> bool) -> Vec<Vec<usize>> {
    let mut seen = vec![false; graph.len()];
    let mut out = Vec::new();
    for start in 0..graph.len() {
        if seen[start] || !keep(start) {
            continue;
        }
        seen[start] = true;
        let mut comp = vec![start];
        let mut queue = VecDeque::from([start]);
        while let Some(a) = queue.pop_front() {
            for &nb in &graph.neighbors[a] {
                if !seen[nb] && keep(nb) {
                    seen[nb] = true;
                    comp.push(nb);
                    queue.push_back(nb);
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

/// Merges whole superpixels into `p` regions of roughly equal area.
///
/// Seeds are spread by farthest-point sampling on superpixel centroids with
/// the first seed drawn from `rng`. Regions then grow one superpixel at a
/// time, always extending the currently smallest region by its nearest
/// adjacent unassigned superpixel. A bounded refinement pass finally moves
/// boundary superpixels into smaller adjacent regions whenever that lowers
/// the summed squared size deviation and keeps the donor connected.
pub fn merge_superpixels<R: Rng + ?Sized>(
    map: &SuperpixelMap,
    p: usize,
    tolerance: f64,
    rng: &mut R,
) -> Result<MergeOutcome, PartitionError> {
    if p == 0 {
        return Err(PartitionError::Argument("p must be ≥ 1".into()));
    }
    if !(tolerance >= 0.0 && tolerance.is_finite()) {
        return Err(PartitionError::Argument(format!(
            "balance tolerance must be non-negative, got {tolerance}"
        )));
    }
    let available = map.label_count();
    if available < p {
        return Err(PartitionError::Infeasible { p, available });
    }
    let graph = AdjacencyGraph::build(map);
    let n_atoms = graph.len();
    let total = map.labels().len();
    let target = total as f64 / p as f64;

    // Farthest-point seeding.
    let mut seeds = vec![rng.random_range(0..n_atoms)];
    let mut min_dist: Vec<f64> = graph
        .centroids
        .iter()
        .map(|&c| sq_dist(c, graph.centroids[seeds[0]]))
        .collect();
    while seeds.len() < p {
        let mut best = (f64::NEG_INFINITY, 0);
        for (a, &d) in min_dist.iter().enumerate() {
            if !seeds.contains(&a) && d > best.0 {
                best = (d, a);
            }
        }
        let s = best.1;
        seeds.push(s);
        for (a, d) in min_dist.iter_mut().enumerate() {
            *d = d.min(sq_dist(graph.centroids[a], graph.centroids[s]));
        }
    }

    let mut growth = Growth::new(&graph, p);
    for (region, &s) in seeds.iter().enumerate() {
        growth.assign(s, region);
    }
    let mut unassigned = n_atoms - p;
    let mut disconnected = false;
    while unassigned > 0 {
        let mut order: Vec<usize> = (0..p).collect();
        order.sort_by_key(|&r| (growth.sizes[r], r));
        let step = order
            .iter()
            .find_map(|&r| growth.nearest_frontier(r).map(|a| (a, r)));
        match step {
            Some((atom, region)) => {
                growth.assign(atom, region);
                unassigned -= 1;
            }
            None => {
                // Remaining atoms are unreachable from every region: hand each
                // leftover graph component to the region with the nearest seed.
                disconnected = true;
                let leftovers = components_where(&graph, |a| growth.region_of[a] == UNASSIGNED);
                for comp in leftovers {
                    let weight: f64 = comp.iter().map(|&a| graph.sizes[a] as f64).sum();
                    let cx = comp
                        .iter()
                        .map(|&a| graph.centroids[a].0 * graph.sizes[a] as f64)
                        .sum::<f64>()
                        / weight;
                    let cy = comp
                        .iter()
                        .map(|&a| graph.centroids[a].1 * graph.sizes[a] as f64)
                        .sum::<f64>()
                        / weight;
                    let mut best = (f64::INFINITY, 0);
                    for (region, &s) in seeds.iter().enumerate() {
                        let d = sq_dist((cx, cy), graph.centroids[s]);
                        if d < best.0 {
                            best = (d, region);
                        }
                    }
                    for &a in &comp {
                        growth.assign(a, best.1);
                        unassigned -= 1;
                    }
                }
            }
        }
    }

    refine(&mut growth);

    let regions: Vec<u32> = map
        .labels()
        .iter()
        .map(|&l| growth.region_of[l as usize] as u32)
        .collect();
    let partition = PartitionMap::new(map.width(), map.height(), regions, p)?;
    let balance_warning = growth.sizes.iter().any(|&s| {
        (s as f64) < (1.0 - tolerance) * target || (s as f64) > (1.0 + tolerance) * target
    });
    Ok(MergeOutcome {
        map: partition,
        balance_warning,
        disconnected,
    })
}

/// Moving an atom of size `a` from a region of size `big` to one of size
/// `small` lowers the summed squared deviation iff `big − small > a`, so
/// every accepted move strictly decreases it and sweeps terminate.
fn refine(growth: &mut Growth<'_>) {
    let graph = growth.graph;
    for _ in 0..MAX_REFINE_SWEEPS {
        let mut moved = false;
        for atom in 0..graph.len() {
            let from = growth.region_of[atom];
            let a = graph.sizes[atom];
            let mut candidates: Vec<usize> = graph.neighbors[atom]
                .iter()
                .map(|&nb| growth.region_of[nb])
                .filter(|&r| r != from && growth.sizes[from] > growth.sizes[r] + a)
                .collect();
            candidates.sort_by_key(|&r| (growth.sizes[r], r));
            candidates.dedup();
            let Some(&to) = candidates.first() else {
                continue;
            };
            if growth.connected_without(from, atom) {
                growth.assign(atom, to);
                moved = true;
            }
        }
        if !moved {
            break;
        }
    }
}
