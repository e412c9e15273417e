//! Splitting the input space into possibly overlapping regions.
//!
//! Two methods are provided. `voronoi_overlap` runs k-means on the region
//! sample and widens each Voronoi cell multiplicatively: `x` belongs to region
//! `b` iff `‖x - c_b‖ ≤ (1 + ρ) · min_β ‖x - c_β‖`. `grid_overlap` tiles the
//! sample's bounding box with axis-aligned cells and inflates each cell by `ρ`
//! times its side length. Both guarantee every `x` is covered by at least one
//! region; grid queries outside every inflated cell snap to the cell that needs
//! the least extra inflation to cover them.
//!
//! After fitting, regions holding fewer than `min_points` region-sample points
//! are merged into their nearest neighbour until the floor holds, so the number
//! of regions may be smaller than requested.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};

const KMEANS_MAX_ITERS: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionMethod {
    VoronoiOverlap,
    GridOverlap,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionalizationSpec {
    pub method: RegionMethod,
    /// Number of centers (voronoi) or cells per axis (grid).
    pub target_regions: usize,
    /// Relative inflation ρ ∈ [0, 1].
    #[serde(default)]
    pub overlap: f64,
    #[serde(default = "default_min_points")]
    pub min_points: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_min_points() -> usize {
    1
}

impl RegionalizationSpec {
    pub fn voronoi(target_regions: usize, overlap: f64, min_points: usize, seed: u64) -> Self {
        Self {
            method: RegionMethod::VoronoiOverlap,
            target_regions,
            overlap,
            min_points,
            seed,
        }
    }

    pub fn grid(cells_per_axis: usize, overlap: f64, min_points: usize, seed: u64) -> Self {
        Self {
            method: RegionMethod::GridOverlap,
            target_regions: cells_per_axis,
            overlap,
            min_points,
            seed,
        }
    }

    pub fn validate(&self) -> Vec<String> {
        let mut problems = Vec::new();
        if self.target_regions == 0 {
            problems.push("regionalization.target_regions must be >= 1".to_owned());
        }
        if !(0.0..=1.0).contains(&self.overlap) {
            problems.push(format!(
                "regionalization.overlap must lie in [0, 1], got {}",
                self.overlap
            ));
        }
        if self.min_points == 0 {
            problems.push("regionalization.min_points must be >= 1".to_owned());
        }
        problems
    }
}

/// Axis-aligned closed box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl GridBox {
    fn contains_inflated(&self, x: &[f64], overlap: f64) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(&v, (&lo, &hi))| {
                let margin = overlap * (hi - lo);
                v >= lo - margin && v <= hi + margin
            })
    }

    fn squared_distance(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(&v, (&lo, &hi))| {
                let d = if v < lo {
                    lo - v
                } else if v > hi {
                    v - hi
                } else {
                    0.0
                };
                d * d
            })
            .sum()
    }

    /// Smallest ρ for which the inflated box contains `x`.
    fn required_overlap(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(&v, (&lo, &hi))| {
                let d = (lo - v).max(v - hi).max(0.0);
                if d == 0.0 {
                    0.0
                } else if hi > lo {
                    d / (hi - lo)
                } else {
                    f64::INFINITY
                }
            })
            .fold(0.0, f64::max)
    }

    fn center(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(a, b)| 0.5 * (a + b))
            .collect()
    }
}

/// Region descriptors. A grid region is a union of cells, since merging
/// under-occupied cells produces non-box regions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Partition {
    Voronoi { centers: Vec<Vec<f64>> },
    Grid { regions: Vec<Vec<GridBox>> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Regionalization {
    pub spec: RegionalizationSpec,
    pub dim: usize,
    /// Bounding box of the region-training sample.
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub partition: Partition,
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum()
}

/// Index of the nearest center, ties to the lowest index.
fn nearest(centers: &[Vec<f64>], x: &[f64]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, c) in centers.iter().enumerate() {
        let d = squared_distance(c, x);
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    best
}

fn centroid(data: &Dataset, members: &[usize]) -> Vec<f64> {
    let mut c = vec![0.0; data.dim()];
    for &i in members {
        for (acc, v) in c.iter_mut().zip(data.point(i)) {
            *acc += v;
        }
    }
    let n = members.len().max(1) as f64;
    c.iter_mut().for_each(|v| *v /= n);
    c
}

/// Farthest-point seeding from a random first point, then Lloyd iterations.
fn kmeans(data: &Dataset, k: usize, seed: u64) -> Vec<Vec<f64>> {
    let n = data.len();
    let k = k.min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let first = rng.gen_range(0..n);
    let mut centers = vec![data.point(first).to_vec()];
    let mut dist: Vec<f64> = data
        .points()
        .map(|p| squared_distance(p, &centers[0]))
        .collect();
    while centers.len() < k {
        let (far, &far_d) = dist
            .iter()
            .enumerate()
            .fold((0, &f64::NEG_INFINITY), |acc, cur| {
                if cur.1 > acc.1 {
                    cur
                } else {
                    acc
                }
            });
        if far_d <= 0.0 {
            // fewer distinct points than requested centers
            break;
        }
        let c = data.point(far).to_vec();
        for (d, p) in dist.iter_mut().zip(data.points()) {
            *d = d.min(squared_distance(p, &c));
        }
        centers.push(c);
    }

    let mut assignment = vec![usize::MAX; n];
    for _ in 0..KMEANS_MAX_ITERS {
        let mut changed = false;
        for (i, p) in data.points().enumerate() {
            let a = nearest(&centers, p);
            if assignment[i] != a {
                assignment[i] = a;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        for (b, center) in centers.iter_mut().enumerate() {
            let members: Vec<usize> = (0..n).filter(|&i| assignment[i] == b).collect();
            if !members.is_empty() {
                *center = centroid(data, &members);
            }
        }
    }
    centers
}

fn grid_cells(lower: &[f64], upper: &[f64], per_axis: usize) -> Vec<GridBox> {
    let dim = lower.len();
    let total = per_axis.pow(dim as u32);
    (0..total)
        .map(|mut code| {
            let mut lo = Vec::with_capacity(dim);
            let mut hi = Vec::with_capacity(dim);
            for j in 0..dim {
                let cell = code % per_axis;
                code /= per_axis;
                let width = (upper[j] - lower[j]) / per_axis as f64;
                lo.push(lower[j] + width * cell as f64);
                hi.push(if cell + 1 == per_axis {
                    upper[j]
                } else {
                    lower[j] + width * (cell + 1) as f64
                });
            }
            GridBox {
                lower: lo,
                upper: hi,
            }
        })
        .collect()
}

/// Fits a regionalization on the region-training sample.
pub fn fit_regions(region_sample: &Dataset, spec: &RegionalizationSpec) -> Result<Regionalization> {
    let problems = spec.validate();
    if !problems.is_empty() {
        return Err(Error::Validation(problems));
    }
    let (lower, upper) = region_sample
        .bounding_box()
        .ok_or_else(|| Error::Domain("cannot fit regions on an empty sample".into()))?;
    if region_sample.len() < spec.min_points {
        return Err(Error::Fit(format!(
            "{} region-sample points cannot satisfy an occupancy floor of {}",
            region_sample.len(),
            spec.min_points
        )));
    }
    let dim = region_sample.dim();
    let partition = match spec.method {
        RegionMethod::VoronoiOverlap => {
            let centers = kmeans(region_sample, spec.target_regions, spec.seed);
            Partition::Voronoi {
                centers: merge_voronoi(region_sample, centers, spec.min_points),
            }
        }
        RegionMethod::GridOverlap => {
            let cells = grid_cells(&lower, &upper, spec.target_regions);
            let regions = cells.into_iter().map(|c| vec![c]).collect();
            Partition::Grid {
                regions: merge_grid(region_sample, regions, spec.min_points),
            }
        }
    };
    Ok(Regionalization {
        spec: spec.clone(),
        dim,
        lower,
        upper,
        partition,
    })
}

fn merge_voronoi(data: &Dataset, mut centers: Vec<Vec<f64>>, floor: usize) -> Vec<Vec<f64>> {
    loop {
        let assignment: Vec<usize> = data.points().map(|p| nearest(&centers, p)).collect();
        let mut counts = vec![0usize; centers.len()];
        assignment.iter().for_each(|&a| counts[a] += 1);
        if centers.len() == 1 {
            return centers;
        }
        let Some((worst, _)) = counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c < floor)
            .min_by_key(|(_, &c)| c)
        else {
            return centers;
        };
        let others: Vec<Vec<f64>> = centers
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != worst)
            .map(|(_, c)| c.clone())
            .collect();
        let target_in_others = nearest(&others, &centers[worst]);
        let target = if target_in_others >= worst {
            target_in_others + 1
        } else {
            target_in_others
        };
        let members: Vec<usize> = (0..data.len())
            .filter(|&i| assignment[i] == worst || assignment[i] == target)
            .collect();
        if !members.is_empty() {
            centers[target] = centroid(data, &members);
        }
        centers.remove(worst);
    }
}

fn merge_grid(data: &Dataset, mut regions: Vec<Vec<GridBox>>, floor: usize) -> Vec<Vec<GridBox>> {
    loop {
        let mut counts = vec![0usize; regions.len()];
        for p in data.points() {
            counts[grid_primary(&regions, p)] += 1;
        }
        if regions.len() == 1 {
            return regions;
        }
        let Some((worst, _)) = counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c < floor)
            .min_by_key(|(_, &c)| c)
        else {
            return regions;
        };
        let anchor = region_center(&regions[worst]);
        let mut target = usize::MAX;
        let mut best = f64::INFINITY;
        for (i, r) in regions.iter().enumerate() {
            if i == worst {
                continue;
            }
            let d = squared_distance(&region_center(r), &anchor);
            if d < best {
                best = d;
                target = i;
            }
        }
        let boxes = regions.remove(worst);
        let target = if target > worst { target - 1 } else { target };
        regions[target].extend(boxes);
    }
}

fn region_center(boxes: &[GridBox]) -> Vec<f64> {
    let mut c = vec![0.0; boxes[0].lower.len()];
    for b in boxes {
        for (acc, v) in c.iter_mut().zip(b.center()) {
            *acc += v;
        }
    }
    c.iter_mut().for_each(|v| *v /= boxes.len() as f64);
    c
}

/// First region whose un-inflated cells contain `x`, else the nearest one.
fn grid_primary(regions: &[Vec<GridBox>], x: &[f64]) -> usize {
    regions
        .iter()
        .position(|r| r.iter().any(|b| b.contains_inflated(x, 0.0)))
        .unwrap_or_else(|| grid_nearest(regions, x))
}

/// Region needing the least inflation to cover `x` (ties to the lowest index).
/// Cells with a zero-width axis fall back to Euclidean distance.
fn grid_nearest(regions: &[Vec<GridBox>], x: &[f64]) -> usize {
    let mut best = 0;
    let mut best_key = (f64::INFINITY, f64::INFINITY);
    for (i, r) in regions.iter().enumerate() {
        let key = r
            .iter()
            .map(|b| (b.required_overlap(x), b.squared_distance(x)))
            .fold((f64::INFINITY, f64::INFINITY), |acc, k| {
                if k < acc {
                    k
                } else {
                    acc
                }
            });
        if key < best_key {
            best = i;
            best_key = key;
        }
    }
    best
}

impl Regionalization {
    /// Number of regions `B`, fixed after fitting.
    pub fn region_count(&self) -> usize {
        match &self.partition {
            Partition::Voronoi { centers } => centers.len(),
            Partition::Grid { regions } => regions.len(),
        }
    }

    pub fn overlap(&self) -> f64 {
        self.spec.overlap
    }

    /// Sorted indices of the regions covering `x`; never empty.
    pub fn membership(&self, x: &[f64]) -> Result<Vec<usize>> {
        self.membership_with_overlap(x, self.spec.overlap)
    }

    /// Membership under a different inflation ρ for the same fitted regions.
    pub fn membership_with_overlap(&self, x: &[f64], overlap: f64) -> Result<Vec<usize>> {
        if x.len() != self.dim {
            return Err(Error::Dimension {
                index: 0,
                expected: self.dim,
                found: x.len(),
            });
        }
        Ok(self.members_unchecked(x, overlap))
    }

    pub(crate) fn members_unchecked(&self, x: &[f64], overlap: f64) -> Vec<usize> {
        match &self.partition {
            Partition::Voronoi { centers } => {
                let dists: Vec<f64> = centers
                    .iter()
                    .map(|c| squared_distance(c, x).sqrt())
                    .collect();
                let min = dists.iter().copied().fold(f64::INFINITY, f64::min);
                let limit = (1.0 + overlap) * min;
                (0..centers.len()).filter(|&b| dists[b] <= limit).collect()
            }
            Partition::Grid { regions } => {
                let inside: Vec<usize> = (0..regions.len())
                    .filter(|&b| regions[b].iter().any(|c| c.contains_inflated(x, overlap)))
                    .collect();
                if inside.is_empty() {
                    vec![grid_nearest(regions, x)]
                } else {
                    inside
                }
            }
        }
    }

    /// The overlap cell `X_I` containing `x`: the exact index set `I` of covering
    /// regions, which is the membership set.
    pub fn overlap_cell(&self, x: &[f64]) -> Result<Vec<usize>> {
        self.membership(x)
    }

    /// Splits `data` into the `B` regional subsamples. A point lying in several
    /// regions is copied into each. Every regional point gets weight `1/n_b`;
    /// regions with no points get an empty dataset.
    pub fn assign_subsamples(&self, data: &Dataset) -> Result<Vec<Dataset>> {
        let b = self.region_count();
        let mut indices: Vec<Vec<usize>> = vec![Vec::new(); b];
        for (i, p) in data.points().enumerate() {
            if p.len() != self.dim {
                return Err(Error::Dimension {
                    index: i,
                    expected: self.dim,
                    found: p.len(),
                });
            }
            for r in self.members_unchecked(p, self.spec.overlap) {
                indices[r].push(i);
            }
        }
        if data.dim() != self.dim {
            return Err(Error::Dimension {
                index: 0,
                expected: self.dim,
                found: data.dim(),
            });
        }
        Ok(indices
            .iter()
            .map(|idx| data.subset(idx).uniform())
            .collect())
    }

    /// Regional counts `n_b` of `data` under the fitted membership rule.
    pub fn counts(&self, data: &Dataset) -> Result<Vec<usize>> {
        let mut counts = vec![0; self.region_count()];
        for p in data.points() {
            for r in self.membership(p)? {
                counts[r] += 1;
            }
        }
        Ok(counts)
    }

    /// Bounding box of the region sample widened by ρ times its extent per axis.
    pub fn inflated_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let rho = self.spec.overlap;
        let lo = self
            .lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| l - rho * (u - l))
            .collect();
        let hi = self
            .lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| u + rho * (u - l))
            .collect();
        (lo, hi)
    }
}
