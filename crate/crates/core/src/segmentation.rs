//! Partition of the operative free space into worker areas.
//!
//! * **BAP** grows one front per seed and rescales each front's speed until
//!   the areas are balanced.
//! * **PAP** places centroids far from obstacles, relaxes them Lloyd-style
//!   and labels the map by geodesic Voronoi.
//! * **RAP** uses the PAP centroids but slows fronts down near walls, so
//!   that doorways hold them back and rooms go to their interior centroid.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fmm::{self, clearance_field, distance_field, SpeedField};
use crate::grid::{CellPos, GridMap};
use crate::scenario::Scenario;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Bap,
    Pap,
    Rap,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Bap, Method::Pap, Method::Rap];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Bap => "bap",
            Method::Pap => "pap",
            Method::Rap => "rap",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bap" => Ok(Method::Bap),
            "pap" => Ok(Method::Pap),
            "rap" => Ok(Method::Rap),
            other => Err(Error::InvalidArgument(alloc::format!("unknown method `{other}`"))),
        }
    }
}

/// Tuning knobs of the three methods.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentationParams {
    /// Exponent of the BAP speed update `(mean / area)^gamma`.
    pub bap_gamma: f64,
    pub bap_min_multiplier: f64,
    pub bap_max_multiplier: f64,
    /// BAP stops once every area is within this relative deviation of the mean.
    pub bap_tolerance: f64,
    pub bap_max_iterations: usize,
    pub relax_max_iterations: usize,
    /// RAP full-speed clearance, in cells.
    pub rap_clearance_cells: f64,
}

impl Default for SegmentationParams {
    fn default() -> Self {
        Self {
            bap_gamma: 0.5,
            bap_min_multiplier: 0.25,
            bap_max_multiplier: 4.0,
            bap_tolerance: 0.10,
            bap_max_iterations: 20,
            relax_max_iterations: 25,
            rap_clearance_cells: 2.0,
        }
    }
}

/// Outcome of the BAP balancing loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BalanceReport {
    pub iterations: usize,
    pub converged: bool,
    /// `max |area_i - mean| / mean` of the returned labeling.
    pub max_deviation: f64,
}

/// Worker areas: `labels[cell]` is the segment id in `1..=n_w` for operative
/// free cells and 0 elsewhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segmentation {
    pub method: Method,
    pub n_w: usize,
    pub width: usize,
    pub height: usize,
    pub labels: Vec<u32>,
    /// `centroids[id - 1]` belongs to segment `id`.
    pub centroids: Vec<CellPos>,
    pub balance: Option<BalanceReport>,
}

impl Segmentation {
    #[inline]
    pub fn label(&self, p: CellPos) -> u32 {
        self.labels[p.row * self.width + p.col]
    }

    #[inline]
    pub fn label_idx(&self, idx: usize) -> u32 {
        self.labels[idx]
    }

    pub fn centroid(&self, id: u32) -> CellPos {
        self.centroids[id as usize - 1]
    }

    /// Cell indices of segment `id`, row-major.
    pub fn cells(&self, id: u32) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == id)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn ids(&self) -> impl Iterator<Item = u32> {
        1..=self.n_w as u32
    }
}

/// Area (cells) of every segment, indexed by `id - 1`.
pub fn segment_stats(seg: &Segmentation) -> Vec<usize> {
    let mut areas = vec![0usize; seg.n_w];
    for &l in &seg.labels {
        if l > 0 {
            areas[l as usize - 1] += 1;
        }
    }
    areas
}

/// Runs the given method with default parameters.
pub fn segment(sc: &Scenario, method: Method, n_w: usize) -> Result<Segmentation> {
    let params = SegmentationParams::default();
    match method {
        Method::Bap => segment_bap(sc, n_w, None, &params),
        Method::Pap => segment_pap(sc, n_w, &params),
        Method::Rap => segment_rap(sc, n_w, &params),
    }
}

fn check_count(grid: &GridMap, n_w: usize) -> Result<()> {
    if n_w == 0 {
        return Err(Error::ZeroSegments);
    }
    let free = grid.free_count();
    if n_w > free {
        return Err(Error::TooManySegments {
            requested: n_w,
            free,
        });
    }
    Ok(())
}

/// Greedy farthest-point sampling over `candidates` (cell indices) using
/// geodesic distance, starting from `first`.
fn farthest_points(
    grid: &GridMap,
    candidates: &[usize],
    first: usize,
    count: usize,
) -> Vec<CellPos> {
    let mut picked = vec![grid.pos(first)];
    let mut nearest = distance_field(grid, grid.pos(first))
        .expect("free cell")
        .values()
        .to_vec();
    while picked.len() < count {
        let mut best: Option<(usize, f64)> = None;
        for &c in candidates {
            let d = nearest[c];
            if d > 0.0 && best.is_none_or(|(_, bd)| d > bd) {
                best = Some((c, d));
            }
        }
        let Some((next, _)) = best else { break };
        picked.push(grid.pos(next));
        let f = distance_field(grid, grid.pos(next)).expect("free cell");
        for (n, &t) in nearest.iter_mut().zip(f.values()) {
            if t < *n {
                *n = t;
            }
        }
    }
    picked
}

/// Default BAP seeds: the free cell geodesically farthest from the OC,
/// then repeated farthest-point picks.
pub fn farthest_point_seeds(sc: &Scenario, n_w: usize) -> Result<Vec<CellPos>> {
    check_count(&sc.grid, n_w)?;
    let grid = &sc.grid;
    let from_oc = distance_field(grid, sc.oc)?;
    let free: Vec<usize> = grid.free_cells().collect();
    let first = argmax(&free, |i| from_oc.at(i));
    Ok(farthest_points(grid, &free, first, n_w))
}

fn argmax(cells: &[usize], value: impl Fn(usize) -> f64) -> usize {
    let mut best = cells[0];
    for &c in &cells[1..] {
        if value(c) > value(best) {
            best = c;
        }
    }
    best
}

/// Labels every free cell with the nearest of `centroids` under speed
/// `speed`, returning 1-based ids.
fn label_by(grid: &GridMap, speed: &SpeedField, centroids: &[CellPos]) -> Result<Vec<u32>> {
    let (_, labels) = fmm::fmm_solve(grid, speed, centroids)?;
    Ok(to_ids(grid, labels.values()))
}

fn to_ids(grid: &GridMap, labels: &[u32]) -> Vec<u32> {
    labels
        .iter()
        .enumerate()
        .map(|(i, &l)| {
            if grid.is_free_idx(i) && l != fmm::NO_LABEL {
                l + 1
            } else {
                0
            }
        })
        .collect()
}

/// Per-segment cell nearest (euclidean, ties to the lower index) to the
/// segment's coordinate mean.
fn region_centers(grid: &GridMap, ids: &[u32], n: usize) -> Vec<CellPos> {
    let mut sum = vec![(0.0f64, 0.0f64, 0usize); n];
    for (i, &l) in ids.iter().enumerate() {
        if l > 0 {
            let p = grid.pos(i);
            let s = &mut sum[l as usize - 1];
            s.0 += p.col as f64;
            s.1 += p.row as f64;
            s.2 += 1;
        }
    }
    let means: Vec<(f64, f64)> = sum
        .iter()
        .map(|&(c, r, k)| (c / k.max(1) as f64, r / k.max(1) as f64))
        .collect();
    let mut best: Vec<Option<(usize, f64)>> = vec![None; n];
    for (i, &l) in ids.iter().enumerate() {
        if l == 0 {
            continue;
        }
        let p = grid.pos(i);
        let (mc, mr) = means[l as usize - 1];
        let d = (p.col as f64 - mc) * (p.col as f64 - mc) + (p.row as f64 - mr) * (p.row as f64 - mr);
        let slot = &mut best[l as usize - 1];
        if slot.is_none_or(|(_, bd)| d < bd) {
            *slot = Some((i, d));
        }
    }
    best.into_iter()
        .map(|b| grid.pos(b.expect("segments are nonempty").0))
        .collect()
}

/// Balanced Area Partition.
pub fn segment_bap(
    sc: &Scenario,
    n_w: usize,
    seeds: Option<&[CellPos]>,
    params: &SegmentationParams,
) -> Result<Segmentation> {
    let grid = &sc.grid;
    check_count(grid, n_w)?;
    let seeds: Vec<CellPos> = match seeds {
        Some(s) => {
            if s.len() != n_w {
                return Err(Error::InvalidArgument("one seed per segment".into()));
            }
            for (i, &p) in s.iter().enumerate() {
                if !grid.is_free(p) {
                    return Err(Error::SeedOnObstacle(p));
                }
                if s[..i].contains(&p) {
                    return Err(Error::DuplicateCentroid(p));
                }
            }
            s.to_vec()
        }
        None => farthest_point_seeds(sc, n_w)?,
    };

    let speed = SpeedField::uniform(grid);
    let mut mult = vec![1.0f64; n_w];
    let mut best: Option<(Vec<u32>, f64)> = None;
    let mut report = BalanceReport {
        iterations: 0,
        converged: false,
        max_deviation: f64::INFINITY,
    };
    for it in 0..params.bap_max_iterations.max(1) {
        let (_, labels) = fmm::fmm_solve_competing(grid, &speed, &seeds, &mult)?;
        let ids = to_ids(grid, labels.values());
        let mut areas = vec![0usize; n_w];
        for &l in &ids {
            if l > 0 {
                areas[l as usize - 1] += 1;
            }
        }
        let mean = areas.iter().sum::<usize>() as f64 / n_w as f64;
        let dev = areas
            .iter()
            .map(|&a| (a as f64 - mean).abs() / mean)
            .fold(0.0, f64::max);
        report.iterations = it + 1;
        if best.as_ref().is_none_or(|(_, d)| dev < *d) {
            best = Some((ids, dev));
        }
        if dev < params.bap_tolerance {
            report.converged = true;
            break;
        }
        for (m, &a) in mult.iter_mut().zip(&areas) {
            let f = libm::pow(mean / a as f64, params.bap_gamma);
            *m = (*m * f).clamp(params.bap_min_multiplier, params.bap_max_multiplier);
        }
    }
    let (labels, dev) = best.expect("at least one iteration");
    report.max_deviation = dev;
    let centroids = region_centers(grid, &labels, n_w);
    Ok(Segmentation {
        method: Method::Bap,
        n_w,
        width: grid.width(),
        height: grid.height(),
        labels,
        centroids,
        balance: Some(report),
    })
}

/// Local maxima of the clearance field, one per plateau (its lowest index).
pub fn clearance_maxima(grid: &GridMap, clearance: &fmm::ArrivalField) -> Vec<usize> {
    let is_max = |i: usize| {
        let v = clearance.at(i);
        crate::grid::N8.iter().all(|&d| {
            grid.offset(i, d)
                .is_none_or(|n| !grid.is_free_idx(n) || clearance.at(n) <= v)
        })
    };
    let mut candidate = vec![false; grid.len()];
    for i in grid.free_cells() {
        candidate[i] = clearance.at(i).is_finite() && is_max(i);
    }
    // Collapse 8-connected equal-valued plateaus; scanning in row-major
    // order makes the first cell met the plateau's smallest index.
    let mut taken = vec![false; grid.len()];
    let mut out = Vec::new();
    for s in 0..grid.len() {
        if !candidate[s] || taken[s] {
            continue;
        }
        out.push(s);
        taken[s] = true;
        let mut stack = vec![s];
        while let Some(i) = stack.pop() {
            for &d in &crate::grid::N8 {
                if let Some(n) = grid.offset(i, d) {
                    if candidate[n] && !taken[n] && clearance.at(n) == clearance.at(s) {
                        taken[n] = true;
                        stack.push(n);
                    }
                }
            }
        }
    }
    out
}

/// Picks `n_w` starting centroids in open areas: clearance maxima, spread
/// out by geodesic farthest-point sampling from the most open one.
pub fn init_centroids_distant(sc: &Scenario, n_w: usize) -> Result<Vec<CellPos>> {
    let grid = &sc.grid;
    check_count(grid, n_w)?;
    let clearance = clearance_field(grid);
    let maxima = clearance_maxima(grid, &clearance);
    let free: Vec<usize> = grid.free_cells().collect();
    let pool = if n_w <= maxima.len() { &maxima } else { &free };
    let first = argmax(pool, |i| clearance.at(i));
    let picked = farthest_points(grid, pool, first, n_w);
    if picked.len() == n_w {
        Ok(picked)
    } else {
        // Candidates exhausted; fall back to all free cells.
        let first = argmax(&free, |i| clearance.at(i));
        Ok(farthest_points(grid, &free, first, n_w))
    }
}

/// Lloyd-style relaxation: label by geodesic Voronoi, move each centroid to
/// its region's centre cell, until no centroid moves more than one cell.
pub fn relax_centroids(
    sc: &Scenario,
    centroids: &[CellPos],
    params: &SegmentationParams,
) -> Result<Vec<CellPos>> {
    let grid = &sc.grid;
    for (i, &c) in centroids.iter().enumerate() {
        if !grid.is_free(c) {
            return Err(Error::SeedOnObstacle(c));
        }
        if centroids[..i].contains(&c) {
            return Err(Error::DuplicateCentroid(c));
        }
    }
    let speed = SpeedField::uniform(grid);
    let mut current = centroids.to_vec();
    for _ in 0..params.relax_max_iterations {
        let ids = label_by(grid, &speed, &current)?;
        let next = region_centers(grid, &ids, current.len());
        let moved = current
            .iter()
            .zip(&next)
            .map(|(a, b)| a.chebyshev(*b))
            .max()
            .unwrap_or(0);
        current = next;
        if moved <= 1 {
            break;
        }
    }
    Ok(current)
}

fn voronoi(sc: &Scenario, method: Method, n_w: usize, speed: &SpeedField, centroids: Vec<CellPos>) -> Result<Segmentation> {
    let grid = &sc.grid;
    let labels = label_by(grid, speed, &centroids)?;
    Ok(Segmentation {
        method,
        n_w,
        width: grid.width(),
        height: grid.height(),
        labels,
        centroids,
        balance: None,
    })
}

/// Polygonal Area Partition.
pub fn segment_pap(sc: &Scenario, n_w: usize, params: &SegmentationParams) -> Result<Segmentation> {
    let init = init_centroids_distant(sc, n_w)?;
    let centroids = relax_centroids(sc, &init, params)?;
    voronoi(sc, Method::Pap, n_w, &SpeedField::uniform(&sc.grid), centroids)
}

/// Front speed used by RAP: full speed beyond `c0` cells of clearance,
/// proportionally slower closer to walls. Clearance is measured to the
/// obstacle face, half a cell beyond the centre of a wall-adjacent cell.
pub fn rap_speed(grid: &GridMap, params: &SegmentationParams) -> SpeedField {
    let clearance = clearance_field(grid);
    let h = grid.cell_size();
    let c0 = params.rap_clearance_cells * h;
    SpeedField::from_fn(grid, |i| ((clearance.at(i) + 0.5 * h) / c0).min(1.0))
}

/// Room-like Area Partition.
pub fn segment_rap(sc: &Scenario, n_w: usize, params: &SegmentationParams) -> Result<Segmentation> {
    let init = init_centroids_distant(sc, n_w)?;
    let centroids = relax_centroids(sc, &init, params)?;
    voronoi(sc, Method::Rap, n_w, &rap_speed(&sc.grid, params), centroids)
}
