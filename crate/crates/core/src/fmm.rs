//! First-order Fast Marching solver for the eikonal equation `|∇T| F = 1`
//! on the occupancy grid.
//!
//! Fronts start at the source cells with `T = 0` and cells are finalized in
//! non-decreasing arrival order through a binary heap. Every reached cell
//! also records which source's front claimed it first, which is what the
//! segmentation methods build on.

use alloc::collections::BinaryHeap;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{CellPos, GridMap};

/// Label value of cells no front reached.
pub const NO_LABEL: u32 = u32::MAX;

/// Per-cell propagation speed. Obstacles and zero-speed cells are never
/// entered.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeedField {
    speeds: Vec<f64>,
}

impl SpeedField {
    /// Unit speed on every free cell.
    pub fn uniform(grid: &GridMap) -> Self {
        Self {
            speeds: (0..grid.len())
                .map(|i| if grid.is_free_idx(i) { 1.0 } else { 0.0 })
                .collect(),
        }
    }

    /// Speed given per cell index; obstacles are forced to zero.
    pub fn from_fn(grid: &GridMap, mut f: impl FnMut(usize) -> f64) -> Self {
        Self {
            speeds: (0..grid.len())
                .map(|i| {
                    if grid.is_free_idx(i) {
                        let v = f(i);
                        assert!(v.is_finite() && v >= 0.0, "speed must be finite and >= 0");
                        v
                    } else {
                        0.0
                    }
                })
                .collect(),
        }
    }

    #[inline]
    pub fn at(&self, idx: usize) -> f64 {
        self.speeds[idx]
    }
}

/// Arrival times in the grid's length unit divided by speed; `+inf` where
/// no front arrived.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrivalField {
    width: usize,
    height: usize,
    times: Vec<f64>,
}

impl ArrivalField {
    #[inline]
    pub fn at(&self, idx: usize) -> f64 {
        self.times[idx]
    }

    #[inline]
    pub fn get(&self, p: CellPos) -> f64 {
        self.times[p.row * self.width + p.col]
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.times
    }
}

/// Index (into the source list) of the front that reached each cell.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelField {
    width: usize,
    labels: Vec<u32>,
}

impl LabelField {
    #[inline]
    pub fn at(&self, idx: usize) -> u32 {
        self.labels[idx]
    }

    #[inline]
    pub fn get(&self, p: CellPos) -> u32 {
        self.labels[p.row * self.width + p.col]
    }

    pub fn values(&self) -> &[u32] {
        &self.labels
    }
}

/// A cell path produced by descending an arrival field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeodesicPath {
    pub cells: Vec<CellPos>,
    /// Length in meters.
    pub length: f64,
}

impl GeodesicPath {
    /// Reverses the walking direction in place.
    pub fn reverse(&mut self) {
        self.cells.reverse();
    }
}

#[derive(Clone, Copy, PartialEq)]
struct Entry {
    time: f64,
    idx: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    // Min-heap on (time, idx).
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.idx.cmp(&self.idx))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

const FAR: u8 = 0;
const TRIAL: u8 = 1;
const KNOWN: u8 = 2;

/// How a cell's tentative time is computed from its finalized neighbours.
#[derive(Clone, Copy)]
enum Stencil<'a> {
    /// Classic scheme: one front, labels only ride along.
    Shared,
    /// Each label propagates with its own speed multiplier and only sees
    /// its own finalized cells; the earliest label wins.
    Competing(&'a [f64]),
}

/// Solves the eikonal equation from `sources` with per-cell `speed`.
///
/// Labels are positions in `sources`. When two fronts arrive at the same
/// time the one whose source cell has the smaller row-major index wins, so
/// the partition does not depend on the order of `sources`.
pub fn fmm_solve(
    grid: &GridMap,
    speed: &SpeedField,
    sources: &[CellPos],
) -> Result<(ArrivalField, LabelField)> {
    solve(grid, speed, sources, Stencil::Shared, None)
}

/// Labeled solve where front `i` advances with speed `speed * multipliers[i]`.
pub fn fmm_solve_competing(
    grid: &GridMap,
    speed: &SpeedField,
    sources: &[CellPos],
    multipliers: &[f64],
) -> Result<(ArrivalField, LabelField)> {
    if multipliers.len() != sources.len() {
        return Err(Error::InvalidArgument("one multiplier per source".into()));
    }
    if multipliers.iter().any(|m| !(m.is_finite() && *m > 0.0)) {
        return Err(Error::InvalidArgument("multipliers must be positive".into()));
    }
    solve(grid, speed, sources, Stencil::Competing(multipliers), None)
}

/// Unit-speed distance field (meters) from a single cell.
pub fn distance_field(grid: &GridMap, source: CellPos) -> Result<ArrivalField> {
    Ok(fmm_solve(grid, &SpeedField::uniform(grid), &[source])?.0)
}

/// Unit-speed distance field from `source`, solved only until every cell in
/// `targets` is final. Cells not finalized by then are `+inf`; finalized
/// cells match [`distance_field`] exactly.
pub fn distance_field_until(grid: &GridMap, source: CellPos, targets: &[CellPos]) -> Result<ArrivalField> {
    let stop: Vec<usize> = targets
        .iter()
        .filter(|p| grid.is_free(**p))
        .map(|&p| grid.index(p))
        .collect();
    Ok(solve(grid, &SpeedField::uniform(grid), &[source], Stencil::Shared, Some(&stop))?.0)
}

/// Unit-speed distance field from several cells, labels discarded.
pub fn distance_field_multi(grid: &GridMap, sources: &[CellPos]) -> Result<ArrivalField> {
    Ok(fmm_solve(grid, &SpeedField::uniform(grid), sources)?.0)
}

fn solve(
    grid: &GridMap,
    speed: &SpeedField,
    sources: &[CellPos],
    stencil: Stencil<'_>,
    stop: Option<&[usize]>,
) -> Result<(ArrivalField, LabelField)> {
    if sources.is_empty() {
        return Err(Error::EmptySources);
    }
    let n = grid.len();
    let h = grid.cell_size();
    let mut times = vec![f64::INFINITY; n];
    let mut labels = vec![NO_LABEL; n];
    let mut state = vec![FAR; n];
    // Tie rank of each label: the row-major index of its source cell.
    let rank: Vec<usize> = sources
        .iter()
        .map(|&p| if grid.in_bounds(p) { grid.index(p) } else { usize::MAX })
        .collect();
    let better = |t: f64, l: u32, ct: f64, cl: u32| -> bool {
        t < ct || (t == ct && cl != NO_LABEL && l != NO_LABEL && rank[l as usize] < rank[cl as usize])
            || (t == ct && cl == NO_LABEL && l != NO_LABEL)
    };

    let mut heap = BinaryHeap::new();
    for (label, &p) in sources.iter().enumerate() {
        if !grid.is_free(p) || speed.at(grid.index(p)) <= 0.0 {
            return Err(Error::SourceOnObstacle(p));
        }
        let i = grid.index(p);
        let l = label as u32;
        if labels[i] == NO_LABEL || rank[l as usize] < rank[labels[i] as usize] {
            labels[i] = l;
        }
        if state[i] == FAR {
            times[i] = 0.0;
            state[i] = TRIAL;
            heap.push(Entry { time: 0.0, idx: i });
        }
    }

    let mut waiting = stop.map(|s| {
        let mut w = vec![false; n];
        let mut left = 0usize;
        for &i in s {
            left += usize::from(!core::mem::replace(&mut w[i], true));
        }
        (w, left)
    });
    let mut last = 0.0f64;
    while let Some(Entry { time, idx }) = heap.pop() {
        if state[idx] == KNOWN || time != times[idx] {
            continue;
        }
        debug_assert!(time >= last, "fast marching finalized out of order");
        last = time;
        state[idx] = KNOWN;
        if let Some((w, left)) = waiting.as_mut() {
            if core::mem::take(&mut w[idx]) {
                *left -= 1;
            }
            if *left == 0 && heap.peek().is_none_or(|e| e.time > time) {
                break;
            }
        }
        for d in crate::grid::N4 {
            let Some(nb) = grid.offset(idx, d) else { continue };
            if state[nb] == KNOWN || !grid.is_free_idx(nb) || speed.at(nb) <= 0.0 {
                continue;
            }
            let (t, l) = match stencil {
                Stencil::Shared => {
                    let (a, la) = axis_min(grid, &times, &labels, &state, &rank, nb, true, None);
                    let (b, lb) = axis_min(grid, &times, &labels, &state, &rank, nb, false, None);
                    update(a, la, b, lb, h / speed.at(nb), &rank)
                }
                Stencil::Competing(mult) => {
                    let mut best = (f64::INFINITY, NO_LABEL);
                    let mut seen = [NO_LABEL; 4];
                    for (k, d2) in crate::grid::N4.iter().enumerate() {
                        let Some(m) = grid.offset(nb, *d2) else { continue };
                        if state[m] != KNOWN || seen.contains(&labels[m]) {
                            continue;
                        }
                        let lab = labels[m];
                        seen[k] = lab;
                        let (a, la) =
                            axis_min(grid, &times, &labels, &state, &rank, nb, true, Some(lab));
                        let (b, lb) =
                            axis_min(grid, &times, &labels, &state, &rank, nb, false, Some(lab));
                        let f = speed.at(nb) * mult[lab as usize];
                        let cand = update(a, la, b, lb, h / f, &rank);
                        if better(cand.0, cand.1, best.0, best.1) {
                            best = cand;
                        }
                    }
                    best
                }
            };
            if better(t, l, times[nb], labels[nb]) {
                times[nb] = t;
                labels[nb] = l;
                state[nb] = TRIAL;
                heap.push(Entry { time: t, idx: nb });
            }
        }
    }

    if stop.is_some() {
        for (t, &st) in times.iter_mut().zip(&state) {
            if st != KNOWN {
                *t = f64::INFINITY;
            }
        }
    }
    let w = grid.width();
    Ok((
        ArrivalField {
            width: w,
            height: grid.height(),
            times,
        },
        LabelField { width: w, labels },
    ))
}

/// Smallest finalized neighbour time along one axis (optionally restricted
/// to one label), with its label.
#[allow(clippy::too_many_arguments)]
#[inline]
fn axis_min(
    grid: &GridMap,
    times: &[f64],
    labels: &[u32],
    state: &[u8],
    rank: &[usize],
    idx: usize,
    horizontal: bool,
    only: Option<u32>,
) -> (f64, u32) {
    let dirs: [(isize, isize); 2] = if horizontal {
        [(-1, 0), (1, 0)]
    } else {
        [(0, -1), (0, 1)]
    };
    let mut best = (f64::INFINITY, NO_LABEL);
    for d in dirs {
        let Some(n) = grid.offset(idx, d) else { continue };
        if state[n] != KNOWN || only.is_some_and(|l| labels[n] != l) {
            continue;
        }
        let (t, l) = (times[n], labels[n]);
        if t < best.0 || (t == best.0 && rank[l as usize] < rank[best.1 as usize]) {
            best = (t, l);
        }
    }
    best
}

/// First-order upwind update from the two axis minima.
#[inline]
fn update(a: f64, la: u32, b: f64, lb: u32, step: f64, rank: &[usize]) -> (f64, u32) {
    let a_first = a < b || (a == b && la != NO_LABEL && (lb == NO_LABEL || rank[la as usize] <= rank[lb as usize]));
    let ((lo, llo), hi) = if a_first { ((a, la), b) } else { ((b, lb), a) };
    if !lo.is_finite() {
        return (f64::INFINITY, NO_LABEL);
    }
    if hi.is_finite() && hi - lo < step {
        let diff = hi - lo;
        (0.5 * (lo + hi + libm::sqrt(2.0 * step * step - diff * diff)), llo)
    } else {
        (lo + step, llo)
    }
}

/// Steepest strict descent move from `cur`: next cell and step length in
/// cells.
fn descent_step(grid: &GridMap, field: &ArrivalField, cur: usize) -> Option<(usize, f64)> {
    let here = field.at(cur);
    let mut best: Option<(usize, f64, f64)> = None;
    for (n, step) in grid.moves8(cur) {
        let t = field.at(n);
        if t >= here {
            continue;
        }
        let slope = (here - t) / step;
        if best.is_none_or(|(_, s, _)| slope > s) {
            best = Some((n, slope, step));
        }
    }
    best.map(|(n, _, step)| (n, step))
}

/// Walks downhill from `start` to a zero-time cell, one 8-neighbour move at
/// a time, choosing the steepest strict descent.
pub fn extract_path(grid: &GridMap, field: &ArrivalField, start: CellPos) -> Result<GeodesicPath> {
    if !grid.in_bounds(start) || !field.get(start).is_finite() {
        return Err(Error::Unreached(start));
    }
    let h = grid.cell_size();
    let mut cur = grid.index(start);
    let mut cells = vec![start];
    let mut length = 0.0;
    while field.at(cur) > 0.0 {
        // A finite non-source cell always has a strictly earlier 4-neighbour.
        let (next, step) = descent_step(grid, field, cur).ok_or(Error::Unreached(grid.pos(cur)))?;
        length += step * h;
        cur = next;
        cells.push(grid.pos(cur));
    }
    Ok(GeodesicPath { cells, length })
}

/// Length (meters) of the path `extract_path` would return from every
/// cell; `+inf` where the field is not finite.
pub fn descent_lengths(grid: &GridMap, field: &ArrivalField) -> Vec<f64> {
    let h = grid.cell_size();
    let mut order: Vec<usize> = (0..grid.len()).filter(|&i| field.at(i).is_finite()).collect();
    order.sort_by(|&a, &b| field.at(a).total_cmp(&field.at(b)).then(a.cmp(&b)));
    let mut len = vec![f64::INFINITY; grid.len()];
    for i in order {
        len[i] = if field.at(i) > 0.0 {
            match descent_step(grid, field, i) {
                Some((n, step)) => len[n] + step * h,
                None => f64::INFINITY,
            }
        } else {
            0.0
        };
    }
    len
}

/// Path walking from the source of `field` to `end`.
pub fn path_from_source(grid: &GridMap, field: &ArrivalField, end: CellPos) -> Result<GeodesicPath> {
    let mut p = extract_path(grid, field, end)?;
    p.reverse();
    Ok(p)
}

/// Cells that seed the clearance solve: free cells on the map border or
/// touching an obstacle (8-neighbourhood).
pub fn clearance_sources(grid: &GridMap) -> Vec<CellPos> {
    grid.free_cells()
        .filter(|&i| {
            crate::grid::N8
                .iter()
                .any(|&d| grid.offset(i, d).is_none_or(|n| !grid.is_free_idx(n)))
        })
        .map(|i| grid.pos(i))
        .collect()
}

/// Approximate distance (meters) from every free cell to the nearest
/// obstacle or map border. Cells touching an obstacle read 0.
pub fn clearance_field(grid: &GridMap) -> ArrivalField {
    let sources = clearance_sources(grid);
    if sources.is_empty() {
        // Only possible for a grid without free cells.
        return ArrivalField {
            width: grid.width(),
            height: grid.height(),
            times: vec![f64::INFINITY; grid.len()],
        };
    }
    distance_field_multi(grid, &sources).expect("clearance sources are free cells")
}
