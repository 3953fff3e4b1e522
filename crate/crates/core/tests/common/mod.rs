//! Independent oracles shared by the integration tests. Nothing here calls
//! into the solver under test.
#![allow(dead_code)]

pub mod audit;
pub mod worker_cycle;

use std::collections::{BinaryHeap, VecDeque};

use gatherplan_core::{CellPos, GridMap};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// 8-connected Dijkstra distance (meters) with edge weights h and h·√2;
/// diagonal moves need both orthogonal cells free.
pub fn dijkstra8(grid: &GridMap, src: CellPos) -> Vec<f64> {
    let (w, hgt) = (grid.width() as isize, grid.height() as isize);
    let n = grid.len();
    let mut dist = vec![f64::INFINITY; n];
    let mut heap = BinaryHeap::new();
    let s = src.row * grid.width() + src.col;
    dist[s] = 0.0;
    heap.push((std::cmp::Reverse(ordered(0.0)), s));
    let free = |c: isize, r: isize| c >= 0 && r >= 0 && c < w && r < hgt && grid.is_free(CellPos::new(c as usize, r as usize));
    while let Some((std::cmp::Reverse(d), i)) = heap.pop() {
        let d = d as f64 / 1e9;
        if d > dist[i] + 1e-12 {
            continue;
        }
        let (c, r) = ((i % grid.width()) as isize, (i / grid.width()) as isize);
        for dc in -1..=1 {
            for dr in -1..=1 {
                if dc == 0 && dr == 0 || !free(c + dc, r + dr) {
                    continue;
                }
                let diag = dc != 0 && dr != 0;
                if diag && (!free(c + dc, r) || !free(c, r + dr)) {
                    continue;
                }
                let step = if diag { std::f64::consts::SQRT_2 } else { 1.0 } * grid.cell_size();
                let j = ((r + dr) * w + c + dc) as usize;
                if d + step < dist[j] - 1e-12 {
                    dist[j] = d + step;
                    heap.push((std::cmp::Reverse(ordered(dist[j])), j));
                }
            }
        }
    }
    dist
}

fn ordered(x: f64) -> u64 {
    (x * 1e9).round() as u64
}

/// Brute-force distance from each free cell centre to the nearest obstacle
/// cell centre or out-of-map cell centre (cells).
pub fn brute_clearance(grid: &GridMap) -> Vec<f64> {
    let (w, h) = (grid.width() as isize, grid.height() as isize);
    let mut blockers = Vec::new();
    for r in -1..=h {
        for c in -1..=w {
            let outside = r < 0 || c < 0 || r >= h || c >= w;
            if outside || !grid.is_free(CellPos::new(c as usize, r as usize)) {
                blockers.push((c, r));
            }
        }
    }
    (0..grid.len())
        .map(|i| {
            if !grid.is_free(grid.pos(i)) {
                return f64::NAN;
            }
            let (c, r) = ((i % grid.width()) as isize, (i / grid.width()) as isize);
            blockers
                .iter()
                .map(|&(bc, br)| (((bc - c).pow(2) + (br - r).pow(2)) as f64).sqrt())
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

/// Number of 4-connected components among cells where `member` is true.
pub fn components4(grid: &GridMap, member: &dyn Fn(usize) -> bool) -> usize {
    let mut seen = vec![false; grid.len()];
    let mut count = 0;
    for s in 0..grid.len() {
        if seen[s] || !member(s) {
            continue;
        }
        count += 1;
        seen[s] = true;
        let mut q = VecDeque::from([s]);
        while let Some(i) = q.pop_front() {
            let (c, r) = (i % grid.width(), i / grid.width());
            let mut nbs = Vec::new();
            if c > 0 { nbs.push(i - 1); }
            if c + 1 < grid.width() { nbs.push(i + 1); }
            if r > 0 { nbs.push(i - grid.width()); }
            if r + 1 < grid.height() { nbs.push(i + grid.width()); }
            for j in nbs {
                if !seen[j] && member(j) {
                    seen[j] = true;
                    q.push_back(j);
                }
            }
        }
    }
    count
}

/// Random map with the given obstacle density, restricted to the 4-connected
/// component containing the first free cell (the others become obstacles).
pub fn random_map(seed: u64, w: usize, h: usize, density: f64) -> (GridMap, CellPos) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let obstacles: Vec<bool> = (0..w * h).map(|_| rng.random::<f64>() < density).collect();
        let mut g = GridMap::new(w, h, 1.0, obstacles);
        // Anchor in the largest component.
        let mut best: Option<(usize, usize)> = None;
        let mut seen = vec![false; g.len()];
        for s in 0..g.len() {
            if seen[s] || !g.is_free(g.pos(s)) {
                continue;
            }
            let comp = g.flood_fill(s);
            let size = comp.iter().filter(|&&x| x).count();
            for (i, &m) in comp.iter().enumerate() {
                seen[i] |= m;
            }
            if best.is_none_or(|(_, sz)| size > sz) {
                best = Some((s, size));
            }
        }
        let Some((anchor, size)) = best else { continue };
        if size < w * h / 3 {
            continue;
        }
        let a = g.pos(anchor);
        g.remove_unreachable(a);
        return (g, a);
    }
}
