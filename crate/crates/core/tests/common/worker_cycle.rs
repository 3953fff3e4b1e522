//! Exhaustive oracle for single-worker cycle planning on small seeded
//! instances.

use gatherplan_core::executor::{plan_worker_cycle, travel_ticks, RegionCell, SyncWindow, WorkerCyclePlan};
use gatherplan_core::fmm::{distance_field, extract_path};
use gatherplan_core::{CellPos, GridMap, Scenario};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::random_map;

fn random_free(rng: &mut ChaCha8Rng, grid: &GridMap, n: usize) -> Vec<CellPos> {
    let mut free: Vec<CellPos> = grid.free_cells().map(|i| grid.pos(i)).collect();
    free.shuffle(rng);
    free.truncate(n);
    free
}

/// Contact succeeds if the worker, sitting at the cell from `arrival` on,
/// gets `need` consecutive in-contact ticks inside one run.
pub fn contact_ok(cell: &RegionCell, arrival: u64, need: u64) -> bool {
    let need = need.max(1);
    cell.runs.iter().any(|&(a, b)| arrival.max(a) + need - 1 <= b)
}

pub struct Instance {
    pub sc: Scenario,
    pub start: CellPos,
    pub goals: Vec<CellPos>,
    pub window: SyncWindow,
    pub cargo: usize,
    pub budget: u64,
}

pub fn instance(seed: u64) -> Instance {
    let (grid, anchor) = random_map(1000 + seed, 16, 12, 0.2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sc = Scenario::with_defaults(grid, anchor, 2);
    sc.transfer_time_per_goal = [0.5, 1.0, 2.0][rng.random_range(0..3)];
    let m = rng.random_range(0..=6);
    let picks = random_free(&mut rng, &sc.grid, m + 1 + 8);
    let start = picks[0];
    let goals = picks[1..=m].to_vec();
    let n_region = rng.random_range(1..=8);
    let region: Vec<RegionCell> = picks[m + 1..m + 1 + n_region]
        .iter()
        .map(|&cell| {
            let mut runs = Vec::new();
            let mut t = rng.random_range(1..30u64);
            for _ in 0..rng.random_range(1..=2) {
                let len = rng.random_range(1..12u64);
                runs.push((t, t + len - 1));
                t += len + rng.random_range(1..15u64);
            }
            RegionCell { cell, runs }
        })
        .collect();
    let window = SyncWindow {
        worker: 1,
        collector: Some(1),
        t_open: region.iter().map(|c| c.runs[0].0).min().unwrap(),
        t_close: region.iter().map(|c| c.runs.last().unwrap().1).max().unwrap(),
        required_contact: 0,
        feasible: true,
        region,
    };
    Instance {
        sc,
        start,
        goals,
        window,
        cargo: rng.random_range(0..3),
        budget: rng.random_range(20..90),
    }
}

/// Exhaustive search over subsets and orders. Leg costs use the same
/// extracted geodesic paths the agents follow. Returns the largest feasible
/// subset size and whether the full set is feasible.
pub fn brute_force(inst: &Instance) -> (usize, bool) {
    let grid = &inst.sc.grid;
    let h = grid.cell_size();
    let mut nodes = vec![inst.start];
    nodes.extend_from_slice(&inst.goals);
    let region: Vec<CellPos> = inst.window.region.iter().map(|c| c.cell).collect();
    let mut leg = vec![vec![0u64; nodes.len()]; nodes.len()];
    let mut to_end = vec![vec![0u64; region.len()]; nodes.len()];
    for (j, &b) in nodes.iter().enumerate() {
        let f = distance_field(grid, b).unwrap();
        for (i, &a) in nodes.iter().enumerate() {
            leg[i][j] = travel_ticks(extract_path(grid, &f, a).unwrap().length, h);
        }
    }
    for (e, &c) in region.iter().enumerate() {
        let f = distance_field(grid, c).unwrap();
        for (i, &a) in nodes.iter().enumerate() {
            to_end[i][e] = travel_ticks(extract_path(grid, &f, a).unwrap().length, h);
        }
    }
    let mut best = 0;
    let mut full = false;
    let mut order = Vec::new();
    fn rec(
        inst: &Instance,
        leg: &[Vec<u64>],
        to_end: &[Vec<u64>],
        order: &mut Vec<usize>,
        t: u64,
        best: &mut usize,
        full: &mut bool,
    ) {
        let m = inst.goals.len();
        let at = order.last().map_or(0, |g| g + 1);
        let need = inst.sc.transfer_ticks(inst.cargo + order.len());
        let ok = inst.window.region.iter().enumerate().any(|(e, cell)| {
            let arrival = t + to_end[at][e];
            arrival <= inst.budget && contact_ok(cell, arrival, need)
        });
        if ok {
            *best = (*best).max(order.len());
            if order.len() == m {
                *full = true;
            }
        }
        for g in 0..m {
            if order.contains(&g) {
                continue;
            }
            order.push(g);
            rec(inst, leg, to_end, order, t + leg[at][g + 1], best, full);
            order.pop();
        }
    }
    rec(inst, &leg, &to_end, &mut order, 0, &mut best, &mut full);
    (best, full)
}

pub fn is_move(grid: &GridMap, a: CellPos, b: CellPos) -> Option<f64> {
    let (dc, dr) = (a.col.abs_diff(b.col), a.row.abs_diff(b.row));
    if dc > 1 || dr > 1 || dc + dr == 0 || !grid.is_free(b) {
        return None;
    }
    if dc == 1 && dr == 1 && !(grid.is_free(CellPos::new(b.col, a.row)) && grid.is_free(CellPos::new(a.col, b.row))) {
        return None;
    }
    Some(if dc + dr == 2 { std::f64::consts::SQRT_2 } else { 1.0 })
}

/// Walks the plan's path independently; returns the arrival tick at its end.
pub fn replay(inst: &Instance, plan: &WorkerCyclePlan) -> u64 {
    let grid = &inst.sc.grid;
    assert_eq!(plan.path[0], inst.start);
    assert_eq!(plan.path.len(), plan.stops.len());
    let mut ticks = 0;
    let mut leg = 0.0;
    let mut visited = Vec::new();
    for i in 1..plan.path.len() {
        leg += is_move(grid, plan.path[i - 1], plan.path[i]).expect("path step is a legal move");
        if plan.stops[i] {
            visited.push(plan.path[i]);
            ticks += travel_ticks(leg, 1.0);
            leg = 0.0;
        }
    }
    ticks += travel_ticks(leg, 1.0);
    let expected: Vec<CellPos> = plan.order.iter().map(|&g| inst.goals[g]).collect();
    assert_eq!(visited, expected, "stops follow the chosen order");
    ticks
}

/// Outcome of one seeded instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CaseOutcome {
    pub selected: usize,
    pub optimum: usize,
    pub full_feasible: bool,
}

/// Plans instance `seed` and checks it against the exhaustive optimum, an
/// independent replay of the path, the budget and the contact runs.
/// Panics with the seed on any violation.
pub fn check_case(seed: u64) -> CaseOutcome {
    let inst = instance(seed);
    let plan = plan_worker_cycle(&inst.sc, inst.start, &inst.goals, &inst.window, inst.cargo, inst.budget).unwrap();
    let (best, full) = brute_force(&inst);
    assert!(plan.order.len() <= best, "seed {seed}: selected {} > optimum {best}", plan.order.len());
    if full {
        assert_eq!(plan.order.len(), inst.goals.len(), "seed {seed}: full set feasible but not selected");
    }
    match plan.end {
        Some(e) => {
            let arrival = replay(&inst, &plan);
            assert_eq!(arrival, plan.arrival, "seed {seed}");
            assert!(arrival <= inst.budget, "seed {seed}: budget");
            let need = inst.sc.transfer_ticks(inst.cargo + plan.order.len());
            assert!(contact_ok(&inst.window.region[e], arrival, need), "seed {seed}: sync window");
            assert_eq!(*plan.path.last().unwrap(), inst.window.region[e].cell);
        }
        None => {
            assert!(plan.order.is_empty());
            assert_eq!(plan.path, vec![inst.start]);
        }
    }
    CaseOutcome {
        selected: plan.order.len(),
        optimum: best,
        full_feasible: full,
    }
}
