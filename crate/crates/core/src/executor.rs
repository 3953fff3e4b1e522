//! Deterministic tick-based mission simulation.
//!
//! One tick is the time to cross one cell along an axis (`h / v`). Every
//! tick the agents move at most one cell, workers gather goals lying under
//! them, cargo is handed over when a link has been in contact long enough,
//! and at cycle boundaries new goals are requested and workers re-plan.
//!
//! Agent ids: the worker of segment `s` is agent `s`, collector `c` is
//! agent `n_w + c`, and the OC is agent 0.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::collector::{segment_info, worker_time, Association, DeploymentPlan};
use crate::error::{Error, Result};
use crate::fmm::{descent_lengths, distance_field, distance_field_until, path_from_source};
use crate::grid::{CellPos, GridMap};
use crate::scenario::Scenario;
use crate::segmentation::Segmentation;

/// Agent id of the Operation Center in traces.
pub const OC_AGENT: u32 = 0;

const EPS: f64 = 1e-9;

/// A goal requested by the OC.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoalRequest {
    pub id: u32,
    pub position: CellPos,
    pub segment: u32,
    pub t_request: u64,
}

/// Draws `k` distinct cells from every segment for cycle `cycle`.
///
/// The draw depends only on `(seed, cycle)`. Ids start at `first_id` and
/// follow segment order.
pub fn generate_goals(
    seed: u64,
    seg: &Segmentation,
    cycle: u64,
    k: usize,
    t_request: u64,
    first_id: u32,
) -> Result<Vec<GoalRequest>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(cycle);
    let mut out = Vec::with_capacity(k * seg.n_w);
    for id in seg.ids() {
        let cells = seg.cells(id);
        if k > cells.len() {
            return Err(Error::TooManyGoals { k, area: cells.len() });
        }
        let mut picked: Vec<usize> = rand::seq::index::sample(&mut rng, cells.len(), k)
            .into_iter()
            .map(|j| cells[j])
            .collect();
        picked.sort_unstable();
        for c in picked {
            out.push(GoalRequest {
                id: first_id + out.len() as u32,
                position: CellPos::new(c % seg.width, c / seg.width),
                segment: id,
                t_request,
            });
        }
    }
    Ok(out)
}

/// Ticks needed to walk a path of `length` meters on cells of size `h`.
///
/// Each tick adds one unit of movement credit; an axis step costs 1 and a
/// diagonal step `sqrt(2)`. Starting from zero credit this takes
/// `ceil(length / h)` ticks.
pub fn travel_ticks(length: f64, h: f64) -> u64 {
    libm::ceil(length / h - EPS).max(0.0) as u64
}

/// Follows a cell path with the movement-credit rule. Credit is reset at
/// stop cells and whenever the walker is idle.
#[derive(Debug, Clone, Default)]
struct Walker {
    cells: Vec<CellPos>,
    stops: Vec<bool>,
    next: usize,
    credit: f64,
}

impl Walker {
    fn new(cells: Vec<CellPos>, stops: Vec<bool>) -> Self {
        debug_assert_eq!(cells.len(), stops.len());
        Self {
            cells,
            stops,
            next: 1,
            credit: 0.0,
        }
    }

    fn done(&self) -> bool {
        self.next >= self.cells.len()
    }

    /// Advances one tick; returns the new cell if the walker moved.
    fn tick(&mut self) -> Option<CellPos> {
        if self.done() {
            self.credit = 0.0;
            return None;
        }
        let (a, b) = (self.cells[self.next - 1], self.cells[self.next]);
        let cost = if a.col != b.col && a.row != b.row {
            core::f64::consts::SQRT_2
        } else {
            1.0
        };
        self.credit += 1.0;
        if self.credit + EPS < cost {
            return None;
        }
        self.credit -= cost;
        if self.stops[self.next] {
            self.credit = 0.0;
        }
        self.next += 1;
        Some(b)
    }
}

/// The fixed per-cycle motion of one collector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollectorSchedule {
    pub collector: u32,
    /// Ticks spent at the OC before leaving.
    pub phase: u64,
    pub loop_ticks: u64,
    pub upload_ticks: u64,
    /// Position `r` ticks after the cycle opens, for `r` in `0..=cycle_ticks`.
    pub timeline: Vec<CellPos>,
    /// `(segment id, tick offset)` at which the collector reaches each
    /// meeting point, in visiting order.
    pub passes: Vec<(u32, u64)>,
}

/// Timing shared by all cycles of a mission.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub tick_len: f64,
    pub cycle_ticks: u64,
    pub collectors: Vec<CollectorSchedule>,
}

fn walk_ticks(cells: &[CellPos]) -> Vec<CellPos> {
    let mut w = Walker::new(cells.to_vec(), vec![false; cells.len()]);
    let mut out = vec![cells[0]];
    while !w.done() {
        let here = w.tick().unwrap_or(*out.last().expect("nonempty"));
        out.push(here);
    }
    out
}

/// Derives the cycle length and the collectors' timelines from a plan.
///
/// A collector waits at the OC long enough for every member's estimated
/// worker time to elapse before it passes the meeting point, runs its loop
/// without stopping, then uploads at the OC. The cycle is the longest such
/// schedule. Without collectors the cycle is the longest estimated
/// out-and-back worker tour.
pub fn build_schedule(sc: &Scenario, plan: &DeploymentPlan) -> Result<Schedule> {
    let tick_len = sc.tick_len();
    let info = segment_info(&sc.grid, &plan.segmentation)?;
    let k = sc.goals_per_segment_per_cycle;
    let to_ticks = |t: f64| libm::ceil(t / tick_len - EPS).max(0.0) as u64;
    if plan.n_c == 0 {
        let from_oc = distance_field(&sc.grid, sc.oc)?;
        let mut cycle = 1;
        for s in &info {
            let t = worker_time(sc, s.mean_leg, 2.0 * from_oc.get(s.centroid));
            cycle = cycle.max(to_ticks(t));
        }
        return Ok(Schedule {
            tick_len,
            cycle_ticks: cycle,
            collectors: Vec::new(),
        });
    }

    let mut drafts = Vec::new();
    for (group, route) in plan.groups.iter().zip(&plan.routes) {
        let path = walk_ticks(&route.cells());
        let mut passes = Vec::new();
        let mut from = 0;
        for (&id, &m) in route.order.iter().zip(&route.waypoints[1..]) {
            let at = (from..path.len())
                .find(|&r| path[r] == m)
                .ok_or(Error::WaypointUnreachable(m))?;
            passes.push((id, at as u64));
            from = at;
        }
        let mut phase = 0;
        for &(id, at) in &passes {
            let m = group.meeting_point(id).expect("member");
            let s = &info[id as usize - 1];
            let need = to_ticks(worker_time(sc, s.mean_leg, s.field.get(m)));
            phase = phase.max(need.saturating_sub(at));
        }
        let upload = sc.transfer_ticks(k * group.members.len()).max(1);
        drafts.push((group.collector, phase, path, passes, upload));
    }
    let cycle = drafts
        .iter()
        .map(|(_, phase, path, _, upload)| phase + (path.len() as u64 - 1) + upload)
        .max()
        .unwrap_or(1)
        .max(1);
    let collectors = drafts
        .into_iter()
        .map(|(collector, phase, path, passes, upload)| {
            let mut timeline = vec![sc.oc; phase as usize];
            timeline.extend_from_slice(&path);
            timeline.resize(cycle as usize + 1, sc.oc);
            CollectorSchedule {
                collector,
                phase,
                loop_ticks: path.len() as u64 - 1,
                upload_ticks: upload,
                timeline,
                passes: passes.into_iter().map(|(id, at)| (id, at + phase)).collect(),
            }
        })
        .collect();
    Ok(Schedule {
        tick_len,
        cycle_ticks: cycle,
        collectors,
    })
}

/// A candidate hand-over cell with its contact intervals.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionCell {
    pub cell: CellPos,
    /// Inclusive tick offsets within the cycle during which this cell is in
    /// communication with the counterpart, ascending and disjoint.
    pub runs: Vec<(u64, u64)>,
}

impl RegionCell {
    /// Latest arrival offset that still leaves `need` consecutive contact
    /// ticks, counting the arrival tick.
    pub fn latest_arrival(&self, need: u64) -> Option<u64> {
        let need = need.max(1);
        self.runs
            .iter()
            .filter(|(a, b)| b - a + 1 >= need)
            .map(|(_, b)| b + 1 - need)
            .max()
    }
}

/// Where and when a worker can hand its cargo over this cycle.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyncWindow {
    pub worker: u32,
    /// `None` when the worker uploads straight to the OC.
    pub collector: Option<u32>,
    pub t_open: u64,
    pub t_close: u64,
    pub required_contact: u64,
    pub region: Vec<RegionCell>,
    /// False when no region cell offers `required_contact` consecutive ticks.
    pub feasible: bool,
}

impl SyncWindow {
    fn with_required(mut self, required: u64) -> Self {
        self.required_contact = required;
        self.feasible = self.region.iter().any(|c| c.latest_arrival(required).is_some());
        self
    }
}

/// Cargo-independent part of a window.
fn window_base(sc: &Scenario, plan: &DeploymentPlan, sched: &Schedule, worker: u32) -> SyncWindow {
    let grid = &sc.grid;
    let c = sched.cycle_ticks;
    let coll = match plan.association[worker as usize - 1] {
        Association::Oc => None,
        Association::Collector(id) => Some(id),
    };
    let Some(cid) = coll else {
        let region = grid
            .free_cells()
            .map(|i| grid.pos(i))
            .filter(|&p| sc.in_comm(p, sc.oc))
            .map(|cell| RegionCell { cell, runs: vec![(1, c)] })
            .collect();
        return SyncWindow {
            worker,
            collector: None,
            t_open: 1,
            t_close: c,
            required_contact: 0,
            region,
            feasible: true,
        };
    };
    let timeline = &sched.collectors[cid as usize - 1].timeline;
    let cells: Vec<CellPos> = plan
        .segmentation
        .cells(worker)
        .into_iter()
        .map(|i| grid.pos(i))
        .collect();
    // contact[j][r]: cell j in comm with the collector at offset r.
    let mut contact = vec![vec![false; c as usize + 1]; cells.len()];
    let mut any = vec![false; c as usize + 1];
    for r in 1..=c as usize {
        let p = timeline[r];
        if r > 1 && timeline[r - 1] == p {
            for row in contact.iter_mut() {
                row[r] = row[r - 1];
            }
            any[r] = any[r - 1];
            continue;
        }
        for (j, &q) in cells.iter().enumerate() {
            if sc.in_comm(p, q) {
                contact[j][r] = true;
                any[r] = true;
            }
        }
    }
    // Longest contiguous contact interval, earliest on ties.
    let (mut t_open, mut t_close, mut best) = (0u64, 0u64, 0u64);
    let mut r = 1;
    while r <= c as usize {
        if !any[r] {
            r += 1;
            continue;
        }
        let start = r;
        while r <= c as usize && any[r] {
            r += 1;
        }
        let len = (r - start) as u64;
        if len > best {
            best = len;
            t_open = start as u64;
            t_close = r as u64 - 1;
        }
    }
    let mut region = Vec::new();
    if best > 0 {
        for (j, &cell) in cells.iter().enumerate() {
            let mut runs = Vec::new();
            let mut r = t_open as usize;
            while r <= t_close as usize {
                if !contact[j][r] {
                    r += 1;
                    continue;
                }
                let start = r;
                while r <= t_close as usize && contact[j][r] {
                    r += 1;
                }
                runs.push((start as u64, r as u64 - 1));
            }
            if !runs.is_empty() {
                region.push(RegionCell { cell, runs });
            }
        }
    }
    SyncWindow {
        worker,
        collector: coll,
        t_open,
        t_close,
        required_contact: 0,
        feasible: !region.is_empty(),
        region,
    }
}

/// Sync window of `worker` for a cargo of `cargo` goals.
pub fn compute_sync_window(
    sc: &Scenario,
    plan: &DeploymentPlan,
    sched: &Schedule,
    worker: u32,
    cargo: usize,
) -> SyncWindow {
    window_base(sc, plan, sched, worker).with_required(sc.transfer_ticks(cargo))
}

/// A worker's route for one cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkerCyclePlan {
    /// Indices into the pending goal list, in visiting order.
    pub order: Vec<usize>,
    /// Index into the window region of the hand-over cell, if any.
    pub end: Option<usize>,
    /// Tick offset at which the worker reaches the hand-over cell.
    pub arrival: u64,
    /// Cells from the start to the hand-over cell.
    pub path: Vec<CellPos>,
    /// `stops[i]`: the worker pauses at `path[i]` (goal cells).
    pub stops: Vec<bool>,
}

/// Geodesic leg costs between the start, the goals and the region.
struct Legs {
    /// `node[i][j]`: ticks from node i to node j; node 0 is the start.
    node: Vec<Vec<u64>>,
    /// `end[i][e]`: ticks from node i to region cell e.
    end: Vec<Vec<u64>>,
    fields: Vec<crate::fmm::ArrivalField>,
}

impl Legs {
    fn new(grid: &GridMap, start: CellPos, goals: &[CellPos], region: &[RegionCell]) -> Result<Self> {
        let h = grid.cell_size();
        let mut nodes = vec![start];
        nodes.extend_from_slice(goals);
        let mut fields = Vec::with_capacity(nodes.len());
        let mut node = Vec::with_capacity(nodes.len());
        let mut end = Vec::with_capacity(nodes.len());
        let mut targets = nodes.clone();
        targets.extend(region.iter().map(|r| r.cell));
        for &p in &nodes {
            let f = distance_field_until(grid, p, &targets)?;
            let len = descent_lengths(grid, &f);
            node.push(nodes.iter().map(|&q| travel_ticks(len[grid.index(q)], h)).collect());
            end.push(region.iter().map(|r| travel_ticks(len[grid.index(r.cell)], h)).collect());
            fields.push(f);
        }
        Ok(Self { node, end, fields })
    }

    /// Ticks to visit `order` (goal indices) from the start.
    fn tour(&self, order: &[usize]) -> u64 {
        let mut t = 0;
        let mut at = 0;
        for &g in order {
            t += self.node[at][g + 1];
            at = g + 1;
        }
        t
    }
}

/// Best feasible hand-over for a tour ending at node `last` at offset `t`.
fn best_end(
    legs: &Legs,
    region: &[RegionCell],
    last: usize,
    t: u64,
    need: u64,
    budget: u64,
) -> Option<(u64, usize)> {
    let mut best: Option<(u64, usize)> = None;
    for (e, cell) in region.iter().enumerate() {
        let arrival = t + legs.end[last][e];
        if arrival > budget {
            continue;
        }
        if cell.latest_arrival(need).is_some_and(|l| arrival <= l)
            && best.is_none_or(|(a, _)| arrival < a)
        {
            best = Some((arrival, e));
        }
    }
    best
}

/// Plans which pending goals to visit before the hand-over.
///
/// Greedy cheapest insertion: each round inserts the goal and position
/// giving the earliest feasible hand-over arrival. A plan is feasible when
/// the worker reaches a region cell no later than `budget` and early enough
/// to stay in contact for the transfer of its cargo plus the selected goals.
/// When greedy leaves goals out and at most eight are pending, the full set
/// is also tried in its best order.
pub fn plan_worker_cycle(
    sc: &Scenario,
    start: CellPos,
    goals: &[CellPos],
    window: &SyncWindow,
    cargo: usize,
    budget: u64,
) -> Result<WorkerCyclePlan> {
    let grid = &sc.grid;
    let region = &window.region;
    let legs = Legs::new(grid, start, goals, region)?;
    let need = |n: usize| sc.transfer_ticks(cargo + n);
    let eval = |order: &[usize]| -> Option<(u64, usize)> {
        let last = order.last().map_or(0, |g| g + 1);
        best_end(&legs, region, last, legs.tour(order), need(order.len()), budget)
    };

    let mut order: Vec<usize> = Vec::new();
    let mut current = eval(&order);
    loop {
        let mut pick: Option<(u64, usize, usize, (u64, usize))> = None;
        for g in 0..goals.len() {
            if order.contains(&g) {
                continue;
            }
            for pos in 0..=order.len() {
                let mut cand = order.clone();
                cand.insert(pos, g);
                if let Some(res) = eval(&cand) {
                    if pick.is_none_or(|(a, ..)| res.0 < a) {
                        pick = Some((res.0, g, pos, res));
                    }
                }
            }
        }
        let Some((_, g, pos, res)) = pick else { break };
        order.insert(pos, g);
        current = Some(res);
    }
    if order.len() < goals.len() && goals.len() <= 8 {
        if let Some((full, res)) = best_full_order(&legs, region, goals.len(), need(goals.len()), budget) {
            order = full;
            current = Some(res);
        }
    }
    let Some((arrival, e)) = current else {
        // Nothing can be handed over in time: stay put.
        return Ok(WorkerCyclePlan {
            order: Vec::new(),
            end: None,
            arrival: 0,
            path: vec![start],
            stops: vec![false],
        });
    };
    if cargo == 0 && order.is_empty() {
        return Ok(WorkerCyclePlan {
            order,
            end: None,
            arrival: 0,
            path: vec![start],
            stops: vec![false],
        });
    }
    let mut path = vec![start];
    let mut stops = vec![false];
    let mut at = 0;
    for &g in &order {
        let leg = path_from_source(grid, &legs.fields[at], goals[g])?;
        let n = leg.cells.len() - 1;
        path.extend_from_slice(&leg.cells[1..]);
        stops.extend(core::iter::repeat_n(false, n));
        *stops.last_mut().expect("nonempty") = true;
        at = g + 1;
    }
    let leg = path_from_source(grid, &legs.fields[at], region[e].cell)?;
    let n = leg.cells.len() - 1;
    path.extend_from_slice(&leg.cells[1..]);
    stops.extend(core::iter::repeat_n(false, n));
    Ok(WorkerCyclePlan {
        order,
        end: Some(e),
        arrival,
        path,
        stops,
    })
}

/// Exact shortest order over all goals (Held-Karp) if it is feasible.
fn best_full_order(
    legs: &Legs,
    region: &[RegionCell],
    n: usize,
    need: u64,
    budget: u64,
) -> Option<(Vec<usize>, (u64, usize))> {
    let full = (1usize << n) - 1;
    let mut dp = vec![vec![u64::MAX; n]; 1 << n];
    let mut parent = vec![vec![usize::MAX; n]; 1 << n];
    for g in 0..n {
        dp[1 << g][g] = legs.node[0][g + 1];
    }
    for mask in 1..=full {
        for last in 0..n {
            let t = dp[mask][last];
            if t == u64::MAX {
                continue;
            }
            for next in 0..n {
                if mask & (1 << next) != 0 {
                    continue;
                }
                let m2 = mask | (1 << next);
                let t2 = t + legs.node[last + 1][next + 1];
                if t2 < dp[m2][next] {
                    dp[m2][next] = t2;
                    parent[m2][next] = last;
                }
            }
        }
    }
    let mut best: Option<(u64, usize, usize)> = None;
    for (last, &t) in dp[full].iter().enumerate() {
        if t == u64::MAX {
            continue;
        }
        if let Some((a, e)) = best_end(legs, region, last + 1, t, need, budget) {
            if best.is_none_or(|(ba, ..)| a < ba) {
                best = Some((a, e, last));
            }
        }
    }
    let (a, e, mut last) = best?;
    let mut order = Vec::with_capacity(n);
    let mut mask = full;
    loop {
        order.push(last);
        let p = parent[mask][last];
        mask &= !(1 << last);
        if p == usize::MAX {
            break;
        }
        last = p;
    }
    order.reverse();
    Some((order, (a, e)))
}

/// Per-goal outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalRecord {
    pub id: u32,
    pub segment: u32,
    pub position: CellPos,
    pub cycle: u64,
    pub t_request: u64,
    pub t_gathered: Option<u64>,
    pub t_delivered: Option<u64>,
}

/// Mission results. Times in records are ticks; summary times are in
/// time units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionMetrics {
    pub tick_len: f64,
    pub cycle_ticks: u64,
    pub n_cycles: u64,
    pub goals: Vec<GoalRecord>,
    /// Delivered goals by request cycle.
    pub delivered_per_cycle: Vec<u64>,
    pub requested: u64,
    pub delivered: u64,
    pub undelivered: u64,
    /// Mean request-to-delivery time over delivered goals.
    pub t_refresh_mean: Option<f64>,
    /// Delivered goals per cycle.
    pub n_goals_rate: f64,
    /// Workers that fell back to a meeting-point rendezvous.
    pub fallbacks: u64,
    /// Transfers attempted out of communication; always 0 in a sound run.
    pub comm_violations: u64,
}

/// One trace record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "kebab-case")]
pub enum TraceEvent {
    CycleStart { tick: u64, cycle: u64, goals: Vec<u32> },
    Move { tick: u64, agent: u32, cell: CellPos },
    Gather { tick: u64, agent: u32, goal: u32 },
    Transfer { tick: u64, from: u32, to: u32, goals: Vec<u32> },
    Deliver { tick: u64, agent: u32, goal: u32, refresh: u64 },
    Fallback { tick: u64, agent: u32 },
}

#[derive(Debug, Clone, Copy)]
pub struct MissionConfig {
    pub n_cycles: u64,
    pub seed: u64,
    /// Record per-tick trace events.
    pub trace: bool,
}

#[derive(Debug, Clone)]
pub struct MissionOutcome {
    pub metrics: MissionMetrics,
    pub trace: Vec<TraceEvent>,
    pub schedule: Schedule,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Loc {
    Pending,
    Agent(u32),
    Delivered,
    Expired,
}

struct Worker {
    id: u32,
    pos: CellPos,
    walker: Walker,
    cargo: Vec<u32>,
    pending: Vec<u32>,
    contact: u64,
    base: SyncWindow,
    meeting: CellPos,
}

struct Collector {
    agent: u32,
    pos: CellPos,
    cargo: Vec<u32>,
    contact: u64,
}

struct World<'a> {
    sc: &'a Scenario,
    plan: &'a DeploymentPlan,
    sched: Schedule,
    cfg: MissionConfig,
    workers: Vec<Worker>,
    collectors: Vec<Collector>,
    goals: Vec<GoalRequest>,
    loc: Vec<Loc>,
    gathered: Vec<Option<u64>>,
    delivered: Vec<Option<u64>>,
    trace: Vec<TraceEvent>,
    cycle_start: u64,
    cycle: u64,
    /// Goals below this index are delivered or expired.
    settled: usize,
    fallbacks: u64,
    comm_violations: u64,
}

impl World<'_> {
    fn emit(&mut self, e: TraceEvent) {
        if self.cfg.trace {
            self.trace.push(e);
        }
    }

    fn start_cycle(&mut self, tick: u64) -> Result<()> {
        for w in self.workers.iter_mut() {
            for g in w.pending.drain(..) {
                self.loc[g as usize] = Loc::Expired;
            }
        }
        while self.settled < self.loc.len() && matches!(self.loc[self.settled], Loc::Delivered | Loc::Expired) {
            self.settled += 1;
        }
        self.cycle_start = tick;
        let k = self.sc.goals_per_segment_per_cycle;
        let new = generate_goals(
            self.cfg.seed,
            &self.plan.segmentation,
            self.cycle,
            k,
            tick,
            self.goals.len() as u32,
        )?;
        let ids: Vec<u32> = new.iter().map(|g| g.id).collect();
        self.emit(TraceEvent::CycleStart {
            tick,
            cycle: self.cycle,
            goals: ids,
        });
        let first = self.goals.len();
        for g in new {
            self.goals.push(g);
            self.loc.push(Loc::Pending);
            self.gathered.push(None);
            self.delivered.push(None);
        }
        for g in &self.goals[first..] {
            self.workers[g.segment as usize - 1].pending.push(g.id);
        }
        for wi in 0..self.workers.len() {
            let w = &self.workers[wi];
            let pending: Vec<CellPos> = w.pending.iter().map(|&g| self.goals[g as usize].position).collect();
            let window = w.base.clone().with_required(self.sc.transfer_ticks(w.cargo.len()));
            let (cells, stops) = if window.feasible {
                let p = plan_worker_cycle(
                    self.sc,
                    w.pos,
                    &pending,
                    &window,
                    w.cargo.len(),
                    self.sched.cycle_ticks,
                )?;
                (p.path, p.stops)
            } else {
                self.fallbacks += 1;
                let id = w.id;
                self.emit(TraceEvent::Fallback { tick, agent: id });
                let w = &self.workers[wi];
                let f = distance_field(&self.sc.grid, w.pos)?;
                let path = path_from_source(&self.sc.grid, &f, w.meeting)?;
                let n = path.cells.len();
                (path.cells, vec![false; n])
            };
            self.workers[wi].walker = Walker::new(cells, stops);
        }
        Ok(())
    }

    fn target_pos(&self, a: Association) -> (u32, CellPos) {
        match a {
            Association::Oc => (OC_AGENT, self.sc.oc),
            Association::Collector(c) => {
                let col = &self.collectors[c as usize - 1];
                (col.agent, col.pos)
            }
        }
    }

    fn deliver(&mut self, tick: u64, from: u32, ids: &[u32]) {
        for &g in ids {
            self.loc[g as usize] = Loc::Delivered;
            self.delivered[g as usize] = Some(tick);
            let refresh = tick - self.goals[g as usize].t_request;
            self.emit(TraceEvent::Deliver {
                tick,
                agent: from,
                goal: g,
                refresh,
            });
        }
    }

    fn step(&mut self, tick: u64) -> Result<()> {
        let r = (tick - self.cycle_start) as usize;
        // Move.
        for ci in 0..self.collectors.len() {
            let p = self.sched.collectors[ci].timeline[r];
            if p != self.collectors[ci].pos {
                self.collectors[ci].pos = p;
                let agent = self.collectors[ci].agent;
                self.emit(TraceEvent::Move { tick, agent, cell: p });
            }
        }
        for wi in 0..self.workers.len() {
            if let Some(p) = self.workers[wi].walker.tick() {
                self.workers[wi].pos = p;
                let agent = self.workers[wi].id;
                self.emit(TraceEvent::Move { tick, agent, cell: p });
            }
        }
        let grid = &self.sc.grid;
        for p in self.workers.iter().map(|w| w.pos).chain(self.collectors.iter().map(|c| c.pos)) {
            if !grid.is_free(p) {
                return Err(Error::Inconsistent(format!("agent on obstacle cell {p} at tick {tick}")));
            }
        }

        // Gather.
        for wi in 0..self.workers.len() {
            let (id, pos) = (self.workers[wi].id, self.workers[wi].pos);
            let mut i = 0;
            while i < self.workers[wi].pending.len() {
                let g = self.workers[wi].pending[i];
                if self.goals[g as usize].position != pos {
                    i += 1;
                    continue;
                }
                self.workers[wi].pending.remove(i);
                self.loc[g as usize] = Loc::Agent(id);
                self.gathered[g as usize] = Some(tick);
                self.workers[wi].cargo.push(g);
                self.emit(TraceEvent::Gather { tick, agent: id, goal: g });
            }
        }

        // Worker hand-over.
        for wi in 0..self.workers.len() {
            let w = &self.workers[wi];
            if w.cargo.is_empty() {
                self.workers[wi].contact = 0;
                continue;
            }
            let assoc = self.plan.association[w.id as usize - 1];
            let (to, tpos) = self.target_pos(assoc);
            if !self.sc.in_comm(w.pos, tpos) {
                self.workers[wi].contact = 0;
                continue;
            }
            let w = &mut self.workers[wi];
            w.contact += 1;
            if w.contact < self.sc.transfer_ticks(w.cargo.len()).max(1) {
                continue;
            }
            w.contact = 0;
            let ids = core::mem::take(&mut w.cargo);
            let from = w.id;
            if !self.sc.in_comm(self.workers[wi].pos, tpos) {
                self.comm_violations += 1;
            }
            self.emit(TraceEvent::Transfer {
                tick,
                from,
                to,
                goals: ids.clone(),
            });
            match assoc {
                Association::Oc => self.deliver(tick, from, &ids),
                Association::Collector(c) => {
                    for &g in &ids {
                        self.loc[g as usize] = Loc::Agent(to);
                    }
                    self.collectors[c as usize - 1].cargo.extend_from_slice(&ids);
                }
            }
        }

        // Collector upload.
        for ci in 0..self.collectors.len() {
            let c = &mut self.collectors[ci];
            if c.cargo.is_empty() || !self.sc.in_comm(c.pos, self.sc.oc) {
                c.contact = 0;
                continue;
            }
            c.contact += 1;
            if c.contact < self.sc.transfer_ticks(c.cargo.len()).max(1) {
                continue;
            }
            c.contact = 0;
            let ids = core::mem::take(&mut c.cargo);
            let from = c.agent;
            self.emit(TraceEvent::Transfer {
                tick,
                from,
                to: OC_AGENT,
                goals: ids.clone(),
            });
            self.deliver(tick, from, &ids);
        }
        self.audit(tick)
    }

    /// Conservation: every goal is in exactly one place.
    fn audit(&self, tick: u64) -> Result<()> {
        let floor = self.settled;
        let mut seen = vec![0u8; self.goals.len() - floor];
        let holders = self
            .workers
            .iter()
            .map(|w| (w.id, &w.cargo))
            .chain(self.collectors.iter().map(|c| (c.agent, &c.cargo)));
        for (agent, cargo) in holders {
            for &g in cargo {
                if self.loc[g as usize] != Loc::Agent(agent) || (g as usize) < floor {
                    return Err(Error::Inconsistent(format!("goal {g} misplaced at tick {tick}")));
                }
                seen[g as usize - floor] += 1;
            }
        }
        for (g, &l) in self.loc[floor..].iter().enumerate() {
            let held = matches!(l, Loc::Agent(_));
            if (held && seen[g] != 1) || (!held && seen[g] != 0) {
                let g = g + floor;
                return Err(Error::Inconsistent(format!("goal {g} duplicated or lost at tick {tick}")));
            }
        }
        Ok(())
    }
}

/// Runs `cfg.n_cycles` cycles of `plan` from all agents at the OC.
pub fn run_mission(sc: &Scenario, plan: &DeploymentPlan, cfg: MissionConfig) -> Result<MissionOutcome> {
    if cfg.n_cycles == 0 {
        return Err(Error::InvalidArgument("n_cycles must be at least 1".into()));
    }
    let sched = build_schedule(sc, plan)?;
    let workers = plan
        .segmentation
        .ids()
        .map(|id| {
            let meeting = match plan.association[id as usize - 1] {
                Association::Oc => sc.oc,
                Association::Collector(c) => plan.groups[c as usize - 1]
                    .meeting_point(id)
                    .expect("associated member"),
            };
            Worker {
                id,
                pos: sc.oc,
                walker: Walker::default(),
                cargo: Vec::new(),
                pending: Vec::new(),
                contact: 0,
                base: window_base(sc, plan, &sched, id),
                meeting,
            }
        })
        .collect();
    let collectors = plan
        .groups
        .iter()
        .map(|g| Collector {
            agent: plan.n_w as u32 + g.collector,
            pos: sc.oc,
            cargo: Vec::new(),
            contact: 0,
        })
        .collect();
    let mut w = World {
        sc,
        plan,
        sched,
        cfg,
        workers,
        collectors,
        goals: Vec::new(),
        loc: Vec::new(),
        gathered: Vec::new(),
        delivered: Vec::new(),
        trace: Vec::new(),
        cycle_start: 0,
        cycle: 0,
        settled: 0,
        fallbacks: 0,
        comm_violations: 0,
    };
    w.start_cycle(0)?;
    let c = w.sched.cycle_ticks;
    let end = cfg.n_cycles * c;
    for tick in 1..=end {
        w.step(tick)?;
        if tick % c == 0 && tick < end {
            w.cycle += 1;
            w.start_cycle(tick)?;
        }
    }

    let tick_len = w.sched.tick_len;
    let mut delivered_per_cycle = vec![0u64; cfg.n_cycles as usize];
    let mut refresh_sum = 0u64;
    let mut records = Vec::with_capacity(w.goals.len());
    for (g, req) in w.goals.iter().enumerate() {
        let cycle = req.t_request / c;
        if let Some(t) = w.delivered[g] {
            delivered_per_cycle[cycle as usize] += 1;
            refresh_sum += t - req.t_request;
        }
        records.push(GoalRecord {
            id: req.id,
            segment: req.segment,
            position: req.position,
            cycle,
            t_request: req.t_request,
            t_gathered: w.gathered[g],
            t_delivered: w.delivered[g],
        });
    }
    let delivered: u64 = delivered_per_cycle.iter().sum();
    let requested = w.goals.len() as u64;
    let metrics = MissionMetrics {
        tick_len,
        cycle_ticks: c,
        n_cycles: cfg.n_cycles,
        goals: records,
        delivered_per_cycle,
        requested,
        delivered,
        undelivered: requested - delivered,
        t_refresh_mean: (delivered > 0).then(|| refresh_sum as f64 / delivered as f64 * tick_len),
        n_goals_rate: delivered as f64 / cfg.n_cycles as f64,
        fallbacks: w.fallbacks,
        comm_violations: w.comm_violations,
    };
    Ok(MissionOutcome {
        metrics,
        trace: w.trace,
        schedule: w.sched,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::collector::assemble_plan;
    use crate::segmentation::Method;

    #[test]
    fn walker_matches_travel_ticks() {
        let g = GridMap::from_ascii(&["..........", "...##.....", "...#......", ".........."], 1.0);
        let f = distance_field(&g, CellPos::new(0, 0)).unwrap();
        let len = descent_lengths(&g, &f);
        for i in g.free_cells() {
            let p = path_from_source(&g, &f, g.pos(i)).unwrap();
            let ticks = walk_ticks(&p.cells).len() as u64 - 1;
            assert_eq!(ticks, travel_ticks(len[i], 1.0), "to {}", g.pos(i));
        }
    }

    #[test]
    fn walker_moves_at_most_one_cell() {
        let cells: Vec<CellPos> = (0..6).map(|i| CellPos::new(i, i / 2)).collect();
        let steps = walk_ticks(&cells);
        for w in steps.windows(2) {
            assert!(w[0].chebyshev(w[1]) <= 1);
        }
    }

    #[test]
    fn goals_are_deterministic_and_distinct() {
        let sc = Scenario::with_defaults(GridMap::empty(10, 10, 1.0), CellPos::new(0, 0), 3);
        let seg = crate::segmentation::segment(&sc, Method::Bap, 2).unwrap();
        let a = generate_goals(7, &seg, 3, 4, 0, 0).unwrap();
        let b = generate_goals(7, &seg, 3, 4, 0, 0).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, generate_goals(7, &seg, 4, 4, 0, 0).unwrap());
        for s in 1..=2 {
            let mut cells: Vec<_> = a.iter().filter(|g| g.segment == s).map(|g| g.position).collect();
            assert_eq!(cells.len(), 4);
            cells.dedup();
            assert_eq!(cells.len(), 4);
            assert!(cells.iter().all(|&p| seg.label(p) == s));
        }
        let first = seg.cells(1).len();
        assert_eq!(
            generate_goals(7, &seg, 0, 51, 0, 0).unwrap_err(),
            Error::TooManyGoals { k: 51, area: first }
        );
    }

    #[test]
    fn single_cell_goal_is_forced() {
        let sc = Scenario::with_defaults(GridMap::from_ascii(&["#.#"], 1.0), CellPos::new(1, 0), 2);
        let seg = crate::segmentation::segment(&sc, Method::Pap, 1).unwrap();
        for cycle in 0..5 {
            let g = generate_goals(1, &seg, cycle, 1, 0, 0).unwrap();
            assert_eq!(g[0].position, CellPos::new(1, 0));
        }
    }

    #[test]
    fn latest_arrival_rule() {
        let c = RegionCell {
            cell: CellPos::new(0, 0),
            runs: vec![(3, 5), (10, 20)],
        };
        assert_eq!(c.latest_arrival(0), Some(20));
        assert_eq!(c.latest_arrival(3), Some(18));
        assert_eq!(c.latest_arrival(11), Some(10));
        assert_eq!(c.latest_arrival(12), None);
    }

    #[test]
    fn mission_runs_clean_on_open_map() {
        let sc = Scenario::with_defaults(GridMap::empty(30, 20, 1.0), CellPos::new(0, 10), 5);
        for n_c in 0..3 {
            let plan = assemble_plan(&sc, Method::Pap, n_c).unwrap();
            let cfg = MissionConfig { n_cycles: 4, seed: 3, trace: true };
            let out = run_mission(&sc, &plan, cfg).unwrap();
            let m = &out.metrics;
            assert_eq!(m.requested, 4 * 3 * (5 - n_c as u64));
            assert!(m.delivered > 0, "n_c {n_c}: nothing delivered");
            assert_eq!(m.comm_violations, 0);
            for g in &m.goals {
                if let Some(d) = g.t_delivered {
                    let t = g.t_gathered.unwrap();
                    assert!(g.t_request < t && t <= d);
                }
            }
            let again = run_mission(&sc, &plan, cfg).unwrap();
            assert_eq!(out.trace, again.trace);
        }
    }
}
