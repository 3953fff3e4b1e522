//! Collector planning: segment adjacency, grouping of worker segments per
//! collector, cyclic routes from the OC and worker association.

use alloc::collections::VecDeque;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fmm::{distance_field, extract_path, ArrivalField, GeodesicPath};
use crate::grid::{CellPos, GridMap};
use crate::scenario::Scenario;
use crate::segmentation::{segment, Method, Segmentation};

/// Segment adjacency with geodesic centroid distances as weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjacencyGraph {
    /// `centroids[id - 1]` for segment `id`.
    pub centroids: Vec<CellPos>,
    /// Unordered edges `(a, b, meters)` with `a < b`, sorted.
    pub edges: Vec<(u32, u32, f64)>,
}

impl AdjacencyGraph {
    pub fn node_count(&self) -> usize {
        self.centroids.len()
    }

    /// Neighbours of `id` with edge weights, ascending by id.
    pub fn neighbors(&self, id: u32) -> Vec<(u32, f64)> {
        let mut out: Vec<(u32, f64)> = self
            .edges
            .iter()
            .filter_map(|&(a, b, w)| {
                if a == id {
                    Some((b, w))
                } else if b == id {
                    Some((a, w))
                } else {
                    None
                }
            })
            .collect();
        out.sort_by_key(|e| e.0);
        out
    }

    pub fn weight(&self, a: u32, b: u32) -> Option<f64> {
        let (a, b) = if a < b { (a, b) } else { (b, a) };
        self.edges.iter().find(|e| e.0 == a && e.1 == b).map(|e| e.2)
    }

    /// True when the nodes in `members` induce a connected subgraph.
    pub fn induces_connected(&self, members: &[u32]) -> bool {
        let Some(&first) = members.first() else {
            return false;
        };
        let mut seen = vec![first];
        let mut queue = VecDeque::from([first]);
        while let Some(u) = queue.pop_front() {
            for (v, _) in self.neighbors(u) {
                if members.contains(&v) && !seen.contains(&v) {
                    seen.push(v);
                    queue.push_back(v);
                }
            }
        }
        seen.len() == members.len()
    }

    pub fn is_connected(&self) -> bool {
        let all: Vec<u32> = (1..=self.node_count() as u32).collect();
        self.induces_connected(&all)
    }

    /// All-pairs shortest path lengths over edge weights.
    pub fn shortest_paths(&self) -> Vec<Vec<f64>> {
        let n = self.node_count();
        let mut d = vec![vec![f64::INFINITY; n]; n];
        for (i, row) in d.iter_mut().enumerate() {
            row[i] = 0.0;
        }
        for &(a, b, w) in &self.edges {
            let (a, b) = (a as usize - 1, b as usize - 1);
            d[a][b] = d[a][b].min(w);
            d[b][a] = d[b][a].min(w);
        }
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let via = d[i][k] + d[k][j];
                    if via < d[i][j] {
                        d[i][j] = via;
                    }
                }
            }
        }
        d
    }
}

/// Per-segment geometry shared by the planning steps.
#[derive(Debug, Clone)]
pub struct SegmentInfo {
    pub id: u32,
    pub centroid: CellPos,
    pub area: usize,
    /// Mean geodesic distance (meters) from the centroid to the segment's cells.
    pub mean_leg: f64,
    /// Unit-speed distance field from the centroid.
    pub field: ArrivalField,
}

/// Computes [`SegmentInfo`] for every segment, indexed by `id - 1`.
pub fn segment_info(grid: &GridMap, seg: &Segmentation) -> Result<Vec<SegmentInfo>> {
    seg.ids()
        .map(|id| {
            let centroid = seg.centroid(id);
            let field = distance_field(grid, centroid)?;
            let cells = seg.cells(id);
            let sum: f64 = cells.iter().map(|&i| field.at(i)).sum();
            Ok(SegmentInfo {
                id,
                centroid,
                area: cells.len(),
                mean_leg: sum / cells.len().max(1) as f64,
                field,
            })
        })
        .collect()
}

/// Builds the adjacency graph: an edge joins two segments with at least one
/// pair of 4-adjacent cells.
pub fn build_adjacency(grid: &GridMap, seg: &Segmentation) -> Result<AdjacencyGraph> {
    let info = segment_info(grid, seg)?;
    Ok(adjacency_from(grid, seg, &info))
}

fn adjacency_from(grid: &GridMap, seg: &Segmentation, info: &[SegmentInfo]) -> AdjacencyGraph {
    let n = seg.n_w;
    let mut touch = vec![false; n * n];
    for i in grid.free_cells() {
        let a = seg.label_idx(i);
        // Right and down neighbours cover every 4-adjacent pair once.
        for d in [(1isize, 0isize), (0, 1)] {
            if let Some(j) = grid.offset(i, d) {
                let b = seg.label_idx(j);
                if b != 0 && a != 0 && a != b {
                    let (lo, hi) = (a.min(b) as usize - 1, a.max(b) as usize - 1);
                    touch[lo * n + hi] = true;
                }
            }
        }
    }
    let mut edges = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if touch[a * n + b] {
                let ab = info[a].field.get(info[b].centroid);
                let ba = info[b].field.get(info[a].centroid);
                edges.push((a as u32 + 1, b as u32 + 1, 0.5 * (ab + ba)));
            }
        }
    }
    AdjacencyGraph {
        centroids: info.iter().map(|s| s.centroid).collect(),
        edges,
    }
}

/// Worker segments served by one collector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollectorGroup {
    /// Collector id in `1..=n_c`.
    pub collector: u32,
    /// Member segment ids, ascending.
    pub members: Vec<u32>,
    /// `meeting_points[i]` lies inside segment `members[i]`.
    pub meeting_points: Vec<CellPos>,
}

impl CollectorGroup {
    pub fn meeting_point(&self, id: u32) -> Option<CellPos> {
        self.members
            .iter()
            .position(|&m| m == id)
            .map(|i| self.meeting_points[i])
    }
}

/// Splits the segments into `n_c` connected groups of balanced area.
pub fn group_segments(
    g: &AdjacencyGraph,
    seg: &Segmentation,
    n_c: usize,
) -> Result<Vec<CollectorGroup>> {
    let n = g.node_count();
    if n_c == 0 {
        return Err(Error::InvalidArgument("group_segments needs n_c >= 1".into()));
    }
    if n_c > n {
        return Err(Error::TooManyCollectors { n_c, n_w: n });
    }
    if !g.is_connected() {
        return Err(Error::DisconnectedAdjacency);
    }
    let area: Vec<usize> = crate::segmentation::segment_stats(seg);
    let dist = g.shortest_paths();

    // Seeds: an end of the graph diameter, then farthest-point picks.
    let ecc = |i: usize| dist[i].iter().cloned().fold(0.0, f64::max);
    let mut first = 0;
    for i in 1..n {
        if ecc(i) > ecc(first) {
            first = i;
        }
    }
    let mut seeds = vec![first];
    while seeds.len() < n_c {
        let mut best: Option<(usize, f64)> = None;
        for i in (0..n).filter(|i| !seeds.contains(i)) {
            let d = seeds.iter().map(|&s| dist[s][i]).fold(f64::INFINITY, f64::min);
            if best.is_none_or(|(_, bd)| d > bd) {
                best = Some((i, d));
            }
        }
        seeds.push(best.expect("n_c <= n").0);
    }

    // owner[i] = group index of node i.
    let mut owner: Vec<Option<usize>> = vec![None; n];
    let mut sizes = vec![0usize; n_c];
    for (gi, &s) in seeds.iter().enumerate() {
        owner[s] = Some(gi);
        sizes[gi] = area[s];
    }
    let mut unclaimed = n - n_c;
    while unclaimed > 0 {
        let mut by_size: Vec<usize> = (0..n_c).collect();
        by_size.sort_by_key(|&gi| (sizes[gi], gi));
        let mut grown = false;
        for gi in by_size {
            // Cheapest unclaimed node adjacent to the group.
            let mut best: Option<(usize, f64)> = None;
            for (u, o) in owner.iter().enumerate() {
                if *o != Some(gi) {
                    continue;
                }
                for (v, w) in g.neighbors(u as u32 + 1) {
                    let v = v as usize - 1;
                    if owner[v].is_none() && best.is_none_or(|(bv, bw)| w < bw || (w == bw && v < bv)) {
                        best = Some((v, w));
                    }
                }
            }
            if let Some((v, _)) = best {
                owner[v] = Some(gi);
                sizes[gi] += area[v];
                unclaimed -= 1;
                grown = true;
                break;
            }
        }
        if !grown {
            return Err(Error::DisconnectedAdjacency);
        }
    }

    // Local improvement: move single boundary nodes out of a largest group.
    for _ in 0..100 {
        let max = *sizes.iter().max().expect("n_c >= 1");
        let mut applied = false;
        'search: for a in 0..n_c {
            if sizes[a] != max {
                continue;
            }
            let members: Vec<u32> = (0..n).filter(|&i| owner[i] == Some(a)).map(|i| i as u32 + 1).collect();
            if members.len() < 2 {
                continue;
            }
            for &u in &members {
                let ui = u as usize - 1;
                let rest: Vec<u32> = members.iter().copied().filter(|&m| m != u).collect();
                let mut targets: Vec<usize> = g
                    .neighbors(u)
                    .into_iter()
                    .filter_map(|(v, _)| owner[v as usize - 1])
                    .filter(|&b| b != a)
                    .collect();
                targets.sort_unstable();
                targets.dedup();
                for b in targets {
                    if sizes[b] + area[ui] < sizes[a] && g.induces_connected(&rest) {
                        owner[ui] = Some(b);
                        sizes[a] -= area[ui];
                        sizes[b] += area[ui];
                        applied = true;
                        break 'search;
                    }
                }
            }
        }
        if !applied {
            break;
        }
    }

    Ok((0..n_c)
        .map(|gi| {
            let members: Vec<u32> = (0..n).filter(|&i| owner[i] == Some(gi)).map(|i| i as u32 + 1).collect();
            let meeting_points = members.iter().map(|&m| seg.centroid(m)).collect();
            CollectorGroup {
                collector: gi as u32 + 1,
                members,
                meeting_points,
            }
        })
        .collect())
}

/// A collector's invariant loop `OC -> m_1 -> ... -> m_g -> OC`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollectorRoute {
    pub collector: u32,
    /// Segment ids in visiting order.
    pub order: Vec<u32>,
    /// OC, the meeting points in visiting order, OC.
    pub waypoints: Vec<CellPos>,
    /// Geodesic sub-path of each consecutive waypoint pair.
    pub legs: Vec<GeodesicPath>,
    /// Meters.
    pub length: f64,
    pub travel_time: f64,
    /// `travel_time` plus the expected transfer time of the group's goals.
    pub period: f64,
}

impl CollectorRoute {
    /// The whole loop as one cell sequence, junction cells not repeated.
    pub fn cells(&self) -> Vec<CellPos> {
        let mut out = vec![self.waypoints[0]];
        for leg in &self.legs {
            out.extend_from_slice(&leg.cells[1..]);
        }
        out
    }
}

/// Symmetric geodesic distances between waypoint fields.
fn distance_matrix(fields: &[ArrivalField], points: &[CellPos]) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let v = 0.5 * (fields[i].get(points[j]) + fields[j].get(points[i]));
            d[i][j] = v;
            d[j][i] = v;
        }
    }
    d
}

fn tour_length(d: &[Vec<f64>], tour: &[usize]) -> f64 {
    tour.windows(2).map(|w| d[w[0]][w[1]]).sum()
}

/// Closed tour over nodes `0..n` starting and ending at node 0: nearest
/// neighbour construction followed by 2-opt until no move improves it.
pub fn tour_order(d: &[Vec<f64>]) -> Vec<usize> {
    let n = d.len();
    let mut tour = vec![0];
    let mut left: Vec<usize> = (1..n).collect();
    while !left.is_empty() {
        let cur = *tour.last().expect("nonempty");
        let (k, _) = left
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (k, &v)| if d[cur][v] < acc.1 { (k, d[cur][v]) } else { acc });
        tour.push(left.remove(k));
    }
    tour.push(0);
    let mut len = tour_length(d, &tour);
    loop {
        let mut improved = false;
        for i in 1..tour.len() - 2 {
            for j in i + 1..tour.len() - 1 {
                let delta = d[tour[i - 1]][tour[j]] + d[tour[i]][tour[j + 1]]
                    - d[tour[i - 1]][tour[i]]
                    - d[tour[j]][tour[j + 1]];
                if delta < -1e-9 {
                    tour[i..=j].reverse();
                    let next = tour_length(d, &tour);
                    assert!(next <= len + 1e-9, "2-opt increased the tour length");
                    len = next;
                    improved = true;
                }
            }
        }
        if !improved {
            return tour;
        }
    }
}

/// Orders the meeting points and extracts the loop's sub-paths.
fn route_through(
    sc: &Scenario,
    collector: u32,
    members: &[u32],
    points: &[CellPos],
) -> Result<(CollectorRoute, Vec<ArrivalField>)> {
    if members.is_empty() {
        return Err(Error::EmptyGroup);
    }
    let grid = &sc.grid;
    let mut nodes = vec![sc.oc];
    nodes.extend_from_slice(points);
    let fields: Vec<ArrivalField> = nodes
        .iter()
        .map(|&p| distance_field(grid, p).map_err(|_| Error::WaypointUnreachable(p)))
        .collect::<Result<_>>()?;
    for &p in &nodes {
        if !fields[0].get(p).is_finite() {
            return Err(Error::WaypointUnreachable(p));
        }
    }
    let d = distance_matrix(&fields, &nodes);
    let tour = tour_order(&d);
    let mut legs = Vec::with_capacity(tour.len() - 1);
    for w in tour.windows(2) {
        // Descending the target's field walks from the leg start to it.
        legs.push(extract_path(grid, &fields[w[1]], nodes[w[0]])?);
    }
    let length: f64 = legs.iter().map(|l| l.length).sum();
    let travel_time = length / sc.agent_speed;
    let load = sc.transfer_time_per_goal * sc.goals_per_segment_per_cycle as f64 * members.len() as f64;
    let route = CollectorRoute {
        collector,
        order: tour[1..tour.len() - 1].iter().map(|&i| members[i - 1]).collect(),
        waypoints: tour.iter().map(|&i| nodes[i]).collect(),
        legs,
        length,
        travel_time,
        period: travel_time + load,
    };
    Ok((route, fields))
}

/// Estimated time a worker needs per cycle: `k` goal legs of mean length
/// plus the trip from the centroid to the meeting point, plus transfers.
pub fn estimate_worker_time(sc: &Scenario, seg: &Segmentation, id: u32, meeting: CellPos) -> Result<f64> {
    let centroid = seg.centroid(id);
    let field = distance_field(&sc.grid, centroid)?;
    let cells = seg.cells(id);
    let mean_leg = cells.iter().map(|&i| field.at(i)).sum::<f64>() / cells.len().max(1) as f64;
    Ok(worker_time(sc, mean_leg, field.get(meeting)))
}

pub(crate) fn worker_time(sc: &Scenario, mean_leg: f64, to_meeting: f64) -> f64 {
    let k = sc.goals_per_segment_per_cycle as f64;
    (k * mean_leg + to_meeting) / sc.agent_speed + sc.transfer_time_per_goal * k
}

/// Plans the loop of one group and balances it against its workers.
///
/// Meeting points whose worker has slack (estimated worker time below the
/// route period) are slid, one cell at a time, from the centroid towards
/// the nearest cell of the loop that skips them. The slide stops before
/// the worker estimate would exceed the period or the cell would leave the
/// segment. The loop is then re-planned through the moved points.
pub fn plan_route(
    sc: &Scenario,
    seg: &Segmentation,
    group: &CollectorGroup,
) -> Result<(CollectorGroup, CollectorRoute)> {
    let info = segment_info(&sc.grid, seg)?;
    plan_route_with(sc, seg, &info, group)
}

fn plan_route_with(
    sc: &Scenario,
    seg: &Segmentation,
    info: &[SegmentInfo],
    group: &CollectorGroup,
) -> Result<(CollectorGroup, CollectorRoute)> {
    let grid = &sc.grid;
    let (route, fields) = route_through(sc, group.collector, &group.members, &group.meeting_points)?;
    let mut moved = group.clone();
    // Position of every node in the loop; node 0 is the OC.
    let node_of = |id: u32| group.members.iter().position(|&m| m == id).expect("member") + 1;
    let tour_nodes: Vec<usize> = core::iter::once(0)
        .chain(route.order.iter().map(|&id| node_of(id)))
        .chain(core::iter::once(0))
        .collect();
    for pos in 1..tour_nodes.len() - 1 {
        let node = tour_nodes[pos];
        let id = group.members[node - 1];
        let si = &info[id as usize - 1];
        let (prev, next) = (tour_nodes[pos - 1], tour_nodes[pos + 1]);
        let prev_cell = if prev == 0 { sc.oc } else { group.meeting_points[prev - 1] };
        let bypass = extract_path(grid, &fields[next], prev_cell)?;
        let mut target = bypass.cells[0];
        for &c in &bypass.cells {
            if si.field.get(c) < si.field.get(target) {
                target = c;
            }
        }
        let slide = extract_path(grid, &si.field, target)?;
        let mut m = group.meeting_points[node - 1];
        // The slide starts at the centroid; earlier cells are skipped.
        let start = slide.cells.iter().rposition(|&c| c == m).unwrap_or(slide.cells.len() - 1);
        for &c in slide.cells[..start].iter().rev() {
            if seg.label(c) != id || worker_time(sc, si.mean_leg, si.field.get(c)) > route.period {
                break;
            }
            m = c;
        }
        moved.meeting_points[node - 1] = m;
    }
    if moved.meeting_points == group.meeting_points {
        return Ok((moved, route));
    }
    let (route, _) = route_through(sc, group.collector, &moved.members, &moved.meeting_points)?;
    Ok((moved, route))
}

/// Where a worker hands over its data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Association {
    Oc,
    Collector(u32),
}

/// A full deployment for one `(method, n_c)` configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeploymentPlan {
    pub method: Method,
    pub n_c: usize,
    pub n_w: usize,
    pub segmentation: Segmentation,
    pub groups: Vec<CollectorGroup>,
    pub routes: Vec<CollectorRoute>,
    /// `association[id - 1]` for segment `id`.
    pub association: Vec<Association>,
    pub est_t_refresh: f64,
    pub est_n_goals: f64,
    pub utility: f64,
    /// Content hash of the scenario the plan was built for; empty if unset.
    pub scenario_hash: String,
}

/// Segments the map for `n_agents - n_c` workers and plans the collectors.
/// Estimates are left at zero.
pub fn assemble_plan(sc: &Scenario, method: Method, n_c: usize) -> Result<DeploymentPlan> {
    if n_c >= sc.n_agents {
        return Err(Error::NoWorkers {
            n_c,
            n_agents: sc.n_agents,
        });
    }
    let n_w = sc.n_agents - n_c;
    let seg = segment(sc, method, n_w)?;
    let (groups, routes, association) = if n_c == 0 {
        (Vec::new(), Vec::new(), vec![Association::Oc; n_w])
    } else {
        let info = segment_info(&sc.grid, &seg)?;
        let graph = adjacency_from(&sc.grid, &seg, &info);
        let initial = group_segments(&graph, &seg, n_c)?;
        let mut groups = Vec::with_capacity(n_c);
        let mut routes = Vec::with_capacity(n_c);
        let mut association = vec![Association::Oc; n_w];
        for g in &initial {
            let (g, r) = plan_route_with(sc, &seg, &info, g)?;
            for &m in &g.members {
                association[m as usize - 1] = Association::Collector(g.collector);
            }
            groups.push(g);
            routes.push(r);
        }
        (groups, routes, association)
    };
    Ok(DeploymentPlan {
        method,
        n_c,
        n_w,
        segmentation: seg,
        groups,
        routes,
        association,
        est_t_refresh: 0.0,
        est_n_goals: 0.0,
        utility: 0.0,
        scenario_hash: String::new(),
    })
}
