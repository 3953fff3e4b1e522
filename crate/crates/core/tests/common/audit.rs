//! Replays a mission trace against its metrics and lists every
//! conservation, causality, contact or movement violation.

use std::collections::HashMap;

use gatherplan_core::executor::{MissionOutcome, TraceEvent, OC_AGENT};
use gatherplan_core::{CellPos, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Holder {
    Pending,
    Agent(u32),
    AtOc,
    Delivered,
}

fn legal_step(sc: &Scenario, a: CellPos, b: CellPos) -> bool {
    let (dc, dr) = (a.col.abs_diff(b.col), a.row.abs_diff(b.row));
    if dc > 1 || dr > 1 || !sc.grid.is_free(b) {
        return false;
    }
    dc + dr < 2 || sc.grid.is_free(CellPos::new(b.col, a.row)) && sc.grid.is_free(CellPos::new(a.col, b.row))
}

/// Returns human-readable violations; empty means the trace is clean.
pub fn audit(sc: &Scenario, out: &MissionOutcome) -> Vec<String> {
    let m = &out.metrics;
    let mut bad = Vec::new();
    let mut pos: HashMap<u32, CellPos> = HashMap::new();
    let mut holder: HashMap<u32, Holder> = HashMap::new();
    let mut gathered: HashMap<u32, u64> = HashMap::new();
    let mut delivered: HashMap<u32, u64> = HashMap::new();
    let mut last_tick = 0;
    let at = |pos: &HashMap<u32, CellPos>, a: u32| if a == OC_AGENT { sc.oc } else { pos.get(&a).copied().unwrap_or(sc.oc) };
    for e in &out.trace {
        let tick = match e {
            TraceEvent::CycleStart { tick, .. }
            | TraceEvent::Move { tick, .. }
            | TraceEvent::Gather { tick, .. }
            | TraceEvent::Transfer { tick, .. }
            | TraceEvent::Deliver { tick, .. }
            | TraceEvent::Fallback { tick, .. } => *tick,
        };
        if tick < last_tick {
            bad.push(format!("tick {tick}: trace goes back in time"));
        }
        last_tick = tick;
        match e {
            TraceEvent::CycleStart { goals, .. } => {
                for &g in goals {
                    if holder.insert(g, Holder::Pending).is_some() {
                        bad.push(format!("tick {tick}: goal {g} requested twice"));
                    }
                }
            }
            TraceEvent::Move { agent, cell, .. } => {
                let from = at(&pos, *agent);
                if !legal_step(sc, from, *cell) {
                    bad.push(format!("tick {tick}: agent {agent} {from} -> {cell} is not a legal move"));
                }
                pos.insert(*agent, *cell);
            }
            TraceEvent::Gather { agent, goal, .. } => {
                if holder.get(goal) != Some(&Holder::Pending) {
                    bad.push(format!("tick {tick}: goal {goal} gathered from {:?}", holder.get(goal)));
                }
                let here = at(&pos, *agent);
                if m.goals.get(*goal as usize).is_none_or(|g| g.position != here) {
                    bad.push(format!("tick {tick}: agent {agent} gathered goal {goal} away from it"));
                }
                holder.insert(*goal, Holder::Agent(*agent));
                gathered.insert(*goal, tick);
            }
            TraceEvent::Transfer { from, to, goals, .. } => {
                if !sc.in_comm(at(&pos, *from), at(&pos, *to)) {
                    bad.push(format!("tick {tick}: transfer {from} -> {to} out of contact"));
                }
                for &g in goals {
                    if holder.get(&g) != Some(&Holder::Agent(*from)) {
                        bad.push(format!("tick {tick}: goal {g} handed over by {from} but held {:?}", holder.get(&g)));
                    }
                    holder.insert(g, if *to == OC_AGENT { Holder::AtOc } else { Holder::Agent(*to) });
                }
            }
            TraceEvent::Deliver { goal, .. } => {
                if holder.get(goal) != Some(&Holder::AtOc) {
                    bad.push(format!("tick {tick}: goal {goal} delivered from {:?}", holder.get(goal)));
                }
                holder.insert(*goal, Holder::Delivered);
                delivered.insert(*goal, tick);
            }
            TraceEvent::Fallback { .. } => {}
        }
    }
    for (&g, h) in &holder {
        if *h == Holder::AtOc {
            bad.push(format!("goal {g} uploaded but never delivered"));
        }
    }
    for g in &m.goals {
        if g.t_gathered != gathered.get(&g.id).copied() || g.t_delivered != delivered.get(&g.id).copied() {
            bad.push(format!("goal {}: metrics disagree with the trace", g.id));
        }
        let ordered = match (g.t_gathered, g.t_delivered) {
            (Some(t), d) => g.t_request <= t && d.is_none_or(|d| t <= d),
            (None, d) => d.is_none(),
        };
        if !ordered {
            bad.push(format!("goal {}: times out of order {:?}", g.id, (g.t_request, g.t_gathered, g.t_delivered)));
        }
    }
    if m.delivered + m.undelivered != m.requested || m.requested != m.goals.len() as u64 {
        bad.push(format!("counts: {} + {} != {}", m.delivered, m.undelivered, m.requested));
    }
    if m.comm_violations > 0 {
        bad.push(format!("{} comm violations reported", m.comm_violations));
    }
    bad
}
