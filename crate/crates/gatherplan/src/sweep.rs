//! Thread-parallel sweep and mission batches.
//!
//! Work items are claimed from a shared counter and results are stored by
//! index, so the output never depends on the thread count or scheduling.

use std::num::NonZeroUsize;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use gatherplan_core::collector::DeploymentPlan;
use gatherplan_core::executor::{run_mission, MissionConfig, MissionOutcome};
use gatherplan_core::planner::{evaluate, finish, sweep_configs, SweepResult};
use gatherplan_core::segmentation::Method;
use gatherplan_core::Scenario;

use crate::files::scenario_hash;

/// Environment variable capping worker threads; 0 or unset means one per
/// available core.
pub const THREADS_ENV: &str = "GATHERPLAN_THREADS";

pub fn thread_count() -> usize {
    let auto = || thread::available_parallelism().map_or(1, NonZeroUsize::get);
    match std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok()) {
        Some(0) | None => auto(),
        Some(n) => n,
    }
}

/// Applies `f` to every item on up to `threads` threads; results keep the
/// input order.
pub fn par_map<T: Sync, R: Send>(items: &[T], threads: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let threads = threads.clamp(1, items.len().max(1));
    if threads == 1 {
        return items.iter().map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    thread::scope(|s| {
        for _ in 0..threads {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                slots.lock().expect("no panics while holding the lock")[i] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .expect("no panics while holding the lock")
        .into_iter()
        .map(|r| r.expect("every item processed"))
        .collect()
}

/// Sweeps `methods x 0..=max_c` and returns the selection and the best
/// plan stamped with the scenario hash.
pub fn parallel_sweep(
    sc: &Scenario,
    methods: &[Method],
    max_c: usize,
    alpha: f64,
    beta: f64,
    threads: usize,
) -> (SweepResult, Option<DeploymentPlan>) {
    let configs = sweep_configs(methods, max_c);
    let (evals, plans) = par_map(&configs, threads, |&(m, c)| evaluate(sc, m, c)).into_iter().unzip();
    let (result, mut plan) = finish(evals, plans, alpha, beta);
    if let Some(p) = plan.as_mut() {
        p.scenario_hash = scenario_hash(sc);
    }
    (result, plan)
}

/// Runs one mission per seed.
pub fn run_seeds(
    sc: &Scenario,
    plan: &DeploymentPlan,
    n_cycles: u64,
    seeds: &[u64],
    trace: bool,
    threads: usize,
) -> Vec<gatherplan_core::Result<MissionOutcome>> {
    par_map(seeds, threads, |&seed| run_mission(sc, plan, MissionConfig { n_cycles, seed, trace }))
}
