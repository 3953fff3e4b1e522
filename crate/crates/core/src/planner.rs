//! Configuration sweep: estimate, normalize and score every
//! `(method, n_c)` pair and pick the plan to execute.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::collector::{assemble_plan, segment_info, worker_time, Association, DeploymentPlan};
use crate::error::Result;
use crate::fmm::distance_field;
use crate::scenario::Scenario;
use crate::segmentation::Method;

/// Default number of collectors tried at most.
pub const MAX_COLLECTORS: usize = 8;

/// Default weights of the utility terms.
pub const DEFAULT_ALPHA: f64 = 0.5;
pub const DEFAULT_BETA: f64 = 0.5;

/// Utility assigned to configurations that could not be planned.
pub const INFEASIBLE_UTILITY: f64 = -1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEvaluation {
    pub method: Method,
    pub n_c: usize,
    pub feasible: bool,
    /// Time units.
    pub est_t_refresh: f64,
    /// Goals per cycle.
    pub est_n_goals: f64,
    pub t_norm: f64,
    pub n_norm: f64,
    pub utility: f64,
    /// Why the configuration could not be planned.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub evaluations: Vec<ConfigEvaluation>,
    /// Index of the selected evaluation.
    pub best: usize,
    pub alpha: f64,
    pub beta: f64,
}

impl SweepResult {
    pub fn best(&self) -> &ConfigEvaluation {
        &self.evaluations[self.best]
    }
}

/// Estimated refresh time and delivered goals per cycle of a plan.
///
/// With collectors, a goal waits on average half a collector period for a
/// pass, rides from mid-route back to the OC, and first spends the
/// worker's estimated residence time. A segment delivers as many goals as
/// its worker can reach within the collector period minus transfers,
/// capped at `k`. Without collectors every worker runs an out-and-back
/// tour from the OC and is assumed to complete its `k` goals.
pub fn estimate_config(sc: &Scenario, plan: &DeploymentPlan) -> Result<(f64, f64)> {
    let info = segment_info(&sc.grid, &plan.segmentation)?;
    let k = sc.goals_per_segment_per_cycle as f64;
    let v = sc.agent_speed;
    let transfer = sc.transfer_time_per_goal * k;
    if plan.n_c == 0 {
        let from_oc = distance_field(&sc.grid, sc.oc)?;
        let t: f64 = info
            .iter()
            .map(|s| worker_time(sc, s.mean_leg, 2.0 * from_oc.get(s.centroid)))
            .sum::<f64>()
            / info.len() as f64;
        return Ok((t, k * info.len() as f64));
    }

    let from_oc = distance_field(&sc.grid, sc.oc)?;
    let mut collector_term = 0.0;
    for r in &plan.routes {
        let cells = r.cells();
        // Cell reached after half of the loop's length.
        let mut walked = 0.0;
        let mut mid = cells[0];
        for w in cells.windows(2) {
            if walked >= 0.5 * r.length {
                break;
            }
            walked += w[0].euclid(w[1]) * sc.grid.cell_size();
            mid = w[1];
        }
        collector_term += 0.5 * r.period + from_oc.get(mid) / v;
    }
    collector_term /= plan.routes.len() as f64;

    let mut worker_term = 0.0;
    let mut goals = 0.0;
    for s in &info {
        let Association::Collector(c) = plan.association[s.id as usize - 1] else {
            continue;
        };
        let group = &plan.groups[c as usize - 1];
        let m = group.meeting_point(s.id).expect("associated member");
        let to_meeting = s.field.get(m);
        worker_term += worker_time(sc, s.mean_leg, to_meeting);
        let budget = plan.routes[c as usize - 1].period - transfer;
        let reach = budget * v - to_meeting;
        goals += if s.mean_leg <= 0.0 {
            k
        } else {
            libm::floor(reach / s.mean_leg).clamp(0.0, k)
        };
    }
    worker_term /= info.len() as f64;
    Ok((collector_term + worker_term, goals))
}

/// Min-max normalization across the feasible evaluations. Degenerate
/// ranges give `t_norm = 0` and `n_norm = 1`.
pub fn normalize(evals: &mut [ConfigEvaluation]) {
    let feasible = || evals.iter().filter(|e| e.feasible);
    let (t_min, t_max) = feasible().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), e| {
        (lo.min(e.est_t_refresh), hi.max(e.est_t_refresh))
    });
    let (n_min, n_max) = feasible().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), e| {
        (lo.min(e.est_n_goals), hi.max(e.est_n_goals))
    });
    for e in evals.iter_mut().filter(|e| e.feasible) {
        e.t_norm = if t_max > t_min {
            (e.est_t_refresh - t_min) / (t_max - t_min)
        } else {
            0.0
        };
        e.n_norm = if n_max > n_min {
            (e.est_n_goals - n_min) / (n_max - n_min)
        } else {
            1.0
        };
    }
}

/// `U = alpha (1 - t_norm) + beta n_norm`.
pub fn utility(t_norm: f64, n_norm: f64, alpha: f64, beta: f64) -> f64 {
    alpha * (1.0 - t_norm) + beta * n_norm
}

/// Sweep order: methods in the given order, then `n_c` ascending.
pub fn sweep_configs(methods: &[Method], max_c: usize) -> Vec<(Method, usize)> {
    methods
        .iter()
        .flat_map(|&m| (0..=max_c).map(move |c| (m, c)))
        .collect()
}

/// Largest collector count tried for a scenario.
pub fn default_max_collectors(sc: &Scenario) -> usize {
    MAX_COLLECTORS.min(sc.n_agents.saturating_sub(1))
}

/// Assembles and estimates one configuration. Failures produce an
/// infeasible evaluation and no plan.
pub fn evaluate(sc: &Scenario, method: Method, n_c: usize) -> (ConfigEvaluation, Option<DeploymentPlan>) {
    let outcome = assemble_plan(sc, method, n_c).and_then(|mut plan| {
        let (t, n) = estimate_config(sc, &plan)?;
        plan.est_t_refresh = t;
        plan.est_n_goals = n;
        Ok(plan)
    });
    match outcome {
        Ok(plan) => (
            ConfigEvaluation {
                method,
                n_c,
                feasible: true,
                est_t_refresh: plan.est_t_refresh,
                est_n_goals: plan.est_n_goals,
                t_norm: 0.0,
                n_norm: 0.0,
                utility: 0.0,
                error: None,
            },
            Some(plan),
        ),
        Err(e) => (
            ConfigEvaluation {
                method,
                n_c,
                feasible: false,
                est_t_refresh: f64::NAN,
                est_n_goals: f64::NAN,
                t_norm: f64::NAN,
                n_norm: f64::NAN,
                utility: INFEASIBLE_UTILITY,
                error: Some(e.to_string()),
            },
            None,
        ),
    }
}

fn method_rank(m: Method) -> usize {
    Method::ALL.iter().position(|&x| x == m).expect("known method")
}

/// Normalizes, scores and selects. Ties go to fewer collectors, then to
/// the method order BAP, PAP, RAP. Panics on an empty list.
pub fn select(mut evaluations: Vec<ConfigEvaluation>, alpha: f64, beta: f64) -> SweepResult {
    assert!(!evaluations.is_empty(), "sweep needs at least one configuration");
    normalize(&mut evaluations);
    for e in evaluations.iter_mut().filter(|e| e.feasible) {
        e.utility = utility(e.t_norm, e.n_norm, alpha, beta);
    }
    let mut best = 0;
    for (i, e) in evaluations.iter().enumerate().skip(1) {
        let b = &evaluations[best];
        let better = e.utility > b.utility
            || (e.utility == b.utility
                && (e.n_c, method_rank(e.method)) < (b.n_c, method_rank(b.method)));
        if better {
            best = i;
        }
    }
    SweepResult {
        evaluations,
        best,
        alpha,
        beta,
    }
}

/// Sequential sweep over `methods x 0..=max_c`. Returns the result and the
/// selected plan with its utility filled in.
pub fn sweep(
    sc: &Scenario,
    methods: &[Method],
    max_c: usize,
    alpha: f64,
    beta: f64,
) -> (SweepResult, Option<DeploymentPlan>) {
    let mut evals = Vec::new();
    let mut plans = Vec::new();
    for (m, c) in sweep_configs(methods, max_c) {
        let (e, p) = evaluate(sc, m, c);
        evals.push(e);
        plans.push(p);
    }
    finish(evals, plans, alpha, beta)
}

/// Selects from evaluations computed elsewhere (possibly in parallel),
/// given in sweep order with their plans.
pub fn finish(
    evals: Vec<ConfigEvaluation>,
    mut plans: Vec<Option<DeploymentPlan>>,
    alpha: f64,
    beta: f64,
) -> (SweepResult, Option<DeploymentPlan>) {
    let result = select(evals, alpha, beta);
    let mut plan = plans.swap_remove(result.best);
    if let Some(p) = plan.as_mut() {
        p.utility = result.best().utility;
    }
    (result, plan)
}
