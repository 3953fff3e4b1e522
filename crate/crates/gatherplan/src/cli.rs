//! Command-line front end: `segment`, `plan`, `run` and `report`.
//!
//! Exit codes: 0 success, 1 runtime or validation failure, 2 usage error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use gatherplan_core::collector::DeploymentPlan;
use gatherplan_core::executor::{run_mission, MissionConfig};
use gatherplan_core::planner::{default_max_collectors, DEFAULT_ALPHA, DEFAULT_BETA};
use gatherplan_core::segmentation::{segment, Method};
use gatherplan_core::Scenario;

use crate::error::{Error, Result};
use crate::files::{self, MetricsSummary, ReportRow, RunInfo};
use crate::sweep::{parallel_sweep, thread_count};

#[derive(Debug, Parser)]
#[command(name = "gatherplan", version, about = "Plan and simulate periodic multi-agent data gathering")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Partition the free space and write labels and centroids.
    Segment(SegmentArgs),
    /// Sweep methods and collector counts, write the report and best plan.
    Plan(PlanArgs),
    /// Execute a plan and write metrics and trace.
    Run(RunArgs),
    /// Aggregate the summary rows of several metrics files.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    pub scenario: PathBuf,
    #[arg(long, default_value = "pap")]
    pub method: Method,
    /// Number of segments; defaults to the scenario's agent count.
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    pub n_w: Option<u32>,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Also write a PGM image of the labels.
    #[arg(long)]
    pub pgm: bool,
}

#[derive(Debug, Args, Clone)]
pub struct SweepArgs {
    /// Comma-separated methods to sweep.
    #[arg(long, value_delimiter = ',', default_value = "bap,pap,rap")]
    pub methods: Vec<Method>,
    /// Largest collector count; defaults to min(8, n_agents - 1).
    #[arg(long)]
    pub max_collectors: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_ALPHA, value_parser = weight)]
    pub alpha: f64,
    #[arg(long, default_value_t = DEFAULT_BETA, value_parser = weight)]
    pub beta: f64,
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    pub scenario: PathBuf,
    #[command(flatten)]
    pub sweep: SweepArgs,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    pub scenario: PathBuf,
    /// Plan to execute; defaults to `<out>/plan.json`.
    #[arg(long, conflicts_with = "plan_from_sweep")]
    pub plan: Option<PathBuf>,
    /// Sweep first and execute the selected plan.
    #[arg(long)]
    pub plan_from_sweep: bool,
    #[command(flatten)]
    pub sweep: SweepArgs,
    #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u64).range(1..))]
    pub cycles: u64,
    /// Goal seed; defaults to the scenario's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Skip writing the trace.
    #[arg(long)]
    pub no_trace: bool,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Metrics files written by `run`.
    #[arg(required = true)]
    pub metrics: Vec<PathBuf>,
    #[arg(long, default_value = "report.csv")]
    pub out: PathBuf,
}

fn weight(s: &str) -> std::result::Result<f64, String> {
    let w: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if w.is_finite() && w >= 0.0 {
        Ok(w)
    } else {
        Err("must be a finite non-negative number".into())
    }
}

/// Failure classes mapped to exit codes.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<gatherplan_core::Error> for Failure {
    fn from(e: gatherplan_core::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

/// Parses `args` (including the program name), runs the command and
/// returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let sink: &mut dyn Write = if code == 0 { out } else { err };
            let _ = write!(sink, "{}", e.render());
            return code;
        }
    };
    let res = match cli.command {
        Command::Segment(a) => cmd_segment(&a, out),
        Command::Plan(a) => cmd_plan(&a, out),
        Command::Run(a) => cmd_run(&a, out),
        Command::Report(a) => cmd_report(&a, out),
    };
    match res {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            2
        }
        Err(Failure::Runtime(e)) => {
            let _ = writeln!(err, "error: {e}");
            1
        }
    }
}

fn cmd_segment(a: &SegmentArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let sc = files::load_scenario(&a.scenario)?;
    let n_w = a.n_w.map_or(sc.n_agents, |n| n as usize);
    let seg = segment(&sc, a.method, n_w)?;
    let stem = format!("{}_{}", a.method, n_w);
    let labels = a.out.join(format!("labels_{stem}.csv"));
    files::write_labels_csv(&labels, &seg)?;
    files::write_centroids_csv(&a.out.join(format!("centroids_{stem}.csv")), &seg)?;
    if a.pgm {
        files::write_pgm(&a.out.join(format!("labels_{stem}.pgm")), &seg)?;
    }
    let _ = write!(out, "segmented {} into {n_w} segments", a.scenario.display());
    if let Some(b) = &seg.balance {
        let _ = write!(
            out,
            " (balance: {} iterations, converged {}, max deviation {:.4})",
            b.iterations, b.converged, b.max_deviation
        );
    }
    let _ = writeln!(out);
    Ok(())
}

fn check_sweep(sc: &Scenario, s: &SweepArgs) -> Result<usize, Failure> {
    if s.methods.is_empty() {
        return Err(Failure::Usage("--methods needs at least one method".into()));
    }
    let limit = sc.n_agents - 1;
    match s.max_collectors {
        Some(c) if c > limit => Err(Failure::Usage(format!(
            "--max-collectors {c} leaves no worker among {} agents",
            sc.n_agents
        ))),
        Some(c) => Ok(c),
        None => Ok(default_max_collectors(sc)),
    }
}

fn do_sweep(sc: &Scenario, s: &SweepArgs, dir: &Path, out: &mut dyn Write) -> Result<DeploymentPlan, Failure> {
    let max_c = check_sweep(sc, s)?;
    let (result, plan) = parallel_sweep(sc, &s.methods, max_c, s.alpha, s.beta, thread_count());
    files::write_sweep_csv(&dir.join("sweep.csv"), &result)?;
    let best = result.best();
    let plan = plan.filter(|_| best.feasible).ok_or(Error::NoFeasiblePlan)?;
    files::write_plan(&dir.join("plan.json"), &plan)?;
    let _ = writeln!(
        out,
        "best method={} n_c={} U={:.6} est_t_refresh={:.3} est_n_goals={:.3}",
        best.method, best.n_c, best.utility, best.est_t_refresh, best.est_n_goals
    );
    Ok(plan)
}

fn cmd_plan(a: &PlanArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let sc = files::load_scenario(&a.scenario)?;
    do_sweep(&sc, &a.sweep, &a.out, out)?;
    Ok(())
}

fn cmd_run(a: &RunArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let sc = files::load_scenario(&a.scenario)?;
    let plan = if a.plan_from_sweep {
        do_sweep(&sc, &a.sweep, &a.out, out)?
    } else {
        let path = a.plan.clone().unwrap_or_else(|| a.out.join("plan.json"));
        let plan = files::read_plan(&path)?;
        let hash = files::scenario_hash(&sc);
        if plan.scenario_hash != hash {
            return Err(Error::ScenarioMismatch {
                plan: plan.scenario_hash,
                scenario: hash,
            }
            .into());
        }
        plan
    };
    let seed = a.seed.unwrap_or(sc.rng_seed);
    let cfg = MissionConfig {
        n_cycles: a.cycles,
        seed,
        trace: !a.no_trace,
    };
    let outcome = run_mission(&sc, &plan, cfg)?;
    let info = RunInfo {
        method: plan.method,
        n_c: plan.n_c,
        seed,
    };
    let m = &outcome.metrics;
    files::write_metrics_csv(&a.out.join("metrics.csv"), &info, m)?;
    if !a.no_trace {
        files::write_trace(&a.out.join("trace.jsonl"), &outcome.trace)?;
    }
    let refresh = m.t_refresh_mean.map_or("none".to_string(), |t| format!("{t:.3}"));
    let _ = writeln!(
        out,
        "T_refresh_mean={refresh} N_goals_rate={:.3} delivered={}/{}",
        m.n_goals_rate, m.delivered, m.requested
    );
    Ok(())
}

fn cmd_report(a: &ReportArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let mut rows = Vec::with_capacity(a.metrics.len());
    for path in &a.metrics {
        let s: MetricsSummary = files::read_metrics_summary(path)?;
        rows.push(ReportRow {
            source: path.display().to_string(),
            method: s.method,
            n_c: s.n_c,
            seed: s.seed,
            requested: s.requested,
            delivered: s.delivered,
            undelivered: s.undelivered,
            t_refresh_mean: s.t_refresh_mean,
            n_goals_rate: s.n_goals_rate,
            cycle_ticks: s.cycle_ticks,
            n_cycles: s.n_cycles,
            fallbacks: s.fallbacks,
        });
    }
    files::write_report(&a.out, &rows)?;
    let _ = writeln!(out, "aggregated {} runs into {}", rows.len(), a.out.display());
    Ok(())
}
