//! On-disk formats: scenario loading, segmentation CSV/PGM, plan JSON,
//! sweep and metrics CSV, JSON-lines traces.
//!
//! Every writer has a matching reader so artifacts can be loaded back by
//! the same build.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use gatherplan_core::collector::DeploymentPlan;
use gatherplan_core::executor::{MissionMetrics, TraceEvent};
use gatherplan_core::planner::{ConfigEvaluation, SweepResult};
use gatherplan_core::segmentation::{Method, Segmentation};
use gatherplan_core::Scenario;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn format_err(path: &Path, msg: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        msg: msg.into(),
    }
}

/// SHA-256 of the scenario's canonical text form, hex encoded.
pub fn scenario_hash(sc: &Scenario) -> String {
    hex::encode(Sha256::digest(sc.to_text().as_bytes()))
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    Scenario::parse(&read(path)?).map_err(|source| Error::Scenario {
        path: path.to_path_buf(),
        source,
    })
}

/// Label matrix, one map row per line; obstacles are 0.
pub fn write_labels_csv(path: &Path, seg: &Segmentation) -> Result<()> {
    let mut out = String::new();
    for row in seg.labels.chunks(seg.width) {
        for (i, l) in row.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            let _ = write!(out, "{l}");
        }
        out.push('\n');
    }
    write(path, out.as_bytes())
}

/// Returns `(width, height, labels)`.
pub fn read_labels_csv(path: &Path) -> Result<(usize, usize, Vec<u32>)> {
    let text = read(path)?;
    let mut labels = Vec::new();
    let mut width = None;
    let mut height = 0;
    for (no, line) in text.lines().enumerate() {
        let row: Vec<u32> = line
            .split(',')
            .map(|v| v.trim().parse())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| format_err(path, format!("line {}: {e}", no + 1)))?;
        if *width.get_or_insert(row.len()) != row.len() {
            return Err(format_err(path, format!("line {}: ragged row", no + 1)));
        }
        labels.extend(row);
        height += 1;
    }
    Ok((width.unwrap_or(0), height, labels))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentroidRow {
    pub segment: u32,
    pub col: usize,
    pub row: usize,
    pub area: usize,
}

pub fn write_centroids_csv(path: &Path, seg: &Segmentation) -> Result<()> {
    let rows = seg.ids().map(|id| {
        let c = seg.centroid(id);
        CentroidRow {
            segment: id,
            col: c.col,
            row: c.row,
            area: seg.cells(id).len(),
        }
    });
    write_csv(path, rows)
}

pub fn read_centroids_csv(path: &Path) -> Result<Vec<CentroidRow>> {
    read_csv(path)
}

/// Plain-text PGM: obstacles black, segments spread over the gray levels.
pub fn write_pgm(path: &Path, seg: &Segmentation) -> Result<()> {
    let mut out = format!("P2\n{} {}\n255\n", seg.width, seg.height);
    let n = seg.n_w.max(1) as u32;
    for row in seg.labels.chunks(seg.width) {
        let line: Vec<String> = row
            .iter()
            .map(|&l| if l == 0 { 0 } else { 55 + l * 200 / n }.to_string())
            .collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    write(path, out.as_bytes())
}

pub fn write_plan(path: &Path, plan: &DeploymentPlan) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(plan).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    bytes.push(b'\n');
    write(path, &bytes)
}

pub fn read_plan(path: &Path) -> Result<DeploymentPlan> {
    serde_json::from_str(&read(path)?).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| format_err(path, e.to_string()))?;
    write(path, &bytes)
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let text = read(path)?;
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .collect::<std::result::Result<_, _>>()
        .map_err(|source| Error::Csv {
            path: path.to_path_buf(),
            source,
        })
}

/// One sweep report row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub method: Method,
    pub n_c: usize,
    pub feasible: bool,
    pub est_t_refresh: f64,
    pub est_n_goals: f64,
    pub t_norm: f64,
    pub n_norm: f64,
    pub utility: f64,
    pub best: bool,
    pub error: Option<String>,
}

impl SweepRow {
    pub fn evaluation(&self) -> ConfigEvaluation {
        ConfigEvaluation {
            method: self.method,
            n_c: self.n_c,
            feasible: self.feasible,
            est_t_refresh: self.est_t_refresh,
            est_n_goals: self.est_n_goals,
            t_norm: self.t_norm,
            n_norm: self.n_norm,
            utility: self.utility,
            error: self.error.clone(),
        }
    }
}

pub fn write_sweep_csv(path: &Path, sweep: &SweepResult) -> Result<()> {
    let rows = sweep.evaluations.iter().enumerate().map(|(i, e)| SweepRow {
        method: e.method,
        n_c: e.n_c,
        feasible: e.feasible,
        est_t_refresh: e.est_t_refresh,
        est_n_goals: e.est_n_goals,
        t_norm: e.t_norm,
        n_norm: e.n_norm,
        utility: e.utility,
        best: i == sweep.best,
        error: e.error.clone(),
    });
    write_csv(path, rows)
}

pub fn read_sweep_csv(path: &Path) -> Result<Vec<SweepRow>> {
    read_csv(path)
}

/// Identifies a mission in metrics and reports.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunInfo {
    pub method: Method,
    pub n_c: usize,
    pub seed: u64,
}

/// A metrics CSV row: `goal` rows carry the goal fields, `cycle` rows the
/// delivered count of one request cycle, and the final `summary` row the
/// mission totals. Times are ticks except `t_refresh_mean` (time units).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct MetricsRow {
    pub record: String,
    pub goal: Option<u32>,
    pub segment: Option<u32>,
    pub col: Option<usize>,
    pub row: Option<usize>,
    pub cycle: Option<u64>,
    pub t_request: Option<u64>,
    pub t_gathered: Option<u64>,
    pub t_delivered: Option<u64>,
    pub refresh: Option<u64>,
    pub delivered: Option<u64>,
    pub method: Option<Method>,
    pub n_c: Option<usize>,
    pub seed: Option<u64>,
    pub requested: Option<u64>,
    pub undelivered: Option<u64>,
    pub t_refresh_mean: Option<f64>,
    pub n_goals_rate: Option<f64>,
    pub cycle_ticks: Option<u64>,
    pub tick_len: Option<f64>,
    pub n_cycles: Option<u64>,
    pub fallbacks: Option<u64>,
    pub comm_violations: Option<u64>,
}

/// Mission totals as stored in the summary row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub method: Method,
    pub n_c: usize,
    pub seed: u64,
    pub requested: u64,
    pub delivered: u64,
    pub undelivered: u64,
    pub t_refresh_mean: Option<f64>,
    pub n_goals_rate: f64,
    pub cycle_ticks: u64,
    pub tick_len: f64,
    pub n_cycles: u64,
    pub fallbacks: u64,
    pub comm_violations: u64,
}

impl MetricsSummary {
    pub fn new(info: &RunInfo, m: &MissionMetrics) -> Self {
        Self {
            method: info.method,
            n_c: info.n_c,
            seed: info.seed,
            requested: m.requested,
            delivered: m.delivered,
            undelivered: m.undelivered,
            t_refresh_mean: m.t_refresh_mean,
            n_goals_rate: m.n_goals_rate,
            cycle_ticks: m.cycle_ticks,
            tick_len: m.tick_len,
            n_cycles: m.n_cycles,
            fallbacks: m.fallbacks,
            comm_violations: m.comm_violations,
        }
    }
}

pub fn write_metrics_csv(path: &Path, info: &RunInfo, m: &MissionMetrics) -> Result<()> {
    let goals = m.goals.iter().map(|g| MetricsRow {
        record: "goal".into(),
        goal: Some(g.id),
        segment: Some(g.segment),
        col: Some(g.position.col),
        row: Some(g.position.row),
        cycle: Some(g.cycle),
        t_request: Some(g.t_request),
        t_gathered: g.t_gathered,
        t_delivered: g.t_delivered,
        refresh: g.t_delivered.map(|d| d - g.t_request),
        ..Default::default()
    });
    let cycles = m.delivered_per_cycle.iter().enumerate().map(|(c, &d)| MetricsRow {
        record: "cycle".into(),
        cycle: Some(c as u64),
        delivered: Some(d),
        ..Default::default()
    });
    let s = MetricsSummary::new(info, m);
    let summary = MetricsRow {
        record: "summary".into(),
        delivered: Some(s.delivered),
        method: Some(s.method),
        n_c: Some(s.n_c),
        seed: Some(s.seed),
        requested: Some(s.requested),
        undelivered: Some(s.undelivered),
        t_refresh_mean: s.t_refresh_mean,
        n_goals_rate: Some(s.n_goals_rate),
        cycle_ticks: Some(s.cycle_ticks),
        tick_len: Some(s.tick_len),
        n_cycles: Some(s.n_cycles),
        fallbacks: Some(s.fallbacks),
        comm_violations: Some(s.comm_violations),
        ..Default::default()
    };
    write_csv(path, goals.chain(cycles).chain(std::iter::once(summary)))
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricsRow>> {
    read_csv(path)
}

pub fn read_metrics_summary(path: &Path) -> Result<MetricsSummary> {
    let rows = read_metrics_csv(path)?;
    let r = rows
        .iter()
        .rev()
        .find(|r| r.record == "summary")
        .ok_or_else(|| format_err(path, "no summary row"))?;
    let need = |name: &str| format_err(path, format!("summary row lacks {name}"));
    Ok(MetricsSummary {
        method: r.method.ok_or_else(|| need("method"))?,
        n_c: r.n_c.ok_or_else(|| need("n_c"))?,
        seed: r.seed.ok_or_else(|| need("seed"))?,
        requested: r.requested.ok_or_else(|| need("requested"))?,
        delivered: r.delivered.ok_or_else(|| need("delivered"))?,
        undelivered: r.undelivered.ok_or_else(|| need("undelivered"))?,
        t_refresh_mean: r.t_refresh_mean,
        n_goals_rate: r.n_goals_rate.ok_or_else(|| need("n_goals_rate"))?,
        cycle_ticks: r.cycle_ticks.ok_or_else(|| need("cycle_ticks"))?,
        tick_len: r.tick_len.ok_or_else(|| need("tick_len"))?,
        n_cycles: r.n_cycles.ok_or_else(|| need("n_cycles"))?,
        fallbacks: r.fallbacks.ok_or_else(|| need("fallbacks"))?,
        comm_violations: r.comm_violations.ok_or_else(|| need("comm_violations"))?,
    })
}

/// One JSON object per line, in emission order.
pub fn write_trace(path: &Path, events: &[TraceEvent]) -> Result<()> {
    let mut out = Vec::new();
    for e in events {
        serde_json::to_writer(&mut out, e).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
        out.push(b'\n');
    }
    write(path, &out)
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceEvent>> {
    read(path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            serde_json::from_str(l).map_err(|source| Error::Json {
                path: path.to_path_buf(),
                source,
            })
        })
        .collect()
}

/// A report row: one mission summary and the file it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub source: String,
    pub method: Method,
    pub n_c: usize,
    pub seed: u64,
    pub requested: u64,
    pub delivered: u64,
    pub undelivered: u64,
    pub t_refresh_mean: Option<f64>,
    pub n_goals_rate: f64,
    pub cycle_ticks: u64,
    pub n_cycles: u64,
    pub fallbacks: u64,
}

pub fn write_report(path: &Path, rows: &[ReportRow]) -> Result<()> {
    write_csv(path, rows)
}

pub fn read_report(path: &Path) -> Result<Vec<ReportRow>> {
    read_csv(path)
}
