//! Scenario model and its text format.
//!
//! ```text
//! n_agents = 20
//! comm_range = 10
//! agent_speed = 1
//! cell_size = 1
//! goals_per_segment_per_cycle = 3
//! transfer_time_per_goal = 1
//! seed = 7
//!
//! ##########
//! #O.......#
//! ##########
//! ```
//!
//! Header keys other than `n_agents` are optional. An `oc = col,row` key may
//! name the OC instead of an `O` in the grid.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{CellPos, GridMap};

pub const DEFAULT_CELL_SIZE: f64 = 1.0;
pub const DEFAULT_AGENT_SPEED: f64 = 1.0;
pub const DEFAULT_COMM_RANGE: f64 = 10.0;
pub const DEFAULT_GOALS_PER_CYCLE: usize = 3;
pub const DEFAULT_TRANSFER_TIME: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("line {line}: malformed header: {reason}")]
    MalformedHeader { line: usize, reason: String },
    #[error("missing required header key `{0}`")]
    MissingKey(&'static str),
    #[error("grid is empty")]
    EmptyGrid,
    #[error("line {line}: grid row has length {found}, expected {expected}")]
    RowLength {
        line: usize,
        found: usize,
        expected: usize,
    },
    #[error("line {line}: unexpected grid character {ch:?}")]
    BadCell { line: usize, ch: char },
    #[error("OC missing")]
    OcMissing,
    #[error("OC duplicated")]
    OcDuplicated,
    #[error("OC on obstacle")]
    OcOnObstacle,
    #[error("OC out of bounds")]
    OcOutOfBounds,
    #[error("parameter `{0}` must be positive")]
    NonPositive(&'static str),
    #[error("parameter `{0}` is out of range")]
    OutOfRange(&'static str),
}

/// A validated mission scenario. Immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub grid: GridMap,
    pub oc: CellPos,
    pub n_agents: usize,
    /// Communication range in meters.
    pub comm_range: f64,
    /// Meters per time-unit.
    pub agent_speed: f64,
    pub goals_per_segment_per_cycle: usize,
    /// Time-units needed to hand over the data of one goal.
    pub transfer_time_per_goal: f64,
    pub rng_seed: u64,
}

impl Scenario {
    /// Builds a scenario with default parameters around `grid`, removing
    /// free cells not connected to the OC.
    pub fn with_defaults(mut grid: GridMap, oc: CellPos, n_agents: usize) -> Self {
        assert!(grid.is_free(oc), "OC must be free");
        grid.remove_unreachable(oc);
        Self {
            grid,
            oc,
            n_agents,
            comm_range: DEFAULT_COMM_RANGE,
            agent_speed: DEFAULT_AGENT_SPEED,
            goals_per_segment_per_cycle: DEFAULT_GOALS_PER_CYCLE,
            transfer_time_per_goal: DEFAULT_TRANSFER_TIME,
            rng_seed: 0,
        }
    }

    /// Parses and validates the text format.
    pub fn parse(text: &str) -> Result<Self, ParseError> {
        let mut n_agents = None;
        let mut comm_range = DEFAULT_COMM_RANGE;
        let mut agent_speed = DEFAULT_AGENT_SPEED;
        let mut cell_size = DEFAULT_CELL_SIZE;
        let mut k = DEFAULT_GOALS_PER_CYCLE;
        let mut tau = DEFAULT_TRANSFER_TIME;
        let mut seed = 0u64;
        let mut oc_key: Option<CellPos> = None;

        let mut lines = text.lines().enumerate().peekable();
        // Header: `key = value` lines up to the first blank line.
        while let Some(&(no, raw)) = lines.peek() {
            let line = raw.trim();
            if line.is_empty() {
                lines.next();
                break;
            }
            if !line.contains('=') {
                // No header at all: the grid starts right away.
                if no == 0 {
                    break;
                }
                return Err(malformed(no, "expected `key = value`"));
            }
            lines.next();
            let (key, value) = line.split_once('=').unwrap();
            let (key, value) = (key.trim(), value.trim());
            match key {
                "n_agents" => n_agents = Some(parse_num::<usize>(no, key, value)?),
                "comm_range" => comm_range = parse_num(no, key, value)?,
                "agent_speed" => agent_speed = parse_num(no, key, value)?,
                "cell_size" => cell_size = parse_num(no, key, value)?,
                "goals_per_segment_per_cycle" => k = parse_num(no, key, value)?,
                "transfer_time_per_goal" => tau = parse_num(no, key, value)?,
                "seed" => seed = parse_num(no, key, value)?,
                "oc" => {
                    let (c, r) = value
                        .split_once(',')
                        .ok_or_else(|| malformed(no, "oc must be `col,row`"))?;
                    oc_key = Some(CellPos::new(
                        parse_num(no, key, c.trim())?,
                        parse_num(no, key, r.trim())?,
                    ));
                }
                other => return Err(malformed(no, &format!("unknown key `{other}`"))),
            }
        }

        let mut width = None;
        let mut height = 0usize;
        let mut obstacles = Vec::new();
        let mut oc_grid: Option<CellPos> = None;
        for (no, raw) in lines {
            let row = raw.trim_end_matches('\r');
            if row.trim().is_empty() {
                // Trailing blank lines are tolerated; interior ones are not.
                continue;
            }
            let len = row.chars().count();
            let expected = *width.get_or_insert(len);
            if len != expected {
                return Err(ParseError::RowLength {
                    line: no + 1,
                    found: len,
                    expected,
                });
            }
            for (col, ch) in row.chars().enumerate() {
                match ch {
                    '#' => obstacles.push(true),
                    '.' => obstacles.push(false),
                    'O' => {
                        if oc_grid.is_some() {
                            return Err(ParseError::OcDuplicated);
                        }
                        oc_grid = Some(CellPos::new(col, height));
                        obstacles.push(false);
                    }
                    ch => return Err(ParseError::BadCell { line: no + 1, ch }),
                }
            }
            height += 1;
        }
        let width = width.ok_or(ParseError::EmptyGrid)?;

        let n_agents = n_agents.ok_or(ParseError::MissingKey("n_agents"))?;
        if !(cell_size > 0.0 && cell_size.is_finite()) {
            return Err(ParseError::NonPositive("cell_size"));
        }
        let grid = GridMap::new(width, height, cell_size, obstacles);
        let oc = match (oc_grid, oc_key) {
            (Some(_), Some(_)) => return Err(ParseError::OcDuplicated),
            (None, None) => return Err(ParseError::OcMissing),
            (Some(p), None) | (None, Some(p)) => p,
        };
        if !grid.in_bounds(oc) {
            return Err(ParseError::OcOutOfBounds);
        }
        if !grid.is_free(oc) {
            return Err(ParseError::OcOnObstacle);
        }
        let mut sc = Scenario {
            grid,
            oc,
            n_agents,
            comm_range,
            agent_speed,
            goals_per_segment_per_cycle: k,
            transfer_time_per_goal: tau,
            rng_seed: seed,
        };
        sc.validate()?;
        sc.grid.remove_unreachable(oc);
        Ok(sc)
    }

    /// Checks the parameter invariants.
    pub fn validate(&self) -> Result<(), ParseError> {
        if self.n_agents < 2 {
            return Err(ParseError::OutOfRange("n_agents"));
        }
        if !(self.comm_range > 0.0 && self.comm_range.is_finite()) {
            return Err(ParseError::NonPositive("comm_range"));
        }
        if !(self.agent_speed > 0.0 && self.agent_speed.is_finite()) {
            return Err(ParseError::NonPositive("agent_speed"));
        }
        if self.goals_per_segment_per_cycle == 0 {
            return Err(ParseError::NonPositive("goals_per_segment_per_cycle"));
        }
        if !(self.transfer_time_per_goal >= 0.0 && self.transfer_time_per_goal.is_finite()) {
            return Err(ParseError::OutOfRange("transfer_time_per_goal"));
        }
        if !self.grid.is_free(self.oc) {
            return Err(ParseError::OcOnObstacle);
        }
        Ok(())
    }

    /// Serializes to the text format. `parse(to_text(s)) == s` for any
    /// scenario whose grid has no unreachable free cells.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "n_agents = {}", self.n_agents);
        let _ = writeln!(out, "comm_range = {:?}", self.comm_range);
        let _ = writeln!(out, "agent_speed = {:?}", self.agent_speed);
        let _ = writeln!(out, "cell_size = {:?}", self.grid.cell_size());
        let _ = writeln!(
            out,
            "goals_per_segment_per_cycle = {}",
            self.goals_per_segment_per_cycle
        );
        let _ = writeln!(
            out,
            "transfer_time_per_goal = {:?}",
            self.transfer_time_per_goal
        );
        let _ = writeln!(out, "seed = {}", self.rng_seed);
        out.push('\n');
        for row in 0..self.grid.height() {
            for col in 0..self.grid.width() {
                let p = CellPos::new(col, row);
                out.push(if p == self.oc {
                    'O'
                } else if self.grid.is_free(p) {
                    '.'
                } else {
                    '#'
                });
            }
            out.push('\n');
        }
        out
    }

    /// Agents at `a` and `b` can exchange data: within range and in sight.
    pub fn in_comm(&self, a: CellPos, b: CellPos) -> bool {
        self.within_range(a, b) && self.grid.line_of_sight(a, b)
    }

    #[inline]
    pub fn within_range(&self, a: CellPos, b: CellPos) -> bool {
        let dc = a.col.abs_diff(b.col) as f64;
        let dr = a.row.abs_diff(b.row) as f64;
        let h = self.grid.cell_size();
        let d2 = (dc * dc + dr * dr) * h * h;
        d2 <= self.comm_range * self.comm_range * (1.0 + 1e-12)
    }

    /// Duration of one simulation tick: one axis-aligned cell step.
    pub fn tick_len(&self) -> f64 {
        self.grid.cell_size() / self.agent_speed
    }

    /// Ticks needed to hand over `goals` items of data.
    pub fn transfer_ticks(&self, goals: usize) -> u64 {
        let t = self.transfer_time_per_goal * goals as f64 / self.tick_len();
        libm::ceil(t - 1e-9).max(0.0) as u64
    }
}

fn malformed(line: usize, reason: &str) -> ParseError {
    ParseError::MalformedHeader {
        line: line + 1,
        reason: reason.to_string(),
    }
}

fn parse_num<T: core::str::FromStr>(line: usize, key: &str, value: &str) -> Result<T, ParseError> {
    value
        .parse()
        .map_err(|_| malformed(line, &format!("bad value {value:?} for `{key}`")))
}
