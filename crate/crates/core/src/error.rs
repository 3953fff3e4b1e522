use alloc::string::String;

use thiserror::Error;

use crate::grid::CellPos;
use crate::scenario::ParseError;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("scenario: {0}")]
    Parse(#[from] ParseError),

    #[error("fast marching needs at least one source")]
    EmptySources,

    #[error("source {0} is not a free cell with positive speed")]
    SourceOnObstacle(CellPos),

    #[error("cell {0} is not reached by the arrival field")]
    Unreached(CellPos),

    #[error("requested {requested} segments but only {free} free cells exist")]
    TooManySegments { requested: usize, free: usize },

    #[error("segment count must be at least 1")]
    ZeroSegments,

    #[error("seed {0} is not an operative free cell")]
    SeedOnObstacle(CellPos),

    #[error("duplicate centroid {0}")]
    DuplicateCentroid(CellPos),

    #[error("{n_c} collectors requested for {n_w} worker segments")]
    TooManyCollectors { n_c: usize, n_w: usize },

    #[error("collector count {n_c} leaves no worker among {n_agents} agents")]
    NoWorkers { n_c: usize, n_agents: usize },

    #[error("segment adjacency graph is disconnected")]
    DisconnectedAdjacency,

    #[error("collector group is empty")]
    EmptyGroup,

    #[error("waypoint {0} is unreachable")]
    WaypointUnreachable(CellPos),

    #[error("{k} goals requested from a segment with {area} cells")]
    TooManyGoals { k: usize, area: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("simulation inconsistency: {0}")]
    Inconsistent(String),
}
