//! Planning and simulation core for periodic multi-agent data gathering.
//!
//! A team of agents serves an Operation Center (OC) that periodically
//! requests measurements from locations scattered over a grid map. Some
//! agents act as *workers* that visit the requested goals inside their
//! own working area, the rest act as *collectors* that loop on invariant
//! routes from the OC, picking up the workers' data and uploading it.
//!
//! The crate is `no_std` (it needs `alloc`) and contains the whole
//! algorithmic pipeline:
//!
//! * [`scenario`]: occupancy grid, OC, communication predicate, text format.
//! * [`fmm`]: first-order Fast Marching eikonal solver with labeled fronts.
//! * [`segmentation`]: BAP / PAP / RAP partitions of the free space.
//! * [`collector`]: segment adjacency, collector groups and routes.
//! * [`executor`]: deterministic discrete-time mission simulation.
//! * [`planner`]: configuration sweep and utility-based selection.
//!
//! File IO, the CLI and the JSON/CSV formats live in the `gatherplan` crate.

#![cfg_attr(not(any(feature = "std", test)), no_std)]

extern crate alloc;

pub mod collector;
pub mod error;
pub mod executor;
pub mod fmm;
pub mod grid;
pub mod planner;
pub mod scenario;
pub mod segmentation;

pub use error::{Error, Result};
pub use grid::{CellPos, GridMap};
pub use scenario::Scenario;
