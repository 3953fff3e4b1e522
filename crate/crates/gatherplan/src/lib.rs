//! File formats, parallel sweep and command-line interface on top of
//! [`gatherplan_core`].
//!
//! * [`files`]: scenario loading, CSV / PGM / JSON / JSON-lines artifacts.
//! * [`sweep`]: deterministic thread-parallel sweep and mission batches.
//! * [`cli`]: the `gatherplan` binary's commands.

pub mod cli;
pub mod error;
pub mod files;
pub mod sweep;

pub use error::{Error, Result};
pub use gatherplan_core as core;
