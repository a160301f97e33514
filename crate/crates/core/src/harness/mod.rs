//! Replicated simulation experiments over the hazard-parameter grid.

mod grid;
mod metrics;
mod replication;

pub use grid::*;
pub use metrics::*;
pub use replication::*;
