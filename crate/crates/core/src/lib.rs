//! Matched-information evaluation of graph-augmented salary valuation.
//!
//! A temporally masked knowledge graph over player-seasons is embedded four
//! ways (random-walk skip-gram, complex rotations, mean-aggregator and
//! relation-typed message passing), fused with tabular features into tree
//! ensembles, and audited against tabular baselines with a tri-state
//! rescue/misguidance protocol, cold-start metrics and cohort profiling.

pub mod cli;
pub mod data;
pub mod datagen;
pub mod embed;
pub mod eval;
pub mod error;
pub mod gnn;
pub mod kg;
pub mod pipeline;
pub mod prediction;
pub mod profile;
pub mod regress;

pub use error::{Error, Result};
