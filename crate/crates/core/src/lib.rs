//! Time-variant technology impact analysis over patent corpora.
//!
//! The crate is organized along the analysis pipeline: [`corpus`] ingests
//! patents and labels forward-citation impact, [`indicators`] builds the
//! 44-dimensional indicator vectors, [`mtl`] trains the multi-task network,
//! [`eval`] scores predictions, [`explain`] attributes them with Shapley
//! values and [`validate`] runs the post-hoc trend tests and topic scores.

pub mod corpus;
pub mod eval;
pub mod explain;
pub mod indicators;
pub mod mtl;
pub mod seed;
pub mod validate;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
