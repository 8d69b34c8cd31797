//! Staged command-line pipeline: corpus, labels, indicators, model training,
//! evaluation, attribution, trend tests, topic scores and a report. Every
//! stage reads and writes plain files in one output directory.

pub mod config;
pub mod error;
pub mod files;
pub mod pipeline;
pub mod report;
pub mod stages;

pub use config::PipelineConfig;
pub use error::PipelineError;
pub use pipeline::{checksum_dir, run_pipeline, run_stage, RunManifest};
