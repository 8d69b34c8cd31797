//! Stage artifact names, row types and read/write helpers.

use crate::error::PipelineError;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::io::Write;
use std::path::Path;
use techimpact_core::corpus::{Horizon, ImpactClass, TrajectoryPattern};

pub const CONFIG: &str = "config.json";
pub const MANIFEST: &str = "manifest.json";
pub const CORPUS: &str = "corpus.jsonl";
pub const INGEST_REPORT: &str = "ingest_report.json";
pub const THRESHOLDS: &str = "thresholds.json";
pub const LABELS: &str = "labels.csv";
pub const LABEL_SUMMARY: &str = "labels_summary.json";
pub const FEATURES: &str = "features.csv";
pub const GRIDSEARCH: &str = "gridsearch.json";
pub const MODEL: &str = "model.ckpt.json";
pub const TRAINING_LOG: &str = "training_log.csv";
pub const CV: &str = "cv.csv";
pub const CV_SUMMARY: &str = "cv.json";
pub const PREDICTIONS: &str = "predictions.csv";
pub const METRICS: &str = "metrics.csv";
pub const METRICS_JSON: &str = "metrics.json";
pub const COMPARISON: &str = "comparison.csv";
pub const ATTRIBUTIONS: &str = "attributions.csv";
pub const IMPORTANCE: &str = "importance.csv";
pub const VALIDATION: &str = "validation.csv";
pub const VALIDATION_JSON: &str = "validation.json";
pub const TOPIC_SCORES: &str = "topic_scores.csv";
pub const TOPIC_SCORES_JSON: &str = "topic_scores.json";
pub const REPORT: &str = "report.md";

pub fn stl_model(h: Horizon) -> String {
    format!("model_stl_{}.ckpt.json", h.name())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRow {
    pub patent_id: String,
    pub grant_year: i32,
    pub split: Split,
    pub count_short: u32,
    pub count_mid: u32,
    pub count_long: u32,
    /// Empty when the horizon's window is not fully observed.
    pub class_short: Option<ImpactClass>,
    pub class_mid: Option<ImpactClass>,
    pub class_long: Option<ImpactClass>,
    pub pattern: Option<TrajectoryPattern>,
}

impl LabelRow {
    pub fn classes(&self) -> [Option<ImpactClass>; 3] {
        [self.class_short, self.class_mid, self.class_long]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub patent_id: String,
    pub split: Split,
    pub actual_short: Option<ImpactClass>,
    pub actual_mid: Option<ImpactClass>,
    pub actual_long: Option<ImpactClass>,
    pub mtl_short: Option<ImpactClass>,
    pub mtl_mid: Option<ImpactClass>,
    pub mtl_long: Option<ImpactClass>,
    pub stl_short: Option<ImpactClass>,
    pub stl_mid: Option<ImpactClass>,
    pub stl_long: Option<ImpactClass>,
}

impl PredictionRow {
    pub fn actual(&self, h: Horizon) -> Option<ImpactClass> {
        [self.actual_short, self.actual_mid, self.actual_long][h.index()]
    }

    pub fn mtl(&self, h: Horizon) -> Option<ImpactClass> {
        [self.mtl_short, self.mtl_mid, self.mtl_long][h.index()]
    }

    pub fn stl(&self, h: Horizon) -> Option<ImpactClass> {
        [self.stl_short, self.stl_mid, self.stl_long][h.index()]
    }
}

/// Fails with the full list of absent files.
pub fn require(stage: &'static str, dir: &Path, names: &[&str]) -> Result<(), PipelineError> {
    let missing: Vec<String> = names.iter().filter(|n| !dir.join(n).is_file()).map(|n| n.to_string()).collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(PipelineError::MissingInputs { stage, files: missing })
    }
}

pub fn write_csv<T: Serialize>(stage: &'static str, path: &Path, rows: &[T]) -> Result<(), PipelineError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| PipelineError::stage(stage, format!("{}: {e}", path.display())))?;
    for r in rows {
        w.serialize(r).map_err(|e| PipelineError::stage(stage, e))?;
    }
    w.flush().map_err(|e| PipelineError::stage(stage, e))
}

pub fn read_csv<T: DeserializeOwned>(stage: &'static str, path: &Path) -> Result<Vec<T>, PipelineError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| PipelineError::data(stage, format!("{}: {e}", path.display())))?;
    r.deserialize()
        .collect::<Result<Vec<T>, _>>()
        .map_err(|e| PipelineError::data(stage, format!("{}: {e}", path.display())))
}

pub fn write_json<T: Serialize + ?Sized>(stage: &'static str, path: &Path, value: &T) -> Result<(), PipelineError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| PipelineError::stage(stage, e))?;
    text.push('\n');
    write_text(stage, path, &text)
}

pub fn read_json<T: DeserializeOwned>(stage: &'static str, path: &Path) -> Result<T, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(|e| PipelineError::data(stage, format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| PipelineError::data(stage, format!("{}: {e}", path.display())))
}

pub fn write_text(stage: &'static str, path: &Path, text: &str) -> Result<(), PipelineError> {
    std::fs::write(path, text).map_err(|e| PipelineError::stage(stage, format!("{}: {e}", path.display())))
}

/// Opens a buffered writer and hands it to `f`.
pub fn write_with<F>(stage: &'static str, path: &Path, f: F) -> Result<(), PipelineError>
where
    F: FnOnce(&mut dyn Write) -> std::io::Result<()>,
{
    let file = std::fs::File::create(path).map_err(|e| PipelineError::stage(stage, format!("{}: {e}", path.display())))?;
    let mut w = std::io::BufWriter::new(file);
    f(&mut w).and_then(|_| w.flush()).map_err(|e| PipelineError::stage(stage, format!("{}: {e}", path.display())))
}

pub fn sha256_file(path: &Path) -> std::io::Result<(String, u64)> {
    let bytes = std::fs::read(path)?;
    Ok((hex::encode(Sha256::digest(&bytes)), bytes.len() as u64))
}
