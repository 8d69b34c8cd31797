//! Stage runner and run manifest.

use crate::config::{PipelineConfig, CONFIG_SCHEMA};
use crate::error::PipelineError;
use crate::files;
use crate::stages::{self, Ctx, StageStatus};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

pub const MANIFEST_SCHEMA: &str = "techimpact.manifest/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageOutcome {
    Ok,
    Skipped,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub seed: u64,
    pub status: StageOutcome,
    pub seconds: f64,
    pub outputs: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema: String,
    pub config_hash: String,
    pub seed: u64,
    pub versions: BTreeMap<String, String>,
    pub inputs: BTreeMap<String, FileEntry>,
    pub stages: Vec<StageRecord>,
    pub outputs: BTreeMap<String, FileEntry>,
    pub status: StageOutcome,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

fn versions() -> BTreeMap<String, String> {
    BTreeMap::from([
        ("cli".to_string(), env!("CARGO_PKG_VERSION").to_string()),
        ("core".to_string(), techimpact_core::VERSION.to_string()),
        ("indicator_layout".to_string(), techimpact_core::indicators::LAYOUT_VERSION.to_string()),
        ("checkpoint".to_string(), techimpact_core::mtl::CHECKPOINT_SCHEMA.to_string()),
        ("config".to_string(), CONFIG_SCHEMA.to_string()),
    ])
}

/// Checksums of every regular file in `dir` except the manifest.
pub fn checksum_dir(dir: &Path) -> std::io::Result<BTreeMap<String, FileEntry>> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir)? {
        let entry = entry?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if name == files::MANIFEST || !entry.file_type()?.is_file() {
            continue;
        }
        let (sha256, bytes) = files::sha256_file(&entry.path())?;
        out.insert(name, FileEntry { sha256, bytes });
    }
    Ok(out)
}

/// Runs a single named stage against an existing output directory.
pub fn run_stage(cfg: &PipelineConfig, name: &str, predictions: Option<&Path>) -> Result<StageStatus, PipelineError> {
    cfg.validate()?;
    let out = cfg.out_dir()?;
    let ctx = Ctx { cfg, out };
    match name {
        "synth" => stages::synth(&ctx),
        "ingest" => stages::ingest(&ctx),
        "label" => stages::label(&ctx),
        "features" => stages::features(&ctx),
        "gridsearch" => stages::gridsearch(&ctx),
        "train" => stages::train_models(&ctx),
        "cv" => stages::cv(&ctx),
        "evaluate" => stages::evaluate(&ctx, predictions),
        "explain" => stages::explain(&ctx),
        "jt-test" => stages::jt_test(&ctx),
        "topic-score" => stages::topic_score(&ctx),
        "report" => stages::report(&ctx),
        other => Err(PipelineError::Config(format!("unknown stage {other:?}"))),
    }
}

/// Runs every stage in order and writes `config.json` and `manifest.json`.
/// On failure a partial manifest is still written before the error is
/// returned.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunManifest, PipelineError> {
    cfg.validate()?;
    let out = cfg.out_dir()?;
    let canonical = PipelineConfig { out_dir: None, ..cfg.clone() };
    files::write_json("run", &out.join(files::CONFIG), &canonical)?;

    let mut inputs = BTreeMap::new();
    if let Some(p) = &cfg.corpus_path {
        let (sha256, bytes) = files::sha256_file(p).map_err(|e| PipelineError::data("ingest", format!("{}: {e}", p.display())))?;
        inputs.insert(p.display().to_string(), FileEntry { sha256, bytes });
    }
    let mut manifest = RunManifest {
        schema: MANIFEST_SCHEMA.into(),
        config_hash: cfg.hash(),
        seed: cfg.seed,
        versions: versions(),
        inputs,
        stages: Vec::new(),
        outputs: BTreeMap::new(),
        status: StageOutcome::Ok,
        error: None,
    };

    let first = if cfg.corpus_path.is_some() { "ingest" } else { "synth" };
    let names = std::iter::once(first).chain(stages::STAGES[1..].iter().copied());
    let mut failure = None;
    for name in names {
        let t0 = Instant::now();
        log::info!("stage {name}");
        let result = run_stage(cfg, name, None);
        let mut rec = StageRecord {
            name: name.into(),
            seed: techimpact_core::seed::derive_seed(cfg.seed, name),
            status: StageOutcome::Ok,
            seconds: t0.elapsed().as_secs_f64(),
            outputs: Vec::new(),
            note: None,
        };
        match result {
            Ok(StageStatus::Done(o)) => rec.outputs = o,
            Ok(StageStatus::Skipped(why)) => {
                rec.status = StageOutcome::Skipped;
                rec.note = Some(why);
            }
            Err(e) => {
                rec.status = StageOutcome::Failed;
                rec.note = Some(e.to_string());
                manifest.stages.push(rec);
                failure = Some(e);
                break;
            }
        }
        manifest.stages.push(rec);
    }
    manifest.outputs = checksum_dir(out).map_err(|e| PipelineError::stage("run", e))?;
    if let Some(e) = &failure {
        manifest.status = StageOutcome::Failed;
        manifest.error = Some(e.to_string());
    }
    files::write_json("run", &out.join(files::MANIFEST), &manifest)?;
    match failure {
        Some(e) => Err(e),
        None => Ok(manifest),
    }
}
