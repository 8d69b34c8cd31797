use crate::error::PipelineError;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use techimpact_core::corpus::{Horizon, ImpactClass, IngestMode, SynthParams, ThresholdMode, DEFAULT_DOMAIN_PREFIX};
use techimpact_core::explain::{ShapleyMode, SummaryFilter, DEFAULT_BACKGROUND_SIZE};
use techimpact_core::indicators::DEFAULT_HOME_COUNTRY;
use techimpact_core::mtl::{GridSpace, NetworkConfig, TrainConfig};
use techimpact_core::corpus::TrajectoryPattern;
use techimpact_core::validate::{ClassWeights, JtMethod, DEFAULT_PERMUTATIONS};

pub const CONFIG_SCHEMA: &str = "techimpact.pipeline/1";

/// Which classes the post-hoc checks group patents by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassSource {
    #[default]
    Predicted,
    Actual,
}

/// Temporal split. Focal patents are those granted in
/// `[focal_first_year, focal_last_year]`; the test set is the patents of
/// `test_year` and training uses the earlier focal years.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    /// Defaults to the first grant year in the corpus.
    pub focal_first_year: Option<i32>,
    /// Defaults to the last year whose patents have a complete long window.
    pub focal_last_year: Option<i32>,
    /// Defaults to the last focal year.
    pub test_year: Option<i32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplainSettings {
    pub enabled: bool,
    pub mode: ShapleyMode,
    pub background_size: usize,
    /// Test instances explained per target (seeded subsample).
    pub max_instances: usize,
    pub top_k: usize,
    pub horizons: Vec<Horizon>,
    pub class: ImpactClass,
    pub filters: Vec<SummaryFilter>,
}

impl Default for ExplainSettings {
    fn default() -> Self {
        ExplainSettings {
            enabled: true,
            mode: ShapleyMode::Sampled { n_permutations: 100 },
            background_size: DEFAULT_BACKGROUND_SIZE,
            max_instances: 100,
            top_k: 10,
            horizons: Horizon::ALL.to_vec(),
            class: ImpactClass::BT,
            filters: vec![SummaryFilter::All, SummaryFilter::Pattern(TrajectoryPattern::Sustained)],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidationSettings {
    pub method: JtMethod,
    pub n_permutations: usize,
    pub class_source: ClassSource,
    pub horizons: Vec<Horizon>,
}

impl Default for ValidationSettings {
    fn default() -> Self {
        ValidationSettings {
            method: JtMethod::NormalApprox,
            n_permutations: DEFAULT_PERMUTATIONS,
            class_source: ClassSource::Predicted,
            horizons: Horizon::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopicSettings {
    pub horizon: Horizon,
    pub weights: ClassWeights,
    pub class_source: ClassSource,
}

impl Default for TopicSettings {
    fn default() -> Self {
        TopicSettings { horizon: Horizon::Long, weights: ClassWeights::default(), class_source: ClassSource::Predicted }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub schema_version: String,
    pub seed: u64,
    /// Must exist before a run starts.
    pub out_dir: Option<PathBuf>,
    /// JSONL corpus to ingest. Exactly one of this and `synth` is set.
    pub corpus_path: Option<PathBuf>,
    /// Synthetic corpus parameters; the seed inside is replaced by the
    /// `synth` stage seed.
    pub synth: Option<SynthParams>,
    pub ingest_mode: IngestMode,
    pub domain_ipc_prefix: String,
    pub home_country: String,
    pub threshold_mode: ThresholdMode,
    pub split: SplitConfig,
    /// `seed` is replaced by a value derived from the `train` stage seed.
    pub network: NetworkConfig,
    /// `seed` is replaced by a value derived from the `train` stage seed.
    pub train: TrainConfig,
    pub grid: Option<GridSpace>,
    pub grid_folds: usize,
    /// Folds for the cross-validation report; 0 skips it.
    pub cv_folds: usize,
    pub explain: ExplainSettings,
    pub validation: ValidationSettings,
    pub topic: TopicSettings,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            schema_version: CONFIG_SCHEMA.to_string(),
            seed: 7,
            out_dir: None,
            corpus_path: None,
            synth: None,
            ingest_mode: IngestMode::Strict,
            domain_ipc_prefix: DEFAULT_DOMAIN_PREFIX.to_string(),
            home_country: DEFAULT_HOME_COUNTRY.to_string(),
            threshold_mode: ThresholdMode::Fixed,
            split: SplitConfig::default(),
            network: NetworkConfig::default(),
            train: TrainConfig::default(),
            grid: None,
            grid_folds: 5,
            cv_folds: 5,
            explain: ExplainSettings::default(),
            validation: ValidationSettings::default(),
            topic: TopicSettings::default(),
        }
    }
}

impl PipelineConfig {
    /// Defaults with a 2,000-patent synthetic corpus.
    pub fn synthetic() -> Self {
        PipelineConfig { synth: Some(SynthParams::default()), ..Self::default() }
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("cannot read {}: {e}", path.display())))?;
        let cfg: PipelineConfig = serde_json::from_str(&text)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if self.schema_version != CONFIG_SCHEMA {
            return bad(format!("schema_version {:?} is not {CONFIG_SCHEMA:?}", self.schema_version));
        }
        match (&self.corpus_path, &self.synth) {
            (Some(_), Some(_)) => return bad("set only one of corpus_path and synth".into()),
            (None, None) => return bad("set one of corpus_path and synth".into()),
            _ => {}
        }
        self.network.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        self.train.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        if self.network.input_dim != techimpact_core::indicators::N_FEATURES {
            return bad(format!("network.input_dim must be {}", techimpact_core::indicators::N_FEATURES));
        }
        if self.cv_folds == 1 {
            return bad("cv_folds must be 0 (off) or at least 2".into());
        }
        if self.grid.is_some() && self.grid_folds < 2 {
            return bad("grid_folds must be at least 2".into());
        }
        if let ShapleyMode::Sampled { n_permutations: 0 } = self.explain.mode {
            return bad("explain n_permutations must be at least 1".into());
        }
        if self.explain.background_size == 0 || self.explain.top_k == 0 {
            return bad("explain background_size and top_k must be positive".into());
        }
        if self.validation.method == JtMethod::Permutation && self.validation.n_permutations == 0 {
            return bad("validation n_permutations must be at least 1".into());
        }
        Ok(())
    }

    pub fn out_dir(&self) -> Result<&Path, PipelineError> {
        let dir = self.out_dir.as_deref().ok_or_else(|| PipelineError::Config("no output directory given".into()))?;
        if !dir.is_dir() {
            return Err(PipelineError::Config(format!("output directory {} does not exist", dir.display())));
        }
        Ok(dir)
    }

    /// SHA-256 of the canonical JSON form, ignoring the output directory.
    pub fn hash(&self) -> String {
        let canonical = PipelineConfig { out_dir: None, ..self.clone() };
        let text = serde_json::to_string(&canonical).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}
