use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),
    #[error("[{stage}] data error: {message}")]
    Data { stage: &'static str, message: String },
    #[error("[{stage}] missing input files: {}", .files.join(", "))]
    MissingInputs { stage: &'static str, files: Vec<String> },
    #[error("[{stage}] failed: {message}")]
    Stage { stage: &'static str, message: String },
}

impl PipelineError {
    /// Process exit code: 1 config, 2 data, 3 stage failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 1,
            PipelineError::Data { .. } | PipelineError::MissingInputs { .. } => 2,
            PipelineError::Stage { .. } => 3,
        }
    }

    pub fn data(stage: &'static str, e: impl std::fmt::Display) -> Self {
        PipelineError::Data { stage, message: e.to_string() }
    }

    pub fn stage(stage: &'static str, e: impl std::fmt::Display) -> Self {
        PipelineError::Stage { stage, message: e.to_string() }
    }

    pub fn stage_name(&self) -> Option<&'static str> {
        match self {
            PipelineError::Config(_) => None,
            PipelineError::Data { stage, .. }
            | PipelineError::MissingInputs { stage, .. }
            | PipelineError::Stage { stage, .. } => Some(stage),
        }
    }
}
