use flowspeaker::corpus::CorpusError;
use flowspeaker::pipeline::PipelineError;
use flowspeaker::prompt::PromptError;
use flowspeaker::training::CheckpointError;
use flowspeaker::{EvalError, ModelError};
use thiserror::Error;

/// Failures of a command, each with a stable exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("training diverged: loss became non-finite ({loss}) at step {step}")]
    Diverged { step: u64, loss: f64 },
    #[error("prompt error: {0}")]
    Prompt(String),
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Failed(_) => 1,
            CliError::Config(_) => 2,
            CliError::Diverged { .. } => 3,
            CliError::Prompt(_) => 4,
        }
    }
}

impl From<PromptError> for CliError {
    fn from(e: PromptError) -> Self {
        match e {
            PromptError::Config(_) | PromptError::NegativeTemperature(_) => CliError::Config(e.to_string()),
            PromptError::Io(_) => CliError::Failed(e.to_string()),
            _ => CliError::Prompt(e.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::NonFiniteLoss { step, loss } => CliError::Diverged { step, loss },
            ModelError::Prompt(p) => p.into(),
            ModelError::Config(_) => CliError::Config(e.to_string()),
            _ => CliError::Failed(e.to_string()),
        }
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        match e {
            CorpusError::Config(_) => CliError::Config(e.to_string()),
            _ => CliError::Failed(e.to_string()),
        }
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        CliError::Failed(e.to_string())
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        CliError::Failed(e.to_string())
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Model(m) => m.into(),
            PipelineError::Eval(e) => e.into(),
        }
    }
}
