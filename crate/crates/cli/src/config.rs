use std::fs;
use std::path::{Path, PathBuf};

use flowspeaker::{CorpusConfig, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// One JSON file holding a section per command. Relative paths inside it are
/// resolved against the file's directory.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub corpus: Option<CorpusConfig>,
    #[serde(default)]
    pub train: Option<TrainConfig>,
    #[serde(default)]
    pub generate: Option<GenerateSection>,
    #[serde(default)]
    pub evaluate: Option<EvaluateSection>,
    /// External token embeddings (JSON lines) used by every command.
    #[serde(default)]
    pub embeddings: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateSection {
    #[serde(default = "default_n")]
    pub n: usize,
    /// Falls back to the checkpoint's training temperature.
    #[serde(default)]
    pub temperature: Option<f64>,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateSection {
    /// Test prompts (JSON lines); defaults to twenty labeled descriptions.
    #[serde(default)]
    pub prompts: Option<PathBuf>,
    #[serde(default = "default_n_per_prompt")]
    pub n_per_prompt: usize,
    #[serde(default)]
    pub temperature: Option<f64>,
    pub seed: u64,
}

fn default_n() -> usize {
    1
}

fn default_n_per_prompt() -> usize {
    8
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = cfg.embeddings.as_mut() {
            resolve(p);
        }
        if let Some(p) = cfg.evaluate.as_mut().and_then(|e| e.prompts.as_mut()) {
            resolve(p);
        }
        Ok(cfg)
    }

    pub fn load_optional(path: Option<&Path>) -> Result<Self, CliError> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }
}
