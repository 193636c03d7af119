//! A prompt encoder paired with a flow, and generation from it.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{ParamId, ParamStore};
use crate::flow::{Flow, FlowConfig, FlowError};
use crate::numerics::{Mat, NumericsError, RngStream};
use crate::prompt::{EncoderConfig, ExternalPrompt, GaussianPrior, PromptEncoder, PromptError, PromptTokens, Vocabulary};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("loss became non-finite ({loss}) at step {step}")]
    NonFiniteLoss { step: u64, loss: f64 },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Prompt prior plus flow, trained by likelihood.
    #[default]
    Proposed,
    /// Prompt encoder regressing the speaker embedding directly.
    Baseline,
}

/// Where token embeddings come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TextInput {
    Internal { vocabulary: Vocabulary },
    External { embed_dim: usize },
}

/// Precomputed token embeddings looked up by prompt text.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExternalEmbeddings {
    by_text: BTreeMap<String, Mat>,
}

impl ExternalEmbeddings {
    pub fn new(prompts: Vec<ExternalPrompt>) -> Self {
        let by_text = prompts
            .into_iter()
            .filter_map(|p| match p.tokens {
                PromptTokens::External { embeddings } => Some((p.text, embeddings)),
                PromptTokens::Internal { .. } => None,
            })
            .collect();
        Self { by_text }
    }

    pub fn dim(&self) -> Option<usize> {
        self.by_text.values().next().map(Mat::cols)
    }

    pub fn len(&self) -> usize {
        self.by_text.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_text.is_empty()
    }

    pub fn get(&self, text: &str) -> Option<PromptTokens> {
        self.by_text.get(text).map(|m| PromptTokens::External { embeddings: m.clone() })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Model {
    mode: Mode,
    text: TextInput,
    encoder: PromptEncoder,
    flow: Option<Flow>,
    params: ParamStore,
}

impl Model {
    /// Baseline models carry no flow.
    pub fn new(
        mode: Mode,
        text: TextInput,
        encoder: EncoderConfig,
        flow: FlowConfig,
        rng: &mut RngStream,
    ) -> Result<Self, ModelError> {
        if encoder.semantic_dim != flow.dim {
            return Err(ModelError::Config(format!(
                "semantic dim {} differs from flow dim {}",
                encoder.semantic_dim, flow.dim
            )));
        }
        let vocab_size = match &text {
            TextInput::Internal { vocabulary } if vocabulary.is_empty() => {
                return Err(ModelError::Config("empty vocabulary".into()))
            }
            TextInput::Internal { vocabulary } => vocabulary.len(),
            TextInput::External { embed_dim } if *embed_dim != encoder.embed_dim => {
                return Err(ModelError::Config(format!(
                    "external embeddings have dim {embed_dim}, encoder expects {}",
                    encoder.embed_dim
                )))
            }
            TextInput::External { .. } => 0,
        };
        let mut params = ParamStore::new();
        let mut encoder_rng = rng.split(1);
        let mut flow_rng = rng.split(2);
        let encoder = PromptEncoder::new(&mut params, encoder, vocab_size, &mut encoder_rng)?;
        let flow = match mode {
            Mode::Proposed => Some(Flow::new(&mut params, flow, &mut flow_rng)?),
            Mode::Baseline => None,
        };
        Ok(Self { mode, text, encoder, flow, params })
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn dim(&self) -> usize {
        self.encoder.config().semantic_dim
    }

    pub fn text_input(&self) -> &TextInput {
        &self.text
    }

    pub fn encoder(&self) -> &PromptEncoder {
        &self.encoder
    }

    pub fn flow(&self) -> Option<&Flow> {
        self.flow.as_ref()
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub(crate) fn parts_mut(&mut self) -> (Option<&mut Flow>, &mut ParamStore) {
        (self.flow.as_mut(), &mut self.params)
    }

    /// Ids of parameters whose name starts with `prefix`.
    pub fn param_ids_with_prefix(&self, prefix: &str) -> Vec<ParamId> {
        self.params.iter().filter(|(_, name, _)| name.starts_with(prefix)).map(|(id, _, _)| id).collect()
    }

    /// Tokens for `text`, from the vocabulary or from `external`.
    pub fn tokens(&self, text: &str, external: Option<&ExternalEmbeddings>) -> Result<PromptTokens, ModelError> {
        match &self.text {
            TextInput::Internal { vocabulary } => Ok(PromptTokens::from_text(vocabulary, text)?),
            TextInput::External { embed_dim } => {
                let tokens = external
                    .and_then(|e| e.get(text))
                    .ok_or_else(|| PromptError::MissingEmbeddings(text.to_string()))?;
                if let PromptTokens::External { embeddings } = &tokens {
                    if embeddings.cols() != *embed_dim {
                        return Err(PromptError::DimMismatch { expected: *embed_dim, got: embeddings.cols() }.into());
                    }
                }
                Ok(tokens)
            }
        }
    }

    pub fn prior(&self, tokens: &PromptTokens) -> Result<GaussianPrior, ModelError> {
        Ok(self.encoder.encode(&self.params, tokens)?)
    }

    /// `n` speaker embeddings for one prompt: prior samples mapped through
    /// the inverse flow. A baseline model returns its single prediction.
    pub fn generate(
        &self,
        tokens: &PromptTokens,
        n: usize,
        temperature: f64,
        rng: &mut RngStream,
    ) -> Result<Vec<Vec<f64>>, ModelError> {
        let prior = self.prior(tokens)?;
        let Some(flow) = &self.flow else {
            return Ok(vec![prior.mean().to_vec()]);
        };
        let mut z = Mat::zeros(n, self.dim());
        for i in 0..n {
            z.row_mut(i).copy_from_slice(&prior.sample(temperature, rng)?);
        }
        let (x, _) = flow.inverse(&self.params, &z)?;
        Ok((0..n).map(|i| x.row(i).to_vec()).collect())
    }

    /// Negative log-likelihood of a speaker embedding given a prompt.
    pub fn nll(&self, x: &[f64], tokens: &PromptTokens) -> Result<f64, ModelError> {
        let flow = self.flow.as_ref().ok_or_else(|| ModelError::Config("baseline model has no likelihood".into()))?;
        let prior = self.prior(tokens)?;
        let (z, logdet) = flow.forward_vec(&self.params, x)?;
        nll_loss(&z, &prior, logdet)
    }
}

/// `-(log N(z; prior) + logdet)`.
pub fn nll_loss(z: &[f64], prior: &GaussianPrior, logdet: f64) -> Result<f64, ModelError> {
    Ok(-(prior.log_density(z)? + logdet))
}
