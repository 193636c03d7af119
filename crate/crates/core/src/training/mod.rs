//! Joint likelihood training of the prompt encoder and flow, the regression
//! baseline, and checkpoints.

mod adam;
mod checkpoint;
mod gradcheck;

use serde::{Deserialize, Serialize};

pub use adam::{Adam, AdamState};
pub use gradcheck::{gradient_check, TensorCheck};
pub use checkpoint::{
    load_checkpoint, save_checkpoint, Checkpoint, CheckpointError, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};

use crate::autodiff::{Graph, ParamId, Var};
use crate::corpus::{speaker_dvector, Corpus};
use crate::flow::FlowConfig;
use crate::model::{ExternalEmbeddings, Mode, Model, ModelError, TextInput};
use crate::numerics::{Mat, RngStream};
use crate::prompt::{EncoderConfig, PromptTokens};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default)]
    pub mode: Mode,
    #[serde(default = "defaults::steps")]
    pub steps: u64,
    #[serde(default = "defaults::batch_size")]
    pub batch_size: usize,
    #[serde(default = "defaults::learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "defaults::beta1")]
    pub beta1: f64,
    #[serde(default = "defaults::beta2")]
    pub beta2: f64,
    #[serde(default = "defaults::adam_eps")]
    pub adam_eps: f64,
    /// Sampling temperature used when generating without an explicit one.
    #[serde(default = "defaults::temperature")]
    pub temperature: f64,
    /// Loss report interval in steps.
    #[serde(default = "defaults::log_every")]
    pub log_every: u64,
    #[serde(default = "defaults::flow_blocks")]
    pub flow_blocks: usize,
    #[serde(default)]
    pub flow_hidden: Option<usize>,
    #[serde(default = "defaults::width")]
    pub encoder_width: usize,
    /// Width of the internal token table; ignored with external embeddings.
    #[serde(default = "defaults::width")]
    pub embed_dim: usize,
    pub seed: u64,
}

mod defaults {
    pub fn steps() -> u64 {
        5000
    }
    pub fn batch_size() -> usize {
        12
    }
    pub fn learning_rate() -> f64 {
        1e-3
    }
    pub fn beta1() -> f64 {
        0.9
    }
    pub fn beta2() -> f64 {
        0.999
    }
    pub fn adam_eps() -> f64 {
        1e-8
    }
    pub fn temperature() -> f64 {
        1.0
    }
    pub fn log_every() -> u64 {
        500
    }
    pub fn flow_blocks() -> usize {
        12
    }
    pub fn width() -> usize {
        32
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Proposed,
            steps: defaults::steps(),
            batch_size: defaults::batch_size(),
            learning_rate: defaults::learning_rate(),
            beta1: defaults::beta1(),
            beta2: defaults::beta2(),
            adam_eps: defaults::adam_eps(),
            temperature: defaults::temperature(),
            log_every: defaults::log_every(),
            flow_blocks: defaults::flow_blocks(),
            flow_hidden: None,
            encoder_width: defaults::width(),
            embed_dim: defaults::width(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::Config(m.into()));
        if self.steps == 0 {
            return bad("steps must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be finite and non-negative");
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2)) {
            return bad("beta1 and beta2 must lie in [0, 1)");
        }
        if !(self.adam_eps > 0.0) {
            return bad("adam_eps must be positive");
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return bad("temperature must be finite and non-negative");
        }
        if self.flow_blocks == 0 || self.encoder_width == 0 || self.embed_dim == 0 || self.log_every == 0 {
            return bad("flow_blocks, encoder_width, embed_dim and log_every must be positive");
        }
        Ok(())
    }

    pub fn adam(&self) -> Adam {
        Adam { learning_rate: self.learning_rate, beta1: self.beta1, beta2: self.beta2, eps: self.adam_eps }
    }

    pub fn encoder_config(&self, embed_dim: usize, dim: usize) -> EncoderConfig {
        EncoderConfig::compact(embed_dim, self.encoder_width, dim)
    }

    pub fn flow_config(&self, dim: usize) -> FlowConfig {
        FlowConfig { dim, blocks: self.flow_blocks, hidden: self.flow_hidden }
    }
}

/// A training pair: the embedding to explain and the prompt conditioning it.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub target: Vec<f64>,
    pub tokens: PromptTokens,
}

fn targets(model: &Model, batch: &[Example]) -> Result<Mat, ModelError> {
    if batch.is_empty() {
        return Err(ModelError::Config("empty batch".into()));
    }
    if let Some(ex) = batch.iter().find(|ex| ex.target.len() != model.dim()) {
        return Err(ModelError::Config(format!("target has dim {}, model dim is {}", ex.target.len(), model.dim())));
    }
    let rows: Vec<&[f64]> = batch.iter().map(|ex| ex.target.as_slice()).collect();
    Ok(Mat::from_rows(&rows)?)
}

/// Mean batch loss as a `1×1` node: negative log-likelihood for proposed
/// models, mean squared error for the baseline.
pub fn loss_graph(model: &Model, g: &mut Graph, batch: &[Example]) -> Result<Var, ModelError> {
    let x = targets(model, batch)?;
    let (n, d) = x.shape();
    let mut means = Vec::with_capacity(n);
    let mut logvars = Vec::with_capacity(n);
    for ex in batch {
        let (mean, logvar) = match model.mode() {
            Mode::Proposed => model.encoder().prior_graph(g, &ex.tokens)?,
            Mode::Baseline => model.encoder().head_graph(g, &ex.tokens)?,
        };
        means.push(mean);
        logvars.push(logvar);
    }
    let mean = g.concat_rows(&means);
    let x = g.leaf(x);
    let Some(flow) = model.flow() else {
        let diff = g.sub(mean, x);
        let sq = g.square(diff);
        let total = g.sum(sq);
        return Ok(g.scale(total, 1.0 / (n * d) as f64));
    };
    let logvar = g.concat_rows(&logvars);
    let (z, logdet) = flow.forward_graph(g, x);
    let diff = g.sub(z, mean);
    let sq = g.square(diff);
    let neg = g.scale(logvar, -1.0);
    let precision = g.exp(neg);
    let quad = g.mul(sq, precision);
    let terms = g.add(quad, logvar);
    let half = g.scale(terms, 0.5);
    let energy = g.sum(half);
    let ld = g.sum(logdet);
    let total = g.sub(energy, ld);
    let constant = 0.5 * std::f64::consts::TAU.ln() * (n * d) as f64;
    let total = g.offset(total, &Mat::filled(1, 1, constant));
    Ok(g.scale(total, 1.0 / n as f64))
}

/// Mean batch loss.
pub fn batch_loss(model: &Model, batch: &[Example]) -> Result<f64, ModelError> {
    let mut g = Graph::new(model.params());
    let loss = loss_graph(model, &mut g, batch)?;
    Ok(g.value(loss).get(0, 0))
}

/// Mean batch loss and its gradient for every stored parameter.
pub fn batch_gradients(model: &Model, batch: &[Example]) -> Result<(f64, Vec<Mat>), ModelError> {
    let mut g = Graph::new(model.params());
    let loss = loss_graph(model, &mut g, batch)?;
    Ok((g.value(loss).get(0, 0), g.param_grads(loss)))
}

/// Initializes the flow's actnorms from `batch` if they are still unset.
pub fn ensure_initialized(model: &mut Model, batch: &[Example]) -> Result<(), ModelError> {
    let x = targets(model, batch)?;
    let (flow, params) = model.parts_mut();
    if let Some(flow) = flow {
        if !flow.is_initialized() {
            flow.initialize(params, &x)?;
        }
    }
    Ok(())
}

/// One optimizer update on `batch`; returns the loss before the update.
pub fn train_step(model: &mut Model, adam: &Adam, state: &mut AdamState, batch: &[Example]) -> Result<f64, ModelError> {
    ensure_initialized(model, batch)?;
    let (loss, grads) = batch_gradients(model, batch)?;
    if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
        return Err(ModelError::NonFiniteLoss { step: state.step + 1, loss });
    }
    let trainable: Vec<ParamId> = model.params().ids().collect();
    adam.update(state, model.params_mut(), &grads, &trainable);
    Ok(loss)
}

/// Training loop state over one corpus.
pub struct Trainer<'c> {
    corpus: &'c Corpus,
    config: TrainConfig,
    model: Model,
    adam: Adam,
    state: AdamState,
    tokens: Vec<PromptTokens>,
    speaker_prompts: Vec<Vec<usize>>,
    dvectors: Vec<Vec<f64>>,
    rng: RngStream,
    loss_trace: Vec<f64>,
}

impl<'c> Trainer<'c> {
    /// Uses the corpus vocabulary unless `external` embeddings are given.
    pub fn new(
        corpus: &'c Corpus,
        config: TrainConfig,
        external: Option<&ExternalEmbeddings>,
    ) -> Result<Self, ModelError> {
        config.validate()?;
        let mut root = RngStream::new(config.seed);
        let (text, embed_dim) = match external {
            Some(ext) => {
                let dim = ext.dim().ok_or_else(|| ModelError::Config("no external embeddings".into()))?;
                (TextInput::External { embed_dim: dim }, dim)
            }
            None => (TextInput::Internal { vocabulary: corpus.vocabulary() }, config.embed_dim),
        };
        let model = Model::new(
            config.mode,
            text,
            config.encoder_config(embed_dim, corpus.dim()),
            config.flow_config(corpus.dim()),
            &mut root.split(0),
        )?;
        let tokens = corpus
            .prompts()
            .iter()
            .map(|p| model.tokens(&p.text, external))
            .collect::<Result<Vec<_>, _>>()?;
        let mut speaker_prompts = vec![Vec::new(); corpus.speakers().len()];
        for (i, p) in corpus.prompts().iter().enumerate() {
            let s = corpus.speaker_index(&p.speaker_id).expect("validated corpus");
            speaker_prompts[s].push(i);
        }
        let dvectors = corpus
            .speakers()
            .iter()
            .map(|s| speaker_dvector(&s.utterances).expect("validated corpus"))
            .collect();
        let state = AdamState::new(model.params());
        Ok(Self {
            corpus,
            adam: config.adam(),
            config,
            model,
            state,
            tokens,
            speaker_prompts,
            dvectors,
            rng: root.split(1),
            loss_trace: Vec::new(),
        })
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn step_count(&self) -> u64 {
        self.state.step
    }

    pub fn loss_trace(&self) -> &[f64] {
        &self.loss_trace
    }

    /// Uniform speaker, then uniform prompt and utterance of that speaker.
    /// Baseline targets are speaker d-vectors.
    pub fn sample_batch(&mut self) -> Vec<Example> {
        (0..self.config.batch_size)
            .map(|_| {
                let s = self.rng.below(self.speaker_prompts.len());
                let prompts = &self.speaker_prompts[s];
                let p = prompts[self.rng.below(prompts.len())];
                let utterances = &self.corpus.speakers()[s].utterances;
                let u = self.rng.below(utterances.len());
                let target = match self.model.mode() {
                    Mode::Proposed => utterances[u].clone(),
                    Mode::Baseline => self.dvectors[s].clone(),
                };
                Example { target, tokens: self.tokens[p].clone() }
            })
            .collect()
    }

    pub fn step(&mut self) -> Result<f64, ModelError> {
        let batch = self.sample_batch();
        let loss = train_step(&mut self.model, &self.adam, &mut self.state, &batch)?;
        self.loss_trace.push(loss);
        Ok(loss)
    }

    /// Runs the remaining configured steps, calling `on_step(step, loss)`
    /// after each.
    pub fn run(&mut self, mut on_step: impl FnMut(u64, f64)) -> Result<(), ModelError> {
        while self.state.step < self.config.steps {
            let loss = self.step()?;
            on_step(self.state.step, loss);
        }
        Ok(())
    }

    pub fn into_checkpoint(self) -> Checkpoint {
        Checkpoint::new(self.config, self.model, self.state, self.loss_trace)
    }
}

/// Trains on `corpus` with its own vocabulary.
pub fn train(corpus: &Corpus, config: &TrainConfig) -> Result<Checkpoint, ModelError> {
    let mut trainer = Trainer::new(corpus, config.clone(), None)?;
    trainer.run(|_, _| {})?;
    Ok(trainer.into_checkpoint())
}
