//! Speaker embeddings from text descriptions: a prompt encoder predicts a
//! Gaussian over a semantic space and an invertible flow maps its samples to
//! speaker embeddings. Also the synthetic corpus, training and evaluation.

pub mod autodiff;
pub mod corpus;
pub mod evaluation;
pub mod flow;
pub mod model;
pub mod nn;
pub mod numerics;
pub mod pipeline;
pub mod prompt;
pub mod training;

pub use corpus::{Attributes, Corpus, CorpusConfig, CorpusError};
pub use evaluation::{EvalError, MetricsReport, SpeakerSets, Verdict};
pub use flow::{Flow, FlowConfig};
pub use model::{ExternalEmbeddings, Mode, Model, ModelError, TextInput};
pub use numerics::{Mat, RngStream};
pub use pipeline::{GeneratedSpeaker, TestPrompt};
pub use prompt::{EncoderConfig, GaussianPrior, PromptTokens, Vocabulary};
pub use training::{Checkpoint, CheckpointError, TrainConfig};
