//! Text prompt → diagonal Gaussian prior over the semantic space.
//!
//! The encoder reads token embeddings (a trainable table, or vectors
//! precomputed by an external text model), runs them through FFT blocks,
//! compresses the sequence with a GRU, attends over a bank of style tokens and
//! finally predicts a mean and log-variance per semantic dimension.

mod encoder;
mod external;
mod vocab;

use thiserror::Error;

pub use encoder::{position_encoding, EncoderConfig, FftBlock, FftOutput, Gru, PromptEncoder, StyleOutput, StyleTokens};
pub use external::{
    parse_external_embeddings, read_external_embeddings, write_external_embeddings, ExternalPrompt, ExternalRecord,
};
pub use vocab::{tokenize, Vocabulary};

use crate::numerics::{self, Mat, RngStream};

pub const LOGVAR_MIN: f64 = -5.0;
pub const LOGVAR_MAX: f64 = 2.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PromptError {
    #[error("unknown tokens: {}", .0.join(", "))]
    OutOfVocabulary(Vec<String>),
    #[error("prompt has no tokens")]
    EmptyPrompt,
    #[error("token id {id} outside vocabulary of {vocab}")]
    TokenOutOfRange { id: usize, vocab: usize },
    #[error("encoder has no token table; supply external embeddings")]
    NoTokenTable,
    #[error("no external embeddings for prompt {0:?}")]
    MissingEmbeddings(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("temperature must be non-negative, got {0}")]
    NegativeTemperature(f64),
    #[error("invalid prior: {0}")]
    InvalidPrior(String),
    #[error("invalid encoder config: {0}")]
    Config(String),
    #[error("line {line}: {msg}")]
    Schema { line: usize, msg: String },
    #[error("i/o error: {0}")]
    Io(String),
}

/// Tokenized prompt, either ids into the encoder's table or raw embeddings.
#[derive(Clone, Debug, PartialEq)]
pub enum PromptTokens {
    Internal { token_ids: Vec<usize> },
    External { embeddings: Mat },
}

impl PromptTokens {
    pub fn from_text(vocab: &Vocabulary, text: &str) -> Result<Self, PromptError> {
        Ok(Self::Internal { token_ids: vocab.encode(text)? })
    }

    pub fn len(&self) -> usize {
        match self {
            Self::Internal { token_ids } => token_ids.len(),
            Self::External { embeddings } => embeddings.rows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Diagonal Gaussian over the semantic space.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianPrior {
    mean: Vec<f64>,
    logvar: Vec<f64>,
}

impl GaussianPrior {
    pub fn new(mean: Vec<f64>, logvar: Vec<f64>) -> Result<Self, PromptError> {
        if mean.len() != logvar.len() || mean.is_empty() {
            return Err(PromptError::InvalidPrior(format!(
                "mean has {} entries, logvar {}",
                mean.len(),
                logvar.len()
            )));
        }
        if mean.iter().chain(&logvar).any(|v| !v.is_finite()) {
            return Err(PromptError::InvalidPrior("non-finite entry".into()));
        }
        if logvar.iter().any(|v| !(LOGVAR_MIN..=LOGVAR_MAX).contains(v)) {
            return Err(PromptError::InvalidPrior(format!("logvar outside [{LOGVAR_MIN}, {LOGVAR_MAX}]")));
        }
        Ok(Self { mean, logvar })
    }

    pub fn standard(dim: usize) -> Self {
        Self { mean: vec![0.0; dim], logvar: vec![0.0; dim] }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn logvar(&self) -> &[f64] {
        &self.logvar
    }

    pub fn log_density(&self, z: &[f64]) -> Result<f64, numerics::NumericsError> {
        numerics::gaussian_logpdf(z, &self.mean, &self.logvar)
    }

    /// Differential entropy in nats.
    pub fn entropy(&self) -> f64 {
        self.logvar.iter().map(|lv| 0.5 * (1.0 + std::f64::consts::TAU.ln() + lv)).sum()
    }

    /// `mean + temperature · exp(logvar / 2) · ε` with `ε ~ N(0, I)`.
    pub fn sample(&self, temperature: f64, rng: &mut RngStream) -> Result<Vec<f64>, PromptError> {
        if !(temperature >= 0.0) || !temperature.is_finite() {
            return Err(PromptError::NegativeTemperature(temperature));
        }
        let eps = numerics::standard_normal(rng, self.dim());
        Ok(self.sample_with(temperature, &eps))
    }

    /// Sample from given standard-normal noise.
    pub fn sample_with(&self, temperature: f64, eps: &[f64]) -> Vec<f64> {
        self.mean
            .iter()
            .zip(&self.logvar)
            .zip(eps)
            .map(|((m, lv), e)| m + temperature * (0.5 * lv).exp() * e)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{Graph, ParamStore};
    use crate::nn::Linear;

    fn randomize(store: &mut ParamStore, linear: &Linear, scale: f64, rng: &mut RngStream) {
        for id in [linear.weight(), linear.bias()] {
            for v in store.get_mut(id).as_mut_slice() {
                *v = scale * rng.next_normal();
            }
        }
    }

    fn random_seq(rng: &mut RngStream, len: usize, dim: usize) -> Mat {
        Mat::from_vec(len, dim, numerics::standard_normal(rng, len * dim)).unwrap()
    }

    #[test]
    fn fft_block_with_zero_output_projections_is_identity() {
        let mut rng = RngStream::new(1);
        let mut store = ParamStore::new();
        let block = FftBlock::new(&mut store, "b", 8, 32, 2, &mut rng);
        let seq = random_seq(&mut rng, 5, 8);
        assert_eq!(block.apply(&store, &seq).unwrap(), seq);
    }

    #[test]
    fn attention_rows_are_normalized() {
        let mut rng = RngStream::new(2);
        let mut store = ParamStore::new();
        let block = FftBlock::new(&mut store, "b", 8, 16, 2, &mut rng);
        let mut g = Graph::new(&store);
        let x = g.leaf(random_seq(&mut rng, 6, 8));
        let out = block.forward_graph(&mut g, x);
        assert_eq!(out.attention.len(), 2);
        for w in out.attention {
            let w = g.value(w);
            for r in 0..w.rows() {
                assert!((w.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn single_token_attention_is_value_path() {
        let mut rng = RngStream::new(3);
        let mut store = ParamStore::new();
        let block = FftBlock::new(&mut store, "b", 4, 8, 2, &mut rng);
        randomize(&mut store, block.out_projection(), 0.5, &mut rng);
        randomize(&mut store, block.value_projection(), 0.5, &mut rng);
        let x = random_seq(&mut rng, 1, 4);
        // One key: the softmax weight is 1, so the block adds value→out to x.
        let value = block.value_projection().apply(&store, &x);
        let attended = block.out_projection().apply(&store, &value);
        let expected = x.zip_map(&attended, |a, b| a + b);
        assert!(block.apply(&store, &x).unwrap().max_abs_diff(&expected) < 1e-12);
    }

    #[test]
    fn gru_zero_weights_and_inputs_stay_zero() {
        let mut rng = RngStream::new(4);
        let mut store = ParamStore::new();
        let gru = Gru::new(&mut store, "g", 3, 5, &mut rng);
        for lin in [gru.input().clone(), gru.recurrent().clone()] {
            randomize(&mut store, &lin, 0.0, &mut rng);
        }
        assert_eq!(gru.apply(&store, &Mat::zeros(4, 3)).unwrap(), vec![0.0; 5]);
    }

    #[test]
    fn gru_single_step_matches_gate_equations() {
        let mut rng = RngStream::new(5);
        let mut store = ParamStore::new();
        let gru = Gru::new(&mut store, "g", 2, 2, &mut rng);
        randomize(&mut store, &gru.input().clone(), 0.7, &mut rng);
        randomize(&mut store, &gru.recurrent().clone(), 0.7, &mut rng);
        let x = [0.8, -0.3];
        let h = gru.apply(&store, &Mat::row_vector(&x)).unwrap();

        // Scalar oracle with h0 = 0: recurrent contributions reduce to biases.
        let wi = store.get(gru.input().weight());
        let bi = store.get(gru.input().bias());
        let bh = store.get(gru.recurrent().bias());
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        for k in 0..2 {
            let pre = |gate: usize| {
                let col = gate * 2 + k;
                x[0] * wi.get(0, col) + x[1] * wi.get(1, col) + bi.get(0, col)
            };
            let r = sig(pre(0) + bh.get(0, k));
            let z = sig(pre(1) + bh.get(0, 2 + k));
            let n = (pre(2) + r * bh.get(0, 4 + k)).tanh();
            let expected = (1.0 - z) * n;
            assert!((h[k] - expected).abs() < 1e-14, "unit {k}: {} vs {expected}", h[k]);
        }
    }

    #[test]
    fn gru_is_order_sensitive() {
        let mut rng = RngStream::new(6);
        let mut store = ParamStore::new();
        let gru = Gru::new(&mut store, "g", 3, 4, &mut rng);
        randomize(&mut store, &gru.recurrent().clone(), 0.8, &mut rng);
        let seq = random_seq(&mut rng, 2, 3);
        let reversed = Mat::from_rows(&[seq.row(1), seq.row(0)]).unwrap();
        assert_ne!(gru.apply(&store, &seq).unwrap(), gru.apply(&store, &reversed).unwrap());
    }

    #[test]
    fn identical_style_tokens_give_that_token() {
        let mut rng = RngStream::new(7);
        let mut store = ParamStore::new();
        let style = StyleTokens::new(&mut store, "s", 4, 10, 6, &mut rng);
        let t = [0.3, -1.2, 0.5, 2.0, 0.0, 0.7];
        let bank = Mat::from_rows(&vec![t; 10]).unwrap();
        *store.get_mut(style.tokens()) = bank;
        let (out, _) = style.apply(&store, &[1.0, -2.0, 0.5, 0.1]).unwrap();
        for (a, b) in out.iter().zip(&t) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn uniform_logits_average_the_tokens() {
        let mut rng = RngStream::new(8);
        let mut store = ParamStore::new();
        let style = StyleTokens::new(&mut store, "s", 4, 10, 6, &mut rng);
        randomize(&mut store, &style.query_projection().clone(), 0.0, &mut rng);
        let (out, weights) = style.apply(&store, &[0.4, 0.1, -0.9, 1.5]).unwrap();
        assert!(weights.iter().all(|w| (w - 0.1).abs() < 1e-15));
        let bank = store.get(style.tokens());
        for c in 0..6 {
            let mean = (0..10).map(|r| bank.get(r, c)).sum::<f64>() / 10.0;
            assert!((out[c] - mean).abs() < 1e-12);
        }
    }

    #[test]
    fn saturated_logit_selects_one_token() {
        let mut rng = RngStream::new(9);
        let mut store = ParamStore::new();
        let style = StyleTokens::new(&mut store, "s", 1, 10, 4, &mut rng);
        // Only token 3 is nonzero; with identity keys its logit is 20, the rest 0.
        let mut bank = Mat::zeros(10, 4);
        bank.set(3, 3, 1.0);
        *store.get_mut(style.tokens()) = bank.clone();
        *store.get_mut(style.key_projection().weight()) = Mat::identity(4);
        *store.get_mut(style.key_projection().bias()) = Mat::zeros(1, 4);
        let mut wq = Mat::zeros(1, 4);
        wq.set(0, 3, 40.0); // logit = 40 · 1 / sqrt(4) = 20
        *store.get_mut(style.query_projection().weight()) = wq;
        *store.get_mut(style.query_projection().bias()) = Mat::zeros(1, 4);
        let (out, weights) = style.apply(&store, &[1.0]).unwrap();
        assert!(weights[3] > 1.0 - 1e-6);
        for (a, b) in out.iter().zip(bank.row(3)) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    fn small_encoder(seed: u64) -> (ParamStore, PromptEncoder) {
        let mut store = ParamStore::new();
        let enc = PromptEncoder::new(&mut store, EncoderConfig::compact(8, 8, 6), 12, &mut RngStream::new(seed)).unwrap();
        (store, enc)
    }

    #[test]
    fn encode_contract() {
        let (store, enc) = small_encoder(10);
        let tokens = PromptTokens::Internal { token_ids: vec![1, 4, 7] };
        let prior = enc.encode(&store, &tokens).unwrap();
        assert_eq!(prior.mean().len(), 6);
        assert_eq!(prior.logvar().len(), 6);
        assert!(prior.logvar().iter().all(|v| (LOGVAR_MIN..=LOGVAR_MAX).contains(v)));
        assert_eq!(enc.encode(&store, &tokens).unwrap(), prior);
        let other = PromptTokens::Internal { token_ids: vec![1, 5, 7] };
        assert_ne!(enc.encode(&store, &other).unwrap(), prior);
    }

    #[test]
    fn encode_errors() {
        let (store, enc) = small_encoder(11);
        let bad = PromptTokens::Internal { token_ids: vec![1, 12] };
        assert_eq!(enc.encode(&store, &bad), Err(PromptError::TokenOutOfRange { id: 12, vocab: 12 }));
        let empty = PromptTokens::Internal { token_ids: vec![] };
        assert_eq!(enc.encode(&store, &empty), Err(PromptError::EmptyPrompt));
        let wrong_dim = PromptTokens::External { embeddings: Mat::zeros(2, 5) };
        assert_eq!(enc.encode(&store, &wrong_dim), Err(PromptError::DimMismatch { expected: 8, got: 5 }));
        let external = PromptTokens::External { embeddings: Mat::filled(3, 8, 0.2) };
        assert!(enc.encode(&store, &external).is_ok());
    }

    #[test]
    fn config_validation() {
        let mut cfg = EncoderConfig::compact(8, 8, 4);
        cfg.heads = 3;
        let mut store = ParamStore::new();
        assert!(matches!(
            PromptEncoder::new(&mut store, cfg, 5, &mut RngStream::new(0)),
            Err(PromptError::Config(_))
        ));
    }

    #[test]
    fn sampling_basics() {
        let prior = GaussianPrior::new(vec![1.0, -2.0], vec![0.5, -1.0]).unwrap();
        let mut rng = RngStream::new(3);
        assert_eq!(prior.sample(0.0, &mut rng).unwrap(), vec![1.0, -2.0]);
        assert_eq!(prior.sample(-0.1, &mut rng), Err(PromptError::NegativeTemperature(-0.1)));
        let a = prior.sample(1.0, &mut RngStream::new(77)).unwrap();
        let b = prior.sample(1.0, &mut RngStream::new(77)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sample_variance_matches_prior() {
        let prior = GaussianPrior::new(vec![0.5, -1.0, 2.0], vec![-1.0, 0.0, 1.5]).unwrap();
        let mut rng = RngStream::new(12);
        let n = 100_000;
        let draws: Vec<Vec<f64>> = (0..n).map(|_| prior.sample(1.0, &mut rng).unwrap()).collect();
        for d in 0..3 {
            let mean = draws.iter().map(|s| s[d]).sum::<f64>() / n as f64;
            let var = draws.iter().map(|s| (s[d] - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            let expected = prior.logvar()[d].exp();
            assert!((var / expected - 1.0).abs() < 0.05, "dim {d}: {var} vs {expected}");
        }
    }

    #[test]
    fn mean_nll_of_samples_matches_entropy() {
        let prior = GaussianPrior::new(vec![0.3; 8], vec![0.0, 0.5, -0.5, 1.0, -1.0, 0.2, 1.5, -2.0]).unwrap();
        let mut rng = RngStream::new(13);
        let n = 10_000;
        let nll = (0..n)
            .map(|_| -prior.log_density(&prior.sample(1.0, &mut rng).unwrap()).unwrap())
            .sum::<f64>()
            / n as f64;
        let h = prior.entropy();
        assert!((nll / h - 1.0).abs() < 0.02, "{nll} vs {h}");
    }

    #[test]
    fn prior_validation() {
        assert!(GaussianPrior::new(vec![0.0], vec![2.5]).is_err());
        assert!(GaussianPrior::new(vec![0.0, 1.0], vec![0.0]).is_err());
        assert!(GaussianPrior::new(vec![f64::NAN], vec![0.0]).is_err());
    }
}
