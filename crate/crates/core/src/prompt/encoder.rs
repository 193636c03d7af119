//! Prompt encoder layers: FFT blocks, GRU, style-token attention and the
//! Gaussian head.

use serde::{Deserialize, Serialize};

use super::{GaussianPrior, PromptError, PromptTokens, LOGVAR_MAX, LOGVAR_MIN};
use crate::autodiff::{Graph, ParamId, ParamStore, Var};
use crate::nn::{Init, Linear};
use crate::numerics::{Mat, RngStream};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderConfig {
    /// Width of token embeddings (internal table or external file).
    pub embed_dim: usize,
    pub hidden: usize,
    pub filter: usize,
    pub heads: usize,
    pub fft_blocks: usize,
    pub gru_hidden: usize,
    pub style_tokens: usize,
    /// Width of the style-token bank and of the head input.
    pub token_dim: usize,
    /// Output dimension; equals the flow dimension.
    pub semantic_dim: usize,
}

impl EncoderConfig {
    /// Full-size configuration: 2 FFT blocks of width 256 / filter 1024, GRU
    /// of 256, 10 style tokens, 256-dimensional semantic space.
    pub fn full_size(embed_dim: usize) -> Self {
        Self {
            embed_dim,
            hidden: 256,
            filter: 1024,
            heads: 2,
            fft_blocks: 2,
            gru_hidden: 256,
            style_tokens: 10,
            token_dim: 256,
            semantic_dim: 256,
        }
    }

    /// Small configuration with every width set to `width`.
    pub fn compact(embed_dim: usize, width: usize, semantic_dim: usize) -> Self {
        Self {
            embed_dim,
            hidden: width,
            filter: 4 * width,
            heads: 2,
            fft_blocks: 2,
            gru_hidden: width,
            style_tokens: 10,
            token_dim: width,
            semantic_dim,
        }
    }

    fn validate(&self) -> Result<(), PromptError> {
        let dims = [
            self.embed_dim,
            self.hidden,
            self.filter,
            self.heads,
            self.gru_hidden,
            self.style_tokens,
            self.token_dim,
            self.semantic_dim,
        ];
        if dims.contains(&0) {
            return Err(PromptError::Config("encoder widths must be positive".into()));
        }
        if self.hidden % self.heads != 0 {
            return Err(PromptError::Config(format!(
                "hidden {} is not divisible by {} heads",
                self.hidden, self.heads
            )));
        }
        Ok(())
    }
}

/// Sinusoidal position table, `len × dim`.
pub fn position_encoding(len: usize, dim: usize) -> Mat {
    let mut pe = Mat::zeros(len, dim);
    for t in 0..len {
        for i in 0..dim {
            let rate = 10000f64.powf((2 * (i / 2)) as f64 / dim as f64);
            let angle = t as f64 / rate;
            pe.set(t, i, if i % 2 == 0 { angle.sin() } else { angle.cos() });
        }
    }
    pe
}

/// Self-attention followed by a pointwise feed-forward net, each residual.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FftBlock {
    query: Linear,
    key: Linear,
    value: Linear,
    out: Linear,
    ff_in: Linear,
    ff_out: Linear,
    heads: usize,
}

pub struct FftOutput {
    pub seq: Var,
    /// One `T×T` attention matrix per head.
    pub attention: Vec<Var>,
}

impl FftBlock {
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        hidden: usize,
        filter: usize,
        heads: usize,
        rng: &mut RngStream,
    ) -> Self {
        let mut lin = |name: &str, i, o, init| Linear::new(store, &format!("{prefix}.{name}"), i, o, init, rng);
        Self {
            query: lin("attn.query", hidden, hidden, Init::Scaled(1.0)),
            key: lin("attn.key", hidden, hidden, Init::Scaled(1.0)),
            value: lin("attn.value", hidden, hidden, Init::Scaled(1.0)),
            out: lin("attn.out", hidden, hidden, Init::Zeros),
            ff_in: lin("ff.in", hidden, filter, Init::Scaled(1.0)),
            ff_out: lin("ff.out", filter, hidden, Init::Zeros),
            heads,
        }
    }

    pub fn out_projection(&self) -> &Linear {
        &self.out
    }

    pub fn value_projection(&self) -> &Linear {
        &self.value
    }

    pub fn feed_forward_out(&self) -> &Linear {
        &self.ff_out
    }

    pub fn forward_graph(&self, g: &mut Graph, seq: Var) -> FftOutput {
        let hidden = self.query.inputs();
        let head_dim = hidden / self.heads;
        let q = self.query.forward_graph(g, seq);
        let k = self.key.forward_graph(g, seq);
        let v = self.value.forward_graph(g, seq);
        let mut attention = Vec::with_capacity(self.heads);
        let mut contexts = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let (a, b) = (h * head_dim, (h + 1) * head_dim);
            let qh = g.slice_cols(q, a, b);
            let kh = g.slice_cols(k, a, b);
            let vh = g.slice_cols(v, a, b);
            let logits = g.matmul_t(qh, kh);
            let logits = g.scale(logits, 1.0 / (head_dim as f64).sqrt());
            let weights = g.softmax_rows(logits);
            contexts.push(g.matmul(weights, vh));
            attention.push(weights);
        }
        let context = if contexts.len() == 1 { contexts[0] } else { g.concat_cols(&contexts) };
        let attended = self.out.forward_graph(g, context);
        let seq = g.add(seq, attended);
        let inner = self.ff_in.forward_graph(g, seq);
        let inner = g.relu(inner);
        let ff = self.ff_out.forward_graph(g, inner);
        let seq = g.add(seq, ff);
        FftOutput { seq, attention }
    }

    /// Runs the block on a `T×hidden` sequence.
    pub fn apply(&self, store: &ParamStore, seq: &Mat) -> Result<Mat, PromptError> {
        if seq.cols() != self.query.inputs() {
            return Err(PromptError::DimMismatch { expected: self.query.inputs(), got: seq.cols() });
        }
        let mut g = Graph::new(store);
        let x = g.leaf(seq.clone());
        let out = self.forward_graph(&mut g, x);
        Ok(g.value(out.seq).clone())
    }
}

/// Gated recurrent unit; gates are packed `[reset | update | candidate]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gru {
    input: Linear,
    recurrent: Linear,
    hidden: usize,
}

impl Gru {
    pub fn new(store: &mut ParamStore, prefix: &str, inputs: usize, hidden: usize, rng: &mut RngStream) -> Self {
        Self {
            input: Linear::new(store, &format!("{prefix}.input"), inputs, 3 * hidden, Init::Scaled(1.0), rng),
            recurrent: Linear::new(store, &format!("{prefix}.recurrent"), hidden, 3 * hidden, Init::Scaled(1.0), rng),
            hidden,
        }
    }

    pub fn input(&self) -> &Linear {
        &self.input
    }

    pub fn recurrent(&self) -> &Linear {
        &self.recurrent
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    /// Final hidden state (`1×hidden`) after reading every row of `seq`.
    pub fn forward_graph(&self, g: &mut Graph, seq: Var) -> Var {
        let n = self.hidden;
        let steps = g.value(seq).rows();
        let mut h = g.leaf(Mat::zeros(1, n));
        for t in 0..steps {
            let x = g.select_rows(seq, &[t]);
            let gi = self.input.forward_graph(g, x);
            let gh = self.recurrent.forward_graph(g, h);
            let (ri, zi, ni) = (g.slice_cols(gi, 0, n), g.slice_cols(gi, n, 2 * n), g.slice_cols(gi, 2 * n, 3 * n));
            let (rh, zh, nh) = (g.slice_cols(gh, 0, n), g.slice_cols(gh, n, 2 * n), g.slice_cols(gh, 2 * n, 3 * n));
            let r = g.add(ri, rh);
            let r = g.sigmoid(r);
            let z = g.add(zi, zh);
            let z = g.sigmoid(z);
            let gated = g.mul(r, nh);
            let cand = g.add(ni, gated);
            let cand = g.tanh(cand);
            // h' = (1 - z)·cand + z·h = cand + z·(h - cand)
            let diff = g.sub(h, cand);
            let kept = g.mul(z, diff);
            h = g.add(cand, kept);
        }
        h
    }

    pub fn apply(&self, store: &ParamStore, seq: &Mat) -> Result<Vec<f64>, PromptError> {
        if seq.cols() != self.input.inputs() {
            return Err(PromptError::DimMismatch { expected: self.input.inputs(), got: seq.cols() });
        }
        let mut g = Graph::new(store);
        let x = g.leaf(seq.clone());
        let h = self.forward_graph(&mut g, x);
        Ok(g.value(h).as_slice().to_vec())
    }
}

/// Single-head attention of a query vector over a bank of learned tokens.
/// The output is the attention-weighted sum of the tokens themselves.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StyleTokens {
    tokens: ParamId,
    query: Linear,
    key: Linear,
}

pub struct StyleOutput {
    pub embedding: Var,
    pub weights: Var,
}

impl StyleTokens {
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        query_dim: usize,
        count: usize,
        token_dim: usize,
        rng: &mut RngStream,
    ) -> Self {
        let bank = Mat::raw(count, token_dim, (0..count * token_dim).map(|_| 0.5 * rng.next_normal()).collect());
        Self {
            tokens: store.add(format!("{prefix}.tokens"), bank),
            query: Linear::new(store, &format!("{prefix}.query"), query_dim, token_dim, Init::Scaled(1.0), rng),
            key: Linear::new(store, &format!("{prefix}.key"), token_dim, token_dim, Init::Scaled(1.0), rng),
        }
    }

    pub fn tokens(&self) -> ParamId {
        self.tokens
    }

    pub fn query_projection(&self) -> &Linear {
        &self.query
    }

    pub fn key_projection(&self) -> &Linear {
        &self.key
    }

    pub fn forward_graph(&self, g: &mut Graph, query: Var) -> StyleOutput {
        let bank = g.param(self.tokens);
        let q = self.query.forward_graph(g, query);
        let k = self.key.forward_graph(g, bank);
        let logits = g.matmul_t(q, k);
        let logits = g.scale(logits, 1.0 / (self.key.outputs() as f64).sqrt());
        let weights = g.softmax_rows(logits);
        let embedding = g.matmul(weights, bank);
        StyleOutput { embedding, weights }
    }

    /// Returns the attended embedding and the attention weights.
    pub fn apply(&self, store: &ParamStore, query: &[f64]) -> Result<(Vec<f64>, Vec<f64>), PromptError> {
        if query.len() != self.query.inputs() {
            return Err(PromptError::DimMismatch { expected: self.query.inputs(), got: query.len() });
        }
        let mut g = Graph::new(store);
        let q = g.leaf(Mat::row_vector(query));
        let out = self.forward_graph(&mut g, q);
        Ok((g.value(out.embedding).as_slice().to_vec(), g.value(out.weights).as_slice().to_vec()))
    }
}

/// Maps a prompt to the mean and log-variance of the semantic prior.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PromptEncoder {
    config: EncoderConfig,
    /// `vocab × embed_dim`; absent when the encoder only reads external embeddings.
    token_table: Option<ParamId>,
    input: Linear,
    blocks: Vec<FftBlock>,
    gru: Gru,
    style: StyleTokens,
    head: Linear,
}

impl PromptEncoder {
    pub fn new(
        store: &mut ParamStore,
        config: EncoderConfig,
        vocab_size: usize,
        rng: &mut RngStream,
    ) -> Result<Self, PromptError> {
        config.validate()?;
        let token_table = (vocab_size > 0).then(|| {
            let e = config.embed_dim;
            let table = Mat::raw(vocab_size, e, (0..vocab_size * e).map(|_| rng.next_normal()).collect());
            store.add("encoder.token_table", table)
        });
        let input = Linear::new(store, "encoder.input", config.embed_dim, config.hidden, Init::Scaled(1.0), rng);
        let blocks = (0..config.fft_blocks)
            .map(|i| FftBlock::new(store, &format!("encoder.fft.{i}"), config.hidden, config.filter, config.heads, rng))
            .collect();
        let gru = Gru::new(store, "encoder.gru", config.hidden, config.gru_hidden, rng);
        let style = StyleTokens::new(
            store,
            "encoder.style",
            config.gru_hidden,
            config.style_tokens,
            config.token_dim,
            rng,
        );
        let head = Linear::new(store, "encoder.head", config.token_dim, 2 * config.semantic_dim, Init::Scaled(1.0), rng);
        Ok(Self { config, token_table, input, blocks, gru, style, head })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn token_table(&self) -> Option<ParamId> {
        self.token_table
    }

    pub fn blocks(&self) -> &[FftBlock] {
        &self.blocks
    }

    pub fn gru(&self) -> &Gru {
        &self.gru
    }

    pub fn style(&self) -> &StyleTokens {
        &self.style
    }

    pub fn head(&self) -> &Linear {
        &self.head
    }

    fn embed(&self, g: &mut Graph, tokens: &PromptTokens) -> Result<Var, PromptError> {
        match tokens {
            PromptTokens::Internal { token_ids } => {
                let table = self.token_table.ok_or(PromptError::NoTokenTable)?;
                let vocab = g.store().get(table).rows();
                if token_ids.is_empty() {
                    return Err(PromptError::EmptyPrompt);
                }
                if let Some(bad) = token_ids.iter().find(|&&t| t >= vocab) {
                    return Err(PromptError::TokenOutOfRange { id: *bad, vocab });
                }
                let table = g.param(table);
                Ok(g.select_rows(table, token_ids))
            }
            PromptTokens::External { embeddings } => {
                if embeddings.cols() != self.config.embed_dim {
                    return Err(PromptError::DimMismatch { expected: self.config.embed_dim, got: embeddings.cols() });
                }
                Ok(g.leaf(embeddings.clone()))
            }
        }
    }

    /// Builds the encoder graph; returns `(mean, raw_logvar)` rows before clamping.
    pub fn head_graph(&self, g: &mut Graph, tokens: &PromptTokens) -> Result<(Var, Var), PromptError> {
        let embedded = self.embed(g, tokens)?;
        let len = g.value(embedded).rows();
        let projected = self.input.forward_graph(g, embedded);
        let mut seq = g.offset(projected, &position_encoding(len, self.config.hidden));
        for block in &self.blocks {
            seq = block.forward_graph(g, seq).seq;
        }
        let state = self.gru.forward_graph(g, seq);
        let style = self.style.forward_graph(g, state).embedding;
        let out = self.head.forward_graph(g, style);
        let d = self.config.semantic_dim;
        Ok((g.slice_cols(out, 0, d), g.slice_cols(out, d, 2 * d)))
    }

    /// Mean and clamped log-variance as `1×d` nodes.
    pub fn prior_graph(&self, g: &mut Graph, tokens: &PromptTokens) -> Result<(Var, Var), PromptError> {
        let (mean, raw) = self.head_graph(g, tokens)?;
        Ok((mean, g.clamp(raw, LOGVAR_MIN, LOGVAR_MAX)))
    }

    pub fn encode(&self, store: &ParamStore, tokens: &PromptTokens) -> Result<GaussianPrior, PromptError> {
        let mut g = Graph::new(store);
        let (mean, logvar) = self.prior_graph(&mut g, tokens)?;
        GaussianPrior::new(g.value(mean).as_slice().to_vec(), g.value(logvar).as_slice().to_vec())
    }
}
