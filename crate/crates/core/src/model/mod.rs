//! Attention encoder-decoder.
//!
//! A bidirectional GRU encoder produces `h_i = [h_bwd_i; h_fwd_i]`. Each
//! decoder step first folds the previous target word into an intermediate
//! state `s'_t = u(s_{t-1}, emb(y_{t-1}))`, attends over `h` with a two-layer
//! network `r(s'_t, h_i)`, updates `s_t = q(s'_t, H_t)` and predicts the next
//! word through the readout `g(s_t, emb(y_{t-1}), H_t)` and a linear output
//! projection.

mod forward;
mod loss;

pub use forward::{attend, decoder_step, encode, initial_state, DecoderStepState, EncoderStates};
pub use loss::{batch_nll_grad, sentence_nll, sentence_nll_grad, token_count};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Vocabulary;
use crate::nn::{join_name, Feedforward2Params, GruParams, NnError, ParamSet, Tensor, INIT_SCALE};

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("empty source sentence")]
    EmptySource,
    #[error("{side} id {id} out of range for vocabulary of size {size}")]
    IdOutOfRange {
        side: &'static str,
        id: usize,
        size: usize,
    },
    #[error("invalid model configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Nn(#[from] NnError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub embedding_dim: usize,
    pub hidden_dim: usize,
    pub attention_hidden: usize,
    pub readout_hidden: usize,
    pub src_vocab_size: usize,
    pub tgt_vocab_size: usize,
    pub max_decode_len: usize,
}

impl ModelConfig {
    /// Desk-scale sizes for the given vocabularies.
    pub fn desk(src_vocab_size: usize, tgt_vocab_size: usize) -> Self {
        ModelConfig {
            embedding_dim: 32,
            hidden_dim: 64,
            attention_hidden: 32,
            readout_hidden: 64,
            src_vocab_size,
            tgt_vocab_size,
            max_decode_len: 100,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let fields = [
            ("embedding_dim", self.embedding_dim),
            ("hidden_dim", self.hidden_dim),
            ("attention_hidden", self.attention_hidden),
            ("readout_hidden", self.readout_hidden),
            ("src_vocab_size", self.src_vocab_size),
            ("tgt_vocab_size", self.tgt_vocab_size),
            ("max_decode_len", self.max_decode_len),
        ];
        for (name, v) in fields {
            if v == 0 {
                return Err(ModelError::InvalidConfig(format!(
                    "{name} must be positive"
                )));
            }
        }
        Ok(())
    }
}

/// Every trainable tensor of the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub src_embedding: Tensor,
    pub tgt_embedding: Tensor,
    pub encoder_fwd: GruParams,
    pub encoder_bwd: GruParams,
    /// `u`: previous state × previous word embedding → `s'_t`.
    pub decoder_u: GruParams,
    /// `q`: `s'_t` × context `H_t` → `s_t`.
    pub decoder_q: GruParams,
    /// `r`: `[s'_t; h_i]` → scalar alignment score.
    pub attention: Feedforward2Params,
    /// `g`: `[s_t; emb(y_{t-1}); H_t]` → readout features.
    pub readout: Feedforward2Params,
    pub output_w: Tensor,
    pub output_b: Tensor,
    /// `s_0 = tanh(W_s h_bwd_1)`.
    pub init_w: Tensor,
}

impl ModelParams {
    pub fn zeros(cfg: &ModelConfig) -> Self {
        let (e, d) = (cfg.embedding_dim, cfg.hidden_dim);
        ModelParams {
            src_embedding: Tensor::zeros(&[cfg.src_vocab_size, e]),
            tgt_embedding: Tensor::zeros(&[cfg.tgt_vocab_size, e]),
            encoder_fwd: GruParams::zeros(e, d),
            encoder_bwd: GruParams::zeros(e, d),
            decoder_u: GruParams::zeros(e, d),
            decoder_q: GruParams::zeros(2 * d, d),
            attention: Feedforward2Params::zeros(3 * d, cfg.attention_hidden, 1),
            readout: Feedforward2Params::zeros(3 * d + e, cfg.readout_hidden, cfg.readout_hidden),
            output_w: Tensor::zeros(&[cfg.tgt_vocab_size, cfg.readout_hidden]),
            output_b: Tensor::zeros(&[cfg.tgt_vocab_size]),
            init_w: Tensor::zeros(&[d, d]),
        }
    }

    /// Weights uniform in `[-0.08, 0.08]`, biases zero.
    pub fn init<R: Rng + ?Sized>(cfg: &ModelConfig, rng: &mut R) -> Result<Self, ModelError> {
        Self::init_with_scale(cfg, INIT_SCALE, rng)
    }

    pub fn init_with_scale<R: Rng + ?Sized>(
        cfg: &ModelConfig,
        scale: f64,
        rng: &mut R,
    ) -> Result<Self, ModelError> {
        cfg.validate()?;
        let (e, d) = (cfg.embedding_dim, cfg.hidden_dim);
        Ok(ModelParams {
            src_embedding: Tensor::uniform(&[cfg.src_vocab_size, e], scale, rng),
            tgt_embedding: Tensor::uniform(&[cfg.tgt_vocab_size, e], scale, rng),
            encoder_fwd: GruParams::init(e, d, scale, rng),
            encoder_bwd: GruParams::init(e, d, scale, rng),
            decoder_u: GruParams::init(e, d, scale, rng),
            decoder_q: GruParams::init(2 * d, d, scale, rng),
            attention: Feedforward2Params::init(3 * d, cfg.attention_hidden, 1, scale, rng),
            readout: Feedforward2Params::init(
                3 * d + e,
                cfg.readout_hidden,
                cfg.readout_hidden,
                scale,
                rng,
            ),
            output_w: Tensor::uniform(&[cfg.tgt_vocab_size, cfg.readout_hidden], scale, rng),
            output_b: Tensor::zeros(&[cfg.tgt_vocab_size]),
            init_w: Tensor::uniform(&[d, d], scale, rng),
        })
    }

    pub fn hidden_dim(&self) -> usize {
        self.init_w.rows()
    }

    pub fn embedding_dim(&self) -> usize {
        self.src_embedding.cols()
    }

    pub fn src_vocab_size(&self) -> usize {
        self.src_embedding.rows()
    }

    pub fn tgt_vocab_size(&self) -> usize {
        self.tgt_embedding.rows()
    }

    /// True when every tensor has the shape `cfg` implies.
    pub fn matches(&self, cfg: &ModelConfig) -> bool {
        let reference = ModelParams::zeros(cfg);
        self.named_tensors()
            .iter()
            .zip(reference.named_tensors())
            .all(|((_, a), (_, b))| a.shape() == b.shape())
    }

    /// Copies embedding and output rows into a model over new vocabularies.
    /// Rows for tokens present in both vocabularies are kept; new rows come
    /// from `fresh`.
    pub fn remap_vocabularies(
        &self,
        old_src: &Vocabulary,
        old_tgt: &Vocabulary,
        new_src: &Vocabulary,
        new_tgt: &Vocabulary,
        fresh: &ModelParams,
    ) -> ModelParams {
        let mut out = fresh.clone();
        out.encoder_fwd = self.encoder_fwd.clone();
        out.encoder_bwd = self.encoder_bwd.clone();
        out.decoder_u = self.decoder_u.clone();
        out.decoder_q = self.decoder_q.clone();
        out.attention = self.attention.clone();
        out.readout = self.readout.clone();
        out.init_w = self.init_w.clone();
        for new_id in 0..new_src.len() {
            if let Some(old_id) = new_src.token(new_id).and_then(|t| old_src.id(t)) {
                out.src_embedding
                    .row_mut(new_id)
                    .copy_from_slice(self.src_embedding.row(old_id));
            }
        }
        for new_id in 0..new_tgt.len() {
            if let Some(old_id) = new_tgt.token(new_id).and_then(|t| old_tgt.id(t)) {
                out.tgt_embedding
                    .row_mut(new_id)
                    .copy_from_slice(self.tgt_embedding.row(old_id));
                out.output_w
                    .row_mut(new_id)
                    .copy_from_slice(self.output_w.row(old_id));
                out.output_b.data_mut()[new_id] = self.output_b.data()[old_id];
            }
        }
        out
    }
}

impl ParamSet for ModelParams {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor)>) {
        out.push((join_name(prefix, "src_embedding"), &self.src_embedding));
        out.push((join_name(prefix, "tgt_embedding"), &self.tgt_embedding));
        self.encoder_fwd
            .collect(&join_name(prefix, "encoder_fwd"), out);
        self.encoder_bwd
            .collect(&join_name(prefix, "encoder_bwd"), out);
        self.decoder_u.collect(&join_name(prefix, "decoder_u"), out);
        self.decoder_q.collect(&join_name(prefix, "decoder_q"), out);
        self.attention.collect(&join_name(prefix, "attention"), out);
        self.readout.collect(&join_name(prefix, "readout"), out);
        out.push((join_name(prefix, "output_w"), &self.output_w));
        out.push((join_name(prefix, "output_b"), &self.output_b));
        out.push((join_name(prefix, "init_w"), &self.init_w));
    }

    fn collect_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Tensor>) {
        out.push(&mut self.src_embedding);
        out.push(&mut self.tgt_embedding);
        self.encoder_fwd.collect_mut(out);
        self.encoder_bwd.collect_mut(out);
        self.decoder_u.collect_mut(out);
        self.decoder_q.collect_mut(out);
        self.attention.collect_mut(out);
        self.readout.collect_mut(out);
        out.push(&mut self.output_w);
        out.push(&mut self.output_b);
        out.push(&mut self.init_w);
    }
}
