//! Bidirectional transformer encoder producing per-token features.
//!
//! Pre-layer-norm blocks, learned absolute position embeddings, multi-head
//! self-attention restricted by the attention mask. Masked (padding) key
//! columns receive a large negative additive bias, so their softmax weight
//! underflows to exactly zero and non-pad outputs are independent of how far
//! the sequence is padded.

use thiserror::Error;

use crate::num::{NumError, ParamStore, Rng, Tape, Tensor, Var};

const INIT_STD: f64 = 0.02;
const MASK_NEG: f64 = -1e30;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncoderConfig {
    pub n_layers: usize,
    pub n_heads: usize,
    pub hidden_dim: usize,
    pub ff_dim: usize,
    pub max_len: usize,
    pub vocab_size: usize,
}

impl EncoderConfig {
    /// Desk-scale preset: trains from scratch on a CPU in seconds to
    /// minutes, depending on corpus size and sequence length.
    pub fn desk(vocab_size: usize, max_len: usize) -> Self {
        EncoderConfig {
            n_layers: 2,
            n_heads: 4,
            hidden_dim: 64,
            ff_dim: 256,
            max_len,
            vocab_size,
        }
    }

    /// Base-scale preset (768-wide, 12 layers), matching the full-scale head
    /// dimensions. Constructible, but far beyond desk-scale training.
    pub fn base(vocab_size: usize, max_len: usize) -> Self {
        EncoderConfig {
            n_layers: 12,
            n_heads: 12,
            hidden_dim: 768,
            ff_dim: 3072,
            max_len,
            vocab_size,
        }
    }

    pub fn validate(&self) -> Result<(), EncoderError> {
        if self.hidden_dim == 0 || self.n_heads == 0 || !self.hidden_dim.is_multiple_of(self.n_heads)
        {
            return Err(EncoderError::BadConfig(format!(
                "hidden dim {} must be a positive multiple of {} heads",
                self.hidden_dim, self.n_heads
            )));
        }
        if self.n_layers == 0 || self.ff_dim == 0 || self.max_len == 0 || self.vocab_size == 0 {
            return Err(EncoderError::BadConfig("zero-sized dimension".to_string()));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.hidden_dim / self.n_heads
    }
}

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("bad encoder config: {0}")]
    BadConfig(String),
    #[error("token id {id} outside vocabulary of {vocab}")]
    VocabOverflow { id: u32, vocab: usize },
    #[error("sequence of {len} exceeds max_len {max}")]
    SequenceTooLong { len: usize, max: usize },
    #[error(transparent)]
    Num(#[from] NumError),
}

struct LayerParams {
    ln1_gain: usize,
    ln1_bias: usize,
    wq: usize,
    bq: usize,
    wk: usize,
    bk: usize,
    wv: usize,
    bv: usize,
    wo: usize,
    bo: usize,
    ln2_gain: usize,
    ln2_bias: usize,
    ff_w1: usize,
    ff_b1: usize,
    ff_w2: usize,
    ff_b2: usize,
}

/// Parameter indices of one encoder within a shared store.
pub struct EncoderModel {
    pub config: EncoderConfig,
    token_embedding: usize,
    position_embedding: usize,
    layers: Vec<LayerParams>,
    final_gain: usize,
    final_bias: usize,
}

impl EncoderModel {
    /// Register freshly initialised parameters in `store`. Deterministic
    /// given the rng state: weights are N(0, 0.02²), norms start at identity.
    pub fn init(
        config: EncoderConfig,
        store: &mut ParamStore,
        rng: &mut Rng,
    ) -> Result<Self, EncoderError> {
        config.validate()?;
        let h = config.hidden_dim;
        let randn =
            |store: &mut ParamStore, name: String, shape: &[usize], rng: &mut Rng| {
                store.add(name, Tensor::randn(shape, INIT_STD, rng))
            };
        let token_embedding = randn(
            store,
            "enc.token_embedding".to_string(),
            &[config.vocab_size, h],
            rng,
        );
        let position_embedding = randn(
            store,
            "enc.position_embedding".to_string(),
            &[config.max_len, h],
            rng,
        );
        let mut layers = Vec::with_capacity(config.n_layers);
        for l in 0..config.n_layers {
            let p = |suffix: &str| format!("enc.layer{l}.{suffix}");
            layers.push(LayerParams {
                ln1_gain: store.add(p("ln1.gain"), Tensor::full(&[h], 1.0)),
                ln1_bias: store.add(p("ln1.bias"), Tensor::zeros(&[h])),
                wq: randn(store, p("attn.wq"), &[h, h], rng),
                bq: store.add(p("attn.bq"), Tensor::zeros(&[h])),
                wk: randn(store, p("attn.wk"), &[h, h], rng),
                bk: store.add(p("attn.bk"), Tensor::zeros(&[h])),
                wv: randn(store, p("attn.wv"), &[h, h], rng),
                bv: store.add(p("attn.bv"), Tensor::zeros(&[h])),
                wo: randn(store, p("attn.wo"), &[h, h], rng),
                bo: store.add(p("attn.bo"), Tensor::zeros(&[h])),
                ln2_gain: store.add(p("ln2.gain"), Tensor::full(&[h], 1.0)),
                ln2_bias: store.add(p("ln2.bias"), Tensor::zeros(&[h])),
                ff_w1: randn(store, p("ff.w1"), &[h, config.ff_dim], rng),
                ff_b1: store.add(p("ff.b1"), Tensor::zeros(&[config.ff_dim])),
                ff_w2: randn(store, p("ff.w2"), &[config.ff_dim, h], rng),
                ff_b2: store.add(p("ff.b2"), Tensor::zeros(&[h])),
            });
        }
        let final_gain = store.add("enc.final.gain", Tensor::full(&[h], 1.0));
        let final_bias = store.add("enc.final.bias", Tensor::zeros(&[h]));
        Ok(EncoderModel {
            config,
            token_embedding,
            position_embedding,
            layers,
            final_gain,
            final_bias,
        })
    }

    /// Per-token features, shape (L, H).
    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        input_ids: &[u32],
        attention_mask: &[u8],
    ) -> Result<Var, EncoderError> {
        let len = input_ids.len();
        if len > self.config.max_len {
            return Err(EncoderError::SequenceTooLong {
                len,
                max: self.config.max_len,
            });
        }
        if let Some(&id) = input_ids
            .iter()
            .find(|&&id| id as usize >= self.config.vocab_size)
        {
            return Err(EncoderError::VocabOverflow {
                id,
                vocab: self.config.vocab_size,
            });
        }
        debug_assert_eq!(attention_mask.len(), len);

        let ids: Vec<usize> = input_ids.iter().map(|&i| i as usize).collect();
        let tok_table = tape.param(store, self.token_embedding);
        let tok = tape.embedding(tok_table, &ids)?;
        let pos_table = tape.param(store, self.position_embedding);
        let pos = tape.slice_rows(pos_table, 0, len)?;
        let mut x = tape.add(tok, pos)?;

        // Additive key mask: 0 on visible columns, a huge negative bias on
        // padded ones. exp() of the shifted score underflows to exactly 0.
        let mut mask_bias = Tensor::zeros(&[len, len]);
        for q in 0..len {
            for k in 0..len {
                if attention_mask[k] == 0 {
                    mask_bias.set2(q, k, MASK_NEG);
                }
            }
        }
        let scale = 1.0 / (self.config.head_dim() as f64).sqrt();

        for layer in &self.layers {
            let g1 = tape.param(store, layer.ln1_gain);
            let b1 = tape.param(store, layer.ln1_bias);
            let normed = tape.layer_norm(x, g1, b1)?;

            let wq = tape.param(store, layer.wq);
            let bq = tape.param(store, layer.bq);
            let q_all = tape.matmul(normed, wq)?;
            let q_all = tape.add_bias(q_all, bq)?;
            let wk = tape.param(store, layer.wk);
            let bk = tape.param(store, layer.bk);
            let k_all = tape.matmul(normed, wk)?;
            let k_all = tape.add_bias(k_all, bk)?;
            let wv = tape.param(store, layer.wv);
            let bv = tape.param(store, layer.bv);
            let v_all = tape.matmul(normed, wv)?;
            let v_all = tape.add_bias(v_all, bv)?;

            let dh = self.config.head_dim();
            let mut contexts = Vec::with_capacity(self.config.n_heads);
            for head in 0..self.config.n_heads {
                let q = tape.slice_cols(q_all, head * dh, dh)?;
                let k = tape.slice_cols(k_all, head * dh, dh)?;
                let v = tape.slice_cols(v_all, head * dh, dh)?;
                let kt = tape.transpose(k)?;
                let scores = tape.matmul(q, kt)?;
                let scores = tape.scale(scores, scale);
                let scores = tape.add_const(scores, &mask_bias)?;
                let attn = tape.softmax_rows(scores)?;
                contexts.push(tape.matmul(attn, v)?);
            }
            let ctx = tape.concat_cols(&contexts)?;
            let wo = tape.param(store, layer.wo);
            let bo = tape.param(store, layer.bo);
            let attn_out = tape.matmul(ctx, wo)?;
            let attn_out = tape.add_bias(attn_out, bo)?;
            x = tape.add(x, attn_out)?;

            let g2 = tape.param(store, layer.ln2_gain);
            let b2 = tape.param(store, layer.ln2_bias);
            let normed2 = tape.layer_norm(x, g2, b2)?;
            let w1 = tape.param(store, layer.ff_w1);
            let b1f = tape.param(store, layer.ff_b1);
            let hidden = tape.matmul(normed2, w1)?;
            let hidden = tape.add_bias(hidden, b1f)?;
            let hidden = tape.gelu(hidden);
            let w2 = tape.param(store, layer.ff_w2);
            let b2f = tape.param(store, layer.ff_b2);
            let ff_out = tape.matmul(hidden, w2)?;
            let ff_out = tape.add_bias(ff_out, b2f)?;
            x = tape.add(x, ff_out)?;
        }

        let g = tape.param(store, self.final_gain);
        let b = tape.param(store, self.final_bias);
        Ok(tape.layer_norm(x, g, b)?)
    }

    pub fn token_embedding_index(&self) -> usize {
        self.token_embedding
    }

    pub fn position_embedding_index(&self) -> usize {
        self.position_embedding
    }
}
