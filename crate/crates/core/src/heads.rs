//! Task heads: the sentiment classifier and the span-logit extractor, plus
//! constrained span decoding and the complete backbone+head networks.
//!
//! Classifier: features of the `<s>` token → dropout → affine H→3 → softmax.
//! Span head: per-token features (optionally summed with sentiment and
//! coverage embeddings) → dropout → three width-3 same-padded convolutions →
//! two per-token affines → (start, end) logit per position.

use thiserror::Error;

use crate::corpus::Sentiment;
use crate::encoder::{EncoderConfig, EncoderError, EncoderModel};
use crate::num::{
    smooth_labels, softmax, NumError, ParamStore, Rng, Tape, Tensor, Var,
};
use crate::tokenizer::Encoding;

const INIT_STD: f64 = 0.02;
const MASK_NEG: f64 = -1e30;

#[derive(Debug, Error)]
pub enum HeadsError {
    #[error("no valid position to decode")]
    NoValidPosition,
    #[error("span head expects {0} conditioning but none was provided")]
    MissingConditioning(&'static str),
    #[error("encoding carries no span label")]
    MissingSpanLabel,
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Num(#[from] NumError),
}

/// Probabilities over (positive, negative, neutral).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SentimentProbs {
    pub probs: [f64; 3],
}

impl SentimentProbs {
    pub fn argmax(&self) -> Sentiment {
        let mut best = 0;
        for i in 1..3 {
            if self.probs[i] > self.probs[best] {
                best = i;
            }
        }
        Sentiment::from_code(best).expect("three classes")
    }
}

/// Start/end logits with the decodable-position mask already applied:
/// positions outside the text region hold −∞.
#[derive(Debug, Clone)]
pub struct SpanLogits {
    pub start_logits: Vec<f64>,
    pub end_logits: Vec<f64>,
    pub valid_mask: Vec<bool>,
}

impl SpanLogits {
    /// Build from a rank-2 (L, 2) output, masking invalid positions to −∞.
    pub fn from_output(output: &Tensor, valid_mask: Vec<bool>) -> SpanLogits {
        let (rows, _) = output.dims2().expect("span output is rank 2");
        let mut start_logits = vec![f64::NEG_INFINITY; rows];
        let mut end_logits = vec![f64::NEG_INFINITY; rows];
        for r in 0..rows {
            if valid_mask[r] {
                start_logits[r] = output.get2(r, 0);
                end_logits[r] = output.get2(r, 1);
            }
        }
        SpanLogits {
            start_logits,
            end_logits,
            valid_mask,
        }
    }
}

/// Joint argmax of `start[s] + end[e]` over valid positions with `s ≤ e`.
/// Ties break to the smallest start, then the smallest end.
pub fn decode_span(logits: &SpanLogits) -> Result<(usize, usize), HeadsError> {
    let n = logits.start_logits.len();
    // Best valid end index at or after each position, smallest on ties.
    let mut best_end: Vec<Option<usize>> = vec![None; n];
    let mut current: Option<usize> = None;
    for i in (0..n).rev() {
        if logits.valid_mask[i]
            && current.is_none_or(|c| logits.end_logits[i] >= logits.end_logits[c])
        {
            current = Some(i);
        }
        best_end[i] = current;
    }
    let mut best: Option<(f64, usize, usize)> = None;
    for s in 0..n {
        if !logits.valid_mask[s] {
            continue;
        }
        let Some(e) = best_end[s] else { continue };
        let total = logits.start_logits[s] + logits.end_logits[e];
        if best.is_none_or(|(t, _, _)| total > t) {
            best = Some((total, s, e));
        }
    }
    best.map(|(_, s, e)| (s, e)).ok_or(HeadsError::NoValidPosition)
}

/// Dropout + fully-connected classification head.
pub struct ClassifierHead {
    weight: usize,
    bias: usize,
    pub dropout: f64,
}

impl ClassifierHead {
    pub fn init(store: &mut ParamStore, hidden: usize, dropout: f64, rng: &mut Rng) -> Self {
        ClassifierHead {
            weight: store.add("cls.weight", Tensor::randn(&[hidden, 3], INIT_STD, rng)),
            bias: store.add("cls.bias", Tensor::zeros(&[3])),
            dropout,
        }
    }

    /// (1, 3) logits from (L, H) features.
    pub fn logits(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        features: Var,
        rng: Option<&mut Rng>,
    ) -> Result<Var, NumError> {
        let pooled = tape.slice_rows(features, 0, 1)?;
        let pooled = tape.dropout(pooled, self.dropout, rng);
        let w = tape.param(store, self.weight);
        let b = tape.param(store, self.bias);
        let logits = tape.matmul(pooled, w)?;
        tape.add_bias(logits, b)
    }

    pub fn weight_index(&self) -> usize {
        self.weight
    }
}

/// Hyperparameters of the span head.
#[derive(Debug, Clone, PartialEq)]
pub struct SpanHeadConfig {
    pub conv_channels: [usize; 3],
    pub fc_hidden: usize,
    pub kernel: usize,
    pub dropout: f64,
    /// Rows of the coverage bucket table (κ+1 buckets).
    pub coverage_buckets: usize,
}

impl SpanHeadConfig {
    /// Full-scale head dimensions for a 768-wide backbone.
    pub fn table_scale() -> Self {
        SpanHeadConfig {
            conv_channels: [256, 128, 64],
            fc_hidden: 32,
            kernel: 3,
            dropout: 0.3,
            coverage_buckets: 16,
        }
    }

    /// Proportional head for the desk backbone.
    pub fn desk() -> Self {
        SpanHeadConfig {
            conv_channels: [64, 32, 16],
            fc_hidden: 8,
            kernel: 3,
            dropout: 0.3,
            coverage_buckets: 16,
        }
    }
}

/// Per-token auxiliary channels for coverage conditioning: a 0/1 indicator
/// of the prior span plus the integer coverage bucket.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoverageChannels {
    pub in_span: Vec<u8>,
    pub bucket: usize,
}

/// Conditioning inputs for one span-head forward pass.
#[derive(Debug, Clone, Default)]
pub struct SpanAux {
    pub sentiment: Option<Sentiment>,
    pub coverage: Option<CoverageChannels>,
}

pub struct SpanHead {
    convs: Vec<(usize, usize)>,
    fc1: (usize, usize),
    fc2: (usize, usize),
    sentiment_embedding: Option<usize>,
    coverage_span_embedding: Option<usize>,
    coverage_bucket_embedding: Option<usize>,
    pub config: SpanHeadConfig,
}

impl SpanHead {
    pub fn init(
        store: &mut ParamStore,
        hidden: usize,
        config: SpanHeadConfig,
        use_sentiment: bool,
        use_coverage: bool,
        rng: &mut Rng,
    ) -> Self {
        let k = config.kernel;
        let mut convs = Vec::new();
        let mut c_in = hidden;
        for (i, &c_out) in config.conv_channels.iter().enumerate() {
            let w = store.add(
                format!("span.conv{i}.weight"),
                Tensor::randn(&[c_out, c_in, k], INIT_STD, rng),
            );
            let b = store.add(format!("span.conv{i}.bias"), Tensor::zeros(&[c_out]));
            convs.push((w, b));
            c_in = c_out;
        }
        let fc1 = (
            store.add(
                "span.fc1.weight",
                Tensor::randn(&[c_in, config.fc_hidden], INIT_STD, rng),
            ),
            store.add("span.fc1.bias", Tensor::zeros(&[config.fc_hidden])),
        );
        let fc2 = (
            store.add(
                "span.fc2.weight",
                Tensor::randn(&[config.fc_hidden, 2], INIT_STD, rng),
            ),
            store.add("span.fc2.bias", Tensor::zeros(&[2])),
        );
        let sentiment_embedding = use_sentiment.then(|| {
            store.add(
                "span.sentiment_embedding",
                Tensor::randn(&[3, hidden], INIT_STD, rng),
            )
        });
        let (coverage_span_embedding, coverage_bucket_embedding) = if use_coverage {
            (
                Some(store.add(
                    "span.coverage_span_embedding",
                    Tensor::randn(&[2, hidden], INIT_STD, rng),
                )),
                Some(store.add(
                    "span.coverage_bucket_embedding",
                    Tensor::randn(&[config.coverage_buckets, hidden], INIT_STD, rng),
                )),
            )
        } else {
            (None, None)
        };
        SpanHead {
            convs,
            fc1,
            fc2,
            sentiment_embedding,
            coverage_span_embedding,
            coverage_bucket_embedding,
            config,
        }
    }

    pub fn uses_sentiment(&self) -> bool {
        self.sentiment_embedding.is_some()
    }

    pub fn uses_coverage(&self) -> bool {
        self.coverage_span_embedding.is_some()
    }

    /// (L, 2) start/end outputs from (L, H) features.
    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        features: Var,
        attention_mask: &[u8],
        aux: &SpanAux,
        rng: Option<&mut Rng>,
    ) -> Result<Var, HeadsError> {
        let (len, hidden) = tape.value(features).dims2()?;
        let mut x = features;

        if let Some(table_idx) = self.sentiment_embedding {
            let sentiment = aux
                .sentiment
                .ok_or(HeadsError::MissingConditioning("sentiment"))?;
            let table = tape.param(store, table_idx);
            let rows = tape.embedding(table, &vec![sentiment.code(); len])?;
            x = tape.add(x, rows)?;
        }
        if let (Some(span_idx), Some(bucket_idx)) =
            (self.coverage_span_embedding, self.coverage_bucket_embedding)
        {
            let cov = aux
                .coverage
                .as_ref()
                .ok_or(HeadsError::MissingConditioning("coverage"))?;
            let ids: Vec<usize> = cov.in_span.iter().map(|&v| (v != 0) as usize).collect();
            let span_table = tape.param(store, span_idx);
            let span_rows = tape.embedding(span_table, &ids)?;
            x = tape.add(x, span_rows)?;
            let bucket = cov.bucket.min(self.config.coverage_buckets - 1);
            let bucket_table = tape.param(store, bucket_idx);
            let bucket_rows = tape.embedding(bucket_table, &vec![bucket; len])?;
            x = tape.add(x, bucket_rows)?;
        }

        // Zero masked rows so the convolutions cannot leak padding features.
        let mut row_mask = Tensor::zeros(&[len, hidden]);
        for (r, &m) in attention_mask.iter().enumerate() {
            if m != 0 {
                for c in 0..hidden {
                    row_mask.set2(r, c, 1.0);
                }
            }
        }
        x = tape.mul_const(x, &row_mask)?;
        x = tape.dropout(x, self.config.dropout, rng);

        for &(w, b) in &self.convs {
            let wv = tape.param(store, w);
            let bv = tape.param(store, b);
            x = tape.conv1d_same(x, wv, bv)?;
            x = tape.relu(x);
        }
        let (w1, b1) = self.fc1;
        let w1 = tape.param(store, w1);
        let b1 = tape.param(store, b1);
        x = tape.matmul(x, w1)?;
        x = tape.add_bias(x, b1)?;
        x = tape.relu(x);
        let (w2, b2) = self.fc2;
        let w2 = tape.param(store, w2);
        let b2 = tape.param(store, b2);
        x = tape.matmul(x, w2)?;
        Ok(tape.add_bias(x, b2)?)
    }
}

/// Smoothed cross-entropy over the start and end one-hots of an encoding,
/// masked to the text region. Returns the summed scalar loss.
pub fn span_training_loss(
    tape: &mut Tape,
    output: Var,
    encoding: &Encoding,
    alpha: f64,
) -> Result<Var, HeadsError> {
    let (len, _) = tape.value(output).dims2()?;
    let (label_start, label_end) = encoding.label_span().ok_or(HeadsError::MissingSpanLabel)?;
    let region = encoding.text_region();
    let n_valid = region.len();

    let mut mask_bias = Tensor::zeros(&[1, len]);
    for i in 0..len {
        if !region.contains(&i) {
            mask_bias.data_mut()[i] = MASK_NEG;
        }
    }
    let target_row = |hot: usize| -> Result<Tensor, NumError> {
        let mut row = Tensor::zeros(&[1, len]);
        let smoothing = alpha / n_valid as f64;
        for i in region.clone() {
            row.data_mut()[i] = if i == hot {
                (1.0 - alpha) + smoothing
            } else {
                smoothing
            };
        }
        Ok(row)
    };

    let mut total: Option<Var> = None;
    for (col, hot) in [(0usize, label_start), (1usize, label_end)] {
        let logits_col = tape.slice_cols(output, col, 1)?;
        let logits_row = tape.reshape(logits_col, &[1, len])?;
        let masked = tape.add_const(logits_row, &mask_bias)?;
        let ce = tape.cross_entropy_rows(masked, &target_row(hot)?)?;
        total = Some(match total {
            Some(t) => tape.add(t, ce)?,
            None => ce,
        });
    }
    Ok(total.expect("two terms"))
}

/// Smoothed cross-entropy for one classification example.
pub fn classification_loss(
    tape: &mut Tape,
    logits: Var,
    label: Sentiment,
    alpha: f64,
) -> Result<Var, HeadsError> {
    let target = smooth_labels(&crate::num::one_hot(label.code(), 3), alpha, 3)?;
    let target = Tensor::new(vec![1, 3], target)?;
    Ok(tape.cross_entropy_rows(logits, &target)?)
}

/// Backbone plus classification head over one parameter store.
pub struct ClassifierNet {
    pub store: ParamStore,
    pub encoder: EncoderModel,
    pub head: ClassifierHead,
}

impl ClassifierNet {
    pub fn init(config: EncoderConfig, dropout: f64, seed: u64) -> Result<Self, HeadsError> {
        let mut store = ParamStore::new();
        let mut rng = Rng::new(seed);
        let encoder = EncoderModel::init(config, &mut store, &mut rng)?;
        let head = ClassifierHead::init(
            &mut store,
            encoder.config.hidden_dim,
            dropout,
            &mut rng,
        );
        Ok(ClassifierNet {
            store,
            encoder,
            head,
        })
    }

    pub fn logits(
        &self,
        tape: &mut Tape,
        encoding: &Encoding,
        rng: Option<&mut Rng>,
    ) -> Result<Var, HeadsError> {
        let features = self.encoder.forward(
            tape,
            &self.store,
            &encoding.input_ids,
            &encoding.attention_mask,
        )?;
        Ok(self.head.logits(tape, &self.store, features, rng)?)
    }

    /// Eval-mode probabilities (dropout off).
    pub fn classify(&self, encoding: &Encoding) -> Result<SentimentProbs, HeadsError> {
        let mut tape = Tape::new();
        let logits = self.logits(&mut tape, encoding, None)?;
        let probs = softmax(tape.value(logits).row(0));
        Ok(SentimentProbs {
            probs: [probs[0], probs[1], probs[2]],
        })
    }

    /// Per-token features in eval mode, for activation mapping.
    pub fn features(&self, encoding: &Encoding) -> Result<Tensor, HeadsError> {
        let mut tape = Tape::new();
        let features = self.encoder.forward(
            &mut tape,
            &self.store,
            &encoding.input_ids,
            &encoding.attention_mask,
        )?;
        Ok(tape.value(features).clone())
    }

    /// Classifier weight matrix (H, 3).
    pub fn class_weights(&self) -> &Tensor {
        self.store.value(self.head.weight_index())
    }
}

/// Backbone plus span head over one parameter store.
pub struct SpanNet {
    pub store: ParamStore,
    pub encoder: EncoderModel,
    pub head: SpanHead,
}

impl SpanNet {
    pub fn init(
        config: EncoderConfig,
        head_config: SpanHeadConfig,
        use_sentiment: bool,
        use_coverage: bool,
        seed: u64,
    ) -> Result<Self, HeadsError> {
        let mut store = ParamStore::new();
        let mut rng = Rng::new(seed);
        let encoder = EncoderModel::init(config, &mut store, &mut rng)?;
        let head = SpanHead::init(
            &mut store,
            encoder.config.hidden_dim,
            head_config,
            use_sentiment,
            use_coverage,
            &mut rng,
        );
        Ok(SpanNet {
            store,
            encoder,
            head,
        })
    }

    pub fn output(
        &self,
        tape: &mut Tape,
        encoding: &Encoding,
        aux: &SpanAux,
        rng: Option<&mut Rng>,
    ) -> Result<Var, HeadsError> {
        let features = self.encoder.forward(
            tape,
            &self.store,
            &encoding.input_ids,
            &encoding.attention_mask,
        )?;
        self.head.forward(
            tape,
            &self.store,
            features,
            &encoding.attention_mask,
            aux,
            rng,
        )
    }

    /// Eval-mode span logits restricted to the text region.
    pub fn span_logits(
        &self,
        encoding: &Encoding,
        aux: &SpanAux,
    ) -> Result<SpanLogits, HeadsError> {
        let mut tape = Tape::new();
        let output = self.output(&mut tape, encoding, aux, None)?;
        let region = encoding.text_region();
        let valid: Vec<bool> = (0..encoding.seq_len()).map(|i| region.contains(&i)).collect();
        Ok(SpanLogits::from_output(tape.value(output), valid))
    }

    /// Eval-mode decoded span (inclusive token indices).
    pub fn predict_span(
        &self,
        encoding: &Encoding,
        aux: &SpanAux,
    ) -> Result<(usize, usize), HeadsError> {
        decode_span(&self.span_logits(encoding, aux)?)
    }
}
