//! The end-to-end cascade: classify, extract a base span, refine it through
//! the coverage model, and map token indices back to text. Also ensemble
//! averaging over fold models and per-token class-activation maps.

use std::path::PathBuf;

use thiserror::Error;

use crate::corpus::{preprocess_text, Sentiment};
use crate::coverage::{refine, CoverageError, CoverageSpanModel, RefinementParams};
use crate::heads::{
    decode_span, ClassifierNet, HeadsError, SentimentProbs, SpanAux, SpanLogits, SpanNet,
};
use crate::num::softmax;
use crate::tokenizer::{
    assemble_example, token_span_to_text, Encoding, TokenizerError, Vocabulary,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("model missing: {0}")]
    ModelMissing(String),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("ensemble weights must be nonnegative and sum to 1 (got {0})")]
    BadWeights(f64),
    #[error(transparent)]
    Heads(#[from] HeadsError),
    #[error(transparent)]
    Coverage(#[from] CoverageError),
    #[error(transparent)]
    Tokenizer(#[from] TokenizerError),
}

/// Output record of the cascade for one sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelinePrediction {
    pub sentiment: Sentiment,
    pub sentiment_probs: SentimentProbs,
    pub subsentence: String,
    /// Inclusive token span within the encoding.
    pub span: (usize, usize),
    /// Byte offsets of the subsentence in the preprocessed text.
    pub span_chars: (usize, usize),
    /// True when the coverage model produced the final span.
    pub refined: bool,
    /// Preprocessed input the spans refer to.
    pub text: String,
}

/// Sentiment stage of the cascade.
pub trait SentimentStage {
    fn probs(&self, encoding: &Encoding) -> Result<SentimentProbs, PipelineError>;
}

impl SentimentStage for ClassifierNet {
    fn probs(&self, encoding: &Encoding) -> Result<SentimentProbs, PipelineError> {
        Ok(self.classify(encoding)?)
    }
}

/// Base span stage of the cascade.
pub trait BaseSpanStage {
    fn span_logits(
        &self,
        encoding: &Encoding,
        sentiment: Sentiment,
    ) -> Result<SpanLogits, PipelineError>;
}

impl BaseSpanStage for SpanNet {
    fn span_logits(
        &self,
        encoding: &Encoding,
        sentiment: Sentiment,
    ) -> Result<SpanLogits, PipelineError> {
        let aux = SpanAux {
            sentiment: self.head.uses_sentiment().then_some(sentiment),
            coverage: None,
        };
        Ok(SpanNet::span_logits(self, encoding, &aux)?)
    }
}

/// Elementwise weighted average of equal-length vectors.
pub fn ensemble_average(
    member_outputs: &[Vec<f64>],
    weights: &[f64],
) -> Result<Vec<f64>, PipelineError> {
    if member_outputs.len() != weights.len() {
        return Err(PipelineError::LengthMismatch(
            member_outputs.len(),
            weights.len(),
        ));
    }
    let Some(first) = member_outputs.first() else {
        return Err(PipelineError::LengthMismatch(0, weights.len()));
    };
    let mut out = vec![0.0; first.len()];
    for (member, &w) in member_outputs.iter().zip(weights) {
        if member.len() != first.len() {
            return Err(PipelineError::LengthMismatch(member.len(), first.len()));
        }
        for (o, &v) in out.iter_mut().zip(member) {
            *o += w * v;
        }
    }
    Ok(out)
}

/// Equal weights `1/N`.
pub fn equal_weights(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

/// Validate ensemble weights: nonnegative, summing to 1 within 1e-9.
pub fn validate_weights(weights: &[f64]) -> Result<(), PipelineError> {
    let sum: f64 = weights.iter().sum();
    if weights.iter().any(|&w| w < 0.0) || (sum - 1.0).abs() > 1e-9 {
        return Err(PipelineError::BadWeights(sum));
    }
    Ok(())
}

/// Ordered checkpoint paths with fusion weights.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSpec {
    pub members: Vec<PathBuf>,
    pub weights: Vec<f64>,
}

impl EnsembleSpec {
    pub fn equal(members: Vec<PathBuf>) -> Self {
        let weights = equal_weights(members.len());
        EnsembleSpec { members, weights }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.members.len() != self.weights.len() {
            return Err(PipelineError::LengthMismatch(
                self.members.len(),
                self.weights.len(),
            ));
        }
        validate_weights(&self.weights)
    }
}

/// Classifier ensemble: weighted average of member probabilities.
pub struct ClassifierEnsemble {
    pub members: Vec<ClassifierNet>,
    pub weights: Vec<f64>,
}

impl SentimentStage for ClassifierEnsemble {
    fn probs(&self, encoding: &Encoding) -> Result<SentimentProbs, PipelineError> {
        if self.members.is_empty() {
            return Err(PipelineError::ModelMissing("classifier ensemble".into()));
        }
        validate_weights(&self.weights)?;
        let outputs: Vec<Vec<f64>> = self
            .members
            .iter()
            .map(|m| m.classify(encoding).map(|p| p.probs.to_vec()))
            .collect::<Result<_, _>>()?;
        let fused = ensemble_average(&outputs, &self.weights)?;
        Ok(SentimentProbs {
            probs: [fused[0], fused[1], fused[2]],
        })
    }
}

/// Span ensemble: member logits become per-position probabilities, the
/// probabilities are averaged, and the fused vectors re-enter decoding in
/// log space.
pub struct SpanEnsemble {
    pub members: Vec<SpanNet>,
    pub weights: Vec<f64>,
}

impl SpanEnsemble {
    fn fused_logits(
        &self,
        collect: impl Fn(&SpanNet) -> Result<SpanLogits, PipelineError>,
    ) -> Result<SpanLogits, PipelineError> {
        if self.members.is_empty() {
            return Err(PipelineError::ModelMissing("span ensemble".into()));
        }
        validate_weights(&self.weights)?;
        let member_logits: Vec<SpanLogits> = self
            .members
            .iter()
            .map(collect)
            .collect::<Result<_, _>>()?;
        let valid = member_logits[0].valid_mask.clone();
        let to_probs = |v: &[f64]| softmax(v);
        let starts: Vec<Vec<f64>> = member_logits
            .iter()
            .map(|l| to_probs(&l.start_logits))
            .collect();
        let ends: Vec<Vec<f64>> = member_logits
            .iter()
            .map(|l| to_probs(&l.end_logits))
            .collect();
        let start_fused = ensemble_average(&starts, &self.weights)?;
        let end_fused = ensemble_average(&ends, &self.weights)?;
        let log = |v: Vec<f64>| -> Vec<f64> { v.into_iter().map(f64::ln).collect() };
        Ok(SpanLogits {
            start_logits: log(start_fused),
            end_logits: log(end_fused),
            valid_mask: valid,
        })
    }
}

impl SpanEnsemble {
    /// Fused logits for an explicit conditioning bundle, shared by every
    /// member (the usual fold-ensemble case).
    pub fn fused_with_aux(
        &self,
        encoding: &Encoding,
        aux: &SpanAux,
    ) -> Result<SpanLogits, PipelineError> {
        self.fused_logits(|m| Ok(SpanNet::span_logits(m, encoding, aux)?))
    }
}

impl BaseSpanStage for SpanEnsemble {
    fn span_logits(
        &self,
        encoding: &Encoding,
        sentiment: Sentiment,
    ) -> Result<SpanLogits, PipelineError> {
        self.fused_logits(|m| BaseSpanStage::span_logits(m, encoding, sentiment))
    }
}

impl CoverageSpanModel for SpanEnsemble {
    fn predict_with_coverage(
        &self,
        encoding: &Encoding,
        sentiment: Sentiment,
        channels: crate::heads::CoverageChannels,
    ) -> Result<(usize, usize), HeadsError> {
        let fused = self
            .fused_logits(|m| {
                let aux = SpanAux {
                    sentiment: m.head.uses_sentiment().then_some(sentiment),
                    coverage: m.head.uses_coverage().then_some(channels.clone()),
                };
                Ok(SpanNet::span_logits(m, encoding, &aux)?)
            })
            .map_err(|e| match e {
                PipelineError::Heads(h) => h,
                other => HeadsError::Num(crate::num::NumError::ShapeMismatch(other.to_string())),
            })?;
        decode_span(&fused)
    }
}

/// The three-stage cascade.
pub struct Pipeline {
    pub vocab: Vocabulary,
    pub max_len: usize,
    pub classifier: Box<dyn SentimentStage>,
    pub base: Box<dyn BaseSpanStage>,
    pub coverage: Box<dyn CoverageSpanModel>,
    pub params: RefinementParams,
}

impl Pipeline {
    /// Run the cascade on a raw sentence. `gold_sentiment` overrides the
    /// classifier's prediction for the downstream stages (the ablation axis
    /// for label-sourced sentiment); the classifier still reports its
    /// probabilities.
    pub fn predict(
        &self,
        sentence: &str,
        gold_sentiment: Option<Sentiment>,
    ) -> Result<PipelinePrediction, PipelineError> {
        let text = preprocess_text(sentence);
        // Classification uses a constant sentiment slot so no label leaks in.
        let enc_cls = assemble_example(
            &self.vocab,
            &text,
            Sentiment::Neutral,
            None,
            self.max_len,
        )?;
        let sentiment_probs = self.classifier.probs(&enc_cls)?;
        let sentiment = gold_sentiment.unwrap_or_else(|| sentiment_probs.argmax());

        if sentiment == Sentiment::Neutral {
            let span = enc_cls.full_text_span();
            let span_chars = (0, text.len());
            return Ok(PipelinePrediction {
                sentiment,
                sentiment_probs,
                subsentence: text.clone(),
                span,
                span_chars,
                refined: false,
                text,
            });
        }

        let enc = assemble_example(&self.vocab, &text, sentiment, None, self.max_len)?;
        let base_logits = self.base.span_logits(&enc, sentiment)?;
        let base_pred = decode_span(&base_logits)?;
        let outcome = refine(&enc, sentiment, base_pred, &self.params, &*self.coverage)?;
        let subsentence = token_span_to_text(&enc, outcome.span.0, outcome.span.1)?;
        let span_chars = (
            enc.offsets[outcome.span.0].0,
            enc.offsets[outcome.span.1].1,
        );
        Ok(PipelinePrediction {
            sentiment,
            sentiment_probs,
            subsentence,
            span: outcome.span,
            span_chars,
            refined: outcome.refined,
            text,
        })
    }
}

/// Per-token attribution of the classifier's decision, normalised over the
/// text tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenActivationMap {
    /// One score per text token, nonnegative, summing to 1.
    pub scores: Vec<f64>,
    pub tokens: Vec<String>,
    pub offsets: Vec<(usize, usize)>,
    pub predicted: Sentiment,
}

impl TokenActivationMap {
    /// Index of the strongest text token.
    pub fn top_token(&self) -> usize {
        let mut best = 0;
        for i in 1..self.scores.len() {
            if self.scores[i] > self.scores[best] {
                best = i;
            }
        }
        best
    }
}

/// Class-activation map by occlusion: each text token's raw score is the
/// log-probability the predicted class loses when that token is masked out
/// of the attention; a softmax over the text tokens normalises the map.
///
/// (A plain dot product between final token features and the class weight
/// column anti-localises on small from-scratch encoders — context-absorbing
/// tokens score above the evidence tokens — so the attribution is measured
/// by intervention instead.)
pub fn cam(net: &ClassifierNet, encoding: &Encoding) -> Result<TokenActivationMap, PipelineError> {
    let full = net.classify(encoding)?;
    let class = full.argmax();
    let baseline = full.probs[class.code()].max(f64::MIN_POSITIVE).ln();

    let region = encoding.text_region();
    let mut raw = Vec::new();
    let mut tokens = Vec::new();
    let mut offsets = Vec::new();
    for t in region {
        let mut occluded = encoding.clone();
        occluded.attention_mask[t] = 0;
        let p = net.classify(&occluded)?;
        let masked = p.probs[class.code()].max(f64::MIN_POSITIVE).ln();
        raw.push(baseline - masked);
        tokens.push(encoding.tokens[t].clone());
        offsets.push(encoding.offsets[t]);
    }
    Ok(TokenActivationMap {
        scores: softmax(&raw),
        tokens,
        offsets,
        predicted: class,
    })
}
