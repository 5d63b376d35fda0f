//! Coverage and span refinement.
//!
//! Coverage is the scalar `c = (M/N)·κ` where `M` is the predicted span
//! length and `N` the sentence length, both in tokens. The refinement rule:
//! neutral sentences take the whole text as their span and skip the models;
//! a base prediction whose length ratio is at most ε is kept bitwise as-is;
//! anything wider is re-predicted by a coverage-conditioned span model that
//! sees the base span as a per-token indicator and `⌊c⌋` as a bucket.

use thiserror::Error;

use crate::corpus::Sentiment;
use crate::heads::{CoverageChannels, HeadsError, SpanAux, SpanNet};
use crate::tokenizer::Encoding;

#[derive(Debug, Error)]
pub enum CoverageError {
    #[error("bad span lengths: subsentence {m} of sentence {n}")]
    BadLengths { m: usize, n: usize },
    #[error("bad span: {0}")]
    BadSpan(String),
    #[error("bad refinement params: {0}")]
    BadParams(String),
    #[error(transparent)]
    Heads(#[from] HeadsError),
}

/// Knobs of the refinement pass.
#[derive(Debug, Clone, PartialEq)]
pub struct RefinementParams {
    /// Length-ratio threshold below which the base prediction is kept.
    pub epsilon: f64,
    /// Coverage scale.
    pub kappa: f64,
    /// Refinement passes; the printed algorithm performs one.
    pub max_iterations: usize,
}

impl Default for RefinementParams {
    fn default() -> Self {
        RefinementParams {
            epsilon: 0.1,
            kappa: 15.0,
            max_iterations: 1,
        }
    }
}

impl RefinementParams {
    pub fn validate(&self) -> Result<(), CoverageError> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(CoverageError::BadParams(format!(
                "epsilon {} outside (0, 1)",
                self.epsilon
            )));
        }
        if self.kappa <= 0.0 {
            return Err(CoverageError::BadParams(format!(
                "kappa {} must be positive",
                self.kappa
            )));
        }
        if self.max_iterations == 0 {
            return Err(CoverageError::BadParams(
                "max_iterations must be at least 1".to_string(),
            ));
        }
        Ok(())
    }
}

/// `c = (M/N)·κ` for a subsentence of `m` tokens in a sentence of `n`.
pub fn compute_coverage(m: usize, n: usize, kappa: f64) -> Result<f64, CoverageError> {
    if m < 1 || m > n {
        return Err(CoverageError::BadLengths { m, n });
    }
    Ok(m as f64 / n as f64 * kappa)
}

/// Auxiliary channels from a prior span: indicator over its tokens plus the
/// integer coverage bucket `⌊c⌋`.
pub fn coverage_features(
    c: f64,
    base_span: (usize, usize),
    encoding: &Encoding,
) -> Result<CoverageChannels, CoverageError> {
    let region = encoding.text_region();
    let (s, e) = base_span;
    if s > e || !region.contains(&s) || !region.contains(&e) {
        return Err(CoverageError::BadSpan(format!(
            "span {s}..={e} outside text region {region:?}"
        )));
    }
    let mut in_span = vec![0u8; encoding.seq_len()];
    for slot in in_span.iter_mut().take(e + 1).skip(s) {
        *slot = 1;
    }
    Ok(CoverageChannels {
        in_span,
        bucket: c.max(0.0).floor() as usize,
    })
}

/// A span model consumable by the refinement pass. Implemented by the real
/// coverage network; tests inject fixed-output stubs.
pub trait CoverageSpanModel {
    fn predict_with_coverage(
        &self,
        encoding: &Encoding,
        sentiment: Sentiment,
        channels: CoverageChannels,
    ) -> Result<(usize, usize), HeadsError>;
}

impl CoverageSpanModel for SpanNet {
    fn predict_with_coverage(
        &self,
        encoding: &Encoding,
        sentiment: Sentiment,
        channels: CoverageChannels,
    ) -> Result<(usize, usize), HeadsError> {
        let aux = SpanAux {
            sentiment: self.head.uses_sentiment().then_some(sentiment),
            coverage: self.head.uses_coverage().then_some(channels),
        };
        self.predict_span(encoding, &aux)
    }
}

/// Refined span plus whether the coverage model produced it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RefineOutcome {
    pub span: (usize, usize),
    pub refined: bool,
}

/// Apply the refinement rule to a base prediction (inclusive token span).
pub fn refine(
    encoding: &Encoding,
    sentiment: Sentiment,
    base_pred: (usize, usize),
    params: &RefinementParams,
    model: &dyn CoverageSpanModel,
) -> Result<RefineOutcome, CoverageError> {
    params.validate()?;
    if sentiment == Sentiment::Neutral {
        return Ok(RefineOutcome {
            span: encoding.full_text_span(),
            refined: false,
        });
    }
    let text_len = encoding.n_text_tokens().max(1);
    let mut current = base_pred;
    let mut refined = false;
    for _ in 0..params.max_iterations {
        let pred_len = current.1 - current.0 + 1;
        if pred_len as f64 / text_len as f64 <= params.epsilon {
            break;
        }
        let c = compute_coverage(pred_len.min(text_len), text_len, params.kappa)?;
        let channels = coverage_features(c, current, encoding)?;
        let next = model.predict_with_coverage(encoding, sentiment, channels)?;
        if next == current {
            break;
        }
        current = next;
        refined = true;
    }
    Ok(RefineOutcome {
        span: current,
        refined,
    })
}
