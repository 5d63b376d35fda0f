//! Sentiment classification and subsentence extraction, end to end.
//!
//! The crate is organised as a stack of largely independent layers:
//!
//! - [`corpus`] — CSV ingestion, text preprocessing, span-label repair,
//!   stratified splitting and exploratory statistics.
//! - [`tokenizer`] — byte-level BPE with lossless round trips, plus assembly
//!   of fixed-length model inputs (ids, mask, byte offsets, span one-hots).
//! - [`num`] — dense `f64` tensors, a reverse-mode tape, losses, Adam and a
//!   multistep learning-rate schedule. Everything downstream trains on this.
//! - [`encoder`] — a small bidirectional transformer encoder producing
//!   per-token features.
//! - [`heads`] — the sentiment classifier and span-logit heads, plus
//!   constrained span decoding.
//! - [`coverage`] — the coverage scalar `c = (M/N)·κ` and the refinement
//!   wrapper that re-predicts wide spans through a coverage-conditioned model.
//! - [`pipeline`] — the cascade (classify → base span → refine), ensemble
//!   averaging and per-token activation maps.
//! - [`eval`] — Jaccard/F1/AUC metrics, experiment configuration and the
//!   cross-validated experiment runner.

// Index loops in the numeric kernels deliberately walk several arrays at
// once; iterator rewrites obscure the stride arithmetic.
#![allow(clippy::needless_range_loop)]

pub mod corpus;
pub mod coverage;
pub mod encoder;
pub mod eval;
pub mod heads;
pub mod num;
pub mod pipeline;
pub mod tokenizer;
