//! Metrics, experiment configuration and the cross-validated runner.

mod config;
mod experiment;
mod metrics;
pub mod synthetic;

pub use config::{DatasetVariant, EncoderSize, EncodingVariant, ExperimentConfig, Task};
pub use experiment::{
    apply_dataset_variant, classifier_metrics, prepare_sc, prepare_se, run_experiment,
    span_metrics, train_classifier, train_span, EpochRecord, FoldReport, PreparedSc, PreparedSe,
    TrainSettings, TrainedFold,
};
pub use metrics::{
    auc, binary_auc, confusion_for_class, f1, jaccard, macro_f1, precision_recall,
    ConfusionCounts,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least one positive and one negative label")]
    DegenerateLabels,
    #[error("bad config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Corpus(#[from] crate::corpus::CorpusError),
    #[error(transparent)]
    Heads(#[from] crate::heads::HeadsError),
    #[error(transparent)]
    Coverage(#[from] crate::coverage::CoverageError),
    #[error(transparent)]
    Tokenizer(#[from] crate::tokenizer::TokenizerError),
    #[error(transparent)]
    Num(#[from] crate::num::NumError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
