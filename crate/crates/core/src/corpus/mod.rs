//! Dataset ingestion, cleaning, label repair, splitting and statistics.

mod correct;
mod eda;
mod loader;
mod preprocess;
mod split;

pub use correct::{correct_corpus, correct_selected_text, preprocess_corpus, repair_span, SpanFix};
pub use eda::{jaccard_distribution, ngram_counts, JaccardHistogram, NGramTable};
pub use loader::{class_counts, load_csv};
pub use preprocess::preprocess_text;
pub use split::{stratified_kfold, train_test_split, FoldAssignment};

use thiserror::Error;

/// Three-way sentiment polarity with stable integer codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Sentiment {
    Positive,
    Negative,
    Neutral,
}

impl Sentiment {
    pub const ALL: [Sentiment; 3] = [Sentiment::Positive, Sentiment::Negative, Sentiment::Neutral];
    pub const COUNT: usize = 3;

    pub fn code(self) -> usize {
        match self {
            Sentiment::Positive => 0,
            Sentiment::Negative => 1,
            Sentiment::Neutral => 2,
        }
    }

    pub fn from_code(code: usize) -> Option<Sentiment> {
        Sentiment::ALL.get(code).copied()
    }

    pub fn parse(s: &str) -> Option<Sentiment> {
        match s.trim().to_ascii_lowercase().as_str() {
            "positive" => Some(Sentiment::Positive),
            "negative" => Some(Sentiment::Negative),
            "neutral" => Some(Sentiment::Neutral),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Sentiment::Positive => "positive",
            Sentiment::Negative => "negative",
            Sentiment::Neutral => "neutral",
        }
    }
}

impl std::fmt::Display for Sentiment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One labelled tweet.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sample {
    pub text_id: String,
    pub text: String,
    pub selected_text: String,
    pub sentiment: Sentiment,
}

/// Outcome of the label-repair pass over a corpus.
#[derive(Debug, Clone, Default)]
pub struct CorrectionReport {
    pub n_corrected: usize,
    pub n_unrecoverable: usize,
    /// Corrections over non-neutral samples.
    pub fraction_of_nonneutral: f64,
    /// Corrections over all samples; the reference base for the headline
    /// percentage is ambiguous, so both ratios are reported.
    pub fraction_of_all: f64,
    /// (text_id, old span, new span) for every changed sample.
    pub per_sample: Vec<(String, String, String)>,
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("missing column `{0}` in CSV header")]
    MissingColumn(String),
    #[error("malformed row at line {0}")]
    MalformedRow(u64),
    #[error("input is empty")]
    EmptyInput,
    #[error("split ratio {0} outside (0, 1)")]
    BadSplitRatio(f64),
    #[error("fold count {0} must be at least 2")]
    BadFoldCount(usize),
    #[error("class {0} has too few samples for the requested fold count")]
    TooFewSamples(Sentiment),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}
