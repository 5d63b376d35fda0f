//! Exploratory statistics: n-gram tables and the per-sentiment histogram of
//! Jaccard similarity between a text and its selected span.

use std::collections::BTreeMap;

use super::{preprocess_text, Sample, Sentiment};
use crate::eval::jaccard;

/// Frequency table of word n-grams for one sentiment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NGramTable {
    pub n: usize,
    pub sentiment: Sentiment,
    /// Space-joined gram -> frequency. Ordered, so reports are stable.
    pub counts: BTreeMap<String, u64>,
}

impl NGramTable {
    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    /// Most frequent grams, count-descending with alphabetical tie-break.
    pub fn top(&self, k: usize) -> Vec<(&str, u64)> {
        let mut rows: Vec<(&str, u64)> = self
            .counts
            .iter()
            .map(|(g, &c)| (g.as_str(), c))
            .collect();
        rows.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        rows.truncate(k);
        rows
    }
}

/// Contiguous word n-grams over whitespace-split preprocessed text,
/// restricted to samples of the given sentiment.
pub fn ngram_counts(samples: &[Sample], n: usize, sentiment: Sentiment) -> NGramTable {
    assert!(n >= 1, "gram order must be at least 1");
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    for sample in samples.iter().filter(|s| s.sentiment == sentiment) {
        let text = preprocess_text(&sample.text);
        let words: Vec<&str> = text.split_whitespace().collect();
        if words.len() < n {
            continue;
        }
        for window in words.windows(n) {
            *counts.entry(window.join(" ")).or_insert(0) += 1;
        }
    }
    NGramTable {
        n,
        sentiment,
        counts,
    }
}

/// Per-sentiment histogram of `jaccard(text, selected_text)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JaccardHistogram {
    pub bin_count: usize,
    /// Indexed by sentiment code; each inner vector has `bin_count` buckets.
    pub bins: [Vec<u64>; 3],
    pub totals: [u64; 3],
}

impl JaccardHistogram {
    pub fn bin_of(&self, score: f64) -> usize {
        ((score * self.bin_count as f64) as usize).min(self.bin_count - 1)
    }
}

pub fn jaccard_distribution(samples: &[Sample], bin_count: usize) -> JaccardHistogram {
    assert!(bin_count >= 1, "need at least one bin");
    let mut hist = JaccardHistogram {
        bin_count,
        bins: [
            vec![0; bin_count],
            vec![0; bin_count],
            vec![0; bin_count],
        ],
        totals: [0; 3],
    };
    for sample in samples {
        let score = jaccard(&sample.text, &sample.selected_text);
        let bin = hist.bin_of(score);
        let class = sample.sentiment.code();
        hist.bins[class][bin] += 1;
        hist.totals[class] += 1;
    }
    hist
}
