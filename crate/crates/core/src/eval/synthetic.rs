//! Synthetic benchmark with planted sentiment-correlated spans.
//!
//! Every sentence contains one positive and one negative key phrase among
//! filler words; the labelled span lies inside the phrase matching the
//! sentence's sentiment. Two ambiguities are planted deliberately:
//!
//! - which phrase is labelled follows the sentiment, so a span model
//!   without sentiment conditioning is capped near chance;
//! - the label extent (whole phrase vs. its first word) follows a hidden
//!   coin that no text feature predicts, so even a sentiment-conditioned
//!   model is capped well below 1, while coverage channels derived from
//!   the labelled span resolve the extent exactly.

use crate::corpus::{Sample, Sentiment};
use crate::num::Rng;

const FILLERS: [&str; 16] = [
    "the", "a", "to", "on", "it", "we", "day", "time", "work", "home", "crowd", "street",
    "morning", "again", "maybe", "still",
];

const POSITIVE_PHRASES: [&str; 5] = [
    "really good",
    "so happy",
    "love this",
    "great fun",
    "awesome show",
];

const NEGATIVE_PHRASES: [&str; 5] = [
    "very sad",
    "hate this",
    "awful mess",
    "so boring",
    "bad luck",
];

/// Deterministic corpus of `n` samples, alternating sentiment.
pub fn synthetic_benchmark(n: usize, seed: u64) -> Vec<Sample> {
    let mut rng = Rng::new(seed);
    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        let sentiment = if i % 2 == 0 {
            Sentiment::Positive
        } else {
            Sentiment::Negative
        };
        let pos_phrase = POSITIVE_PHRASES[rng.next_below(POSITIVE_PHRASES.len())];
        let neg_phrase = NEGATIVE_PHRASES[rng.next_below(NEGATIVE_PHRASES.len())];
        let mut words: Vec<&str> = Vec::new();
        let fill = |words: &mut Vec<&str>, rng: &mut Rng, count: usize| {
            for _ in 0..count {
                words.push(FILLERS[rng.next_below(FILLERS.len())]);
            }
        };
        let (first, second) = if rng.next_f64() < 0.5 {
            (pos_phrase, neg_phrase)
        } else {
            (neg_phrase, pos_phrase)
        };
        let lead = 1 + rng.next_below(3);
        fill(&mut words, &mut rng, lead);
        words.extend(first.split(' '));
        let middle = 1 + rng.next_below(3);
        fill(&mut words, &mut rng, middle);
        words.extend(second.split(' '));
        let tail = rng.next_below(2);
        fill(&mut words, &mut rng, tail);
        let text = words.join(" ");
        let phrase = match sentiment {
            Sentiment::Positive => pos_phrase,
            _ => neg_phrase,
        };
        // Hidden extent coin: full phrase or its head word.
        let selected = if rng.next_f64() < 0.5 {
            phrase.to_string()
        } else {
            phrase.split(' ').next().expect("nonempty phrase").to_string()
        };
        debug_assert!(text.contains(&selected));
        samples.push(Sample {
            text_id: format!("synth-{i:04}"),
            text,
            selected_text: selected,
            sentiment,
        });
    }
    samples
}

/// Separable corpus for classification-style training: each sentence
/// carries exactly one key phrase matching its sentiment, and neutral
/// sentences are pure filler labelled with their whole text.
pub fn synthetic_classification(n: usize, seed: u64) -> Vec<Sample> {
    let mut rng = Rng::new(seed);
    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        let sentiment = match i % 3 {
            0 => Sentiment::Positive,
            1 => Sentiment::Negative,
            _ => Sentiment::Neutral,
        };
        let mut words: Vec<&str> = Vec::new();
        for _ in 0..1 + rng.next_below(3) {
            words.push(FILLERS[rng.next_below(FILLERS.len())]);
        }
        let phrase = match sentiment {
            Sentiment::Positive => Some(POSITIVE_PHRASES[rng.next_below(POSITIVE_PHRASES.len())]),
            Sentiment::Negative => Some(NEGATIVE_PHRASES[rng.next_below(NEGATIVE_PHRASES.len())]),
            Sentiment::Neutral => None,
        };
        if let Some(p) = phrase {
            words.extend(p.split(' '));
        }
        for _ in 0..rng.next_below(3) {
            words.push(FILLERS[rng.next_below(FILLERS.len())]);
        }
        let text = words.join(" ");
        let selected = phrase.map(str::to_string).unwrap_or_else(|| text.clone());
        debug_assert!(text.contains(&selected));
        samples.push(Sample {
            text_id: format!("synthc-{i:04}"),
            text,
            selected_text: selected,
            sentiment,
        });
    }
    samples
}
