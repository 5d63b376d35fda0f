//! Cross-module invariants, fuzzed.

use proptest::prelude::*;

use sentispan_core::corpus::{preprocess_text, Sentiment};
use sentispan_core::num::{smooth_labels, softmax, Rng};
use sentispan_core::tokenizer::{assemble_example, token_span_to_text, train_bpe, SpanLabel};

/// Random text in the dataset's flavour: words, space runs, URLs, tags,
/// ellipses, the occasional multi-byte character.
fn corpus_like_string(rng: &mut Rng) -> String {
    const WORDS: [&str; 14] = [
        "so", "happy", "miss", "you", "GOOD", "day", "work", "<b>", "</b>", "http://x.co",
        "www.t.co", "wine...", "caf\u{e9}", "🍷",
    ];
    let n = rng.next_below(10);
    let mut out = String::new();
    for i in 0..n {
        if i > 0 {
            for _ in 0..1 + rng.next_below(3) {
                out.push(' ');
            }
        }
        out.push_str(WORDS[rng.next_below(WORDS.len())]);
    }
    if rng.next_f64() < 0.2 {
        out.push_str("..");
    }
    out
}

#[test]
fn preprocess_idempotent_on_corpus_like_fuzz() {
    let mut rng = Rng::new(2024);
    for _ in 0..10_000 {
        let raw = corpus_like_string(&mut rng);
        let once = preprocess_text(&raw);
        let twice = preprocess_text(&once);
        assert_eq!(once, twice, "not idempotent on {raw:?}");
    }
}

proptest! {
    #[test]
    fn preprocess_idempotent_on_arbitrary_strings(raw in ".{0,60}") {
        let once = preprocess_text(&raw);
        prop_assert_eq!(preprocess_text(&once), once);
    }

    #[test]
    fn preprocess_output_is_lowercase(raw in "[A-Za-z .<>/:]{0,40}") {
        let out = preprocess_text(&raw);
        prop_assert_eq!(out.to_lowercase(), out);
    }

    #[test]
    fn smoothed_labels_sum_to_one(class in 0usize..5, alpha in 0.0f64..=1.0) {
        let classes = 5;
        let mut y = vec![0.0; classes];
        y[class] = 1.0;
        let smoothed = smooth_labels(&y, alpha, classes).unwrap();
        let total: f64 = smoothed.iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn softmax_sums_and_shift_invariance(
        xs in proptest::collection::vec(-30.0f64..30.0, 1..8),
        shift in -50.0f64..50.0,
    ) {
        let p = softmax(&xs);
        let total: f64 = p.iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-9);
        let shifted: Vec<f64> = xs.iter().map(|v| v + shift).collect();
        let q = softmax(&shifted);
        for (a, b) in p.iter().zip(&q) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn byte_level_round_trip_fuzz() {
    let vocab = train_bpe(&["hello hello world wine wine good"], 300).unwrap();
    let mut rng = Rng::new(7);
    let alphabet: Vec<char> = "abco .!🍷é漢\u{308}\t\n\"".chars().collect();
    for _ in 0..10_000 {
        let n = rng.next_below(24);
        let text: String = (0..n)
            .map(|_| alphabet[rng.next_below(alphabet.len())])
            .collect();
        let (ids, offsets) = vocab.encode(&text);
        assert_eq!(vocab.decode(&ids).unwrap(), text, "round trip on {text:?}");
        let mut rebuilt: Vec<u8> = Vec::new();
        for &(s, e) in &offsets {
            rebuilt.extend_from_slice(&text.as_bytes()[s..e]);
        }
        assert_eq!(rebuilt, text.as_bytes(), "offsets cover {text:?}");
    }
}

#[test]
fn aligned_label_spans_recover_exactly() {
    // Whenever the labelled character span lands on token boundaries, the
    // one-hot mapping back to text matches the label with Jaccard 1.
    let words = ["alpha", "bravo", "charlie", "delta", "echo", "foxtrot"];
    let corpus: Vec<String> = (0..3).map(|_| words.join(" ")).collect();
    let vocab = train_bpe(&corpus, 500).unwrap();
    let mut rng = Rng::new(41);
    for _ in 0..300 {
        let n = 2 + rng.next_below(5);
        let sentence_words: Vec<&str> =
            (0..n).map(|_| words[rng.next_below(words.len())]).collect();
        let text = sentence_words.join(" ");
        let from = rng.next_below(n);
        let to = from + rng.next_below(n - from);
        let label = sentence_words[from..=to].join(" ");
        let start = word_span_start(&sentence_words, from);
        let span = SpanLabel::new(start, start + label.len(), text.len()).unwrap();
        let enc =
            assemble_example(&vocab, &text, Sentiment::Positive, Some(span), 48).unwrap();
        let (s, e) = enc.label_span().expect("span was provided");
        let recovered = token_span_to_text(&enc, s, e).unwrap();
        assert_eq!(
            sentispan_core::eval::jaccard(&recovered, &label),
            1.0,
            "text {text:?} label {label:?} recovered {recovered:?}"
        );
    }
}

fn word_span_start(words: &[&str], index: usize) -> usize {
    words[..index].iter().map(|w| w.len() + 1).sum()
}

#[test]
fn attention_mask_counts_text_plus_specials() {
    let vocab = train_bpe(&["some words to merge some words"], 400).unwrap();
    let mut rng = Rng::new(13);
    let words = ["some", "words", "to", "merge", "extra", "bits"];
    for _ in 0..200 {
        let n = 1 + rng.next_below(5);
        let text: Vec<&str> = (0..n).map(|_| words[rng.next_below(words.len())]).collect();
        let text = text.join(" ");
        let enc = assemble_example(&vocab, &text, Sentiment::Negative, None, 40).unwrap();
        let ones: usize = enc.attention_mask.iter().map(|&m| m as usize).sum();
        assert_eq!(ones, 4 + enc.n_text_tokens() + 1);
    }
}
