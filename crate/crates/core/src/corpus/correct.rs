//! Repair of corrupted span labels.
//!
//! The labelling artifact: span character indices were taken against a copy
//! of the text whose space runs had been collapsed, then sliced out of the
//! raw text, so labels upstream of a multi-space run arrive shifted left and
//! typically start or end mid-word.
//!
//! Repair inverts that: locate the noisy span in the raw text, reread the
//! same index range through the collapsed text, map it back to raw
//! coordinates, then snap to whitespace word boundaries (a leading word
//! fragment is dropped, a trailing partial word is completed). Neutral
//! samples are never touched. When the span cannot be located at all the
//! sample passes through unchanged and is reported as unrecoverable.

use super::preprocess::preprocess_text;
use super::{CorrectionReport, Sample, Sentiment};

/// What happened to one sample's span label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpanFix {
    Unchanged,
    Corrected,
    Unrecoverable,
}

/// Repair `selected` against `text`. Returns the repaired span, or `None`
/// when the span cannot be located even after shift compensation.
pub fn repair_span(text: &str, selected: &str) -> Option<String> {
    let needle = if text.contains(selected) {
        selected
    } else {
        let trimmed = selected.trim();
        if trimmed.is_empty() || !text.contains(trimmed) {
            return None;
        }
        trimmed
    };
    let start = text.find(needle).expect("checked above");
    let end = start + needle.len();

    // Only spans that begin mid-word (or on stray whitespace) show the
    // shift artifact. A label that starts on a word boundary is taken as
    // intended, even if it stops short of trailing punctuation.
    if starts_word_aligned(text, start) {
        return Some(text[start..end].to_string());
    }

    // Reinterpret the found range as indices into the space-collapsed text
    // and pull it back to raw coordinates.
    let (collapsed_len, col_to_raw) = collapse_spaces(text);
    let (mut s, mut e) = if start < collapsed_len {
        let ce = end.min(collapsed_len);
        (col_to_raw[start], col_to_raw[ce])
    } else {
        (start, end)
    };
    if s >= e {
        s = start;
        e = end;
    }

    let bytes = text.as_bytes();
    // Strip whitespace picked up from run boundaries.
    while s < e && bytes[s].is_ascii_whitespace() {
        s += 1;
    }
    while e > s && bytes[e - 1].is_ascii_whitespace() {
        e -= 1;
    }
    if s >= e {
        return None;
    }

    // Leading fragment of a word: drop it and start at the next word.
    if s > 0 && !bytes[s - 1].is_ascii_whitespace() {
        match bytes[s..].iter().position(|b| b.is_ascii_whitespace()) {
            Some(off) if s + off + 1 < e => s += off + 1,
            // The whole candidate is a fragment; cover its word instead.
            _ => {
                while s > 0 && !bytes[s - 1].is_ascii_whitespace() {
                    s -= 1;
                }
            }
        }
    }
    // Trailing partial word: complete it.
    if e < bytes.len() && !bytes[e].is_ascii_whitespace() {
        match bytes[e..].iter().position(|b| b.is_ascii_whitespace()) {
            Some(off) => e += off,
            None => e = bytes.len(),
        }
    }

    while s > 0 && !text.is_char_boundary(s) {
        s -= 1;
    }
    while e < text.len() && !text.is_char_boundary(e) {
        e += 1;
    }
    Some(text[s..e].to_string())
}

fn starts_word_aligned(text: &str, start: usize) -> bool {
    let bytes = text.as_bytes();
    let boundary = start == 0 || bytes[start - 1].is_ascii_whitespace();
    boundary && start < bytes.len() && !bytes[start].is_ascii_whitespace()
}

/// Collapse runs of spaces to a single space. Returns the collapsed byte
/// length and a map from collapsed byte index to raw byte index (one extra
/// entry maps the end bound).
fn collapse_spaces(text: &str) -> (usize, Vec<usize>) {
    let bytes = text.as_bytes();
    let mut col_to_raw = Vec::with_capacity(text.len() + 1);
    let mut i = 0;
    while i < bytes.len() {
        col_to_raw.push(i);
        if bytes[i] == b' ' {
            while i < bytes.len() && bytes[i] == b' ' {
                i += 1;
            }
        } else {
            i += 1;
        }
    }
    let len = col_to_raw.len();
    col_to_raw.push(bytes.len());
    (len, col_to_raw)
}

/// Span repair for one sample. Neutral samples are returned unchanged.
pub fn correct_selected_text(sample: &Sample) -> (Sample, SpanFix) {
    if sample.sentiment == Sentiment::Neutral {
        return (sample.clone(), SpanFix::Unchanged);
    }
    match repair_span(&sample.text, &sample.selected_text) {
        Some(repaired) => {
            let fix = if repaired == sample.selected_text {
                SpanFix::Unchanged
            } else {
                SpanFix::Corrected
            };
            let mut fixed = sample.clone();
            fixed.selected_text = repaired;
            (fixed, fix)
        }
        None => (sample.clone(), SpanFix::Unrecoverable),
    }
}

/// Preprocess text and span of every sample without touching labels. Spans
/// that preprocessing dislodges are re-anchored when possible.
pub fn preprocess_corpus(samples: &[Sample]) -> Vec<Sample> {
    samples
        .iter()
        .map(|sample| {
            let mut s = Sample {
                text_id: sample.text_id.clone(),
                text: preprocess_text(&sample.text),
                selected_text: preprocess_text(&sample.selected_text),
                sentiment: sample.sentiment,
            };
            if !s.selected_text.is_empty() && !s.text.contains(&s.selected_text) {
                if let Some(refit) = repair_span(&s.text, &s.selected_text) {
                    s.selected_text = refit;
                }
            }
            s
        })
        .collect()
}

/// Full dataset pass: repair spans on the raw text, then preprocess both the
/// text and the span of every sample. The report's `new` column carries the
/// final (preprocessed) span.
pub fn correct_corpus(samples: &[Sample]) -> (Vec<Sample>, CorrectionReport) {
    let mut out = Vec::with_capacity(samples.len());
    let mut report = CorrectionReport::default();
    let mut n_nonneutral = 0usize;

    for sample in samples {
        if sample.sentiment != Sentiment::Neutral {
            n_nonneutral += 1;
        }
        let (repaired, fix) = correct_selected_text(sample);
        let mut finished = Sample {
            text_id: repaired.text_id.clone(),
            text: preprocess_text(&repaired.text),
            selected_text: preprocess_text(&repaired.selected_text),
            sentiment: repaired.sentiment,
        };
        // Preprocessing can perturb the span relative to the text (e.g. a URL
        // inside the label); re-anchor it if it no longer occurs.
        if !finished.selected_text.is_empty() && !finished.text.contains(&finished.selected_text) {
            if let Some(refit) = repair_span(&finished.text, &finished.selected_text) {
                finished.selected_text = refit;
            }
        }
        match fix {
            SpanFix::Corrected => {
                report.n_corrected += 1;
                report.per_sample.push((
                    sample.text_id.clone(),
                    sample.selected_text.clone(),
                    finished.selected_text.clone(),
                ));
            }
            SpanFix::Unrecoverable => report.n_unrecoverable += 1,
            SpanFix::Unchanged => {}
        }
        out.push(finished);
    }

    report.fraction_of_nonneutral = if n_nonneutral == 0 {
        0.0
    } else {
        report.n_corrected as f64 / n_nonneutral as f64
    };
    report.fraction_of_all = if samples.is_empty() {
        0.0
    } else {
        report.n_corrected as f64 / samples.len() as f64
    };
    (out, report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(text: &str, selected: &str, sentiment: Sentiment) -> Sample {
        Sample {
            text_id: "t0".to_string(),
            text: text.to_string(),
            selected_text: selected.to_string(),
            sentiment,
        }
    }

    #[test]
    fn shifted_span_recovers_across_space_run() {
        // Six extra spaces before "gonna" shift the label four characters
        // into the wrong word; the repair lands on the intended one.
        let s = sample(
            "is back home now      gonna miss every one",
            "onna",
            Sentiment::Negative,
        );
        let (fixed, fix) = correct_selected_text(&s);
        assert_eq!(fixed.selected_text, "miss");
        assert_eq!(fix, SpanFix::Corrected);
    }

    #[test]
    fn leading_fragment_dropped_and_word_completed() {
        let s = sample(
            "He's awesome... Have you worked with him before...",
            "s awesome",
            Sentiment::Positive,
        );
        let (fixed, fix) = correct_selected_text(&s);
        assert_eq!(fixed.selected_text, "awesome...");
        assert_eq!(fix, SpanFix::Corrected);
    }

    #[test]
    fn corpus_pass_matches_reference_pairs() {
        // After the corpus pass (repair, then preprocessing of text and
        // span), each noisy label maps to its reference correction.
        let rows = [
            (
                "is back home now      gonna miss every one",
                "onna",
                Sentiment::Negative,
                "miss",
            ),
            (
                "He's awesome... Have you worked with him before...",
                "s awesome",
                Sentiment::Positive,
                "awesome.",
            ),
            (
                "hey mia! totally adore your music. when is the next album out?",
                "y adore",
                Sentiment::Positive,
                "adore",
            ),
            (
                "Nice to see you tweeting! It's Sunday 10th... enjoy the nice weather",
                "e nice",
                Sentiment::Positive,
                "nice",
            ),
            (
                "#lichfield #tweetup sounds like fun Hope to make the next one",
                "p sounds like fun",
                Sentiment::Positive,
                "sounds like fun",
            ),
            (
                "nite nite bday girl have fun at concert",
                "e fun",
                Sentiment::Positive,
                "fun",
            ),
            (
                "HaHa I know, I cant handle the fame! and thank you!",
                "d thank you!",
                Sentiment::Positive,
                "thank you!",
            ),
        ];
        for (text, noisy, sentiment, expected) in rows {
            let (corrected, report) = correct_corpus(&[sample(text, noisy, sentiment)]);
            assert_eq!(
                corrected[0].selected_text, expected,
                "text {text:?} noisy {noisy:?}"
            );
            assert_eq!(report.n_corrected, 1);
            assert!(
                corrected[0].text.contains(&corrected[0].selected_text),
                "span must stay a substring"
            );
        }
    }

    #[test]
    fn neutral_passes_through() {
        let s = sample("all of it", "all of it", Sentiment::Neutral);
        let (fixed, fix) = correct_selected_text(&s);
        assert_eq!(fix, SpanFix::Unchanged);
        assert_eq!(fixed, s);
    }

    #[test]
    fn clean_label_untouched() {
        let s = sample("what a great day", "great day", Sentiment::Positive);
        let (fixed, fix) = correct_selected_text(&s);
        assert_eq!(fix, SpanFix::Unchanged);
        assert_eq!(fixed.selected_text, "great day");
    }

    #[test]
    fn missing_span_is_unrecoverable() {
        let s = sample("nothing to see", "absent words", Sentiment::Positive);
        let (fixed, fix) = correct_selected_text(&s);
        assert_eq!(fix, SpanFix::Unrecoverable);
        assert_eq!(fixed, s);
    }

    #[test]
    fn repaired_span_is_substring_under_fuzz() {
        let mut rng = crate::num::Rng::new(99);
        let words = ["so", "cool", "and", "bad", "miss", "you", "great", "fun"];
        for _ in 0..2000 {
            // Random text with random space runs, random substring as label.
            let n = 3 + rng.next_below(6);
            let mut text = String::new();
            for w in 0..n {
                if w > 0 {
                    for _ in 0..1 + rng.next_below(3) {
                        text.push(' ');
                    }
                }
                text.push_str(words[rng.next_below(words.len())]);
            }
            let a = rng.next_below(text.len());
            let b = (a + 1 + rng.next_below(text.len() - a)).min(text.len());
            let noisy: String = text[a..b].to_string();
            if noisy.trim().is_empty() {
                continue;
            }
            if let Some(repaired) = repair_span(&text, &noisy) {
                assert!(
                    text.contains(&repaired),
                    "repair {repaired:?} not substring of {text:?} (noisy {noisy:?})"
                );
                assert!(!repaired.trim().is_empty());
            }
        }
    }
}
