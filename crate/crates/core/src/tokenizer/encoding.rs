//! Fixed-length model inputs.
//!
//! Sequence layout: `<s>, text tokens…, </s>, </s>, sentiment, </s>, <pad>…`
//! with the attention mask set through the final `</s>`. The span one-hots
//! mark the first and last text tokens overlapping the labelled character
//! span.

use crate::corpus::Sentiment;

use super::bpe::Vocabulary;
use super::{TokenizerError, BOS_ID, EOS_ID, PAD_ID};

/// Non-text positions in the layout: bos, two eos, sentiment marker, eos.
pub const SPECIAL_POSITIONS: usize = 5;

/// Character span into the (preprocessed) source text. Offsets are byte
/// positions of the UTF-8 string.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpanLabel {
    pub char_start: usize,
    pub char_end: usize,
}

impl SpanLabel {
    pub fn new(char_start: usize, char_end: usize, text_len: usize) -> Result<Self, TokenizerError> {
        if char_start >= char_end || char_end > text_len {
            return Err(TokenizerError::BadSpan(format!(
                "span {char_start}..{char_end} in text of length {text_len}"
            )));
        }
        Ok(SpanLabel {
            char_start,
            char_end,
        })
    }
}

/// One tokenised training or inference example.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Encoding {
    /// Preprocessed source text.
    pub text: String,
    /// Printable token strings, for reports and debugging.
    pub tokens: Vec<String>,
    pub input_ids: Vec<u32>,
    pub attention_mask: Vec<u8>,
    /// Byte range of each token's visible source slice; `(0, 0)` sentinel on
    /// specials and padding. A word token's range excludes the single space
    /// the tokenizer attaches to it.
    pub offsets: Vec<(usize, usize)>,
    pub start_onehot: Vec<u8>,
    pub end_onehot: Vec<u8>,
    pub sentiment: Sentiment,
    n_text_tokens: usize,
}

impl Encoding {
    pub fn seq_len(&self) -> usize {
        self.input_ids.len()
    }

    pub fn n_text_tokens(&self) -> usize {
        self.n_text_tokens
    }

    /// Token positions holding text, i.e. everything between `<s>` and the
    /// first `</s>`.
    pub fn text_region(&self) -> std::ops::Range<usize> {
        1..1 + self.n_text_tokens
    }

    /// Inclusive token span covering the whole text region.
    pub fn full_text_span(&self) -> (usize, usize) {
        (1, self.n_text_tokens.max(1))
    }

    /// Labelled token span from the one-hots, when present.
    pub fn label_span(&self) -> Option<(usize, usize)> {
        let s = self.start_onehot.iter().position(|&v| v == 1)?;
        let e = self.end_onehot.iter().position(|&v| v == 1)?;
        Some((s, e))
    }
}

/// Build the fixed-length layout for one example.
pub fn assemble_example(
    vocab: &Vocabulary,
    text: &str,
    sentiment: Sentiment,
    span: Option<SpanLabel>,
    max_len: usize,
) -> Result<Encoding, TokenizerError> {
    let (text_ids, raw_offsets) = vocab.encode(text);
    let n = text_ids.len();
    let needed = n + SPECIAL_POSITIONS;
    if needed > max_len {
        return Err(TokenizerError::TooLong {
            needed,
            max: max_len,
        });
    }

    let mut input_ids = Vec::with_capacity(max_len);
    let mut offsets = Vec::with_capacity(max_len);
    input_ids.push(BOS_ID);
    offsets.push((0, 0));
    for (i, &id) in text_ids.iter().enumerate() {
        input_ids.push(id);
        offsets.push(visible_range(text, raw_offsets[i]));
    }
    input_ids.extend_from_slice(&[EOS_ID, EOS_ID, vocab.sentiment_id(sentiment), EOS_ID]);
    offsets.extend_from_slice(&[(0, 0); 4]);
    while input_ids.len() < max_len {
        input_ids.push(PAD_ID);
        offsets.push((0, 0));
    }

    let mut attention_mask = vec![0u8; max_len];
    for m in attention_mask.iter_mut().take(needed) {
        *m = 1;
    }

    let mut start_onehot = vec![0u8; max_len];
    let mut end_onehot = vec![0u8; max_len];
    if let Some(span) = span {
        if span.char_end > text.len() {
            return Err(TokenizerError::BadSpan(format!(
                "span end {} beyond text length {}",
                span.char_end,
                text.len()
            )));
        }
        // Any token whose visible slice overlaps the span is covered.
        let covered: Vec<usize> = (1..=n)
            .filter(|&pos| {
                let (s, e) = offsets[pos];
                s < span.char_end && span.char_start < e && s != e
            })
            .collect();
        if let (Some(&first), Some(&last)) = (covered.first(), covered.last()) {
            start_onehot[first] = 1;
            end_onehot[last] = 1;
        }
    }

    let tokens = input_ids
        .iter()
        .map(|&id| vocab.token_string(id))
        .collect::<Result<Vec<_>, _>>()?;

    Ok(Encoding {
        text: text.to_string(),
        tokens,
        input_ids,
        attention_mask,
        offsets,
        start_onehot,
        end_onehot,
        sentiment,
        n_text_tokens: n,
    })
}

/// Trim the single leading attached space from a word token's byte range;
/// whitespace-only tokens keep their full range.
fn visible_range(text: &str, (start, end): (usize, usize)) -> (usize, usize) {
    let bytes = text.as_bytes();
    if end > start + 1 && bytes[start] == b' ' && !bytes[start + 1].is_ascii_whitespace() {
        (start + 1, end)
    } else {
        (start, end)
    }
}

/// Source substring covered by the inclusive token span.
pub fn token_span_to_text(
    encoding: &Encoding,
    start_tok: usize,
    end_tok: usize,
) -> Result<String, TokenizerError> {
    let region = encoding.text_region();
    if start_tok > end_tok || !region.contains(&start_tok) || !region.contains(&end_tok) {
        return Err(TokenizerError::OutOfRegion);
    }
    let from = encoding.offsets[start_tok].0;
    let to = encoding.offsets[end_tok].1;
    if from >= to {
        return Ok(String::new());
    }
    Ok(String::from_utf8_lossy(&encoding.text.as_bytes()[from..to]).into_owned())
}
