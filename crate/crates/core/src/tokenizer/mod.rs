//! Byte-level BPE tokenisation and model-input assembly.
//!
//! The base alphabet is the 256 raw bytes, so decode(encode(x)) is exact for
//! any string. Fixed special ids: `<s>`=0, `<pad>`=1, `</s>`=2; bytes occupy
//! 3..=258 and learned merges follow. Three sentiment marker tokens are
//! appended after the trained vocabulary, one per class.

mod bpe;
mod bytes;
mod encoding;

pub use bpe::{train_bpe, Vocabulary};
pub use bytes::{render_bytes, unrender_token};
pub use encoding::{assemble_example, token_span_to_text, Encoding, SpanLabel, SPECIAL_POSITIONS};

use thiserror::Error;

pub const BOS_ID: u32 = 0;
pub const PAD_ID: u32 = 1;
pub const EOS_ID: u32 = 2;
/// Ids 0..=2 specials, then the 256 byte tokens.
pub const FIRST_BYTE_ID: u32 = 3;
pub const FIRST_MERGE_ID: u32 = FIRST_BYTE_ID + 256;

#[derive(Debug, Error)]
pub enum TokenizerError {
    #[error("vocab size {0} too small; need more than {min}", min = FIRST_MERGE_ID)]
    VocabTooSmall(usize),
    #[error("unknown token id {0}")]
    UnknownId(u32),
    #[error("text needs {needed} positions but the sequence length is {max}")]
    TooLong { needed: usize, max: usize },
    #[error("token index outside the text region")]
    OutOfRegion,
    #[error("invalid span: {0}")]
    BadSpan(String),
    #[error("malformed vocabulary file: {0}")]
    BadVocabFile(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
