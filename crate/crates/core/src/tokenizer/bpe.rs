//! BPE training, encoding and decoding, plus the two-file vocabulary format.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::corpus::Sentiment;

use super::bytes::{render_bytes, unrender_token};
use super::{TokenizerError, FIRST_BYTE_ID, FIRST_MERGE_ID};

const SPECIAL_NAMES: [&str; 3] = ["<s>", "<pad>", "</s>"];
const SENTIMENT_NAMES: [&str; 3] = ["<positive>", "<negative>", "<neutral>"];

#[derive(Debug, Clone, PartialEq, Eq)]
enum Token {
    Special(&'static str),
    Sentiment(&'static str),
    Bytes(Vec<u8>),
}

/// Immutable token inventory plus ranked merge rules.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    tokens: Vec<Token>,
    /// Merge pairs by id, rank = position.
    merges: Vec<(u32, u32)>,
    /// (left, right) -> (rank, merged id).
    merge_lookup: HashMap<(u32, u32), (u32, u32)>,
    sentiment_ids: [u32; 3],
}

impl Vocabulary {
    fn with_merges(merges: Vec<(u32, u32)>, merged_bytes: Vec<Vec<u8>>) -> Self {
        let mut tokens = Vec::with_capacity(259 + merges.len() + 3);
        tokens.push(Token::Special(SPECIAL_NAMES[0]));
        tokens.push(Token::Special(SPECIAL_NAMES[1]));
        tokens.push(Token::Special(SPECIAL_NAMES[2]));
        for b in 0u16..=255 {
            tokens.push(Token::Bytes(vec![b as u8]));
        }
        for bytes in merged_bytes {
            tokens.push(Token::Bytes(bytes));
        }
        let mut sentiment_ids = [0u32; 3];
        for (i, name) in SENTIMENT_NAMES.iter().enumerate() {
            sentiment_ids[i] = tokens.len() as u32;
            tokens.push(Token::Sentiment(name));
        }
        let merge_lookup = merges
            .iter()
            .enumerate()
            .map(|(rank, &(l, r))| ((l, r), (rank as u32, FIRST_MERGE_ID + rank as u32)))
            .collect();
        Vocabulary {
            tokens,
            merges,
            merge_lookup,
            sentiment_ids,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn n_merges(&self) -> usize {
        self.merges.len()
    }

    pub fn sentiment_id(&self, sentiment: Sentiment) -> u32 {
        self.sentiment_ids[sentiment.code()]
    }


    /// Printable form of a token (specials by name, bytes via the table).
    pub fn token_string(&self, id: u32) -> Result<String, TokenizerError> {
        match self.tokens.get(id as usize) {
            Some(Token::Special(name)) | Some(Token::Sentiment(name)) => Ok(name.to_string()),
            Some(Token::Bytes(b)) => Ok(render_bytes(b)),
            None => Err(TokenizerError::UnknownId(id)),
        }
    }

    /// True if the merge inventory contains the pair of single-byte tokens.
    pub fn has_byte_merge(&self, left: u8, right: u8) -> bool {
        self.merge_lookup
            .contains_key(&(FIRST_BYTE_ID + left as u32, FIRST_BYTE_ID + right as u32))
    }

    /// Token ids and byte offsets into `text`. Lossless: concatenating the
    /// offset slices reproduces the input exactly.
    pub fn encode(&self, text: &str) -> (Vec<u32>, Vec<(usize, usize)>) {
        let mut ids = Vec::new();
        let mut offsets = Vec::new();
        for (start, end) in chunk_ranges(text) {
            let mut parts: Vec<(u32, usize, usize)> = text.as_bytes()[start..end]
                .iter()
                .enumerate()
                .map(|(i, &b)| (FIRST_BYTE_ID + b as u32, start + i, start + i + 1))
                .collect();
            loop {
                let mut best: Option<(u32, usize)> = None;
                for i in 0..parts.len().saturating_sub(1) {
                    if let Some(&(rank, _)) = self.merge_lookup.get(&(parts[i].0, parts[i + 1].0))
                    {
                        if best.is_none_or(|(r, _)| rank < r) {
                            best = Some((rank, i));
                        }
                    }
                }
                let Some((rank, i)) = best else { break };
                let merged = FIRST_MERGE_ID + rank;
                parts[i] = (merged, parts[i].1, parts[i + 1].2);
                parts.remove(i + 1);
            }
            for (id, s, e) in parts {
                ids.push(id);
                offsets.push((s, e));
            }
        }
        (ids, offsets)
    }

    /// Reassemble text from ids. Specials and sentiment markers contribute
    /// nothing; an id beyond the inventory is an error.
    pub fn decode(&self, ids: &[u32]) -> Result<String, TokenizerError> {
        let mut bytes = Vec::new();
        for &id in ids {
            match self.tokens.get(id as usize) {
                Some(Token::Bytes(b)) => bytes.extend_from_slice(b),
                Some(_) => {}
                None => return Err(TokenizerError::UnknownId(id)),
            }
        }
        Ok(String::from_utf8_lossy(&bytes).into_owned())
    }

    /// Write `vocab` (one `token\tid` mapping per line) and `merges` (left right per
    /// line, rank = line order) files.
    pub fn save(&self, vocab_path: &Path, merges_path: &Path) -> Result<(), TokenizerError> {
        let mut vocab_text = String::new();
        for (id, _) in self.tokens.iter().enumerate() {
            vocab_text.push_str(&self.token_string(id as u32)?);
            vocab_text.push('\t');
            vocab_text.push_str(&id.to_string());
            vocab_text.push('\n');
        }
        fs::write(vocab_path, vocab_text)?;
        let mut merges_text = String::new();
        for &(l, r) in &self.merges {
            merges_text.push_str(&self.token_string(l)?);
            merges_text.push(' ');
            merges_text.push_str(&self.token_string(r)?);
            merges_text.push('\n');
        }
        fs::write(merges_path, merges_text)?;
        Ok(())
    }

    /// Load the two-file convention written by [`Vocabulary::save`]. The
    /// vocab file fixes the id layout and must match it; merge operands are
    /// resolved against the byte tokens the file declares.
    pub fn load(vocab_path: &Path, merges_path: &Path) -> Result<Self, TokenizerError> {
        let vocab_text = fs::read_to_string(vocab_path)?;
        let mut by_string: HashMap<String, u32> = HashMap::new();
        let mut max_id = 0u32;
        for (lineno, line) in vocab_text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let (tok, id) = line.rsplit_once('\t').ok_or_else(|| {
                TokenizerError::BadVocabFile(format!("line {}: missing tab", lineno + 1))
            })?;
            let id: u32 = id.parse().map_err(|_| {
                TokenizerError::BadVocabFile(format!("line {}: bad id", lineno + 1))
            })?;
            by_string.insert(tok.to_string(), id);
            max_id = max_id.max(id);
        }
        for (expect, name) in SPECIAL_NAMES.iter().enumerate() {
            if by_string.get(*name).copied() != Some(expect as u32) {
                return Err(TokenizerError::BadVocabFile(format!(
                    "special {name} must have id {expect}"
                )));
            }
        }
        for name in SENTIMENT_NAMES {
            if !by_string.contains_key(name) {
                return Err(TokenizerError::BadVocabFile(format!(
                    "missing sentiment token {name}"
                )));
            }
        }

        let merges_text = fs::read_to_string(merges_path)?;
        let mut id_of_bytes: HashMap<Vec<u8>, u32> = HashMap::new();
        for (tok, &id) in &by_string {
            if SPECIAL_NAMES.contains(&tok.as_str()) || SENTIMENT_NAMES.contains(&tok.as_str()) {
                continue;
            }
            let bytes = unrender_token(tok).ok_or_else(|| {
                TokenizerError::BadVocabFile(format!("unrenderable token {tok:?}"))
            })?;
            id_of_bytes.insert(bytes, id);
        }
        let mut merges = Vec::new();
        let mut merged_bytes = Vec::new();
        for (lineno, line) in merges_text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let (l, r) = line.split_once(' ').ok_or_else(|| {
                TokenizerError::BadVocabFile(format!("merges line {}: no space", lineno + 1))
            })?;
            let lb = unrender_token(l)
                .ok_or_else(|| TokenizerError::BadVocabFile(format!("bad merge operand {l:?}")))?;
            let rb = unrender_token(r)
                .ok_or_else(|| TokenizerError::BadVocabFile(format!("bad merge operand {r:?}")))?;
            let lid = *id_of_bytes.get(&lb).ok_or_else(|| {
                TokenizerError::BadVocabFile(format!("merge operand {l:?} not in vocab"))
            })?;
            let rid = *id_of_bytes.get(&rb).ok_or_else(|| {
                TokenizerError::BadVocabFile(format!("merge operand {r:?} not in vocab"))
            })?;
            let mut joined = lb;
            joined.extend_from_slice(&rb);
            let expect_id = FIRST_MERGE_ID + merges.len() as u32;
            match id_of_bytes.get(&joined) {
                Some(&id) if id == expect_id => {}
                _ => {
                    return Err(TokenizerError::BadVocabFile(format!(
                        "merge {} expects id {}",
                        lineno + 1,
                        expect_id
                    )))
                }
            }
            merges.push((lid, rid));
            merged_bytes.push(joined);
        }
        let vocab = Vocabulary::with_merges(merges, merged_bytes);
        if vocab.len() != (max_id + 1) as usize {
            return Err(TokenizerError::BadVocabFile(format!(
                "vocab declares {} ids but layout yields {}",
                max_id + 1,
                vocab.len()
            )));
        }
        Ok(vocab)
    }
}

/// Pre-tokenisation: split `text` into byte ranges that merges never cross.
/// A word takes at most one preceding space with it; longer space runs and
/// other whitespace stand alone.
fn chunk_ranges(text: &str) -> Vec<(usize, usize)> {
    let b = text.as_bytes();
    let mut chunks = Vec::new();
    let mut i = 0;
    while i < b.len() {
        if !b[i].is_ascii_whitespace() {
            let start = i;
            while i < b.len() && !b[i].is_ascii_whitespace() {
                i += 1;
            }
            chunks.push((start, i));
        } else {
            let start = i;
            while i < b.len() && b[i].is_ascii_whitespace() {
                i += 1;
            }
            let end = i;
            if end < b.len() && b[end - 1] == b' ' {
                if end - 1 > start {
                    chunks.push((start, end - 1));
                }
                let word_start = end - 1;
                while i < b.len() && !b[i].is_ascii_whitespace() {
                    i += 1;
                }
                chunks.push((word_start, i));
            } else {
                chunks.push((start, end));
            }
        }
    }
    chunks
}

/// Train a byte-level BPE vocabulary by greedy highest-frequency merging.
/// Stops at `vocab_size` ids (before the three sentiment markers) or when no
/// adjacent pair occurs twice. Ties break on the lexicographically smallest
/// (left bytes, right bytes).
pub fn train_bpe<S: AsRef<str>>(
    corpus: &[S],
    vocab_size: usize,
) -> Result<Vocabulary, TokenizerError> {
    if vocab_size <= FIRST_MERGE_ID as usize {
        return Err(TokenizerError::VocabTooSmall(vocab_size));
    }
    // Distinct chunks with multiplicities.
    let mut chunk_counts: HashMap<Vec<u8>, u64> = HashMap::new();
    for text in corpus {
        let text = text.as_ref();
        for (s, e) in chunk_ranges(text) {
            *chunk_counts
                .entry(text.as_bytes()[s..e].to_vec())
                .or_insert(0) += 1;
        }
    }
    let mut seqs: Vec<(Vec<u32>, u64)> = chunk_counts
        .into_iter()
        .map(|(bytes, count)| {
            (
                bytes
                    .iter()
                    .map(|&b| FIRST_BYTE_ID + b as u32)
                    .collect::<Vec<u32>>(),
                count,
            )
        })
        .collect();

    let mut token_bytes: Vec<Vec<u8>> = (0u16..=255).map(|b| vec![b as u8]).collect();
    let bytes_of = |token_bytes: &Vec<Vec<u8>>, id: u32| -> Vec<u8> {
        token_bytes[(id - FIRST_BYTE_ID) as usize].clone()
    };

    let mut merges: Vec<(u32, u32)> = Vec::new();
    let target_merges = vocab_size - FIRST_MERGE_ID as usize;
    while merges.len() < target_merges {
        let mut pair_counts: HashMap<(u32, u32), u64> = HashMap::new();
        for (seq, count) in &seqs {
            for w in seq.windows(2) {
                *pair_counts.entry((w[0], w[1])).or_insert(0) += count;
            }
        }
        let best = pair_counts
            .iter()
            .filter(|&(_, &c)| c >= 2)
            .map(|(&pair, &c)| (c, pair))
            .max_by(|a, b| {
                a.0.cmp(&b.0).then_with(|| {
                    // Prefer the lexicographically smallest byte pair, then
                    // the smallest id pair (distinct ids can render the same
                    // bytes); reversed because max_by keeps the greater
                    // element. A total order keeps training independent of
                    // hash-map iteration order.
                    let ka = (bytes_of(&token_bytes, a.1 .0), bytes_of(&token_bytes, a.1 .1));
                    let kb = (bytes_of(&token_bytes, b.1 .0), bytes_of(&token_bytes, b.1 .1));
                    kb.cmp(&ka).then_with(|| (b.1).cmp(&a.1))
                })
            });
        let Some((_, (left, right))) = best else { break };
        let new_id = FIRST_MERGE_ID + merges.len() as u32;
        let mut joined = bytes_of(&token_bytes, left);
        joined.extend_from_slice(&bytes_of(&token_bytes, right));
        token_bytes.push(joined);
        merges.push((left, right));
        for (seq, _) in &mut seqs {
            let mut i = 0;
            while i + 1 < seq.len() {
                if seq[i] == left && seq[i + 1] == right {
                    seq[i] = new_id;
                    seq.remove(i + 1);
                } else {
                    i += 1;
                }
            }
        }
    }

    let merged_bytes = token_bytes.split_off(256);
    Ok(Vocabulary::with_merges(merges, merged_bytes))
}
