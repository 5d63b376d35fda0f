//! CSV ingestion.
//!
//! Expected header: `textID,text,selected_text,sentiment` (any column order).
//! Comma separated, double-quote quoting, UTF-8. Rows whose `text` field is
//! empty are skipped — the public dataset ships one such damaged row.

use std::path::Path;

use super::{CorpusError, Sample, Sentiment};

const COLUMNS: [&str; 4] = ["textID", "text", "selected_text", "sentiment"];

pub fn load_csv(path: &Path) -> Result<Vec<Sample>, CorpusError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => {
                CorpusError::Io(std::io::Error::new(std::io::ErrorKind::NotFound, e))
            }
            _ => CorpusError::Csv(e),
        })?;

    let headers = reader.headers()?.clone();
    let mut index = [0usize; 4];
    for (slot, name) in COLUMNS.iter().enumerate() {
        index[slot] = headers
            .iter()
            .position(|h| h == *name)
            .ok_or_else(|| CorpusError::MissingColumn(name.to_string()))?;
    }

    let mut samples = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let line = (row + 2) as u64;
        let record = record?;
        let field = |slot: usize| -> Result<&str, CorpusError> {
            record
                .get(index[slot])
                .ok_or(CorpusError::MalformedRow(line))
        };
        let text = field(1)?;
        if text.is_empty() {
            continue;
        }
        let sentiment =
            Sentiment::parse(field(3)?).ok_or(CorpusError::MalformedRow(line))?;
        samples.push(Sample {
            text_id: field(0)?.to_string(),
            text: text.to_string(),
            selected_text: field(2)?.to_string(),
            sentiment,
        });
    }
    Ok(samples)
}

/// Per-class sample counts in code order (positive, negative, neutral).
pub fn class_counts(samples: &[Sample]) -> [usize; 3] {
    let mut counts = [0usize; 3];
    for s in samples {
        counts[s.sentiment.code()] += 1;
    }
    counts
}
