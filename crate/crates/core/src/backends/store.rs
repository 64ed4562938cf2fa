//! Verdict store files: csv or jsonl with columns `post_id,backend_id,label`.

use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};

use super::Verdict;
use crate::label::SentimentLabel;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VerdictFormat {
    Csv,
    Jsonl,
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Malformed { line: u64, message: String },
}

#[derive(Serialize, Deserialize)]
struct Row {
    post_id: String,
    backend_id: String,
    label: SentimentLabel,
}

pub fn write_verdicts<W: Write>(verdicts: &[Verdict], mut writer: W, format: VerdictFormat) -> Result<(), StoreError> {
    let malformed = |e: &dyn std::fmt::Display| StoreError::Malformed {
        line: 0,
        message: e.to_string(),
    };
    match format {
        VerdictFormat::Csv => {
            let mut wtr = csv::Writer::from_writer(writer);
            wtr.write_record(["post_id", "backend_id", "label"]).map_err(|e| malformed(&e))?;
            for v in verdicts {
                wtr.write_record([v.post_id.as_str(), v.backend_id.as_str(), v.label.as_str()])
                    .map_err(|e| malformed(&e))?;
            }
            wtr.flush()?;
        }
        VerdictFormat::Jsonl => {
            for v in verdicts {
                let row = Row {
                    post_id: v.post_id.clone(),
                    backend_id: v.backend_id.clone(),
                    label: v.label,
                };
                serde_json::to_writer(&mut writer, &row).map_err(|e| malformed(&e))?;
                writer.write_all(b"\n")?;
            }
            writer.flush()?;
        }
    }
    Ok(())
}

/// Reads a verdict store. Csv `#` lines are comments (provenance headers).
pub fn read_verdicts<R: Read>(reader: R, format: VerdictFormat) -> Result<Vec<Verdict>, StoreError> {
    let mut out = Vec::new();
    let into_verdict = |r: Row| Verdict {
        post_id: r.post_id,
        backend_id: r.backend_id,
        label: r.label,
        raw_fragment: None,
    };
    match format {
        VerdictFormat::Csv => {
            let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(reader);
            for row in rdr.deserialize::<Row>() {
                let row = row.map_err(|e| StoreError::Malformed {
                    line: e.position().map_or(0, |p| p.line()),
                    message: e.to_string(),
                })?;
                out.push(into_verdict(row));
            }
        }
        VerdictFormat::Jsonl => {
            for (idx, line) in BufReader::new(reader).lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let row: Row = serde_json::from_str(&line).map_err(|e| StoreError::Malformed {
                    line: idx as u64 + 1,
                    message: e.to_string(),
                })?;
                out.push(into_verdict(row));
            }
        }
    }
    Ok(out)
}
