//! Corpus and embedding file formats.
//!
//! Corpus: JSONL, one `{"id", "text", "intent"}` object per line (an optional
//! `"source_id"` is carried by upsampled corpora).
//!
//! Embeddings: either a binary matrix (`DSEM` magic, `u32` dimension, `u64`
//! row count, then row-major little-endian `f32`) or JSONL with one float
//! array per line. The reader picks the format from the first four bytes.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EmbeddedRequest, EmbeddingVector};
use crate::error::{Error, Result};

pub const EMBEDDING_MAGIC: &[u8; 4] = b"DSEM";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub id: String,
    pub text: String,
    pub intent: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_id: Option<String>,
}

impl From<&EmbeddedRequest> for CorpusRecord {
    fn from(r: &EmbeddedRequest) -> Self {
        Self {
            id: r.id.clone(),
            text: r.text.clone(),
            intent: r.intent.clone(),
            source_id: r.source_id.clone(),
        }
    }
}

/// A dense row matrix as read from disk, before normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRows {
    pub dim: usize,
    pub rows: Vec<Vec<f64>>,
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

pub fn read_corpus(path: &Path) -> Result<Vec<CorpusRecord>> {
    let reader = BufReader::new(open(path)?);
    let mut out = Vec::new();
    for (index, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: CorpusRecord = serde_json::from_str(&line).map_err(|e| Error::Format {
            kind: "corpus",
            index,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_corpus<'a>(
    path: &Path,
    records: impl IntoIterator<Item = &'a CorpusRecord>,
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    for rec in records {
        serde_json::to_writer(&mut w, rec)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_embedding_rows(path: &Path) -> Result<EmbeddingRows> {
    let mut bytes = Vec::new();
    open(path)?
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(EMBEDDING_MAGIC) {
        parse_binary(&bytes)
    } else {
        parse_jsonl(&bytes)
    }
}

fn format_err(index: usize, message: impl Into<String>) -> Error {
    Error::Format {
        kind: "embedding",
        index,
        message: message.into(),
    }
}

fn parse_binary(bytes: &[u8]) -> Result<EmbeddingRows> {
    if bytes.len() < 16 {
        return Err(format_err(0, "truncated header"));
    }
    let dim = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let n_rows = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    if dim == 0 {
        return Err(format_err(0, "zero dimension"));
    }
    let expected = n_rows
        .checked_mul(dim)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| format_err(0, "header size overflow"))?;
    let body = &bytes[16..];
    if body.len() != expected {
        return Err(format_err(
            0,
            format!(
                "body holds {} bytes, header declares {n_rows} rows x {dim} dims",
                body.len()
            ),
        ));
    }
    let rows = body
        .chunks_exact(dim * 4)
        .map(|row| {
            row.chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
                .collect()
        })
        .collect();
    Ok(EmbeddingRows { dim, rows })
}

fn parse_jsonl(bytes: &[u8]) -> Result<EmbeddingRows> {
    let text = std::str::from_utf8(bytes).map_err(|e| format_err(0, e.to_string()))?;
    let mut rows = Vec::new();
    let mut dim = None;
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let index = rows.len();
        // Non-finite tokens are not valid JSON; surface them as such.
        let row: Vec<f64> = serde_json::from_str(line).map_err(|e| {
            if line.contains("NaN") || line.contains("inf") {
                Error::NonFinite { index }
            } else {
                format_err(index, e.to_string())
            }
        })?;
        match dim {
            None => dim = Some(row.len()),
            Some(d) if d != row.len() => {
                return Err(Error::DimensionMismatch {
                    index,
                    expected: d,
                    found: row.len(),
                })
            }
            _ => {}
        }
        rows.push(row);
    }
    match dim {
        Some(0) => Err(format_err(0, "zero dimension")),
        Some(dim) => Ok(EmbeddingRows { dim, rows }),
        None => Ok(EmbeddingRows { dim: 0, rows }),
    }
}

/// Writes the binary `DSEM` format. Values are stored as `f32`.
pub fn write_embeddings_binary<'a>(
    path: &Path,
    dim: usize,
    rows: impl ExactSizeIterator<Item = &'a [f64]>,
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    let io = |e| Error::io(path, e);
    w.write_all(EMBEDDING_MAGIC).map_err(io)?;
    w.write_all(&(dim as u32).to_le_bytes()).map_err(io)?;
    w.write_all(&(rows.len() as u64).to_le_bytes()).map_err(io)?;
    for (index, row) in rows.enumerate() {
        if row.len() != dim {
            return Err(Error::DimensionMismatch {
                index,
                expected: dim,
                found: row.len(),
            });
        }
        for v in row {
            w.write_all(&(*v as f32).to_le_bytes()).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

/// Writes one JSON float array per line, preserving full `f64` precision.
pub fn write_embeddings_jsonl<'a>(
    path: &Path,
    rows: impl IntoIterator<Item = &'a [f64]>,
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    for row in rows {
        serde_json::to_writer(&mut w, row)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Joins corpus records with embedding rows, normalizing each row.
pub fn join_records(records: Vec<CorpusRecord>, rows: EmbeddingRows) -> Result<Vec<EmbeddedRequest>> {
    if records.len() != rows.rows.len() {
        return Err(Error::RowCountMismatch {
            corpus: records.len(),
            embeddings: rows.rows.len(),
        });
    }
    let mut seen = HashSet::with_capacity(records.len());
    let mut out = Vec::with_capacity(records.len());
    for (index, (rec, row)) in records.into_iter().zip(rows.rows).enumerate() {
        if row.len() != rows.dim {
            return Err(Error::DimensionMismatch {
                index,
                expected: rows.dim,
                found: row.len(),
            });
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        if !seen.insert(rec.id.clone()) {
            return Err(Error::DuplicateId { id: rec.id, index });
        }
        let embedding = EmbeddingVector::normalized(row).map_err(|e| match e {
            Error::ZeroNorm { .. } => Error::ZeroNorm { index },
            other => other,
        })?;
        if rec.text.split_whitespace().next().is_none() {
            return Err(Error::Format {
                kind: "corpus",
                index,
                message: "empty text".into(),
            });
        }
        let mut req = EmbeddedRequest::new(rec.id, rec.text, rec.intent, embedding);
        req.source_id = rec.source_id;
        out.push(req);
    }
    Ok(out)
}

/// Loads a corpus and its embeddings; order is preserved.
pub fn load_embeddings(corpus_path: &Path, embeddings_path: &Path) -> Result<Vec<EmbeddedRequest>> {
    let records = read_corpus(corpus_path)?;
    let rows = read_embedding_rows(embeddings_path)?;
    join_records(records, rows)
}

/// Writes a corpus file and a matching binary embedding file.
pub fn save_requests(corpus_path: &Path, embeddings_path: &Path, requests: &[EmbeddedRequest]) -> Result<()> {
    let records: Vec<CorpusRecord> = requests.iter().map(CorpusRecord::from).collect();
    write_corpus(corpus_path, &records)?;
    let dim = requests.first().map_or(0, |r| r.embedding.dim());
    write_embeddings_binary(
        embeddings_path,
        dim,
        requests.iter().map(|r| r.embedding.as_slice()),
    )
}
