//! Run artifacts on disk: series CSV, outlier JSONL and cluster JSON.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::experiment::{RunArtifacts, SeriesPoint};
use super::suite::EvaluationReport;
use crate::embedding::{EmbeddedRequest, EmbeddingVector};
use crate::error::{Error, Result};
use crate::interpret::InterpretationSummary;
use crate::stream::OutlierEntry;

/// One line of an outlier file. Embeddings are stored in full so the file
/// can be re-clustered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutlierRecord {
    pub t: usize,
    pub id: String,
    pub text: String,
    pub intent: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_id: Option<String>,
    pub similarity: f64,
    pub embedding: Vec<f64>,
}

impl From<&OutlierEntry> for OutlierRecord {
    fn from(o: &OutlierEntry) -> Self {
        Self {
            t: o.t,
            id: o.request.id.clone(),
            text: o.request.text.clone(),
            intent: o.request.intent.clone(),
            source_id: o.request.source_id.clone(),
            similarity: o.similarity,
            embedding: o.request.embedding.as_slice().to_vec(),
        }
    }
}

impl OutlierRecord {
    pub fn into_entry(self) -> Result<OutlierEntry> {
        let mut request = EmbeddedRequest::new(self.id, self.text, self.intent, EmbeddingVector::from_raw(self.embedding)?);
        request.source_id = self.source_id;
        Ok(OutlierEntry {
            t: self.t,
            request,
            similarity: self.similarity,
        })
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn write_outliers(path: &Path, outliers: &[OutlierEntry]) -> Result<()> {
    let mut w = create(path)?;
    for o in outliers {
        serde_json::to_writer(&mut w, &OutlierRecord::from(o))?;
        writeln!(w).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_outliers(path: &Path) -> Result<Vec<OutlierEntry>> {
    let reader = BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?);
    let mut out = Vec::new();
    for (index, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: OutlierRecord = serde_json::from_str(&line).map_err(|e| Error::Format {
            kind: "outliers",
            index,
            message: e.to_string(),
        })?;
        out.push(rec.into_entry()?);
    }
    Ok(out)
}

pub fn write_series_csv(path: &Path, series: &[SeriesPoint]) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "t,s_t,true_drift_fraction").map_err(io)?;
    for p in series {
        writeln!(w, "{},{},{}", p.t, p.s, p.true_drift_fraction).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Writes `series_<run>.csv`, `outliers_<run>.jsonl` and, when the run was
/// interpreted, `clusters_<run>.json`.
pub fn write_run_artifacts(dir: &Path, run: &RunArtifacts) -> Result<()> {
    let i = run.report.run;
    write_series_csv(&dir.join(format!("series_{i}.csv")), &run.series)?;
    write_outliers(&dir.join(format!("outliers_{i}.jsonl")), &run.window_outliers)?;
    if let Some(interp) = &run.interpretation {
        let summary: InterpretationSummary = interp.summary();
        write_json(&dir.join(format!("clusters_{i}.json")), &summary)?;
    }
    Ok(())
}

/// Writes `report.json` plus the artifacts of every run.
pub fn write_suite(dir: &Path, runs: &[RunArtifacts]) -> Result<EvaluationReport> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for run in runs {
        write_run_artifacts(dir, run)?;
    }
    let report = EvaluationReport::new(runs.iter().map(|r| r.report.clone()).collect());
    write_json(&dir.join("report.json"), &report)?;
    Ok(report)
}
