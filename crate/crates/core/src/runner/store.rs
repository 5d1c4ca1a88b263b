//! Append-only JSONL trial store.
//!
//! Each run segment opens with a header line; trial records follow, one per
//! line, written as soon as they are scored. Outlier flags are appended as
//! annotation lines after each condition and applied when reading.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{RunConfig, TrialRecord, TrialStatus};
use crate::pipelines::Condition;

pub const STORE_SCHEMA: &str = "incident-eval/trials";
pub const STORE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreHeader {
    pub schema: String,
    pub version: u32,
    pub config_fingerprint: String,
    pub created_at: DateTime<Utc>,
    pub backend_id: String,
    pub config: RunConfig,
}

impl StoreHeader {
    pub fn new(config: &RunConfig, fingerprint: &str, backend_id: &str) -> Self {
        StoreHeader {
            schema: STORE_SCHEMA.to_string(),
            version: STORE_VERSION,
            config_fingerprint: fingerprint.to_string(),
            created_at: Utc::now(),
            backend_id: backend_id.to_string(),
            config: config.clone(),
        }
    }
}

/// Complete outlier set for one condition of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutlierAnnotation {
    pub condition: Condition,
    pub config_fingerprint: String,
    pub threshold: f64,
    pub flagged: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum StoreLine {
    Header(Box<StoreHeader>),
    Trial(Box<TrialRecord>),
    Outliers(OutlierAnnotation),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StoreContents {
    pub headers: Vec<StoreHeader>,
    /// Records in file order, with outlier annotations applied.
    pub records: Vec<TrialRecord>,
    pub annotations: Vec<OutlierAnnotation>,
}

impl StoreContents {
    /// Distinct fingerprints in order of first appearance.
    pub fn fingerprints(&self) -> Vec<String> {
        let mut seen: Vec<String> = Vec::new();
        for r in &self.records {
            if !seen.contains(&r.config_fingerprint) {
                seen.push(r.config_fingerprint.clone());
            }
        }
        seen
    }
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("store {path}: {reason}")]
    Io { path: String, reason: String },
    #[error("store line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("store line {line}: {reason}")]
    Schema { line: usize, reason: String },
    #[error("store line {line}: record {trial_id} violates the DQ weighted-sum identity")]
    Integrity { line: usize, trial_id: String },
    #[error("store line {line} is truncated ({reason}); {} complete record(s) before it", .contents.records.len())]
    PartialRead {
        contents: Box<StoreContents>,
        line: usize,
        reason: String,
    },
}

/// Single appender for a store file.
pub struct StoreWriter {
    file: File,
    path: PathBuf,
}

impl StoreWriter {
    /// Creates (or truncates) the store and writes `header`.
    pub fn create(path: impl AsRef<Path>, header: &StoreHeader) -> Result<Self, StoreError> {
        Self::open(path.as_ref(), header, false)
    }

    /// Opens the store for appending and starts a new segment with `header`.
    pub fn append(path: impl AsRef<Path>, header: &StoreHeader) -> Result<Self, StoreError> {
        Self::open(path.as_ref(), header, true)
    }

    fn open(path: &Path, header: &StoreHeader, append: bool) -> Result<Self, StoreError> {
        let io = |e: std::io::Error| StoreError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        };
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(io)?;
        }
        let file = OpenOptions::new()
            .create(true)
            .write(true)
            .append(append)
            .truncate(!append)
            .open(path)
            .map_err(io)?;
        let mut writer = StoreWriter {
            file,
            path: path.to_path_buf(),
        };
        writer.write_line(&StoreLine::Header(Box::new(header.clone())))?;
        Ok(writer)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn write_line(&mut self, line: &StoreLine) -> Result<(), StoreError> {
        let mut bytes = serde_json::to_vec(line).map_err(|e| StoreError::Io {
            path: self.path.display().to_string(),
            reason: e.to_string(),
        })?;
        bytes.push(b'\n');
        self.file
            .write_all(&bytes)
            .and_then(|_| self.file.flush())
            .map_err(|e| StoreError::Io {
                path: self.path.display().to_string(),
                reason: e.to_string(),
            })
    }

    /// Starts another run segment in the same file.
    pub fn write_header(&mut self, header: &StoreHeader) -> Result<(), StoreError> {
        self.write_line(&StoreLine::Header(Box::new(header.clone())))
    }

    pub fn append_record(&mut self, record: &TrialRecord) -> Result<(), StoreError> {
        self.write_line(&StoreLine::Trial(Box::new(record.clone())))
    }

    pub fn append_annotation(&mut self, annotation: &OutlierAnnotation) -> Result<(), StoreError> {
        self.write_line(&StoreLine::Outliers(annotation.clone()))
    }
}

pub fn read_store(path: impl AsRef<Path>) -> Result<StoreContents, StoreError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| StoreError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    parse_store(&text)
}

/// Parses store text. A malformed final line is reported as
/// [`StoreError::PartialRead`] carrying everything before it.
pub fn parse_store(text: &str) -> Result<StoreContents, StoreError> {
    let mut contents = StoreContents::default();
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty())
        .collect();
    let last = lines.last().map(|(n, _)| *n);
    for (number, line) in lines {
        let parsed: StoreLine = match serde_json::from_str(line) {
            Ok(p) => p,
            Err(e) if Some(number) == last => {
                return Err(StoreError::PartialRead {
                    contents: Box::new(contents),
                    line: number,
                    reason: e.to_string(),
                })
            }
            Err(e) => {
                return Err(StoreError::Parse {
                    line: number,
                    reason: e.to_string(),
                })
            }
        };
        match parsed {
            StoreLine::Header(h) => {
                if h.schema != STORE_SCHEMA || h.version != STORE_VERSION {
                    return Err(StoreError::Schema {
                        line: number,
                        reason: format!(
                            "unsupported schema {} v{} (expected {STORE_SCHEMA} v{STORE_VERSION})",
                            h.schema, h.version
                        ),
                    });
                }
                contents.headers.push(*h);
            }
            StoreLine::Trial(record) => {
                if contents.headers.is_empty() {
                    return Err(StoreError::Schema {
                        line: number,
                        reason: "trial record before any header".into(),
                    });
                }
                if !record.dq.satisfies_identity() {
                    return Err(StoreError::Integrity {
                        line: number,
                        trial_id: record.trial_id,
                    });
                }
                contents.records.push(*record);
            }
            StoreLine::Outliers(a) => {
                for r in contents.records.iter_mut().filter(|r| {
                    r.condition == a.condition && r.config_fingerprint == a.config_fingerprint
                }) {
                    r.outlier = r.status == TrialStatus::Failed || a.flagged.contains(&r.trial_id);
                }
                contents.annotations.push(a);
            }
        }
    }
    Ok(contents)
}

#[derive(Serialize)]
struct CsvRow<'a> {
    trial_id: &'a str,
    condition: &'a str,
    t2u_seconds: f64,
    dq: f64,
    validity: f64,
    specificity: f64,
    correctness: f64,
    actions_count: usize,
    status: &'a str,
    outlier: bool,
}

/// Flat per-trial CSV export.
pub fn write_csv<W: Write>(records: &[TrialRecord], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(CsvRow {
            trial_id: &r.trial_id,
            condition: r.condition.as_str(),
            t2u_seconds: r.t2u_secs,
            dq: r.dq.dq,
            validity: r.dq.validity,
            specificity: r.dq.specificity,
            correctness: r.dq.correctness,
            actions_count: r.actions_count(),
            status: r.status.as_str(),
            outlier: r.outlier,
        })?;
    }
    w.flush()?;
    Ok(())
}
