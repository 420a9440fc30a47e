//! Paper corpus: newline-delimited JSON records, validated on load.
//!
//! A [`CorpusHandle`] is immutable once built. Changing the corpus means
//! re-ingesting. Export writes records sorted by `paper_id` so a reload of
//! an exported corpus reproduces the same handle and the same bytes.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::subspace::Dimension;

pub const MIN_YEAR: i32 = 1900;
pub const MAX_YEAR: i32 = 2100;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read corpus {path}: {source}")]
    Unreadable {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("duplicate paper_id `{id}` (line {line})")]
    DuplicateId { id: String, line: usize },
    #[error("invalid record `{id}`: {reason}")]
    InvalidRecord { id: String, reason: String },
    #[error("paper `{0}` not found")]
    NotFound(String),
    #[error("serialization failed: {0}")]
    Serialize(#[from] serde_json::Error),
}

/// Supported on-disk corpus layouts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CorpusFormat {
    /// One JSON object per line.
    #[default]
    LinesOfRecords,
}

/// One paper with its decomposed dimension texts.
///
/// Field order matches the on-disk record layout.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaperRecord {
    pub paper_id: String,
    pub title: String,
    #[serde(rename = "abstract", default)]
    pub abstract_text: String,
    pub year: i32,
    #[serde(default)]
    pub categories: BTreeSet<String>,
    #[serde(default)]
    pub problem_text: String,
    #[serde(default)]
    pub method_text: String,
    #[serde(default)]
    pub findings_text: String,
    #[serde(default)]
    pub references: Vec<String>,
}

impl PaperRecord {
    pub fn dimension_text(&self, dim: Dimension) -> &str {
        match dim {
            Dimension::Problem => &self.problem_text,
            Dimension::Method => &self.method_text,
            Dimension::Findings => &self.findings_text,
        }
    }

    pub fn has_dimension(&self, dim: Dimension) -> bool {
        !self.dimension_text(dim).is_empty()
    }

    /// Checks the per-record invariants. Uniqueness is checked by the corpus.
    pub fn validate(&self) -> Result<(), String> {
        if self.paper_id.is_empty() {
            return Err("empty paper_id".into());
        }
        if !(MIN_YEAR..=MAX_YEAR).contains(&self.year) {
            return Err(format!("year {} outside [{MIN_YEAR}, {MAX_YEAR}]", self.year));
        }
        let mut seen = HashSet::with_capacity(self.references.len());
        for r in &self.references {
            if r == &self.paper_id {
                return Err("references its own paper_id".into());
            }
            if !seen.insert(r.as_str()) {
                return Err(format!("duplicate reference `{r}`"));
            }
        }
        Ok(())
    }
}

/// A skipped input line and why.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LineDiagnostic {
    pub line: usize,
    pub message: String,
}

impl std::fmt::Display for LineDiagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CorpusHandle {
    records: BTreeMap<String, PaperRecord>,
    by_year: BTreeMap<i32, BTreeSet<String>>,
}

impl CorpusHandle {
    /// Builds a handle from already-parsed records, enforcing every invariant.
    pub fn from_records(records: impl IntoIterator<Item = PaperRecord>) -> Result<Self, CorpusError> {
        let mut handle = CorpusHandle::default();
        for (i, rec) in records.into_iter().enumerate() {
            rec.validate().map_err(|reason| CorpusError::InvalidRecord {
                id: rec.paper_id.clone(),
                reason,
            })?;
            handle.insert(rec, i + 1)?;
        }
        Ok(handle)
    }

    fn insert(&mut self, rec: PaperRecord, line: usize) -> Result<(), CorpusError> {
        if self.records.contains_key(&rec.paper_id) {
            return Err(CorpusError::DuplicateId { id: rec.paper_id, line });
        }
        self.by_year.entry(rec.year).or_default().insert(rec.paper_id.clone());
        self.records.insert(rec.paper_id.clone(), rec);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&PaperRecord> {
        self.records.get(id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.records.contains_key(id)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Records in ascending `paper_id` order.
    pub fn iter(&self) -> impl Iterator<Item = &PaperRecord> {
        self.records.values()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.records.keys().map(String::as_str)
    }

    pub fn by_year(&self) -> &BTreeMap<i32, BTreeSet<String>> {
        &self.by_year
    }

    pub fn papers_in_year(&self, year: i32) -> impl Iterator<Item = &str> {
        self.by_year.get(&year).into_iter().flatten().map(String::as_str)
    }
}

/// Typed lookup; `Err(NotFound)` for unknown ids.
pub fn get_paper<'a>(handle: &'a CorpusHandle, id: &str) -> Result<&'a PaperRecord, CorpusError> {
    handle.get(id).ok_or_else(|| CorpusError::NotFound(id.to_string()))
}

#[derive(Debug, Clone)]
pub struct IngestReport {
    pub handle: CorpusHandle,
    pub skipped: Vec<LineDiagnostic>,
}

pub fn ingest_corpus(path: impl AsRef<Path>, format: CorpusFormat) -> Result<IngestReport, CorpusError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| CorpusError::Unreadable {
        path: path.display().to_string(),
        source,
    })?;
    ingest_reader(BufReader::new(file), format)
}

/// Parses records line by line. Malformed or invalid lines are skipped with
/// a diagnostic; a duplicate `paper_id` aborts the load.
pub fn ingest_reader(reader: impl BufRead, format: CorpusFormat) -> Result<IngestReport, CorpusError> {
    let CorpusFormat::LinesOfRecords = format;
    let mut handle = CorpusHandle::default();
    let mut skipped = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() || crate::is_header_line(&line) {
            continue;
        }
        let rec: PaperRecord = match serde_json::from_str(&line) {
            Ok(r) => r,
            Err(e) => {
                skipped.push(LineDiagnostic { line: line_no, message: e.to_string() });
                continue;
            }
        };
        if let Err(reason) = rec.validate() {
            skipped.push(LineDiagnostic { line: line_no, message: reason });
            continue;
        }
        handle.insert(rec, line_no)?;
    }
    for d in &skipped {
        log::warn!("corpus {d}");
    }
    Ok(IngestReport { handle, skipped })
}

/// Writes the corpus sorted by `paper_id`, one record per line.
pub fn write_corpus(handle: &CorpusHandle, mut out: impl Write) -> Result<(), CorpusError> {
    for rec in handle.iter() {
        serde_json::to_writer(&mut out, rec)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn export_corpus(handle: &CorpusHandle, path: impl AsRef<Path>) -> Result<(), CorpusError> {
    let file = File::create(path)?;
    write_corpus(handle, BufWriter::new(file))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DimensionCoverage {
    pub problem: f64,
    pub method: f64,
    pub findings: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusStats {
    pub paper_count: usize,
    /// Inclusive `[min, max]`, absent for an empty corpus.
    pub year_range: Option<(i32, i32)>,
    pub per_category: BTreeMap<String, usize>,
    pub coverage: DimensionCoverage,
    /// Papers whose abstract is empty. Reported, not filtered.
    pub missing_abstract: usize,
}

pub fn corpus_stats(handle: &CorpusHandle) -> CorpusStats {
    let n = handle.len();
    let mut per_category = BTreeMap::new();
    let mut with_dim = [0usize; 3];
    let mut missing_abstract = 0;
    for rec in handle.iter() {
        for c in &rec.categories {
            *per_category.entry(c.clone()).or_insert(0) += 1;
        }
        for dim in Dimension::ALL {
            if rec.has_dimension(dim) {
                with_dim[dim.index()] += 1;
            }
        }
        if rec.abstract_text.is_empty() {
            missing_abstract += 1;
        }
    }
    let frac = |k: usize| if n == 0 { 0.0 } else { k as f64 / n as f64 };
    let year_range = match (handle.by_year.keys().next(), handle.by_year.keys().next_back()) {
        (Some(&lo), Some(&hi)) => Some((lo, hi)),
        _ => None,
    };
    CorpusStats {
        paper_count: n,
        year_range,
        per_category,
        coverage: DimensionCoverage {
            problem: frac(with_dim[0]),
            method: frac(with_dim[1]),
            findings: frac(with_dim[2]),
        },
        missing_abstract,
    }
}
