//! Loading and validating the real legal corpora.
//!
//! A corpus file holds one JSON object per line:
//!
//! ```text
//! {"doc_id":"eurlex_15107","source":"eurlex","text":"...","labels":[9,23,93,96,97]}
//! {"doc_id":"eurlex_sum_283","source":"eurlex_sum","text":"...","summary":"...","celex_id":"32009H1205(01)"}
//! ```
//!
//! Fields other than the six known ones are kept in [`LegalDocument::extra`]
//! and written back out unchanged.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::complexity::{classify_band, token_count, BandThresholds, LengthBand};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Eurlex,
    EurlexSum,
}

impl Source {
    pub const ALL: [Source; 2] = [Source::Eurlex, Source::EurlexSum];

    pub fn as_str(self) -> &'static str {
        match self {
            Source::Eurlex => "eurlex",
            Source::EurlexSum => "eurlex_sum",
        }
    }

    /// Display name used in reports ("EurLex", "EurLex-Sum").
    pub fn display_name(self) -> &'static str {
        match self {
            Source::Eurlex => "EurLex",
            Source::EurlexSum => "EurLex-Sum",
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Source {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "eurlex" => Ok(Source::Eurlex),
            "eurlex_sum" => Ok(Source::EurlexSum),
            other => Err(format!("unknown source '{other}' (expected eurlex or eurlex_sum)")),
        }
    }
}

/// One entry of a source corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LegalDocument {
    pub doc_id: String,
    pub source: Source,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<i64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub celex_id: Option<String>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl LegalDocument {
    pub fn eurlex(doc_id: impl Into<String>, text: impl Into<String>, labels: Vec<i64>) -> Self {
        Self {
            doc_id: doc_id.into(),
            source: Source::Eurlex,
            text: text.into(),
            summary: None,
            labels: Some(labels),
            celex_id: None,
            extra: Map::new(),
        }
    }

    pub fn eurlex_sum(
        doc_id: impl Into<String>,
        text: impl Into<String>,
        summary: impl Into<String>,
        celex_id: impl Into<String>,
    ) -> Self {
        Self {
            doc_id: doc_id.into(),
            source: Source::EurlexSum,
            text: text.into(),
            summary: Some(summary.into()),
            labels: None,
            celex_id: Some(celex_id.into()),
            extra: Map::new(),
        }
    }

    /// Checks the per-document invariants.
    pub fn validate(&self) -> Result<(), InvalidDocument> {
        if self.doc_id.trim().is_empty() {
            return Err(InvalidDocument::EmptyDocId);
        }
        if self.text.trim().is_empty() {
            return Err(InvalidDocument::EmptyText);
        }
        match self.source {
            Source::Eurlex => {
                if self.labels.is_none() {
                    return Err(InvalidDocument::MissingField("labels"));
                }
                if self.summary.is_some() {
                    return Err(InvalidDocument::UnexpectedField("summary"));
                }
                if self.celex_id.is_some() {
                    return Err(InvalidDocument::UnexpectedField("celex_id"));
                }
            }
            Source::EurlexSum => {
                match &self.summary {
                    None => return Err(InvalidDocument::MissingField("summary")),
                    Some(s) if s.trim().is_empty() => return Err(InvalidDocument::EmptySummary),
                    Some(_) => {}
                }
                match &self.celex_id {
                    None => return Err(InvalidDocument::MissingField("celex_id")),
                    Some(c) if c.trim().is_empty() => {
                        return Err(InvalidDocument::MissingField("celex_id"))
                    }
                    Some(_) => {}
                }
                if self.labels.is_some() {
                    return Err(InvalidDocument::UnexpectedField("labels"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum InvalidDocument {
    #[error("doc_id is empty")]
    EmptyDocId,
    #[error("text is empty")]
    EmptyText,
    #[error("summary is empty")]
    EmptySummary,
    #[error("missing required field '{0}' for this source")]
    MissingField(&'static str),
    #[error("field '{0}' is not allowed for this source")]
    UnexpectedField(&'static str),
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: {kind}")]
    Invalid { line: usize, kind: InvalidDocument },
    #[error("line {line}: source '{found}' does not match expected source '{expected}'")]
    SourceMismatch {
        line: usize,
        expected: Source,
        found: Source,
    },
    #[error("line {line}: duplicate doc_id '{doc_id}' (first seen on line {first_line})")]
    DuplicateId {
        line: usize,
        doc_id: String,
        first_line: usize,
    },
    #[error("corpus is empty")]
    Empty,
    #[error("quantile {0} is outside (0, 1)")]
    BadQuantile(f64),
}

pub type Corpus = Vec<LegalDocument>;

/// Loads a corpus file, requiring every record to carry `source`.
pub fn load_corpus(path: &Path, source: Source) -> Result<Corpus, CorpusError> {
    let file = File::open(path).map_err(|e| CorpusError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    read_corpus(BufReader::new(file), source).map_err(|e| match e {
        CorpusError::Io { source, .. } => CorpusError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => other,
    })
}

/// Reads corpus records from any buffered reader. Blank lines are skipped;
/// line numbers in errors are 1-based physical lines.
pub fn read_corpus<R: BufRead>(reader: R, source: Source) -> Result<Corpus, CorpusError> {
    let mut docs = Vec::new();
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| CorpusError::Io {
            path: PathBuf::new(),
            source: e,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let doc: LegalDocument =
            serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
                line: line_no,
                message: e.to_string(),
            })?;
        if doc.source != source {
            return Err(CorpusError::SourceMismatch {
                line: line_no,
                expected: source,
                found: doc.source,
            });
        }
        doc.validate().map_err(|kind| CorpusError::Invalid {
            line: line_no,
            kind,
        })?;
        if let Some(&first_line) = seen.get(&doc.doc_id) {
            return Err(CorpusError::DuplicateId {
                line: line_no,
                doc_id: doc.doc_id,
                first_line,
            });
        }
        seen.insert(doc.doc_id.clone(), line_no);
        docs.push(doc);
    }
    Ok(docs)
}

/// Writes documents in the corpus record format, one per line.
pub fn write_corpus<W: Write>(mut writer: W, docs: &[LegalDocument]) -> io::Result<()> {
    for doc in docs {
        serde_json::to_writer(&mut writer, doc)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()
}

/// Checks that doc ids are unique across several corpora.
pub fn ensure_unique_ids<'a>(
    docs: impl IntoIterator<Item = &'a LegalDocument>,
) -> Result<(), String> {
    let mut seen = HashSet::new();
    for doc in docs {
        if !seen.insert(doc.doc_id.as_str()) {
            return Err(doc.doc_id.clone());
        }
    }
    Ok(())
}

/// Nearest-rank quantile over an ascending slice: the value at rank
/// `ceil(q * n)`, with ranks starting at 1.
pub fn nearest_rank(sorted: &[usize], q: f64) -> usize {
    assert!(!sorted.is_empty());
    let n = sorted.len();
    // epsilon absorbs 1/3 * 300 = 100.00000000000001
    let rank = (q * n as f64 - 1e-9).ceil().max(1.0) as usize;
    sorted[rank.min(n) - 1]
}

pub(crate) fn sorted_token_counts(corpus: &[LegalDocument]) -> Vec<usize> {
    let mut counts: Vec<usize> = corpus.iter().map(|d| token_count(&d.text)).collect();
    counts.sort_unstable();
    counts
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusStats {
    pub document_count: usize,
    /// Keyed by the quantile as written (e.g. "0.5").
    pub token_count_quantiles: BTreeMap<String, usize>,
    pub band_counts: BTreeMap<LengthBand, usize>,
}

impl CorpusStats {
    pub fn quantile(&self, q: f64) -> Option<usize> {
        self.token_count_quantiles.get(&quantile_key(q)).copied()
    }
}

fn quantile_key(q: f64) -> String {
    format!("{q}")
}

/// Token-count quantiles and length-band counts for a corpus.
pub fn corpus_stats(
    corpus: &[LegalDocument],
    quantiles: &[f64],
    thresholds: &BandThresholds,
) -> Result<CorpusStats, CorpusError> {
    if corpus.is_empty() {
        return Err(CorpusError::Empty);
    }
    if let Some(&bad) = quantiles.iter().find(|q| !(**q > 0.0 && **q < 1.0)) {
        return Err(CorpusError::BadQuantile(bad));
    }
    let counts = sorted_token_counts(corpus);
    let token_count_quantiles = quantiles
        .iter()
        .map(|&q| (quantile_key(q), nearest_rank(&counts, q)))
        .collect();
    let mut band_counts: BTreeMap<LengthBand, usize> =
        LengthBand::ALL.iter().map(|&b| (b, 0)).collect();
    for &c in &counts {
        *band_counts.entry(classify_band(c, thresholds)).or_default() += 1;
    }
    Ok(CorpusStats {
        document_count: corpus.len(),
        token_count_quantiles,
        band_counts,
    })
}
