//! The QA record file format.
//!
//! ```json
//! {"question":"...","keyword":"...","answer":"...","type":"factual",
//!  "metadata":{"celex_id":"32009H1205(01)","text_id":"eurlex_sum_283"},"difficulty":"easy"}
//! ```
//!
//! `metadata` carries the source document's `celex_id` (EurLex-Sum) or
//! `labels` (EurLex), plus `text_id`, the source doc id.

use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::draft::{Difficulty, QuestionDraft, QuestionStrategy};
use crate::corpus::{LegalDocument, Source};

pub const TEXT_ID_KEY: &str = "text_id";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QaRecord {
    pub question: String,
    pub keyword: String,
    pub answer: String,
    #[serde(rename = "type")]
    pub kind: QuestionStrategy,
    pub metadata: Map<String, Value>,
    pub difficulty: Difficulty,
}

impl QaRecord {
    /// Source doc id stored in the metadata.
    pub fn text_id(&self) -> Option<&str> {
        self.metadata.get(TEXT_ID_KEY).and_then(Value::as_str)
    }

    pub fn validate(&self) -> Result<(), RecordError> {
        if self.difficulty != self.kind.difficulty() {
            return Err(RecordError::DifficultyMismatch {
                kind: self.kind,
                difficulty: self.difficulty,
            });
        }
        if self.answer.trim().is_empty() {
            return Err(RecordError::EmptyAnswer);
        }
        if self.text_id().is_none() {
            return Err(RecordError::MissingMetadata(TEXT_ID_KEY));
        }
        if !self.metadata.contains_key("celex_id") && !self.metadata.contains_key("labels") {
            return Err(RecordError::MissingMetadata("celex_id or labels"));
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RecordError {
    #[error("answer is empty")]
    EmptyAnswer,
    #[error("draft belongs to '{draft}' but document is '{doc}'")]
    WrongDocument { draft: String, doc: String },
    #[error("record of type {kind} must not have difficulty {difficulty:?}")]
    DifficultyMismatch {
        kind: QuestionStrategy,
        difficulty: Difficulty,
    },
    #[error("record metadata lacks {0}")]
    MissingMetadata(&'static str),
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Builds the record for an answered draft, copying source metadata.
pub fn assemble_record(
    draft: &QuestionDraft,
    answer: &str,
    doc: &LegalDocument,
) -> Result<QaRecord, RecordError> {
    if answer.trim().is_empty() {
        return Err(RecordError::EmptyAnswer);
    }
    if draft.source_doc_id != doc.doc_id {
        return Err(RecordError::WrongDocument {
            draft: draft.source_doc_id.clone(),
            doc: doc.doc_id.clone(),
        });
    }
    let mut metadata = Map::new();
    match doc.source {
        Source::EurlexSum => {
            if let Some(celex) = &doc.celex_id {
                metadata.insert("celex_id".into(), Value::from(celex.clone()));
            }
        }
        Source::Eurlex => {
            let labels = doc.labels.clone().unwrap_or_default();
            metadata.insert("labels".into(), Value::from(labels));
        }
    }
    metadata.insert(TEXT_ID_KEY.into(), Value::from(doc.doc_id.clone()));
    Ok(QaRecord {
        question: draft.question_text.clone(),
        keyword: draft.context_excerpt.clone(),
        answer: answer.to_string(),
        kind: draft.strategy,
        metadata,
        difficulty: draft.strategy.difficulty(),
    })
}

pub fn write_records<W: Write>(mut writer: W, records: &[QaRecord]) -> io::Result<()> {
    for record in records {
        serde_json::to_writer(&mut writer, record)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()
}

pub fn read_records<R: BufRead>(reader: R) -> Result<Vec<QaRecord>, RecordError> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: QaRecord = serde_json::from_str(&line).map_err(|e| RecordError::Malformed {
            line: idx + 1,
            message: e.to_string(),
        })?;
        record.validate().map_err(|e| RecordError::Malformed {
            line: idx + 1,
            message: e.to_string(),
        })?;
        out.push(record);
    }
    Ok(out)
}

pub fn load_records(path: &Path) -> Result<Vec<QaRecord>, RecordError> {
    read_records(BufReader::new(File::open(path)?))
}
