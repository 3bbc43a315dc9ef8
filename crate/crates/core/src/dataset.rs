//! Task formatting, leakage-safe splits and manifest export.
//!
//! Splits are drawn over *source documents*: the distinct doc ids are
//! shuffled and cut by largest-remainder counts, and every example inherits
//! the split of its document. A document's real example and all of the QA
//! pairs generated from it therefore always land in the same file.
//!
//! An export directory holds:
//!
//! | file | contents |
//! |------|----------|
//! | `train.jsonl` | training examples in curriculum order |
//! | `validation.jsonl`, `test.jsonl` | examples sorted by source doc id, then example id |
//! | `manifest_meta.json` | seed, ratios, stage count, counts, config echo, content hash |

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::complexity::{ComplexityModel, ComplexityProfile};
use crate::corpus::LegalDocument;
use crate::curriculum::{CurriculumManifest, Origin, Task, TrainingExample};
use crate::qagen::{Difficulty, QaRecord};
use crate::seed::{largest_remainder, SeededRng};

pub const META_FILE: &str = "manifest_meta.json";

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("task {task} cannot be built from {input}")]
    IncompatibleTask { task: Task, input: String },
    #[error("split ratios must be non-negative and sum to 1 (got {0:?})")]
    BadRatios([f64; 3]),
    #[error("{docs} distinct documents cannot fill {splits} non-empty splits")]
    TooFewDocuments { docs: usize, splits: usize },
    #[error("example '{example_id}' (document '{doc_id}') has no split assignment")]
    Unassigned { example_id: String, doc_id: String },
    #[error("{path}: line {line}: {message}")]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// What a training example is built from.
#[derive(Debug, Clone, Copy)]
pub enum ExampleInput<'a> {
    Document(&'a LegalDocument),
    /// A QA record and its position among the records of its document.
    Qa { record: &'a QaRecord, ordinal: usize },
}

/// Prompt of a QA example.
pub fn qa_prompt(keyword: &str, question: &str) -> String {
    format!("Context:\n{keyword}\n\nQuestion:\n{question}")
}

/// Sorted, de-duplicated label ids joined by commas.
pub fn label_target(labels: &[i64]) -> String {
    let sorted: BTreeSet<i64> = labels.iter().copied().collect();
    sorted
        .iter()
        .map(i64::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

pub fn to_training_example(
    input: ExampleInput<'_>,
    task: Task,
    model: &ComplexityModel,
) -> Result<TrainingExample, DatasetError> {
    let incompatible = |what: &str| DatasetError::IncompatibleTask {
        task,
        input: what.to_string(),
    };
    match (input, task) {
        (ExampleInput::Document(doc), Task::Labeling) => {
            let labels = doc
                .labels
                .as_deref()
                .filter(|l| !l.is_empty())
                .ok_or_else(|| incompatible(&format!("document '{}' without labels", doc.doc_id)))?;
            Ok(real_example(doc, task, label_target(labels), model))
        }
        (ExampleInput::Document(doc), Task::Summarization) => {
            let summary = doc
                .summary
                .clone()
                .ok_or_else(|| incompatible(&format!("document '{}' without summary", doc.doc_id)))?;
            Ok(real_example(doc, task, summary, model))
        }
        (ExampleInput::Qa { record, ordinal }, Task::Qa) => {
            let doc_id = record
                .text_id()
                .ok_or_else(|| incompatible("a QA record without metadata.text_id"))?;
            let prompt = qa_prompt(&record.keyword, &record.question);
            Ok(TrainingExample {
                example_id: format!("{doc_id}#qa{ordinal:02}"),
                task,
                complexity: model.profile(&prompt),
                prompt,
                target: record.answer.clone(),
                origin: Origin::Synthetic,
                source_doc_id: doc_id.to_string(),
                difficulty: Some(record.difficulty),
            })
        }
        (ExampleInput::Document(doc), Task::Qa) => {
            Err(incompatible(&format!("document '{}'", doc.doc_id)))
        }
        (ExampleInput::Qa { .. }, _) => Err(incompatible("a QA record")),
    }
}

fn real_example(
    doc: &LegalDocument,
    task: Task,
    target: String,
    model: &ComplexityModel,
) -> TrainingExample {
    TrainingExample {
        example_id: format!("{}#{task}", doc.doc_id),
        task,
        prompt: doc.text.clone(),
        target,
        origin: Origin::Real,
        source_doc_id: doc.doc_id.clone(),
        complexity: model.profile(&doc.text),
        difficulty: None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    pub fn file_name(self) -> &'static str {
        match self {
            Split::Train => "train.jsonl",
            Split::Validation => "validation.jsonl",
            Split::Test => "test.jsonl",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        })
    }
}

/// Train/validation/test fractions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitRatios {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.8,
            validation: 0.1,
            test: 0.1,
        }
    }
}

impl SplitRatios {
    pub fn as_array(&self) -> [f64; 3] {
        [self.train, self.validation, self.test]
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        let r = self.as_array();
        let sum: f64 = r.iter().sum();
        if r.iter().any(|x| !x.is_finite() || *x < 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(DatasetError::BadRatios(r));
        }
        Ok(())
    }

    /// Largest-remainder document counts for `docs` documents.
    pub fn document_counts(&self, docs: usize) -> [usize; 3] {
        let c = largest_remainder(&self.as_array(), docs);
        [c[0], c[1], c[2]]
    }
}

/// Split of every source document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub ratios: SplitRatios,
    pub assignment: BTreeMap<String, Split>,
}

impl SplitAssignment {
    pub fn split_of(&self, doc_id: &str) -> Option<Split> {
        self.assignment.get(doc_id).copied()
    }

    pub fn document_counts(&self) -> [usize; 3] {
        let mut counts = [0; 3];
        for split in self.assignment.values() {
            counts[*split as usize] += 1;
        }
        counts
    }
}

/// Assigns the distinct source documents of `examples` to splits.
pub fn split(
    examples: &[TrainingExample],
    ratios: SplitRatios,
    seed: u64,
) -> Result<SplitAssignment, DatasetError> {
    let docs: BTreeSet<&str> = examples.iter().map(|e| e.source_doc_id.as_str()).collect();
    split_documents(docs, ratios, seed)
}

/// Document-level split over explicit doc ids (sorted before shuffling).
pub fn split_documents<'a>(
    doc_ids: impl IntoIterator<Item = &'a str>,
    ratios: SplitRatios,
    seed: u64,
) -> Result<SplitAssignment, DatasetError> {
    ratios.validate()?;
    let mut docs: Vec<&str> = doc_ids.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
    let nonzero = ratios.as_array().iter().filter(|r| **r > 0.0).count();
    if docs.len() < nonzero {
        return Err(DatasetError::TooFewDocuments {
            docs: docs.len(),
            splits: nonzero,
        });
    }
    SeededRng::new(seed).shuffle(&mut docs);
    let counts = ratios.document_counts(docs.len());
    let mut assignment = BTreeMap::new();
    let mut iter = docs.into_iter();
    for (split, count) in Split::ALL.into_iter().zip(counts) {
        for doc in iter.by_ref().take(count) {
            assignment.insert(doc.to_string(), split);
        }
    }
    Ok(SplitAssignment { ratios, assignment })
}

/// One line of a split file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExportedExample {
    pub example_id: String,
    pub stage_index: usize,
    pub task: Task,
    pub prompt: String,
    pub target: String,
    pub origin: Origin,
    pub source_doc_id: String,
    pub difficulty: Option<Difficulty>,
    pub complexity: ComplexityProfile,
}

impl ExportedExample {
    pub fn new(stage_index: usize, example: &TrainingExample) -> Self {
        Self {
            example_id: example.example_id.clone(),
            stage_index,
            task: example.task,
            prompt: example.prompt.clone(),
            target: example.target.clone(),
            origin: example.origin,
            source_doc_id: example.source_doc_id.clone(),
            difficulty: example.difficulty,
            complexity: example.complexity.clone(),
        }
    }

    pub fn into_example(self) -> (usize, TrainingExample) {
        (
            self.stage_index,
            TrainingExample {
                example_id: self.example_id,
                task: self.task,
                prompt: self.prompt,
                target: self.target,
                origin: self.origin,
                source_doc_id: self.source_doc_id,
                complexity: self.complexity,
                difficulty: self.difficulty,
            },
        )
    }
}

/// Options echoed into `manifest_meta.json`.
#[derive(Debug, Clone, Default)]
pub struct ExportOptions {
    pub seed: u64,
    /// RFC 3339 timestamp; the current time when `None`.
    pub created_at: Option<String>,
    pub config: Value,
    /// Extra top-level keys (e.g. generation counts).
    pub extra: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExportSummary {
    /// Lines per split file, in train/validation/test order.
    pub lines: [usize; 3],
    pub content_hash: String,
}

fn write_lines(path: &Path, rows: &[ExportedExample]) -> Result<Vec<u8>, DatasetError> {
    let mut bytes = Vec::new();
    for row in rows {
        serde_json::to_writer(&mut bytes, row).expect("in-memory serialization");
        bytes.push(b'\n');
    }
    fs::write(path, &bytes).map_err(io_err(path))?;
    Ok(bytes)
}

/// SHA-256 over the split files, each prefixed by its name and length.
pub fn content_hash(files: &[(&str, &[u8])]) -> String {
    let mut hasher = Sha256::new();
    for (name, bytes) in files {
        hasher.update(name.as_bytes());
        hasher.update([0]);
        hasher.update((bytes.len() as u64).to_be_bytes());
        hasher.update(bytes);
    }
    hex::encode(hasher.finalize())
}

/// Writes the three split files and `manifest_meta.json` into `out_dir`.
pub fn export_manifest(
    manifest: &CurriculumManifest,
    assignment: &SplitAssignment,
    out_dir: &Path,
    options: &ExportOptions,
) -> Result<ExportSummary, DatasetError> {
    let mut rows: [Vec<ExportedExample>; 3] = Default::default();
    let mut origin_counts = [[0usize; 2]; 3];
    for entry in &manifest.entries {
        let example = &entry.example;
        let split = assignment
            .split_of(&example.source_doc_id)
            .ok_or_else(|| DatasetError::Unassigned {
                example_id: example.example_id.clone(),
                doc_id: example.source_doc_id.clone(),
            })?;
        rows[split as usize].push(ExportedExample::new(entry.stage_index, example));
        origin_counts[split as usize][example.origin as usize] += 1;
    }
    for held_out in &mut rows[1..] {
        held_out.sort_by(|a, b| {
            (a.source_doc_id.as_str(), a.example_id.as_str())
                .cmp(&(b.source_doc_id.as_str(), b.example_id.as_str()))
        });
    }

    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let mut written = Vec::with_capacity(3);
    for split in Split::ALL {
        let path = out_dir.join(split.file_name());
        written.push(write_lines(&path, &rows[split as usize])?);
    }
    let hash = content_hash(&[
        (Split::Train.file_name(), &written[0]),
        (Split::Validation.file_name(), &written[1]),
        (Split::Test.file_name(), &written[2]),
    ]);

    let mut counts = Map::new();
    for split in Split::ALL {
        let [real, synthetic] = origin_counts[split as usize];
        counts.insert(
            split.to_string(),
            json!({"real": real, "synthetic": synthetic, "total": real + synthetic}),
        );
    }
    let doc_counts = assignment.document_counts();
    let mut meta = Map::new();
    meta.insert(
        "created_at".into(),
        Value::from(
            options
                .created_at
                .clone()
                .unwrap_or_else(|| chrono::Utc::now().to_rfc3339()),
        ),
    );
    meta.insert("complete".into(), Value::from(true));
    meta.insert("seed".into(), Value::from(options.seed));
    meta.insert("ratios".into(), serde_json::to_value(assignment.ratios).expect("ratios"));
    meta.insert("n_stages".into(), Value::from(manifest.n_stages));
    meta.insert("stage_sizes".into(), Value::from(manifest.stage_sizes()));
    meta.insert("counts".into(), Value::Object(counts));
    meta.insert(
        "documents".into(),
        json!({"train": doc_counts[0], "validation": doc_counts[1], "test": doc_counts[2]}),
    );
    meta.insert("config".into(), options.config.clone());
    for (k, v) in &options.extra {
        meta.insert(k.clone(), v.clone());
    }
    meta.insert("content_hash".into(), Value::from(hash.clone()));
    write_meta(out_dir, &Value::Object(meta))?;

    Ok(ExportSummary {
        lines: [rows[0].len(), rows[1].len(), rows[2].len()],
        content_hash: hash,
    })
}

fn write_meta(out_dir: &Path, meta: &Value) -> Result<(), DatasetError> {
    let path = out_dir.join(META_FILE);
    let mut text = serde_json::to_string_pretty(meta).expect("meta serializes");
    text.push('\n');
    fs::write(&path, text).map_err(io_err(&path))
}

/// Marks `out_dir` as an incomplete export after a failure in `stage`.
pub fn write_incomplete_meta(out_dir: &Path, stage: &str, error: &str) -> Result<(), DatasetError> {
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    write_meta(
        out_dir,
        &json!({
            "created_at": chrono::Utc::now().to_rfc3339(),
            "complete": false,
            "failed_stage": stage,
            "error": error,
        }),
    )
}

pub fn read_exported(path: &Path) -> Result<Vec<ExportedExample>, DatasetError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| DatasetError::Malformed {
            path: path.to_path_buf(),
            line: idx + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

/// The three split files of an export directory, in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedExport {
    pub train: Vec<ExportedExample>,
    pub validation: Vec<ExportedExample>,
    pub test: Vec<ExportedExample>,
    pub meta: Value,
}

impl LoadedExport {
    pub fn split(&self, split: Split) -> &[ExportedExample] {
        match split {
            Split::Train => &self.train,
            Split::Validation => &self.validation,
            Split::Test => &self.test,
        }
    }
}

pub fn load_export(dir: &Path) -> Result<LoadedExport, DatasetError> {
    let meta_path = dir.join(META_FILE);
    let meta_text = fs::read_to_string(&meta_path).map_err(io_err(&meta_path))?;
    let meta = serde_json::from_str(&meta_text).map_err(|e| DatasetError::Malformed {
        path: meta_path.clone(),
        line: e.line(),
        message: e.to_string(),
    })?;
    Ok(LoadedExport {
        train: read_exported(&dir.join(Split::Train.file_name()))?,
        validation: read_exported(&dir.join(Split::Validation.file_name()))?,
        test: read_exported(&dir.join(Split::Test.file_name()))?,
        meta,
    })
}

/// Writes a manifest as JSON lines (the `curriculum` subcommand's output).
pub fn write_manifest_lines<W: Write>(writer: W, manifest: &CurriculumManifest) -> io::Result<()> {
    let mut writer = BufWriter::new(writer);
    for entry in &manifest.entries {
        serde_json::to_writer(&mut writer, &ExportedExample::new(entry.stage_index, &entry.example))?;
        writer.write_all(b"\n")?;
    }
    writer.flush()
}

/// Reads a manifest written by [`write_manifest_lines`].
pub fn read_manifest_lines(path: &Path, n_stages: Option<usize>) -> Result<CurriculumManifest, DatasetError> {
    let rows = read_exported(path)?;
    let stages = n_stages.unwrap_or_else(|| rows.iter().map(|r| r.stage_index + 1).max().unwrap_or(1));
    let entries = rows
        .into_iter()
        .map(|r| {
            let (stage_index, example) = r.into_example();
            crate::curriculum::ManifestEntry {
                stage_index,
                example,
            }
        })
        .collect();
    Ok(CurriculumManifest {
        entries,
        n_stages: stages,
    })
}
