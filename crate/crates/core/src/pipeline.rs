//! End-to-end run: ingest, complexity, sample, generate, merge, curriculum,
//! split and export.
//!
//! Each stage draws its randomness from `stage_seed(config.seed, name)`:
//!
//! | stage | seed name |
//! |-------|-----------|
//! | sampling of one corpus | `sample:<source>` (e.g. `sample:eurlex_sum`) |
//! | question formulation | `formulate` |
//! | mock backend | `backend` |
//! | document split | `split` |
//!
//! Files written under the output directory:
//!
//! * `sample_<source>.jsonl`: sampled documents of each corpus
//! * `qa_records.jsonl`: generated QA records
//! * `generation_report.json`: generation counts and skipped drafts
//! * `train.jsonl`, `validation.jsonl`, `test.jsonl`, `manifest_meta.json`
//! * `training_config.json`: hyperparameters for the trainer
//!
//! If a stage fails, `manifest_meta.json` is rewritten with
//! `"complete": false` and the failing stage name.

use std::collections::{BTreeMap, HashMap};
use std::error::Error;
use std::fmt;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Serialize;
use serde_json::{Map, Value};

use crate::complexity::{ComplexityModel, ConceptLexicon};
use crate::config::{write_training_config, BackendConfig, BackendKind, Config};
use crate::corpus::{ensure_unique_ids, load_corpus, write_corpus, LegalDocument, Source};
use crate::curriculum::{
    build_manifest, partition_by_origin, CurriculumManifest, Origin, Task, TrainingExample,
};
use crate::dataset::{
    export_manifest, split, to_training_example, write_incomplete_meta, DatasetError, ExampleInput,
    ExportOptions, ExportSummary, write_manifest_lines,
};
use crate::qagen::{
    generate, write_records, Clock, GenerateOptions, GenerationBackend, GenerationOutput,
    GenerationReport,
    HttpBackend, MockBackend, QaRecord, QuestionDraft, QuestionFormulator, SimulatedClock,
    SystemClock, TemplateSet,
};
use crate::sampler::stratified_sample;
use crate::seed::stage_seed;

pub const RECORDS_FILE: &str = "qa_records.jsonl";
pub const REPORT_FILE: &str = "generation_report.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Config,
    Ingest,
    Complexity,
    Sample,
    Generate,
    Merge,
    Curriculum,
    Split,
    Export,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Config => "config",
            Stage::Ingest => "ingest",
            Stage::Complexity => "complexity",
            Stage::Sample => "sample",
            Stage::Generate => "generate",
            Stage::Merge => "merge",
            Stage::Curriculum => "curriculum",
            Stage::Split => "split",
            Stage::Export => "export",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Whether a failure came from the data or from the generation backend.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureKind {
    Data,
    Backend,
}

#[derive(Debug, thiserror::Error)]
#[error("{stage} stage failed: {source}")]
pub struct PipelineError {
    pub stage: Stage,
    pub kind: FailureKind,
    #[source]
    pub source: Box<dyn Error + Send + Sync>,
}

impl PipelineError {
    pub fn data(stage: Stage, source: impl Into<Box<dyn Error + Send + Sync>>) -> Self {
        Self {
            stage,
            kind: FailureKind::Data,
            source: source.into(),
        }
    }

    pub fn backend(source: impl Into<Box<dyn Error + Send + Sync>>) -> Self {
        Self {
            stage: Stage::Generate,
            kind: FailureKind::Backend,
            source: source.into(),
        }
    }
}

/// Builds the backend named by the config. The mock backend's seed is the
/// `backend` stage seed.
pub fn make_backend(
    config: &BackendConfig,
    seed: u64,
) -> Result<Box<dyn GenerationBackend>, PipelineError> {
    match config.kind {
        BackendKind::Mock => Ok(Box::new(
            MockBackend::new(stage_seed(seed, "backend"))
                .with_failure_rate(config.mock_failure_rate),
        )),
        BackendKind::Http => {
            let backend = HttpBackend::from_env(
                &config.endpoint,
                &config.model,
                Duration::from_secs(config.timeout_secs),
            )
            .map_err(PipelineError::backend)?;
            Ok(Box::new(backend))
        }
    }
}

/// The clock matching a backend kind: simulated time for the mock, so rate
/// limiting and backoff cost no wall-clock time.
pub fn make_clock(kind: BackendKind) -> Box<dyn Clock> {
    match kind {
        BackendKind::Mock => Box::new(SimulatedClock::new()),
        BackendKind::Http => Box::new(SystemClock::new()),
    }
}

/// One corpus after sampling, with the complexity model fitted on all of it.
#[derive(Debug, Clone)]
pub struct SampledCorpus {
    pub source: Source,
    pub loaded: usize,
    pub model: ComplexityModel,
    pub documents: Vec<LegalDocument>,
}

pub fn real_task(source: Source) -> Task {
    match source {
        Source::Eurlex => Task::Labeling,
        Source::EurlexSum => Task::Summarization,
    }
}

/// Real examples for every sampled document, then one QA example per
/// record. QA examples are scored with the model of their document's corpus.
pub fn build_examples(
    corpora: &[SampledCorpus],
    records: &[QaRecord],
) -> Result<Vec<TrainingExample>, DatasetError> {
    let mut examples = Vec::new();
    let mut model_of: HashMap<&str, &ComplexityModel> = HashMap::new();
    for corpus in corpora {
        for doc in &corpus.documents {
            model_of.insert(&doc.doc_id, &corpus.model);
            examples.push(to_training_example(
                ExampleInput::Document(doc),
                real_task(corpus.source),
                &corpus.model,
            )?);
        }
    }
    let mut ordinals: HashMap<&str, usize> = HashMap::new();
    for record in records {
        let doc_id = record.text_id().unwrap_or_default();
        let model = model_of
            .get(doc_id)
            .ok_or_else(|| DatasetError::IncompatibleTask {
                task: Task::Qa,
                input: format!("a QA record for unsampled document '{doc_id}'"),
            })?;
        let ordinal = ordinals.entry(doc_id).or_insert(0);
        examples.push(to_training_example(
            ExampleInput::Qa {
                record,
                ordinal: *ordinal,
            },
            Task::Qa,
            model,
        )?);
        *ordinal += 1;
    }
    Ok(examples)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusSummary {
    pub source: Source,
    pub loaded: usize,
    pub sampled: usize,
}

/// Counts reported by a finished run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineSummary {
    pub output_dir: PathBuf,
    pub corpora: Vec<CorpusSummary>,
    pub generation: GenerationReport,
    pub real_examples: usize,
    pub synthetic_examples: usize,
    pub train: usize,
    pub validation: usize,
    pub test: usize,
    pub stage_sizes: Vec<usize>,
    pub content_hash: String,
}

impl PipelineSummary {
    pub fn exported(&self) -> usize {
        self.train + self.validation + self.test
    }

    /// `real + synthetic successes == exported` and the generation counts
    /// reconcile.
    pub fn reconciles(&self) -> bool {
        self.real_examples + self.generation.successes == self.exported()
            && self.synthetic_examples == self.generation.successes
            && self.generation.reconciles()
    }

    pub fn line(&self) -> String {
        format!(
            "{} real + {} synthetic examples ({} drafts, {} skipped, {} retries) -> train {} / validation {} / test {} in {}",
            self.real_examples,
            self.synthetic_examples,
            self.generation.drafts,
            self.generation.skipped,
            self.generation.retries,
            self.train,
            self.validation,
            self.test,
            self.output_dir.display()
        )
    }
}

fn echo_config(config: &Config) -> Value {
    let mut pipeline = serde_json::to_value(&config.pipeline).expect("config serializes");
    // the output location does not affect the data
    if let Value::Object(map) = &mut pipeline {
        map.remove("output_dir");
    }
    serde_json::json!({
        "pipeline": pipeline,
        "training": config.training,
    })
}

pub fn load_lexicon(path: Option<&Path>) -> Result<ConceptLexicon, PipelineError> {
    match path {
        Some(p) => ConceptLexicon::from_file(p).map_err(|e| PipelineError::data(Stage::Config, e)),
        None => Ok(ConceptLexicon::default()),
    }
}

pub fn load_templates(path: Option<&Path>) -> Result<TemplateSet, PipelineError> {
    match path {
        Some(p) => TemplateSet::from_file(p).map_err(|e| PipelineError::data(Stage::Config, e)),
        None => Ok(TemplateSet::default()),
    }
}

/// A loaded corpus and the complexity model fitted on it.
#[derive(Debug, Clone)]
pub struct FittedCorpus {
    pub source: Source,
    pub documents: Vec<LegalDocument>,
    pub model: ComplexityModel,
}

/// Ingest every configured corpus and fit its complexity model.
pub fn fit_corpora(config: &Config) -> Result<Vec<FittedCorpus>, PipelineError> {
    let p = &config.pipeline;
    if p.corpora.is_empty() {
        return Err(PipelineError::data(Stage::Config, "no corpora configured"));
    }
    let lexicon = load_lexicon(p.lexicon.as_deref())?;
    let mut loaded = Vec::new();
    for spec in &p.corpora {
        let corpus =
            load_corpus(&spec.path, spec.source).map_err(|e| PipelineError::data(Stage::Ingest, e))?;
        loaded.push((spec.source, corpus));
    }
    ensure_unique_ids(loaded.iter().flat_map(|(_, c)| c.iter())).map_err(|id| {
        PipelineError::data(
            Stage::Ingest,
            format!("document id '{id}' appears in more than one corpus"),
        )
    })?;
    let c = &p.complexity;
    loaded
        .into_iter()
        .map(|(source, documents)| {
            let model = ComplexityModel::fit(
                &documents,
                lexicon.clone(),
                c.short_quantile,
                c.medium_quantile,
                c.weights,
            )
            .map_err(|e| PipelineError::data(Stage::Complexity, e))?;
            Ok(FittedCorpus {
                source,
                documents,
                model,
            })
        })
        .collect()
}

/// Stratified sample of `per_dataset` documents (or the whole corpus if
/// smaller) from each fitted corpus.
pub fn sample_fitted(
    config: &Config,
    fitted: Vec<FittedCorpus>,
) -> Result<Vec<SampledCorpus>, PipelineError> {
    let p = &config.pipeline;
    fitted
        .into_iter()
        .map(|f| {
            let profiles = f.model.profile_corpus(&f.documents);
            let n = p.sampling.per_dataset.min(f.documents.len());
            let seed = stage_seed(p.seed, &format!("sample:{}", f.source.as_str()));
            let documents = stratified_sample(&f.documents, &profiles, n, seed)
                .map_err(|e| PipelineError::data(Stage::Sample, e))?;
            Ok(SampledCorpus {
                source: f.source,
                loaded: f.documents.len(),
                model: f.model,
                documents,
            })
        })
        .collect()
}

/// Ingest, fit and sample every configured corpus.
pub fn sample_corpora(config: &Config) -> Result<Vec<SampledCorpus>, PipelineError> {
    sample_fitted(config, fit_corpora(config)?)
}

/// Question drafts for every sampled document, corpus by corpus.
pub fn formulate_all(
    config: &Config,
    documents: &[&LegalDocument],
) -> Result<Vec<QuestionDraft>, PipelineError> {
    let p = &config.pipeline;
    let formulator = QuestionFormulator {
        templates: load_templates(p.templates.as_deref())?,
        excerpt_chars: p.generation.excerpt_chars,
    };
    let seed = stage_seed(p.seed, "formulate");
    Ok(documents
        .iter()
        .flat_map(|doc| formulator.formulate(doc, p.generation.per_doc, seed))
        .collect())
}

/// Runs every stage with the backend and clock from the config.
pub fn run_configured(config: &Config) -> Result<PipelineSummary, PipelineError> {
    let backend = match make_backend(&config.pipeline.backend, config.pipeline.seed) {
        Ok(b) => b,
        Err(e) => {
            flag_incomplete(&config.pipeline.output_dir, &e);
            return Err(e);
        }
    };
    let clock = make_clock(config.pipeline.backend.kind);
    run_pipeline(config, backend.as_ref(), clock.as_ref())
}

/// Runs every stage and writes all artifacts under `config.pipeline.output_dir`.
pub fn run_pipeline(
    config: &Config,
    backend: &dyn GenerationBackend,
    clock: &dyn Clock,
) -> Result<PipelineSummary, PipelineError> {
    let out_dir = config.pipeline.output_dir.clone();
    let result = run_stages(config, backend, clock, &out_dir);
    if let Err(e) = &result {
        flag_incomplete(&out_dir, e);
    }
    result
}

fn flag_incomplete(out_dir: &Path, error: &PipelineError) {
    // best effort: the original error is what the caller needs to see
    let _ = write_incomplete_meta(out_dir, error.stage.as_str(), &error.source.to_string());
}

fn io_at(stage: Stage, path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |e| PipelineError::data(stage, format!("{}: {e}", path.display()))
}

fn run_stages(
    config: &Config,
    backend: &dyn GenerationBackend,
    clock: &dyn Clock,
    out_dir: &Path,
) -> Result<PipelineSummary, PipelineError> {
    config
        .validate()
        .map_err(|e| PipelineError::data(Stage::Config, e))?;
    let p = &config.pipeline;
    let corpora = sample_corpora(config)?;

    fs::create_dir_all(out_dir).map_err(io_at(Stage::Sample, out_dir))?;
    for corpus in &corpora {
        write_sample(out_dir, corpus).map_err(io_at(Stage::Sample, out_dir))?;
    }

    let documents: Vec<&LegalDocument> =
        corpora.iter().flat_map(|c| c.documents.iter()).collect();
    let generated = generate_records(config, &documents, backend, clock)?;
    write_generation(out_dir, &generated)?;

    let examples = build_examples(&corpora, &generated.records)
        .map_err(|e| PipelineError::data(Stage::Merge, e))?;
    let real_examples = corpora.iter().map(|c| c.documents.len()).sum();
    let synthetic_examples = generated.records.len();

    if p.curriculum.separate_origins {
        write_origin_manifests(out_dir, &examples, p.curriculum.n_stages)?;
    }
    let manifest = build_manifest(examples, p.curriculum.n_stages)
        .map_err(|e| PipelineError::data(Stage::Curriculum, e))?;
    let exported = split_and_export(
        config,
        &manifest,
        out_dir,
        Some(serde_json::to_value(&generated.report).expect("report serializes")),
    )?;

    Ok(PipelineSummary {
        output_dir: out_dir.to_path_buf(),
        corpora: corpora
            .iter()
            .map(|c| CorpusSummary {
                source: c.source,
                loaded: c.loaded,
                sampled: c.documents.len(),
            })
            .collect(),
        generation: generated.report,
        real_examples,
        synthetic_examples,
        train: exported.lines[0],
        validation: exported.lines[1],
        test: exported.lines[2],
        stage_sizes: manifest.stage_sizes(),
        content_hash: exported.content_hash,
    })
}

pub fn origin_manifest_file(origin: Origin) -> &'static str {
    match origin {
        Origin::Real => "curriculum_real.jsonl",
        Origin::Synthetic => "curriculum_synthetic.jsonl",
    }
}

/// Writes a separately ordered manifest for each origin that has examples.
/// A side with fewer examples than `n_stages` gets one stage per example.
pub fn write_origin_manifests(
    out_dir: &Path,
    examples: &[TrainingExample],
    n_stages: usize,
) -> Result<Vec<PathBuf>, PipelineError> {
    let (real, synthetic) = partition_by_origin(examples.to_vec());
    let mut written = Vec::new();
    for (origin, part) in [(Origin::Real, real), (Origin::Synthetic, synthetic)] {
        if part.is_empty() {
            continue;
        }
        let stages = n_stages.min(part.len());
        let manifest = build_manifest(part, stages)
            .map_err(|e| PipelineError::data(Stage::Curriculum, e))?;
        let path = out_dir.join(origin_manifest_file(origin));
        let file = File::create(&path).map_err(io_at(Stage::Curriculum, &path))?;
        write_manifest_lines(file, &manifest).map_err(io_at(Stage::Curriculum, &path))?;
        written.push(path);
    }
    Ok(written)
}

/// Formulates drafts for the sampled documents and answers them.
///
/// Fails with a backend error when no draft at all succeeds.
pub fn generate_records(
    config: &Config,
    documents: &[&LegalDocument],
    backend: &dyn GenerationBackend,
    clock: &dyn Clock,
) -> Result<GenerationOutput, PipelineError> {
    let p = &config.pipeline;
    let drafts = formulate_all(config, documents)?;
    let docs: HashMap<&str, &LegalDocument> =
        documents.iter().map(|d| (d.doc_id.as_str(), *d)).collect();
    let options = GenerateOptions {
        policy: p
            .generation
            .policy()
            .map_err(|e| PipelineError::data(Stage::Config, e))?,
        concurrency: p.generation.concurrency,
    };
    let generated = generate(backend, &drafts, &docs, options, clock)
        .map_err(|e| PipelineError::data(Stage::Generate, e))?;
    if generated.records.is_empty() {
        let first = generated
            .report
            .skipped_drafts
            .first()
            .map(|s| s.last_error.clone())
            .unwrap_or_default();
        return Err(PipelineError::backend(format!(
            "all {} drafts failed; first error: {first}",
            generated.report.drafts
        )));
    }
    Ok(generated)
}

/// Writes `qa_records.jsonl` and `generation_report.json`.
pub fn write_generation(out_dir: &Path, generated: &GenerationOutput) -> Result<(), PipelineError> {
    fs::create_dir_all(out_dir).map_err(io_at(Stage::Generate, out_dir))?;
    let records_path = out_dir.join(RECORDS_FILE);
    let file = File::create(&records_path).map_err(io_at(Stage::Generate, &records_path))?;
    write_records(BufWriter::new(file), &generated.records)
        .map_err(io_at(Stage::Generate, &records_path))?;
    let report_path = out_dir.join(REPORT_FILE);
    let mut report_text =
        serde_json::to_string_pretty(&generated.report).expect("report serializes");
    report_text.push('\n');
    fs::write(&report_path, report_text).map_err(io_at(Stage::Generate, &report_path))
}

/// Splits the manifest's documents and writes the split files,
/// `manifest_meta.json` and `training_config.json`.
pub fn split_and_export(
    config: &Config,
    manifest: &CurriculumManifest,
    out_dir: &Path,
    generation: Option<Value>,
) -> Result<ExportSummary, PipelineError> {
    let p = &config.pipeline;
    let examples: Vec<TrainingExample> = manifest.examples().cloned().collect();
    let assignment = split(&examples, p.split, stage_seed(p.seed, "split"))
        .map_err(|e| PipelineError::data(Stage::Split, e))?;
    let mut extra = Map::new();
    if let Some(report) = generation {
        extra.insert("generation".into(), report);
    }
    let export_options = ExportOptions {
        seed: p.seed,
        created_at: None,
        config: echo_config(config),
        extra,
    };
    fs::create_dir_all(out_dir).map_err(io_at(Stage::Export, out_dir))?;
    write_training_config(&config.training, out_dir).map_err(io_at(Stage::Export, out_dir))?;
    export_manifest(manifest, &assignment, out_dir, &export_options)
        .map_err(|e| PipelineError::data(Stage::Export, e))
}

pub fn sample_file_name(source: Source) -> String {
    format!("sample_{}.jsonl", source.as_str())
}

/// Writes `sample_<source>.jsonl` into `dir`.
pub fn write_sample(dir: &Path, corpus: &SampledCorpus) -> std::io::Result<PathBuf> {
    let path = dir.join(sample_file_name(corpus.source));
    write_corpus(BufWriter::new(File::create(&path)?), &corpus.documents)?;
    Ok(path)
}

/// Per-source document counts of a sample, for reporting.
pub fn sample_counts(corpora: &[SampledCorpus]) -> BTreeMap<Source, usize> {
    corpora.iter().map(|c| (c.source, c.documents.len())).collect()
}
