//! Command-line front end.
//!
//! Stage subcommands read and write fixed file names inside the output
//! directory, so `sample`, `generate`, `curriculum` and `export` run in that
//! order over one `--out` directory produce the same split files as `run`.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 backend error.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use crate::complexity::BandThresholds;
use crate::config::{load_config, BackendKind, Config, CorpusSpec};
use crate::corpus::{corpus_stats, load_corpus, LegalDocument, Source};
use crate::curriculum::build_manifest;
use crate::dataset::{read_manifest_lines, write_manifest_lines};
use crate::evalkit::{compare_runs, micro_f1, rouge_l, rouge_n, LossLog, Prf};
use crate::pipeline::{
    build_examples, fit_corpora, generate_records, make_backend, make_clock, run_configured,
    sample_corpora, sample_file_name, split_and_export, write_generation, write_origin_manifests, write_sample,
    FailureKind, PipelineError, SampledCorpus, RECORDS_FILE, REPORT_FILE,
};
use crate::qagen::load_records;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_BACKEND: i32 = 3;

/// File written by `curriculum` and read by `export`.
pub const CURRICULUM_FILE: &str = "curriculum.jsonl";
/// File written by `ingest`.
pub const STATS_FILE: &str = "corpus_stats.json";

const STAT_QUANTILES: [f64; 4] = [0.25, 0.5, 0.75, 0.95];

#[derive(Debug, Parser)]
#[command(
    name = "lexforge",
    version,
    about = "Build curriculum-ordered, synthetic-augmented fine-tuning sets from legal corpora",
    after_help = "Exit codes: 0 success, 1 usage error, 2 data error, 3 backend error.\n\
                  The live backend reads its key from LEXFORGE_API_KEY."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every subcommand; each overrides its config-file value.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Configuration file (TOML); built-in defaults when omitted
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Seed for every randomized stage
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
    /// Output directory
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Print machine-readable stats as JSON instead of the summary line
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Clone, Default, Args)]
pub struct CorpusArgs {
    /// Source corpus as SOURCE=PATH (eurlex or eurlex_sum); repeatable, replaces the config's corpora
    #[arg(long = "corpus", value_name = "SOURCE=PATH", value_parser = parse_corpus_spec)]
    pub corpora: Vec<CorpusSpec>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct SampledArgs {
    /// Sampled documents as SOURCE=PATH; defaults to sample_<source>.jsonl in the output directory
    #[arg(long = "sampled", value_name = "SOURCE=PATH", value_parser = parse_corpus_spec)]
    pub sampled: Vec<CorpusSpec>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct BackendArgs {
    /// Generation backend
    #[arg(long, value_enum)]
    pub backend: Option<BackendKind>,
    /// Transient failure probability injected by the mock backend
    #[arg(long, value_name = "P")]
    pub failure_rate: Option<f64>,
    /// Questions formulated per document
    #[arg(long, value_name = "N")]
    pub per_doc: Option<usize>,
    /// Worker threads issuing backend calls
    #[arg(long, value_name = "N")]
    pub concurrency: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate corpora and report token-count statistics
    Ingest {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        corpus: CorpusArgs,
    },
    /// Write a complexity profile for every document
    Score {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        corpus: CorpusArgs,
    },
    /// Draw a length-stratified sample from each corpus
    Sample {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        corpus: CorpusArgs,
        /// Documents drawn per corpus
        #[arg(long, value_name = "N")]
        per_dataset: Option<usize>,
    },
    /// Generate QA records for sampled documents
    Generate {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        sampled: SampledArgs,
        #[command(flatten)]
        backend: BackendArgs,
    },
    /// Merge real and synthetic examples into a staged curriculum
    Curriculum {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        corpus: CorpusArgs,
        #[command(flatten)]
        sampled: SampledArgs,
        /// QA records; defaults to qa_records.jsonl in the output directory
        #[arg(long, value_name = "PATH")]
        records: Option<PathBuf>,
        /// Number of curriculum stages
        #[arg(long, value_name = "N")]
        stages: Option<usize>,
    },
    /// Split a curriculum by source document and write the export files
    Export {
        #[command(flatten)]
        common: CommonArgs,
        /// Curriculum file; defaults to curriculum.jsonl in the output directory
        #[arg(long, value_name = "PATH")]
        manifest: Option<PathBuf>,
    },
    /// Metrics and loss-log comparison
    Eval {
        #[command(subcommand)]
        command: EvalCommand,
    },
    /// Run every stage end to end
    Run {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        corpus: CorpusArgs,
        #[command(flatten)]
        backend: BackendArgs,
    },
}

#[derive(Debug, Subcommand)]
pub enum EvalCommand {
    /// Mean ROUGE between line-aligned candidate and reference files
    Rouge {
        #[command(flatten)]
        common: CommonArgs,
        /// Generated texts, one per line
        #[arg(long, value_name = "PATH")]
        candidates: PathBuf,
        /// Reference texts, line-aligned with the candidates
        #[arg(long, value_name = "PATH")]
        references: PathBuf,
        /// N-gram order
        #[arg(long, value_name = "N", default_value_t = 1, conflicts_with = "lcs")]
        n: usize,
        /// Use ROUGE-L instead of ROUGE-N
        #[arg(long)]
        lcs: bool,
    },
    /// Micro-F1 between line-aligned files of comma-separated labels
    F1 {
        #[command(flatten)]
        common: CommonArgs,
        /// Predicted labels, comma-separated, one example per line
        #[arg(long, value_name = "PATH")]
        predictions: PathBuf,
        /// Gold labels in the same layout
        #[arg(long, value_name = "PATH")]
        references: PathBuf,
    },
    /// Compare final losses of <run>.<dataset>.losslog.jsonl files
    Compare {
        #[command(flatten)]
        common: CommonArgs,
        /// Loss logs, comma-separated or repeated
        #[arg(long, value_name = "PATH", value_delimiter = ',', required = true)]
        logs: Vec<PathBuf>,
    },
}

fn parse_corpus_spec(text: &str) -> Result<CorpusSpec, String> {
    let (source, path) = text
        .split_once('=')
        .ok_or_else(|| format!("expected SOURCE=PATH, got '{text}'"))?;
    if path.is_empty() {
        return Err(format!("missing path in '{text}'"));
    }
    Ok(CorpusSpec {
        source: source.parse()?,
        path: PathBuf::from(path),
    })
}

/// Result of one command.
#[derive(Debug, Clone, PartialEq)]
pub struct CommandOutcome {
    pub exit_code: i32,
    pub summary: String,
    pub stats: Value,
}

#[derive(Debug)]
struct CliError {
    code: i32,
    message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    fn data(message: impl ToString) -> Self {
        Self {
            code: EXIT_DATA,
            message: message.to_string(),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        Self {
            code: match e.kind {
                FailureKind::Data => EXIT_DATA,
                FailureKind::Backend => EXIT_BACKEND,
            },
            message: e.to_string(),
        }
    }
}

type CliResult = Result<(String, Value), CliError>;

/// Parses `args` (program name first), runs the command and writes its
/// output. Returns the exit code.
pub fn run_from<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let rendered = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp
                | ErrorKind::DisplayVersion
                | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => {
                    let _ = write!(stdout, "{rendered}");
                    if e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand {
                        EXIT_USAGE
                    } else {
                        EXIT_OK
                    }
                }
                _ => {
                    let _ = write!(stderr, "{rendered}");
                    EXIT_USAGE
                }
            };
        }
    };
    let json_output = cli.command.common().json;
    let outcome = execute(&cli.command);
    if outcome.exit_code == EXIT_OK {
        if json_output {
            let _ = writeln!(
                stdout,
                "{}",
                serde_json::to_string_pretty(&outcome.stats).expect("stats serialize")
            );
        } else {
            let _ = writeln!(stdout, "{}", outcome.summary);
        }
    } else {
        let _ = writeln!(stderr, "error: {}", outcome.summary);
    }
    outcome.exit_code
}

/// Runs a parsed command.
pub fn execute(command: &Command) -> CommandOutcome {
    let result = match command {
        Command::Ingest { common, corpus } => ingest(common, corpus),
        Command::Score { common, corpus } => score(common, corpus),
        Command::Sample {
            common,
            corpus,
            per_dataset,
        } => sample(common, corpus, *per_dataset),
        Command::Generate {
            common,
            sampled,
            backend,
        } => generate_cmd(common, sampled, backend),
        Command::Curriculum {
            common,
            corpus,
            sampled,
            records,
            stages,
        } => curriculum(common, corpus, sampled, records.as_deref(), *stages),
        Command::Export { common, manifest } => export(common, manifest.as_deref()),
        Command::Eval { command } => eval(command),
        Command::Run {
            common,
            corpus,
            backend,
        } => run(common, corpus, backend),
    };
    match result {
        Ok((summary, stats)) => CommandOutcome {
            exit_code: EXIT_OK,
            summary,
            stats,
        },
        Err(e) => CommandOutcome {
            exit_code: e.code,
            summary: e.message.clone(),
            stats: json!({"error": e.message, "exit_code": e.code}),
        },
    }
}

impl Command {
    pub fn common(&self) -> &CommonArgs {
        match self {
            Command::Ingest { common, .. }
            | Command::Score { common, .. }
            | Command::Sample { common, .. }
            | Command::Generate { common, .. }
            | Command::Curriculum { common, .. }
            | Command::Export { common, .. }
            | Command::Run { common, .. } => common,
            Command::Eval { command } => match command {
                EvalCommand::Rouge { common, .. }
                | EvalCommand::F1 { common, .. }
                | EvalCommand::Compare { common, .. } => common,
            },
        }
    }
}

/// Loads the config (or defaults) and applies the shared overrides.
fn resolve_config(common: &CommonArgs, corpus: Option<&CorpusArgs>) -> Result<Config, CliError> {
    let mut config = match &common.config {
        Some(path) => load_config(path).map_err(|e| CliError {
            code: match e {
                crate::config::ConfigError::Io { .. } => EXIT_DATA,
                _ => EXIT_USAGE,
            },
            message: e.to_string(),
        })?,
        None => Config::default(),
    };
    if let Some(seed) = common.seed {
        config.pipeline.seed = seed;
    }
    if let Some(out) = &common.out {
        config.pipeline.output_dir = out.clone();
    }
    if let Some(c) = corpus {
        if !c.corpora.is_empty() {
            config.pipeline.corpora = c.corpora.clone();
        }
    }
    Ok(config)
}

fn apply_backend_args(config: &mut Config, args: &BackendArgs) -> Result<(), CliError> {
    let p = &mut config.pipeline;
    if let Some(kind) = args.backend {
        p.backend.kind = kind;
    }
    if let Some(rate) = args.failure_rate {
        p.backend.mock_failure_rate = rate;
    }
    if let Some(n) = args.per_doc {
        p.generation.per_doc = n;
    }
    if let Some(n) = args.concurrency {
        p.generation.concurrency = n;
    }
    config.validate().map_err(|e| CliError::usage(e.to_string()))
}

fn validated(config: Config) -> Result<Config, CliError> {
    config.validate().map_err(|e| CliError::usage(e.to_string()))?;
    Ok(config)
}

fn require_corpora(config: &Config) -> Result<(), CliError> {
    if config.pipeline.corpora.is_empty() {
        return Err(CliError::usage(
            "no corpora: pass --corpus SOURCE=PATH or list [[corpora]] in --config",
        ));
    }
    Ok(())
}

fn create_out(config: &Config) -> Result<PathBuf, CliError> {
    let out = config.pipeline.output_dir.clone();
    fs::create_dir_all(&out).map_err(|e| CliError::data(format!("{}: {e}", out.display())))?;
    Ok(out)
}

fn write_json(path: &Path, value: &Value) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("json serializes");
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

fn ingest(common: &CommonArgs, corpus: &CorpusArgs) -> CliResult {
    let config = validated(resolve_config(common, Some(corpus))?)?;
    require_corpora(&config)?;
    let fitted = fit_corpora(&config)?;
    let mut stats = serde_json::Map::new();
    let mut parts = Vec::new();
    for f in &fitted {
        let s = corpus_stats(&f.documents, &STAT_QUANTILES, &f.model.thresholds).map_err(CliError::data)?;
        parts.push(format!(
            "{}: {} documents, median {} tokens",
            f.source,
            s.document_count,
            s.quantile(0.5).unwrap_or(0)
        ));
        stats.insert(
            f.source.as_str().into(),
            json!({
                "stats": s,
                "thresholds": thresholds_json(&f.model.thresholds),
                "norm": f.model.norm,
            }),
        );
    }
    let stats = Value::Object(stats);
    let out = create_out(&config)?;
    write_json(&out.join(STATS_FILE), &stats)?;
    Ok((parts.join("; "), stats))
}

fn thresholds_json(t: &BandThresholds) -> Value {
    json!({"short_max": t.short_max, "medium_max": t.medium_max})
}

fn score(common: &CommonArgs, corpus: &CorpusArgs) -> CliResult {
    let config = validated(resolve_config(common, Some(corpus))?)?;
    require_corpora(&config)?;
    let fitted = fit_corpora(&config)?;
    let out = create_out(&config)?;
    let mut stats = serde_json::Map::new();
    let mut parts = Vec::new();
    for f in &fitted {
        let path = out.join(format!("scores_{}.jsonl", f.source.as_str()));
        let file = File::create(&path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
        let mut w = BufWriter::new(file);
        let profiles = f.model.profile_corpus(&f.documents);
        for (doc_id, profile) in &profiles {
            let mut line = serde_json::to_value(profile).expect("profile serializes");
            line["doc_id"] = Value::from(doc_id.clone());
            writeln!(w, "{line}").map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
        }
        w.flush().map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
        parts.push(format!("{}: {} profiles -> {}", f.source, profiles.len(), path.display()));
        stats.insert(
            f.source.as_str().into(),
            json!({"profiles": profiles.len(), "path": path, "thresholds": thresholds_json(&f.model.thresholds)}),
        );
    }
    Ok((parts.join("; "), Value::Object(stats)))
}

fn sample(common: &CommonArgs, corpus: &CorpusArgs, per_dataset: Option<usize>) -> CliResult {
    let mut config = resolve_config(common, Some(corpus))?;
    if let Some(n) = per_dataset {
        config.pipeline.sampling.per_dataset = n;
    }
    let config = validated(config)?;
    require_corpora(&config)?;
    let sampled = sample_corpora(&config)?;
    let out = create_out(&config)?;
    let mut stats = serde_json::Map::new();
    let mut parts = Vec::new();
    for c in &sampled {
        let path = write_sample(&out, c).map_err(|e| CliError::data(format!("{}: {e}", out.display())))?;
        let profiles = c.model.profile_corpus(&c.documents);
        let mut bands = [0usize; 3];
        for p in profiles.values() {
            bands[p.band.index()] += 1;
        }
        parts.push(format!(
            "{}: sampled {} of {} (short {}, medium {}, long {})",
            c.source, c.documents.len(), c.loaded, bands[0], bands[1], bands[2]
        ));
        stats.insert(
            c.source.as_str().into(),
            json!({
                "loaded": c.loaded,
                "sampled": c.documents.len(),
                "bands": {"short": bands[0], "medium": bands[1], "long": bands[2]},
                "path": path,
            }),
        );
    }
    Ok((parts.join("; "), Value::Object(stats)))
}

/// Sample files named on the command line, or every `sample_<source>.jsonl`
/// present in the output directory.
fn sampled_specs(config: &Config, args: &SampledArgs) -> Result<Vec<CorpusSpec>, CliError> {
    if !args.sampled.is_empty() {
        return Ok(args.sampled.clone());
    }
    let out = &config.pipeline.output_dir;
    let specs: Vec<CorpusSpec> = Source::ALL
        .iter()
        .map(|&source| CorpusSpec {
            source,
            path: out.join(sample_file_name(source)),
        })
        .filter(|spec| spec.path.exists())
        .collect();
    if specs.is_empty() {
        return Err(CliError::data(format!(
            "no sample files in {}; run `lexforge sample` first or pass --sampled SOURCE=PATH",
            out.display()
        )));
    }
    Ok(specs)
}

fn load_sampled(specs: &[CorpusSpec]) -> Result<Vec<(Source, Vec<LegalDocument>)>, CliError> {
    specs
        .iter()
        .map(|s| {
            load_corpus(&s.path, s.source)
                .map(|docs| (s.source, docs))
                .map_err(CliError::data)
        })
        .collect()
}

fn generate_cmd(common: &CommonArgs, sampled: &SampledArgs, backend: &BackendArgs) -> CliResult {
    let mut config = resolve_config(common, None)?;
    apply_backend_args(&mut config, backend)?;
    let specs = sampled_specs(&config, sampled)?;
    let docs = load_sampled(&specs)?;
    let documents: Vec<&LegalDocument> = docs.iter().flat_map(|(_, d)| d.iter()).collect();
    let backend = make_backend(&config.pipeline.backend, config.pipeline.seed)?;
    let clock = make_clock(config.pipeline.backend.kind);
    let generated = generate_records(&config, &documents, backend.as_ref(), clock.as_ref())?;
    let out = create_out(&config)?;
    write_generation(&out, &generated)?;
    let r = &generated.report;
    let summary = format!(
        "{} records from {} drafts ({} retries, {} skipped) -> {}",
        r.successes,
        r.drafts,
        r.retries,
        r.skipped,
        out.join(RECORDS_FILE).display()
    );
    Ok((summary, serde_json::to_value(r).expect("report serializes")))
}

fn curriculum(
    common: &CommonArgs,
    corpus: &CorpusArgs,
    sampled: &SampledArgs,
    records: Option<&Path>,
    stages: Option<usize>,
) -> CliResult {
    let mut config = resolve_config(common, Some(corpus))?;
    if let Some(n) = stages {
        config.pipeline.curriculum.n_stages = n;
    }
    let config = validated(config)?;
    require_corpora(&config)?;
    let fitted = fit_corpora(&config)?;
    let specs = sampled_specs(&config, sampled)?;
    let mut corpora = Vec::new();
    for (source, documents) in load_sampled(&specs)? {
        let f = fitted.iter().find(|f| f.source == source).ok_or_else(|| {
            CliError::usage(format!(
                "sampled {source} documents but no {source} corpus to fit complexity on"
            ))
        })?;
        corpora.push(SampledCorpus {
            source,
            loaded: f.documents.len(),
            model: f.model.clone(),
            documents,
        });
    }
    let out = create_out(&config)?;
    let records_path = records.map(Path::to_path_buf).unwrap_or_else(|| out.join(RECORDS_FILE));
    let records = load_records(&records_path).map_err(|e| CliError::data(format!("{}: {e}", records_path.display())))?;
    let examples = build_examples(&corpora, &records).map_err(CliError::data)?;
    if config.pipeline.curriculum.separate_origins {
        write_origin_manifests(&out, &examples, config.pipeline.curriculum.n_stages)?;
    }
    let manifest = build_manifest(examples, config.pipeline.curriculum.n_stages).map_err(CliError::data)?;
    let path = out.join(CURRICULUM_FILE);
    let file = File::create(&path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    write_manifest_lines(BufWriter::new(file), &manifest)
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    let sizes = manifest.stage_sizes();
    let summary = format!(
        "{} examples in {} stages {:?} -> {}",
        manifest.len(),
        manifest.n_stages,
        sizes,
        path.display()
    );
    Ok((summary, json!({"examples": manifest.len(), "stage_sizes": sizes, "path": path})))
}

fn export(common: &CommonArgs, manifest: Option<&Path>) -> CliResult {
    let config = validated(resolve_config(common, None)?)?;
    let out = config.pipeline.output_dir.clone();
    let path = manifest.map(Path::to_path_buf).unwrap_or_else(|| out.join(CURRICULUM_FILE));
    let manifest = read_manifest_lines(&path, Some(config.pipeline.curriculum.n_stages)).map_err(CliError::data)?;
    let report_path = out.join(REPORT_FILE);
    let generation = if report_path.exists() {
        let text = fs::read_to_string(&report_path).map_err(|e| CliError::data(format!("{}: {e}", report_path.display())))?;
        Some(serde_json::from_str(&text).map_err(|e| CliError::data(format!("{}: {e}", report_path.display())))?)
    } else {
        None
    };
    let summary = split_and_export(&config, &manifest, &out, generation)?;
    let [train, validation, test] = summary.lines;
    Ok((
        format!(
            "train {train} / validation {validation} / test {test} -> {} (content hash {})",
            out.display(),
            &summary.content_hash[..12]
        ),
        json!({"train": train, "validation": validation, "test": test, "content_hash": summary.content_hash}),
    ))
}

fn run(common: &CommonArgs, corpus: &CorpusArgs, backend: &BackendArgs) -> CliResult {
    let mut config = resolve_config(common, Some(corpus))?;
    apply_backend_args(&mut config, backend)?;
    require_corpora(&config)?;
    let summary = run_configured(&config)?;
    let stats = serde_json::to_value(&summary).expect("summary serializes");
    Ok((summary.line(), stats))
}

fn read_lines(path: &Path) -> Result<Vec<String>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    Ok(text.lines().map(str::to_string).collect())
}

fn eval(command: &EvalCommand) -> CliResult {
    let (common, summary, stats) = match command {
        EvalCommand::Rouge {
            common,
            candidates,
            references,
            n,
            lcs,
        } => {
            let cands = read_lines(candidates)?;
            let refs = read_lines(references)?;
            if cands.len() != refs.len() {
                return Err(CliError::data(format!(
                    "{} candidates but {} references",
                    cands.len(),
                    refs.len()
                )));
            }
            let mut scores = Vec::with_capacity(cands.len());
            for (c, r) in cands.iter().zip(&refs) {
                scores.push(if *lcs {
                    rouge_l(c, r)
                } else {
                    rouge_n(c, r, *n).map_err(|e| CliError::usage(e.to_string()))?
                });
            }
            let mean = mean_prf(&scores);
            let name = if *lcs { "ROUGE-L".to_string() } else { format!("ROUGE-{n}") };
            let summary = format!(
                "{name} over {} pairs: precision {:.4}, recall {:.4}, f1 {:.4}",
                scores.len(),
                mean.precision,
                mean.recall,
                mean.f1
            );
            (common, summary, json!({"metric": name, "pairs": scores.len(), "mean": mean}))
        }
        EvalCommand::F1 {
            common,
            predictions,
            references,
        } => {
            let parse = |lines: Vec<String>| -> Vec<BTreeSet<String>> {
                lines
                    .iter()
                    .map(|l| {
                        l.split(',')
                            .map(str::trim)
                            .filter(|s| !s.is_empty())
                            .map(str::to_string)
                            .collect()
                    })
                    .collect()
            };
            let preds = parse(read_lines(predictions)?);
            let refs = parse(read_lines(references)?);
            let f1 = micro_f1(&preds, &refs).map_err(CliError::data)?;
            (
                common,
                format!("micro-F1 over {} items: {f1:.4}", preds.len()),
                json!({"items": preds.len(), "micro_f1": f1}),
            )
        }
        EvalCommand::Compare { common, logs } => {
            let mut loaded = Vec::new();
            let mut datasets = Vec::new();
            for path in logs {
                let (log, dataset) = LossLog::load(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
                loaded.push(log);
                datasets.push(dataset);
            }
            let cmp = compare_runs(&loaded, &datasets).map_err(CliError::data)?;
            let table = cmp.render_text();
            (common, table.trim_end().to_string(), cmp.render_json())
        }
    };
    if let Some(out) = &common.out {
        fs::create_dir_all(out).map_err(|e| CliError::data(format!("{}: {e}", out.display())))?;
        let name = match command {
            EvalCommand::Rouge { .. } => "eval_rouge",
            EvalCommand::F1 { .. } => "eval_f1",
            EvalCommand::Compare { .. } => "eval_compare",
        };
        write_json(&out.join(format!("{name}.json")), &stats)?;
        if let EvalCommand::Compare { .. } = command {
            fs::write(out.join(format!("{name}.txt")), format!("{summary}\n"))
                .map_err(|e| CliError::data(format!("{}: {e}", out.display())))?;
        }
    }
    Ok((summary, stats))
}

fn mean_prf(scores: &[Prf]) -> Prf {
    if scores.is_empty() {
        return Prf::ZERO;
    }
    let n = scores.len() as f64;
    Prf {
        precision: scores.iter().map(|s| s.precision).sum::<f64>() / n,
        recall: scores.iter().map(|s| s.recall).sum::<f64>() / n,
        f1: scores.iter().map(|s| s.f1).sum::<f64>() / n,
    }
}
