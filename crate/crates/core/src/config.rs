//! Pipeline and training configuration.
//!
//! One TOML file drives a whole run. Every table is optional and every key
//! falls back to its default; unknown keys are rejected. Relative paths are
//! resolved against the directory holding the config file.
//!
//! ```toml
//! seed = 7
//! output_dir = "out"
//!
//! [[corpora]]
//! path = "data/eurlex.jsonl"
//! source = "eurlex"
//!
//! [generation]
//! per_doc = 5
//!
//! [backend]
//! kind = "mock"
//!
//! [training]
//! epochs = 10
//! ```

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::complexity::{CompositeWeights, DEFAULT_MEDIUM_QUANTILE, DEFAULT_SHORT_QUANTILE};
use crate::corpus::Source;
use crate::curriculum::DEFAULT_STAGES;
use crate::dataset::SplitRatios;
use crate::qagen::{RateLimitPolicy, DEFAULT_ENDPOINT, DEFAULT_EXCERPT_CHARS, DEFAULT_MODEL};

/// File name of the training configuration written next to an export.
pub const TRAINING_CONFIG_FILE: &str = "training_config.json";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

fn invalid(message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(message.into())
}

/// Fine-tuning hyperparameters handed to the trainer verbatim.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub base_model_id: String,
    pub lora_rank: u32,
    pub lora_alpha: u32,
    pub lora_dropout: f64,
    pub target_modules: Vec<String>,
    pub load_8bit: bool,
    pub max_seq_len: u32,
    /// Sequence length used for EurLex-Sum runs, whose documents are longer.
    pub max_seq_len_eurlex_sum: u32,
    pub batch_size: u32,
    pub optimizer: String,
    pub learning_rate: f64,
    pub scheduler: String,
    pub warmup_steps: u32,
    pub weight_decay: f64,
    pub epochs: u32,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            base_model_id: "unsloth/gemma-3-12b-it".into(),
            lora_rank: 8,
            lora_alpha: 16,
            lora_dropout: 0.0,
            target_modules: [
                "q_proj", "k_proj", "v_proj", "o_proj", "gate_proj", "up_proj", "down_proj",
            ]
            .map(String::from)
            .to_vec(),
            load_8bit: true,
            max_seq_len: 8192,
            max_seq_len_eurlex_sum: 16384,
            batch_size: 8,
            optimizer: "adamw-8bit".into(),
            learning_rate: 2e-5,
            scheduler: "linear".into(),
            warmup_steps: 5,
            weight_decay: 0.01,
            epochs: 10,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = [
            ("lora_rank", self.lora_rank),
            ("lora_alpha", self.lora_alpha),
            ("max_seq_len", self.max_seq_len),
            ("max_seq_len_eurlex_sum", self.max_seq_len_eurlex_sum),
            ("batch_size", self.batch_size),
            ("epochs", self.epochs),
        ];
        for (name, value) in positive {
            if value == 0 {
                return Err(invalid(format!("training.{name} must be positive")));
            }
        }
        if !(0.0..1.0).contains(&self.lora_dropout) {
            return Err(invalid("training.lora_dropout must lie in [0, 1)"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(invalid("training.learning_rate must be positive"));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(invalid("training.weight_decay must be non-negative"));
        }
        if self.base_model_id.trim().is_empty() {
            return Err(invalid("training.base_model_id must not be empty"));
        }
        if self.target_modules.is_empty() {
            return Err(invalid("training.target_modules must not be empty"));
        }
        Ok(())
    }

    /// Sequence length for a given source.
    pub fn max_seq_len_for(&self, source: Source) -> u32 {
        match source {
            Source::Eurlex => self.max_seq_len,
            Source::EurlexSum => self.max_seq_len_eurlex_sum,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSpec {
    pub path: PathBuf,
    pub source: Source,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ComplexityConfig {
    pub short_quantile: f64,
    pub medium_quantile: f64,
    pub weights: CompositeWeights,
}

impl Default for ComplexityConfig {
    fn default() -> Self {
        Self {
            short_quantile: DEFAULT_SHORT_QUANTILE,
            medium_quantile: DEFAULT_MEDIUM_QUANTILE,
            weights: CompositeWeights::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingConfig {
    /// Documents drawn from each corpus.
    pub per_dataset: usize,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self { per_dataset: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationConfig {
    pub per_doc: usize,
    pub excerpt_chars: usize,
    pub concurrency: usize,
    pub max_requests: usize,
    pub window_secs: f64,
    pub max_retries: u32,
    pub backoff_base_secs: f64,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        let policy = RateLimitPolicy::default();
        Self {
            per_doc: 5,
            excerpt_chars: DEFAULT_EXCERPT_CHARS,
            concurrency: 1,
            max_requests: policy.max_requests,
            window_secs: policy.window.as_secs_f64(),
            max_retries: policy.max_retries,
            backoff_base_secs: policy.backoff_base.as_secs_f64(),
        }
    }
}

impl GenerationConfig {
    pub fn policy(&self) -> Result<RateLimitPolicy, ConfigError> {
        let secs = |name: &str, v: f64| {
            Duration::try_from_secs_f64(v)
                .map_err(|_| invalid(format!("generation.{name} must be a non-negative number of seconds")))
        };
        let policy = RateLimitPolicy {
            max_requests: self.max_requests,
            window: secs("window_secs", self.window_secs)?,
            max_retries: self.max_retries,
            backoff_base: secs("backoff_base_secs", self.backoff_base_secs)?,
        };
        policy.validate().map_err(|e| invalid(format!("generation: {e}")))?;
        Ok(policy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    /// Deterministic offline backend.
    Mock,
    /// Live generative API; needs `LEXFORGE_API_KEY`.
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub endpoint: String,
    pub model: String,
    pub timeout_secs: u64,
    /// Transient failure probability injected by the mock backend.
    pub mock_failure_rate: f64,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            kind: BackendKind::Mock,
            endpoint: DEFAULT_ENDPOINT.into(),
            model: DEFAULT_MODEL.into(),
            timeout_secs: 120,
            mock_failure_rate: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurriculumConfig {
    pub n_stages: usize,
    /// Also write one manifest per origin (`curriculum_real.jsonl`,
    /// `curriculum_synthetic.jsonl`) for phased training. The merged
    /// curriculum is still the one that gets split and exported.
    pub separate_origins: bool,
}

impl Default for CurriculumConfig {
    fn default() -> Self {
        Self {
            n_stages: DEFAULT_STAGES,
            separate_origins: false,
        }
    }
}

/// Everything a pipeline run needs apart from the training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub corpora: Vec<CorpusSpec>,
    /// Concept lexicon; the bundled one when absent.
    pub lexicon: Option<PathBuf>,
    /// Question templates; the bundled ones when absent.
    pub templates: Option<PathBuf>,
    pub complexity: ComplexityConfig,
    pub sampling: SamplingConfig,
    pub generation: GenerationConfig,
    pub backend: BackendConfig,
    pub curriculum: CurriculumConfig,
    pub split: SplitRatios,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: PathBuf::from("lexforge-out"),
            corpora: Vec::new(),
            lexicon: None,
            templates: None,
            complexity: ComplexityConfig::default(),
            sampling: SamplingConfig::default(),
            generation: GenerationConfig::default(),
            backend: BackendConfig::default(),
            curriculum: CurriculumConfig::default(),
            split: SplitRatios::default(),
        }
    }
}

impl PipelineConfig {
    /// Checks everything except the corpus list, which only `run` needs.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let c = &self.complexity;
        if !(0.0 < c.short_quantile && c.short_quantile < c.medium_quantile && c.medium_quantile < 1.0) {
            return Err(invalid("complexity quantiles must satisfy 0 < short < medium < 1"));
        }
        c.weights
            .validate()
            .map_err(|e| invalid(format!("complexity.weights: {e}")))?;
        if self.sampling.per_dataset == 0 {
            return Err(invalid("sampling.per_dataset must be positive"));
        }
        if self.generation.per_doc == 0 {
            return Err(invalid("generation.per_doc must be positive"));
        }
        if self.generation.excerpt_chars == 0 {
            return Err(invalid("generation.excerpt_chars must be positive"));
        }
        if self.generation.concurrency == 0 {
            return Err(invalid("generation.concurrency must be positive"));
        }
        self.generation.policy()?;
        if !(0.0..=1.0).contains(&self.backend.mock_failure_rate) {
            return Err(invalid("backend.mock_failure_rate must lie in [0, 1]"));
        }
        if self.curriculum.n_stages == 0 {
            return Err(invalid("curriculum.n_stages must be positive"));
        }
        self.split
            .validate()
            .map_err(|e| invalid(format!("split: {e}")))?;
        let mut seen = Vec::new();
        for corpus in &self.corpora {
            if seen.contains(&corpus.source) {
                return Err(invalid(format!(
                    "corpus source '{}' listed twice",
                    corpus.source.as_str()
                )));
            }
            seen.push(corpus.source);
        }
        Ok(())
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output_dir);
        for corpus in &mut self.corpora {
            fix(&mut corpus.path);
        }
        if let Some(p) = self.lexicon.as_mut() {
            fix(p);
        }
        if let Some(p) = self.templates.as_mut() {
            fix(p);
        }
    }
}

/// A parsed configuration file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    pub pipeline: PipelineConfig,
    pub training: TrainingConfig,
}

impl Config {
    /// Parses TOML text; paths are left as written.
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| e.to_string())?;
        let training = match table.remove("training") {
            Some(value) => value.try_into().map_err(|e: toml::de::Error| e.to_string())?,
            None => TrainingConfig::default(),
        };
        let pipeline = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| e.to_string())?;
        Ok(Self { pipeline, training })
    }

    pub fn to_toml(&self) -> String {
        let mut table = toml::Table::try_from(&self.pipeline).expect("pipeline config serializes");
        table.insert(
            "training".into(),
            toml::Value::try_from(&self.training).expect("training config serializes"),
        );
        toml::to_string_pretty(&table).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.pipeline.validate()?;
        self.training.validate()
    }
}

/// Reads, defaults and validates a config file.
pub fn load_config(path: &Path) -> Result<Config, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut config = Config::parse(&text).map_err(|message| ConfigError::Parse {
        path: path.to_path_buf(),
        message,
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    config.pipeline.resolve_paths(base);
    config.validate()?;
    Ok(config)
}

pub fn save_config(config: &Config, path: &Path) -> Result<(), ConfigError> {
    fs::write(path, config.to_toml()).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes the training hyperparameters as pretty JSON.
pub fn write_training_config(training: &TrainingConfig, dir: &Path) -> std::io::Result<PathBuf> {
    let path = dir.join(TRAINING_CONFIG_FILE);
    let mut text = serde_json::to_string_pretty(training).expect("training config serializes");
    text.push('\n');
    fs::write(&path, text)?;
    Ok(path)
}
