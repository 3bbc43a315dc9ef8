//! Easy-to-hard ordering of the merged real and synthetic examples.
//!
//! Examples are sorted by [`OrderingKey`] and cut into contiguous stages of
//! near-equal size. For synthetic examples the difficulty tag dominates the
//! key, so every easy QA pair precedes every hard one; real examples rank as
//! easy and are ordered by composite complexity score alone.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::complexity::ComplexityProfile;
use crate::qagen::Difficulty;

/// Default number of curriculum stages.
pub const DEFAULT_STAGES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Labeling,
    Summarization,
    Qa,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Labeling => "labeling",
            Task::Summarization => "summarization",
            Task::Qa => "qa",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Real,
    Synthetic,
}

/// One prompt/target unit for fine-tuning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub example_id: String,
    pub task: Task,
    pub prompt: String,
    pub target: String,
    pub origin: Origin,
    pub source_doc_id: String,
    pub complexity: ComplexityProfile,
    pub difficulty: Option<Difficulty>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CurriculumError {
    #[error("no examples to order")]
    Empty,
    #[error("cannot cut {examples} examples into {stages} stages")]
    BadStageCount { stages: usize, examples: usize },
    #[error("example '{0}': QA examples must be synthetic and other tasks real")]
    OriginMismatch(String),
    #[error("example '{0}': difficulty must be set exactly for synthetic examples")]
    DifficultyMismatch(String),
    #[error("duplicate example id '{0}'")]
    DuplicateId(String),
}

impl TrainingExample {
    pub fn validate(&self) -> Result<(), CurriculumError> {
        let synthetic = self.origin == Origin::Synthetic;
        if (self.task == Task::Qa) != synthetic {
            return Err(CurriculumError::OriginMismatch(self.example_id.clone()));
        }
        if self.difficulty.is_some() != synthetic {
            return Err(CurriculumError::DifficultyMismatch(self.example_id.clone()));
        }
        Ok(())
    }

    /// 0 for real examples and easy synthetic ones, 1 for hard synthetic ones.
    pub fn difficulty_rank(&self) -> u8 {
        match (self.origin, self.difficulty) {
            (Origin::Synthetic, Some(d)) => d.rank(),
            _ => 0,
        }
    }

    pub fn ordering_key(&self) -> OrderingKey<'_> {
        ordering_key(self)
    }
}

/// `(difficulty_rank, composite_score, example_id)`, compared
/// lexicographically. Scores compare with `f64::total_cmp`.
#[derive(Debug, Clone, Copy)]
pub struct OrderingKey<'a> {
    pub difficulty_rank: u8,
    pub composite_score: f64,
    pub example_id: &'a str,
}

impl Ord for OrderingKey<'_> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.difficulty_rank
            .cmp(&other.difficulty_rank)
            .then_with(|| self.composite_score.total_cmp(&other.composite_score))
            .then_with(|| self.example_id.cmp(other.example_id))
    }
}

impl PartialOrd for OrderingKey<'_> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for OrderingKey<'_> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for OrderingKey<'_> {}

pub fn ordering_key(example: &TrainingExample) -> OrderingKey<'_> {
    OrderingKey {
        difficulty_rank: example.difficulty_rank(),
        composite_score: example.complexity.composite_score,
        example_id: &example.example_id,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub stage_index: usize,
    pub example: TrainingExample,
}

/// Sorted, staged sequence of training examples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurriculumManifest {
    pub entries: Vec<ManifestEntry>,
    pub n_stages: usize,
}

impl CurriculumManifest {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn stage_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_stages];
        for entry in &self.entries {
            sizes[entry.stage_index] += 1;
        }
        sizes
    }

    pub fn examples(&self) -> impl Iterator<Item = &TrainingExample> {
        self.entries.iter().map(|e| &e.example)
    }
}

/// Sizes of `stages` contiguous parts of `total` items; sizes differ by at
/// most one and the earlier stages take the extra items.
pub fn stage_sizes(total: usize, stages: usize) -> Vec<usize> {
    let base = total / stages;
    let extra = total % stages;
    (0..stages).map(|i| base + usize::from(i < extra)).collect()
}

/// Sorts `examples` by [`ordering_key`] and assigns `n_stages` contiguous
/// stages.
pub fn build_manifest(
    mut examples: Vec<TrainingExample>,
    n_stages: usize,
) -> Result<CurriculumManifest, CurriculumError> {
    if examples.is_empty() {
        return Err(CurriculumError::Empty);
    }
    if n_stages == 0 || n_stages > examples.len() {
        return Err(CurriculumError::BadStageCount {
            stages: n_stages,
            examples: examples.len(),
        });
    }
    for example in &examples {
        example.validate()?;
    }
    examples.sort_by(|a, b| ordering_key(a).cmp(&ordering_key(b)));
    if let Some(dup) = examples
        .windows(2)
        .find(|w| w[0].example_id == w[1].example_id)
    {
        return Err(CurriculumError::DuplicateId(dup[0].example_id.clone()));
    }
    let sizes = stage_sizes(examples.len(), n_stages);
    let stage_of = sizes
        .iter()
        .enumerate()
        .flat_map(|(stage, &size)| std::iter::repeat_n(stage, size));
    let entries = stage_of
        .zip(examples)
        .map(|(stage_index, example)| ManifestEntry {
            stage_index,
            example,
        })
        .collect();
    Ok(CurriculumManifest { entries, n_stages })
}

/// Splits examples into (real, synthetic) for origin-phased curricula.
pub fn partition_by_origin(
    examples: Vec<TrainingExample>,
) -> (Vec<TrainingExample>, Vec<TrainingExample>) {
    examples
        .into_iter()
        .partition(|e| e.origin == Origin::Real)
}
