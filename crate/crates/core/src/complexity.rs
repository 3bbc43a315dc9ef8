//! Complexity metrics for curriculum ordering: whitespace token length,
//! legal concept density against a term lexicon, length bands and a
//! weighted composite score.
//!
//! Concept density is an operational stand-in for "how much legal vocabulary
//! does this text use": the fraction of token positions at which a lexicon
//! term starts. Multi-word terms consume their whole span, and at each
//! position the longest matching term wins. Tokens are compared lowercased
//! with leading and trailing punctuation removed, so `Council,` matches
//! `council`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{nearest_rank, sorted_token_counts, LegalDocument};

const DEFAULT_LEXICON: &str = include_str!("../data/default_lexicon.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LengthBand {
    Short,
    Medium,
    Long,
}

impl LengthBand {
    pub const ALL: [LengthBand; 3] = [LengthBand::Short, LengthBand::Medium, LengthBand::Long];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LengthBand::Short => "short",
            LengthBand::Medium => "medium",
            LengthBand::Long => "long",
        }
    }
}

impl fmt::Display for LengthBand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ComplexityError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("band quantiles must satisfy 0 < short ({short}) < medium ({medium}) < 1")]
    BadQuantiles { short: f64, medium: f64 },
    #[error("band thresholds must satisfy 0 < short_max ({short_max}) < medium_max ({medium_max})")]
    DegenerateThresholds { short_max: usize, medium_max: usize },
    #[error("composite weights must be finite, non-negative and not both zero")]
    BadWeights,
    #[error("length normaliser must be positive")]
    ZeroNorm,
    #[error("lexicon is empty")]
    EmptyLexicon,
    #[error("duplicate lexicon term '{0}'")]
    DuplicateTerm(String),
    #[error("failed to read lexicon {path}: {message}")]
    LexiconIo { path: String, message: String },
}

/// Number of maximal whitespace-delimited segments.
pub fn token_count(text: &str) -> usize {
    text.split_whitespace().count()
}

fn normalize_token(token: &str) -> String {
    token
        .trim_matches(|c: char| !c.is_alphanumeric())
        .to_lowercase()
}

/// Set of lowercase legal terms, possibly multi-word.
#[derive(Debug, Clone, PartialEq)]
pub struct ConceptLexicon {
    terms: BTreeSet<String>,
    // first word -> remaining-word sequences, longest first
    by_first: HashMap<String, Vec<Vec<String>>>,
}

impl ConceptLexicon {
    pub fn new<I, S>(terms: I) -> Result<Self, ComplexityError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut set = BTreeSet::new();
        let mut by_first: HashMap<String, Vec<Vec<String>>> = HashMap::new();
        for raw in terms {
            let words: Vec<String> = raw
                .as_ref()
                .split_whitespace()
                .map(normalize_token)
                .filter(|w| !w.is_empty())
                .collect();
            if words.is_empty() {
                continue;
            }
            let term = words.join(" ");
            if !set.insert(term.clone()) {
                return Err(ComplexityError::DuplicateTerm(term));
            }
            by_first
                .entry(words[0].clone())
                .or_default()
                .push(words[1..].to_vec());
        }
        if set.is_empty() {
            return Err(ComplexityError::EmptyLexicon);
        }
        for tails in by_first.values_mut() {
            tails.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));
        }
        Ok(Self {
            terms: set,
            by_first,
        })
    }

    /// Parses the lexicon file format: one term per line, `#` starts a
    /// comment, blank lines ignored.
    pub fn parse(contents: &str) -> Result<Self, ComplexityError> {
        let terms = contents
            .lines()
            .map(|line| line.split('#').next().unwrap_or("").trim())
            .filter(|line| !line.is_empty());
        Self::new(terms)
    }

    pub fn from_file(path: &Path) -> Result<Self, ComplexityError> {
        let contents = std::fs::read_to_string(path).map_err(|e| ComplexityError::LexiconIo {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse(&contents)
    }

    pub fn terms(&self) -> impl Iterator<Item = &str> {
        self.terms.iter().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Length in tokens of the longest term starting at `tokens[0]`.
    fn longest_match(&self, tokens: &[String]) -> Option<usize> {
        let tails = self.by_first.get(&tokens[0])?;
        tails
            .iter()
            .find(|tail| {
                tail.len() < tokens.len() && tail.iter().zip(&tokens[1..]).all(|(a, b)| a == b)
            })
            .map(|tail| tail.len() + 1)
    }
}

impl Default for ConceptLexicon {
    fn default() -> Self {
        Self::parse(DEFAULT_LEXICON).expect("bundled lexicon is valid")
    }
}

/// Number of token positions that start a lexicon match, scanning left to
/// right and taking the longest term at each position.
pub fn concept_hits(text: &str, lexicon: &ConceptLexicon) -> usize {
    let tokens: Vec<String> = text.split_whitespace().map(normalize_token).collect();
    let mut hits = 0;
    let mut i = 0;
    while i < tokens.len() {
        match lexicon.longest_match(&tokens[i..]) {
            Some(span) => {
                hits += 1;
                i += span;
            }
            None => i += 1,
        }
    }
    hits
}

/// `hits / max(token_count, 1)`, always within `[0, 1]`.
pub fn concept_density(text: &str, lexicon: &ConceptLexicon) -> f64 {
    let tokens = token_count(text);
    concept_hits(text, lexicon) as f64 / tokens.max(1) as f64
}

/// Inclusive upper token bounds of the SHORT and MEDIUM bands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BandThresholds {
    pub short_max: usize,
    pub medium_max: usize,
}

impl BandThresholds {
    pub fn new(short_max: usize, medium_max: usize) -> Result<Self, ComplexityError> {
        if short_max == 0 || short_max >= medium_max {
            return Err(ComplexityError::DegenerateThresholds {
                short_max,
                medium_max,
            });
        }
        Ok(Self {
            short_max,
            medium_max,
        })
    }
}

pub const DEFAULT_SHORT_QUANTILE: f64 = 1.0 / 3.0;
pub const DEFAULT_MEDIUM_QUANTILE: f64 = 2.0 / 3.0;

/// Nearest-rank token-count quantiles of `corpus` at `short_q` and
/// `medium_q`.
pub fn band_thresholds(
    corpus: &[LegalDocument],
    short_q: f64,
    medium_q: f64,
) -> Result<BandThresholds, ComplexityError> {
    if corpus.is_empty() {
        return Err(ComplexityError::EmptyCorpus);
    }
    if !(0.0 < short_q && short_q < medium_q && medium_q < 1.0) {
        return Err(ComplexityError::BadQuantiles {
            short: short_q,
            medium: medium_q,
        });
    }
    let counts = sorted_token_counts(corpus);
    BandThresholds::new(
        nearest_rank(&counts, short_q),
        nearest_rank(&counts, medium_q),
    )
}

pub fn classify_band(token_count: usize, thresholds: &BandThresholds) -> LengthBand {
    if token_count <= thresholds.short_max {
        LengthBand::Short
    } else if token_count <= thresholds.medium_max {
        LengthBand::Medium
    } else {
        LengthBand::Long
    }
}

/// Weights of the length and density terms in the composite score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompositeWeights {
    pub length: f64,
    pub density: f64,
}

impl Default for CompositeWeights {
    fn default() -> Self {
        Self {
            length: 0.5,
            density: 0.5,
        }
    }
}

impl CompositeWeights {
    pub fn validate(&self) -> Result<(), ComplexityError> {
        let ok = |w: f64| w.is_finite() && w >= 0.0;
        if !ok(self.length) || !ok(self.density) || (self.length == 0.0 && self.density == 0.0) {
            return Err(ComplexityError::BadWeights);
        }
        Ok(())
    }
}

/// `w_len * min(tokens / norm, 1) + w_density * density`.
pub fn composite_score(
    token_count: usize,
    concept_density: f64,
    weights: CompositeWeights,
    norm: usize,
) -> Result<f64, ComplexityError> {
    weights.validate()?;
    if norm == 0 {
        return Err(ComplexityError::ZeroNorm);
    }
    let length_term = (token_count as f64 / norm as f64).min(1.0);
    Ok(weights.length * length_term + weights.density * concept_density)
}

/// 95th-percentile (nearest-rank) token count, at least 1.
pub fn default_norm(corpus: &[LegalDocument]) -> Result<usize, ComplexityError> {
    if corpus.is_empty() {
        return Err(ComplexityError::EmptyCorpus);
    }
    Ok(nearest_rank(&sorted_token_counts(corpus), 0.95).max(1))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityProfile {
    pub token_count: usize,
    pub char_count: usize,
    pub concept_density: f64,
    pub band: LengthBand,
    pub composite_score: f64,
}

/// Everything needed to profile a text: lexicon, bands, weights and the
/// length normaliser, all fitted to one corpus.
#[derive(Debug, Clone)]
pub struct ComplexityModel {
    pub lexicon: ConceptLexicon,
    pub thresholds: BandThresholds,
    pub weights: CompositeWeights,
    pub norm: usize,
}

impl ComplexityModel {
    pub fn new(
        lexicon: ConceptLexicon,
        thresholds: BandThresholds,
        weights: CompositeWeights,
        norm: usize,
    ) -> Result<Self, ComplexityError> {
        weights.validate()?;
        if norm == 0 {
            return Err(ComplexityError::ZeroNorm);
        }
        Ok(Self {
            lexicon,
            thresholds,
            weights,
            norm,
        })
    }

    /// Fits thresholds and the norm to `corpus`.
    pub fn fit(
        corpus: &[LegalDocument],
        lexicon: ConceptLexicon,
        short_q: f64,
        medium_q: f64,
        weights: CompositeWeights,
    ) -> Result<Self, ComplexityError> {
        let thresholds = band_thresholds(corpus, short_q, medium_q)?;
        let norm = default_norm(corpus)?;
        Self::new(lexicon, thresholds, weights, norm)
    }

    pub fn profile(&self, text: &str) -> ComplexityProfile {
        let tokens = token_count(text);
        let density = concept_density(text, &self.lexicon);
        let score = composite_score(tokens, density, self.weights, self.norm)
            .expect("weights and norm validated at construction");
        ComplexityProfile {
            token_count: tokens,
            char_count: text.chars().count(),
            concept_density: density,
            band: classify_band(tokens, &self.thresholds),
            composite_score: score,
        }
    }

    /// Profiles of every document keyed by doc id.
    pub fn profile_corpus(&self, corpus: &[LegalDocument]) -> BTreeMap<String, ComplexityProfile> {
        corpus
            .iter()
            .map(|d| (d.doc_id.clone(), self.profile(&d.text)))
            .collect()
    }
}
