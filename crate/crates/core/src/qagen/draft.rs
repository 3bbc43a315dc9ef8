//! Question strategies, templates, drafts and prompts.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::LegalDocument;
use crate::seed::{stable_hash_parts, SeededRng};

const DEFAULT_TEMPLATES: &str = include_str!("../../data/question_templates.txt");

/// Default character budget of the context excerpt.
pub const DEFAULT_EXCERPT_CHARS: usize = 12_000;

const TITLE_CHARS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuestionStrategy {
    Factual,
    Definition,
    Reasoning,
    Comparison,
}

impl QuestionStrategy {
    pub const ALL: [QuestionStrategy; 4] = [
        QuestionStrategy::Factual,
        QuestionStrategy::Definition,
        QuestionStrategy::Reasoning,
        QuestionStrategy::Comparison,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            QuestionStrategy::Factual => "factual",
            QuestionStrategy::Definition => "definition",
            QuestionStrategy::Reasoning => "reasoning",
            QuestionStrategy::Comparison => "comparison",
        }
    }

    /// Factual and definition questions are easy; reasoning and comparison
    /// questions are hard.
    pub fn difficulty(self) -> Difficulty {
        match self {
            QuestionStrategy::Factual | QuestionStrategy::Definition => Difficulty::Easy,
            QuestionStrategy::Reasoning | QuestionStrategy::Comparison => Difficulty::Hard,
        }
    }
}

impl fmt::Display for QuestionStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for QuestionStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|q| q.as_str() == s)
            .ok_or_else(|| format!("unknown question strategy '{s}'"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Difficulty {
    Easy,
    Hard,
}

impl Difficulty {
    pub fn rank(self) -> u8 {
        match self {
            Difficulty::Easy => 0,
            Difficulty::Hard => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TemplateError {
    #[error("line {line}: template before any [strategy] header")]
    NoSection { line: usize },
    #[error("line {line}: {message}")]
    BadHeader { line: usize, message: String },
    #[error("no templates for strategy '{0}'")]
    MissingStrategy(QuestionStrategy),
    #[error("failed to read template file {path}: {message}")]
    Io { path: String, message: String },
}

/// Question templates for each strategy.
#[derive(Debug, Clone, PartialEq)]
pub struct TemplateSet {
    templates: BTreeMap<QuestionStrategy, Vec<String>>,
}

impl TemplateSet {
    /// Parses the sectioned template format:
    ///
    /// ```text
    /// [factual]
    /// When did the event described in the document occur?
    /// [reasoning]
    /// How does the document justify the decision concerning this?
    /// ```
    ///
    /// Lines starting with `#` and blank lines are ignored. Every strategy
    /// needs at least one template.
    pub fn parse(contents: &str) -> Result<Self, TemplateError> {
        let mut templates: BTreeMap<QuestionStrategy, Vec<String>> = BTreeMap::new();
        let mut current = None;
        for (idx, raw) in contents.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                let strategy = name
                    .trim()
                    .parse::<QuestionStrategy>()
                    .map_err(|message| TemplateError::BadHeader {
                        line: idx + 1,
                        message,
                    })?;
                current = Some(strategy);
                templates.entry(strategy).or_default();
                continue;
            }
            let strategy = current.ok_or(TemplateError::NoSection { line: idx + 1 })?;
            templates.entry(strategy).or_default().push(line.to_string());
        }
        for strategy in QuestionStrategy::ALL {
            if templates.get(&strategy).is_none_or(|t| t.is_empty()) {
                return Err(TemplateError::MissingStrategy(strategy));
            }
        }
        Ok(Self { templates })
    }

    pub fn from_file(path: &Path) -> Result<Self, TemplateError> {
        let contents = std::fs::read_to_string(path).map_err(|e| TemplateError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse(&contents)
    }

    pub fn for_strategy(&self, strategy: QuestionStrategy) -> &[String] {
        &self.templates[&strategy]
    }
}

impl Default for TemplateSet {
    fn default() -> Self {
        Self::parse(DEFAULT_TEMPLATES).expect("bundled templates are valid")
    }
}

/// A question ready to be answered from a document excerpt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionDraft {
    pub question_text: String,
    pub strategy: QuestionStrategy,
    /// Context passed to the generator; becomes the record's `keyword`.
    pub context_excerpt: String,
    pub source_doc_id: String,
}

/// Longest prefix of `text` within `budget` characters, cut back to the last
/// whitespace when truncated mid-word and trimmed. Always a contiguous
/// substring of `text`.
pub fn excerpt(text: &str, budget: usize) -> &str {
    let end = text
        .char_indices()
        .nth(budget)
        .map(|(i, _)| i)
        .unwrap_or(text.len());
    let mut prefix = &text[..end];
    let truncated_mid_word = end < text.len()
        && !text[end..].starts_with(char::is_whitespace)
        && !prefix.ends_with(char::is_whitespace);
    if truncated_mid_word {
        if let Some(cut) = prefix.rfind(char::is_whitespace) {
            prefix = &prefix[..cut];
        }
    }
    prefix.trim()
}

fn title_of(text: &str) -> String {
    let first_line = text.trim_start().lines().next().unwrap_or("").trim();
    let mut title: String = first_line.chars().take(TITLE_CHARS).collect();
    if first_line.chars().count() > TITLE_CHARS {
        title.push_str("...");
    }
    title
}

/// Turns documents into question drafts.
#[derive(Debug, Clone, PartialEq)]
pub struct QuestionFormulator {
    pub templates: TemplateSet,
    pub excerpt_chars: usize,
}

impl Default for QuestionFormulator {
    fn default() -> Self {
        Self {
            templates: TemplateSet::default(),
            excerpt_chars: DEFAULT_EXCERPT_CHARS,
        }
    }
}

impl QuestionFormulator {
    /// `per_doc` drafts for `doc`. Strategies rotate in declaration order
    /// starting at `seed % 4`. Templates come from a per-strategy shuffle
    /// seeded with `(seed, doc_id)`, so a document only repeats a template
    /// once its strategy's templates are used up.
    pub fn formulate(&self, doc: &LegalDocument, per_doc: usize, seed: u64) -> Vec<QuestionDraft> {
        let start = (seed % 4) as usize;
        let context = excerpt(&doc.text, self.excerpt_chars).to_string();
        let title = title_of(&doc.text);
        let mut rng = SeededRng::new(stable_hash_parts(&[&seed.to_string(), &doc.doc_id]));
        let orders: Vec<Vec<usize>> = QuestionStrategy::ALL
            .iter()
            .map(|&s| {
                let mut order: Vec<usize> = (0..self.templates.for_strategy(s).len()).collect();
                rng.shuffle(&mut order);
                order
            })
            .collect();
        (0..per_doc)
            .map(|i| {
                let slot = (start + i) % 4;
                let strategy = QuestionStrategy::ALL[slot];
                let choices = self.templates.for_strategy(strategy);
                let order = &orders[slot];
                let template = &choices[order[((start + i) / 4) % order.len()]];
                QuestionDraft {
                    question_text: template.replace("{title}", &title),
                    strategy,
                    context_excerpt: context.clone(),
                    source_doc_id: doc.doc_id.clone(),
                }
            })
            .collect()
    }
}

/// [`QuestionFormulator::formulate`] with the bundled templates and the
/// default excerpt budget.
pub fn formulate_questions(doc: &LegalDocument, per_doc: usize, seed: u64) -> Vec<QuestionDraft> {
    QuestionFormulator::default().formulate(doc, per_doc, seed)
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("draft for '{0}' has an empty context excerpt")]
    EmptyExcerpt(String),
    #[error("draft for '{0}' has an empty question")]
    EmptyQuestion(String),
}

pub const PROMPT_HEADER: &str = "You are an expert in European Union law. Answer the question \
using only the context taken from the source document. Be precise and refer to the relevant \
provisions where possible.";

pub const CONTEXT_MARKER: &str = "### Context\n";
pub const QUESTION_MARKER: &str = "\n\n### Question\n";
pub const ANSWER_MARKER: &str = "\n\n### Answer\n";

/// Prompt layout, byte for byte:
///
/// ```text
/// <PROMPT_HEADER>\n\n### Context\n<excerpt>\n\n### Question\n<question>\n\n### Answer\n
/// ```
pub fn build_prompt(draft: &QuestionDraft) -> Result<String, PromptError> {
    if draft.context_excerpt.trim().is_empty() {
        return Err(PromptError::EmptyExcerpt(draft.source_doc_id.clone()));
    }
    if draft.question_text.trim().is_empty() {
        return Err(PromptError::EmptyQuestion(draft.source_doc_id.clone()));
    }
    Ok(format!(
        "{PROMPT_HEADER}\n\n{CONTEXT_MARKER}{}{QUESTION_MARKER}{}{ANSWER_MARKER}",
        draft.context_excerpt, draft.question_text
    ))
}

/// Splits a prompt built by [`build_prompt`] back into (context, question).
pub fn parse_prompt(prompt: &str) -> Option<(&str, &str)> {
    let (_, rest) = prompt.split_once(CONTEXT_MARKER)?;
    let (context, rest) = rest.split_once(QUESTION_MARKER)?;
    let (question, _) = rest.split_once(ANSWER_MARKER)?;
    Some((context, question))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(text: &str) -> LegalDocument {
        LegalDocument::eurlex("eurlex_1", text, vec![1])
    }

    #[test]
    fn four_drafts_cover_every_strategy() {
        let drafts = formulate_questions(&doc("Council Decision of 23 March 1981"), 4, 13);
        let mut strategies: Vec<_> = drafts.iter().map(|d| d.strategy).collect();
        strategies.sort();
        assert_eq!(strategies, QuestionStrategy::ALL.to_vec());
    }

    #[test]
    fn rotation_starts_at_seed_mod_four() {
        let d = formulate_questions(&doc("text"), 1, 8);
        assert_eq!(d[0].strategy, QuestionStrategy::Factual);
        let d = formulate_questions(&doc("text"), 3, 6);
        let s: Vec<_> = d.iter().map(|d| d.strategy).collect();
        assert_eq!(
            s,
            [QuestionStrategy::Reasoning, QuestionStrategy::Comparison, QuestionStrategy::Factual]
        );
    }

    #[test]
    fn dated_event_question_is_in_factual_templates() {
        let text = "Commission Decision approving the outline plan of agricultural advisory work in Italy, adopted on 23 March 1981";
        let d = doc(text);
        let found = (0..64u64).any(|k| {
            formulate_questions(&d, 1, 4 * k)[0].question_text
                == "When did the event described in the document occur?"
        });
        assert!(found);
    }

    #[test]
    fn bundled_templates_have_three_per_strategy() {
        let t = TemplateSet::default();
        for s in QuestionStrategy::ALL {
            assert!(t.for_strategy(s).len() >= 3, "{s}");
        }
    }

    #[test]
    fn template_parse_errors() {
        assert_eq!(
            TemplateSet::parse("Who?\n[factual]\n"),
            Err(TemplateError::NoSection { line: 1 })
        );
        assert!(matches!(
            TemplateSet::parse("[trivia]\nWho?"),
            Err(TemplateError::BadHeader { line: 1, .. })
        ));
        assert_eq!(
            TemplateSet::parse("[factual]\nA?\n[definition]\nB?\n[reasoning]\nC?\n"),
            Err(TemplateError::MissingStrategy(QuestionStrategy::Comparison))
        );
    }

    #[test]
    fn comparison_template_expands_title() {
        let t = TemplateSet::parse(
            "[factual]\nA?\n[definition]\nB?\n[reasoning]\nC?\n[comparison]\nWhat contrast? [Source: {title}]\n",
        )
        .unwrap();
        let f = QuestionFormulator {
            templates: t,
            excerpt_chars: 100,
        };
        let d = f.formulate(&doc("Commission Regulation (EC) No 1241/2001\nof 26 June"), 4, 0);
        assert_eq!(d[3].question_text, "What contrast? [Source: Commission Regul...]");
    }

    #[test]
    fn excerpt_is_substring_within_budget() {
        let text = "  alpha beta gamma delta  ";
        assert_eq!(excerpt(text, 100), "alpha beta gamma delta");
        assert_eq!(excerpt(text, 14), "alpha beta");
        assert_eq!(excerpt("abcdef", 3), "abc");
        let unicode = "Mitgliedstaaten ärgern Öl";
        let e = excerpt(unicode, 18);
        assert!(unicode.contains(e));
        assert_eq!(e, "Mitgliedstaaten");
    }

    #[test]
    fn prompt_is_stable_and_parseable() {
        let d = &formulate_questions(&doc("The Council adopted the act."), 1, 0)[0];
        let p = build_prompt(d).unwrap();
        assert_eq!(p, build_prompt(d).unwrap());
        let (ctx, q) = parse_prompt(&p).unwrap();
        assert_eq!(ctx, "The Council adopted the act.");
        assert_eq!(q, d.question_text);
    }

    #[test]
    fn empty_excerpt_is_rejected() {
        let mut d = formulate_questions(&doc("text"), 1, 0).remove(0);
        d.context_excerpt.clear();
        assert_eq!(build_prompt(&d), Err(PromptError::EmptyExcerpt("eurlex_1".into())));
    }

    #[test]
    fn difficulty_mapping() {
        use QuestionStrategy::*;
        assert_eq!(Factual.difficulty(), Difficulty::Easy);
        assert_eq!(Definition.difficulty(), Difficulty::Easy);
        assert_eq!(Reasoning.difficulty(), Difficulty::Hard);
        assert_eq!(Comparison.difficulty(), Difficulty::Hard);
    }
}
