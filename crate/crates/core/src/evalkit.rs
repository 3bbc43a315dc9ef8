//! Text metrics and loss-log comparison.
//!
//! ROUGE scores use lowercased whitespace tokens with no stemming or stopword
//! removal. Loss logs are JSON lines with `epoch`, `step` and `loss` keys,
//! stored as `<run_name>.<dataset>.losslog.jsonl`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{self, BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub const LOSSLOG_SUFFIX: &str = ".losslog.jsonl";

/// Precision, recall and their harmonic mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    pub const ZERO: Prf = Prf {
        precision: 0.0,
        recall: 0.0,
        f1: 0.0,
    };

    fn from_counts(overlap: usize, candidate: usize, reference: usize) -> Prf {
        if candidate == 0 || reference == 0 || overlap == 0 {
            return Prf::ZERO;
        }
        let precision = overlap as f64 / candidate as f64;
        let recall = overlap as f64 / reference as f64;
        Prf {
            precision,
            recall,
            f1: 2.0 * precision * recall / (precision + recall),
        }
    }
}

fn tokens(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_lowercase).collect()
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

/// ROUGE-N over n-gram multisets.
///
/// ```
/// let s = lexforge::evalkit::rouge_n("a b c", "a b d", 2).unwrap();
/// assert_eq!((s.precision, s.recall, s.f1), (0.5, 0.5, 0.5));
/// ```
pub fn rouge_n(candidate: &str, reference: &str, n: usize) -> Result<Prf, MetricError> {
    if n == 0 {
        return Err(MetricError::ZeroN);
    }
    let cand = tokens(candidate);
    let refr = tokens(reference);
    let c = ngram_counts(&cand, n);
    let r = ngram_counts(&refr, n);
    let overlap: usize = c
        .iter()
        .map(|(gram, k)| (*k).min(r.get(gram).copied().unwrap_or(0)))
        .sum();
    let total = |m: &HashMap<&[String], usize>| m.values().sum::<usize>();
    Ok(Prf::from_counts(overlap, total(&c), total(&r)))
}

fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// ROUGE-L over the longest common token subsequence.
pub fn rouge_l(candidate: &str, reference: &str) -> Prf {
    let cand = tokens(candidate);
    let refr = tokens(reference);
    Prf::from_counts(lcs_len(&cand, &refr), cand.len(), refr.len())
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricError {
    #[error("n-gram order must be at least 1")]
    ZeroN,
    #[error("{predictions} predictions but {references} references")]
    LengthMismatch {
        predictions: usize,
        references: usize,
    },
}

/// Micro-averaged F1 over pooled label counts.
///
/// Returns 1.0 when both sides contain no labels at all.
pub fn micro_f1<T: Ord>(
    predictions: &[BTreeSet<T>],
    references: &[BTreeSet<T>],
) -> Result<f64, MetricError> {
    if predictions.len() != references.len() {
        return Err(MetricError::LengthMismatch {
            predictions: predictions.len(),
            references: references.len(),
        });
    }
    let (mut tp, mut fp, mut fneg) = (0usize, 0usize, 0usize);
    for (p, r) in predictions.iter().zip(references) {
        let hit = p.intersection(r).count();
        tp += hit;
        fp += p.len() - hit;
        fneg += r.len() - hit;
    }
    if tp + fp + fneg == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * tp as f64 / (2 * tp + fp + fneg) as f64)
}

/// Fraction of exact matches.
pub fn accuracy<T: PartialEq>(predictions: &[T], references: &[T]) -> Result<f64, MetricError> {
    if predictions.len() != references.len() {
        return Err(MetricError::LengthMismatch {
            predictions: predictions.len(),
            references: references.len(),
        });
    }
    if predictions.is_empty() {
        return Ok(0.0);
    }
    let hits = predictions.iter().zip(references).filter(|(p, r)| p == r).count();
    Ok(hits as f64 / predictions.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossEntry {
    pub epoch: u32,
    pub step: u64,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossLog {
    pub run_name: String,
    pub entries: Vec<LossEntry>,
}

#[derive(Debug, thiserror::Error)]
pub enum LossLogError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: epoch must be at least 1")]
    ZeroEpoch { line: usize },
    #[error("line {line}: loss {loss} is not a finite non-negative number")]
    BadLoss { line: usize, loss: f64 },
    #[error("line {line}: epoch {epoch} follows epoch {previous}")]
    EpochRegression {
        line: usize,
        epoch: u32,
        previous: u32,
    },
    #[error("loss log for run '{0}' has no entries")]
    Empty(String),
    #[error("file name '{0}' does not follow <run_name>.<dataset>.losslog.jsonl")]
    BadFileName(String),
    #[error("{logs} logs but {datasets} dataset names")]
    LengthMismatch { logs: usize, datasets: usize },
}

impl LossLog {
    pub fn new(run_name: impl Into<String>, entries: Vec<LossEntry>) -> Result<Self, LossLogError> {
        let log = Self {
            run_name: run_name.into(),
            entries,
        };
        log.validate()?;
        Ok(log)
    }

    fn validate(&self) -> Result<(), LossLogError> {
        let mut previous = 0;
        for (i, e) in self.entries.iter().enumerate() {
            let line = i + 1;
            if e.epoch == 0 {
                return Err(LossLogError::ZeroEpoch { line });
            }
            if !e.loss.is_finite() || e.loss < 0.0 {
                return Err(LossLogError::BadLoss { line, loss: e.loss });
            }
            if e.epoch < previous {
                return Err(LossLogError::EpochRegression {
                    line,
                    epoch: e.epoch,
                    previous,
                });
            }
            previous = e.epoch;
        }
        Ok(())
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.entries.last().map(|e| e.loss)
    }

    pub fn parse<R: BufRead>(run_name: &str, reader: R) -> Result<Self, LossLogError> {
        let mut entries = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line.map_err(|source| LossLogError::Io {
                path: PathBuf::from(run_name),
                source,
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: LossEntry =
                serde_json::from_str(&line).map_err(|e| LossLogError::Malformed {
                    line: idx + 1,
                    message: e.to_string(),
                })?;
            entries.push(entry);
        }
        Self::new(run_name, entries)
    }

    /// Loads a log file; returns the log and the dataset named in the file name.
    pub fn load(path: &Path) -> Result<(Self, String), LossLogError> {
        let (run, dataset) = split_losslog_name(path)?;
        let file = File::open(path).map_err(|source| LossLogError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok((Self::parse(&run, BufReader::new(file))?, dataset))
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e).expect("entry serializes"));
            out.push('\n');
        }
        out
    }
}

/// Splits `<run_name>.<dataset>.losslog.jsonl` into its run and dataset.
pub fn split_losslog_name(path: &Path) -> Result<(String, String), LossLogError> {
    let name = path
        .file_name()
        .and_then(|n| n.to_str())
        .unwrap_or_default()
        .to_string();
    let stem = name
        .strip_suffix(LOSSLOG_SUFFIX)
        .ok_or_else(|| LossLogError::BadFileName(name.clone()))?;
    match stem.split_once('.') {
        Some((run, dataset)) if !run.is_empty() && !dataset.is_empty() => {
            Ok((run.to_string(), dataset.to_string()))
        }
        _ => Err(LossLogError::BadFileName(name)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub run_name: String,
    pub dataset_name: String,
    pub final_loss: f64,
}

/// Final losses per run and dataset, with the lowest-loss run per dataset.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunComparison {
    pub rows: Vec<ComparisonRow>,
    pub winner_per_dataset: BTreeMap<String, String>,
}

pub fn compare_runs(logs: &[LossLog], dataset_names: &[String]) -> Result<RunComparison, LossLogError> {
    if logs.len() != dataset_names.len() {
        return Err(LossLogError::LengthMismatch {
            logs: logs.len(),
            datasets: dataset_names.len(),
        });
    }
    let mut rows = Vec::with_capacity(logs.len());
    let mut best: BTreeMap<String, (f64, String)> = BTreeMap::new();
    for (log, dataset) in logs.iter().zip(dataset_names) {
        let final_loss = log
            .final_loss()
            .ok_or_else(|| LossLogError::Empty(log.run_name.clone()))?;
        rows.push(ComparisonRow {
            run_name: log.run_name.clone(),
            dataset_name: dataset.clone(),
            final_loss,
        });
        // first run listed wins ties
        match best.get(dataset) {
            Some((loss, _)) if *loss <= final_loss => {}
            _ => {
                best.insert(dataset.clone(), (final_loss, log.run_name.clone()));
            }
        }
    }
    Ok(RunComparison {
        rows,
        winner_per_dataset: best.into_iter().map(|(d, (_, run))| (d, run)).collect(),
    })
}

impl RunComparison {
    /// Dataset names in first-appearance order.
    pub fn datasets(&self) -> Vec<&str> {
        let mut seen = Vec::new();
        for row in &self.rows {
            if !seen.contains(&row.dataset_name.as_str()) {
                seen.push(row.dataset_name.as_str());
            }
        }
        seen
    }

    /// Run names in first-appearance order.
    pub fn runs(&self) -> Vec<&str> {
        let mut seen = Vec::new();
        for row in &self.rows {
            if !seen.contains(&row.run_name.as_str()) {
                seen.push(row.run_name.as_str());
            }
        }
        seen
    }

    pub fn final_loss(&self, run: &str, dataset: &str) -> Option<f64> {
        self.rows
            .iter()
            .rev()
            .find(|r| r.run_name == run && r.dataset_name == dataset)
            .map(|r| r.final_loss)
    }

    /// Plain-text table: one row per run, one column per dataset, winners
    /// marked with `*`.
    pub fn render_text(&self) -> String {
        let datasets = self.datasets();
        let runs = self.runs();
        let cell = |run: &str, dataset: &str| match self.final_loss(run, dataset) {
            Some(loss) => {
                let mark = if self.winner_per_dataset.get(dataset).map(String::as_str) == Some(run) {
                    "*"
                } else {
                    ""
                };
                format!("{loss:.4}{mark}")
            }
            None => "-".to_string(),
        };
        let mut grid: Vec<Vec<String>> = vec![std::iter::once("Model".to_string())
            .chain(datasets.iter().map(|d| d.to_string()))
            .collect()];
        for run in &runs {
            grid.push(
                std::iter::once(run.to_string())
                    .chain(datasets.iter().map(|d| cell(run, d)))
                    .collect(),
            );
        }
        let widths: Vec<usize> = (0..grid[0].len())
            .map(|c| grid.iter().map(|row| row[c].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for (i, row) in grid.iter().enumerate() {
            let line: Vec<String> = row
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(c, (text, w))| {
                    if c == 0 {
                        format!("{text:<w$}")
                    } else {
                        format!("{text:>w$}")
                    }
                })
                .collect();
            out.push_str(line.join("  ").trim_end());
            out.push('\n');
            if i == 0 {
                let total = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
                out.push_str(&"-".repeat(total));
                out.push('\n');
            }
        }
        out
    }

    /// Structured table: `{"datasets": [...], "runs": [{"run": .., "losses": {..}}], "winners": {..}}`.
    pub fn render_json(&self) -> serde_json::Value {
        let datasets = self.datasets();
        let runs: Vec<serde_json::Value> = self
            .runs()
            .into_iter()
            .map(|run| {
                let losses: serde_json::Map<String, serde_json::Value> = datasets
                    .iter()
                    .filter_map(|d| self.final_loss(run, d).map(|l| (d.to_string(), l.into())))
                    .collect();
                serde_json::json!({"run": run, "losses": losses})
            })
            .collect();
        serde_json::json!({
            "datasets": datasets,
            "runs": runs,
            "winners": self.winner_per_dataset,
        })
    }
}
