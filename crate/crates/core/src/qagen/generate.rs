//! Rate-limited answer generation over a batch of drafts.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::Serialize;

use super::backend::{BackendError, GenerationBackend};
use super::draft::{build_prompt, PromptError, QuestionDraft};
use super::ratelimit::{Clock, PolicyError, RateGate, RateLimitPolicy};
use super::record::{assemble_record, QaRecord, RecordError};
use crate::corpus::LegalDocument;

#[derive(Debug, thiserror::Error)]
pub enum GenerateError {
    #[error("no drafts to generate")]
    NoDrafts,
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("draft {index}: {source}")]
    Prompt {
        index: usize,
        #[source]
        source: PromptError,
    },
    #[error("draft {index} refers to unknown document '{doc_id}'")]
    UnknownDocument { index: usize, doc_id: String },
    #[error("draft {index}: {source}")]
    Record {
        index: usize,
        #[source]
        source: RecordError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipReason {
    /// Still failing transiently after `max_retries` retries.
    RetriesExhausted,
    Permanent,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkippedDraft {
    pub draft_index: usize,
    pub source_doc_id: String,
    pub reason: SkipReason,
    pub last_error: String,
}

/// Outcome counts of one generation batch.
///
/// `drafts == successes + skipped` and `calls == drafts + retries` always
/// hold. Timing fields are not serialized, so a report written to disk is
/// independent of scheduling.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct GenerationReport {
    pub drafts: usize,
    pub successes: usize,
    pub retries: usize,
    pub skipped: usize,
    pub calls: usize,
    pub skipped_drafts: Vec<SkippedDraft>,
    /// Issue time of every backend call, ascending.
    #[serde(skip)]
    pub call_times: Vec<Duration>,
    #[serde(skip)]
    pub rate_limit_wait: Duration,
    #[serde(skip)]
    pub backoff_wait: Duration,
}

impl GenerationReport {
    pub fn reconciles(&self) -> bool {
        self.drafts == self.successes + self.skipped
            && self.calls == self.drafts + self.retries
            && self.skipped == self.skipped_drafts.len()
            && self.call_times.len() == self.calls
    }
}

#[derive(Debug)]
pub struct GenerationOutput {
    /// One record per successful draft, in draft order.
    pub records: Vec<QaRecord>,
    /// Index into the input drafts of each record.
    pub record_draft_indices: Vec<usize>,
    pub report: GenerationReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GenerateOptions {
    pub policy: RateLimitPolicy,
    /// Worker threads issuing calls; all share one rate gate.
    pub concurrency: usize,
}

impl Default for GenerateOptions {
    fn default() -> Self {
        Self {
            policy: RateLimitPolicy::default(),
            concurrency: 1,
        }
    }
}

enum Outcome {
    Answered { answer: String, retries: u32 },
    Skipped { retries: u32, reason: SkipReason, error: BackendError },
}

struct Timing {
    call_times: Vec<Duration>,
    rate_limit_wait: Duration,
    backoff_wait: Duration,
}

fn run_one(
    backend: &dyn GenerationBackend,
    prompt: &str,
    gate: &RateGate,
    policy: &RateLimitPolicy,
    clock: &dyn Clock,
    timing: &Mutex<Timing>,
) -> Outcome {
    let mut retries = 0;
    loop {
        let (issued_at, waited) = gate.acquire(clock);
        {
            let mut t = timing.lock().expect("timing poisoned");
            t.call_times.push(issued_at);
            t.rate_limit_wait += waited;
        }
        match backend.complete(prompt) {
            Ok(answer) if !answer.trim().is_empty() => return Outcome::Answered { answer, retries },
            Ok(_) => {
                return Outcome::Skipped {
                    retries,
                    reason: SkipReason::Permanent,
                    error: BackendError::Permanent("backend returned an empty answer".into()),
                }
            }
            Err(error @ BackendError::Permanent(_)) => {
                return Outcome::Skipped {
                    retries,
                    reason: SkipReason::Permanent,
                    error,
                }
            }
            Err(error) => {
                if retries >= policy.max_retries {
                    return Outcome::Skipped {
                        retries,
                        reason: SkipReason::RetriesExhausted,
                        error,
                    };
                }
                let delay = policy.backoff(retries);
                clock.sleep(delay);
                timing.lock().expect("timing poisoned").backoff_wait += delay;
                retries += 1;
            }
        }
    }
}

/// Answers every draft through `backend`, never issuing more than
/// `policy.max_requests` calls within any `policy.window` on `clock`.
///
/// Transient failures are retried after `backoff_base * 2^k`; drafts that
/// fail permanently or exhaust their retries are reported and skipped.
/// A batch where every draft is skipped still returns `Ok`.
pub fn generate(
    backend: &dyn GenerationBackend,
    drafts: &[QuestionDraft],
    docs: &HashMap<&str, &LegalDocument>,
    options: GenerateOptions,
    clock: &dyn Clock,
) -> Result<GenerationOutput, GenerateError> {
    if drafts.is_empty() {
        return Err(GenerateError::NoDrafts);
    }
    let gate = RateGate::new(options.policy)?;
    let mut prompts = Vec::with_capacity(drafts.len());
    for (index, draft) in drafts.iter().enumerate() {
        if !docs.contains_key(draft.source_doc_id.as_str()) {
            return Err(GenerateError::UnknownDocument {
                index,
                doc_id: draft.source_doc_id.clone(),
            });
        }
        prompts.push(build_prompt(draft).map_err(|source| GenerateError::Prompt { index, source })?);
    }

    let timing = Mutex::new(Timing {
        call_times: Vec::new(),
        rate_limit_wait: Duration::ZERO,
        backoff_wait: Duration::ZERO,
    });
    let policy = options.policy;
    let mut outcomes: Vec<Option<Outcome>> = (0..drafts.len()).map(|_| None).collect();

    if options.concurrency <= 1 {
        for (slot, prompt) in outcomes.iter_mut().zip(&prompts) {
            *slot = Some(run_one(backend, prompt, &gate, &policy, clock, &timing));
        }
    } else {
        let next = AtomicUsize::new(0);
        let results = Mutex::new(Vec::with_capacity(drafts.len()));
        std::thread::scope(|scope| {
            for _ in 0..options.concurrency.min(drafts.len()) {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    if i >= prompts.len() {
                        break;
                    }
                    let outcome = run_one(backend, &prompts[i], &gate, &policy, clock, &timing);
                    results.lock().expect("results poisoned").push((i, outcome));
                });
            }
        });
        for (i, outcome) in results.into_inner().expect("results poisoned") {
            outcomes[i] = Some(outcome);
        }
    }

    let mut report = GenerationReport {
        drafts: drafts.len(),
        ..Default::default()
    };
    let mut records = Vec::new();
    let mut record_draft_indices = Vec::new();
    for (index, (draft, outcome)) in drafts.iter().zip(outcomes).enumerate() {
        match outcome.expect("every draft processed") {
            Outcome::Answered { answer, retries } => {
                report.retries += retries as usize;
                report.successes += 1;
                let doc = docs[draft.source_doc_id.as_str()];
                let record = assemble_record(draft, &answer, doc)
                    .map_err(|source| GenerateError::Record { index, source })?;
                records.push(record);
                record_draft_indices.push(index);
            }
            Outcome::Skipped {
                retries,
                reason,
                error,
            } => {
                report.retries += retries as usize;
                report.skipped += 1;
                report.skipped_drafts.push(SkippedDraft {
                    draft_index: index,
                    source_doc_id: draft.source_doc_id.clone(),
                    reason,
                    last_error: error.to_string(),
                });
            }
        }
    }
    let timing = timing.into_inner().expect("timing poisoned");
    report.calls = timing.call_times.len();
    report.call_times = timing.call_times;
    report.call_times.sort();
    report.rate_limit_wait = timing.rate_limit_wait;
    report.backoff_wait = timing.backoff_wait;
    Ok(GenerationOutput {
        records,
        record_draft_indices,
        report,
    })
}

/// Largest number of `call_times` (ascending) inside any half-open window
/// `(t - window, t]`.
pub fn max_calls_in_window(call_times: &[Duration], window: Duration) -> usize {
    let mut best = 0;
    let mut lo = 0;
    for hi in 0..call_times.len() {
        while call_times[lo] + window <= call_times[hi] {
            lo += 1;
        }
        best = best.max(hi - lo + 1);
    }
    best
}
