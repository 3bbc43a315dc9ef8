//! Synthetic question/answer generation.
//!
//! Documents become [`QuestionDraft`]s under four strategies (factual,
//! definition, reasoning, comparison). Each draft's prompt goes to a
//! [`GenerationBackend`] through a sliding-window [`RateGate`], and answers
//! become [`QaRecord`]s tagged with source metadata and a difficulty derived
//! from the strategy.

mod backend;
mod draft;
mod generate;
mod ratelimit;
mod record;

pub use backend::{
    interpret_response, request_body, BackendError, GenerationBackend, HttpBackend, MissingApiKey,
    MockBackend, API_KEY_ENV, DEFAULT_ENDPOINT, DEFAULT_MODEL,
};
pub use draft::{
    build_prompt, excerpt, formulate_questions, parse_prompt, Difficulty, PromptError,
    QuestionDraft, QuestionFormulator, QuestionStrategy, TemplateError, TemplateSet,
    DEFAULT_EXCERPT_CHARS, PROMPT_HEADER,
};
pub use generate::{
    generate, max_calls_in_window, GenerateError, GenerateOptions, GenerationOutput,
    GenerationReport, SkipReason, SkippedDraft,
};
pub use ratelimit::{Clock, PolicyError, RateGate, RateLimitPolicy, SimulatedClock, SystemClock};
pub use record::{
    assemble_record, load_records, read_records, write_records, QaRecord, RecordError, TEXT_ID_KEY,
};
