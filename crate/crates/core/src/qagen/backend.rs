//! Generative backends: the interface, a deterministic offline mock, and a
//! live HTTP client.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde_json::{json, Value};

use super::draft::parse_prompt;
use super::ratelimit::Clock;
use crate::seed::{stable_hash, stable_hash_parts, SeededRng};

/// Environment variable holding the API key of the live backend.
pub const API_KEY_ENV: &str = "LEXFORGE_API_KEY";

pub const DEFAULT_ENDPOINT: &str = "https://generativelanguage.googleapis.com/v1beta/models";
pub const DEFAULT_MODEL: &str = "gemini-2.5-pro";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BackendError {
    /// Worth retrying: rate limiting, overload, timeouts, dropped connections.
    #[error("transient backend failure: {0}")]
    Transient(String),
    /// Retrying will not help: bad request, auth failure, unusable response.
    #[error("permanent backend failure: {0}")]
    Permanent(String),
}

impl BackendError {
    pub fn is_transient(&self) -> bool {
        matches!(self, BackendError::Transient(_))
    }
}

/// Answers one prompt.
pub trait GenerationBackend: Send + Sync {
    fn complete(&self, prompt: &str) -> Result<String, BackendError>;
}

impl<B: GenerationBackend + ?Sized> GenerationBackend for Arc<B> {
    fn complete(&self, prompt: &str) -> Result<String, BackendError> {
        (**self).complete(prompt)
    }
}

impl<B: GenerationBackend + ?Sized> GenerationBackend for Box<B> {
    fn complete(&self, prompt: &str) -> Result<String, BackendError> {
        (**self).complete(prompt)
    }
}

const MOCK_SNIPPET_TOKENS: usize = 24;

struct Latency {
    clock: Arc<dyn Clock>,
    min: Duration,
    max: Duration,
}

/// Offline backend whose answers and failures are pure functions of
/// `(seed, prompt, attempt number for that prompt)`.
///
/// * `fail_first(n)`: the first `n` calls for every prompt fail transiently.
/// * `with_failure_rate(p)`: each call independently fails transiently with
///   probability `p`, decided by hashing.
/// * `unreachable()`: every call fails permanently.
/// * `with_latency(clock, min, max)`: each call sleeps a hashed duration in
///   `[min, max]` on `clock`.
pub struct MockBackend {
    seed: u64,
    failure_rate: f64,
    fail_first: u32,
    unreachable: bool,
    latency: Option<Latency>,
    attempts: Mutex<HashMap<u64, u32>>,
}

impl std::fmt::Debug for MockBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MockBackend")
            .field("seed", &self.seed)
            .field("failure_rate", &self.failure_rate)
            .field("fail_first", &self.fail_first)
            .field("unreachable", &self.unreachable)
            .finish_non_exhaustive()
    }
}

impl MockBackend {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            failure_rate: 0.0,
            fail_first: 0,
            unreachable: false,
            latency: None,
            attempts: Mutex::new(HashMap::new()),
        }
    }

    pub fn with_failure_rate(mut self, rate: f64) -> Self {
        self.failure_rate = rate.clamp(0.0, 1.0);
        self
    }

    pub fn fail_first(mut self, calls: u32) -> Self {
        self.fail_first = calls;
        self
    }

    pub fn unreachable() -> Self {
        Self {
            unreachable: true,
            ..Self::new(0)
        }
    }

    pub fn with_latency(mut self, clock: Arc<dyn Clock>, min: Duration, max: Duration) -> Self {
        self.latency = Some(Latency {
            clock,
            min,
            max: max.max(min),
        });
        self
    }

    /// Total calls seen so far, over all prompts.
    pub fn calls(&self) -> u32 {
        self.attempts.lock().expect("mock poisoned").values().sum()
    }

    fn answer_for(prompt: &str) -> String {
        let (context, question) = parse_prompt(prompt).unwrap_or((prompt, ""));
        let snippet: Vec<&str> = context.split_whitespace().take(MOCK_SNIPPET_TOKENS).collect();
        let question = question.split(" [Source:").next().unwrap_or(question).trim();
        format!(
            "Based on the provided context, the answer to \"{question}\" rests on the passage: \"{}\".",
            snippet.join(" ")
        )
    }
}

impl GenerationBackend for MockBackend {
    fn complete(&self, prompt: &str) -> Result<String, BackendError> {
        let key = stable_hash(prompt.as_bytes());
        let attempt = {
            let mut attempts = self.attempts.lock().expect("mock poisoned");
            let counter = attempts.entry(key).or_insert(0);
            *counter += 1;
            *counter
        };
        let mut rng = SeededRng::new(stable_hash_parts(&[
            &self.seed.to_string(),
            &key.to_string(),
            &attempt.to_string(),
        ]));
        if let Some(latency) = &self.latency {
            let span = (latency.max - latency.min).as_millis() as u64;
            let extra = if span == 0 { 0 } else { rng.below(span + 1) };
            latency
                .clock
                .sleep(latency.min + Duration::from_millis(extra));
        }
        if self.unreachable {
            return Err(BackendError::Permanent("mock backend is unreachable".into()));
        }
        if attempt <= self.fail_first {
            return Err(BackendError::Transient(format!(
                "scripted failure {attempt} of {}",
                self.fail_first
            )));
        }
        if self.failure_rate > 0.0 && rng.unit() < self.failure_rate {
            return Err(BackendError::Transient("injected failure".into()));
        }
        Ok(Self::answer_for(prompt))
    }
}

/// Live backend speaking the `generateContent` JSON schema:
/// `POST {endpoint}/{model}:generateContent` with the key in
/// `x-goog-api-key`.
#[derive(Debug)]
pub struct HttpBackend {
    url: String,
    api_key: String,
    agent: ureq::Agent,
}

impl HttpBackend {
    pub fn new(endpoint: &str, model: &str, api_key: impl Into<String>, timeout: Duration) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build();
        Self {
            url: format!("{}/{}:generateContent", endpoint.trim_end_matches('/'), model),
            api_key: api_key.into(),
            agent: config.into(),
        }
    }

    /// Reads the key from [`API_KEY_ENV`].
    pub fn from_env(endpoint: &str, model: &str, timeout: Duration) -> Result<Self, MissingApiKey> {
        match std::env::var(API_KEY_ENV) {
            Ok(key) if !key.trim().is_empty() => Ok(Self::new(endpoint, model, key, timeout)),
            _ => Err(MissingApiKey),
        }
    }

    pub fn url(&self) -> &str {
        &self.url
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("the live backend needs an API key: export {API_KEY_ENV}=<key>, or use --backend mock")]
pub struct MissingApiKey;

pub fn request_body(prompt: &str) -> Value {
    json!({
        "contents": [{"role": "user", "parts": [{"text": prompt}]}]
    })
}

/// Maps an HTTP status and body to an answer or a classified failure.
pub fn interpret_response(status: u16, body: &str) -> Result<String, BackendError> {
    match status {
        200..=299 => {}
        408 | 429 | 500 | 502 | 503 | 504 => {
            return Err(BackendError::Transient(format!("HTTP {status}")))
        }
        _ => {
            return Err(BackendError::Permanent(format!(
                "HTTP {status}: {}",
                body.chars().take(200).collect::<String>()
            )))
        }
    }
    let value: Value = serde_json::from_str(body)
        .map_err(|e| BackendError::Permanent(format!("response is not JSON: {e}")))?;
    let parts = value
        .pointer("/candidates/0/content/parts")
        .and_then(Value::as_array)
        .ok_or_else(|| BackendError::Permanent("response has no candidate content".into()))?;
    let text: String = parts
        .iter()
        .filter_map(|p| p.get("text").and_then(Value::as_str))
        .collect();
    if text.trim().is_empty() {
        return Err(BackendError::Permanent("response text is empty".into()));
    }
    Ok(text)
}

impl GenerationBackend for HttpBackend {
    fn complete(&self, prompt: &str) -> Result<String, BackendError> {
        let mut response = self
            .agent
            .post(&self.url)
            .header("x-goog-api-key", &self.api_key)
            .send_json(request_body(prompt))
            .map_err(|e| BackendError::Transient(e.to_string()))?;
        let status = response.status().as_u16();
        let body = response
            .body_mut()
            .read_to_string()
            .map_err(|e| BackendError::Transient(e.to_string()))?;
        interpret_response(status, &body)
    }
}
