//! Completion backends with caching, retries, and provenance capture.
//!
//! A [`Backend`] is anything that turns prompt bytes plus request parameters
//! into completion text: the HTTP backend speaks the OpenAI-compatible wire
//! shapes, the mock backend answers deterministically for tests and dry
//! runs. [`complete`] wraps a backend with the on-disk cache and the retry
//! policy; [`run_experiment`] fans the whole split out over a bounded worker
//! pool.
//!
//! Prompts may embed licensed corpus text, so prompt bytes never appear in
//! errors or logs; the content digest identifies them instead.

mod cache;
mod http;
mod mock;
mod runner;

pub use cache::{Cache, CacheError};
pub use http::{HttpApi, HttpBackend};
pub use mock::{MockBackend, MockPolicy};
pub use runner::{derive_run_id, run_experiment, ExperimentRun, ItemFailure, ItemResult, RunSpec};

use std::collections::BTreeMap;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::prompts::Condition;
use crate::util::sha256_hex;

#[derive(Debug, thiserror::Error)]
pub enum BackendError {
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("backend returned status {status}")]
    Status { status: u16, body: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("malformed backend response: {0}")]
    Malformed(String),
    #[error("api key environment variable {0} is not set")]
    MissingApiKey(String),
    #[error("retries exhausted after {attempts} attempts: {last}")]
    RetriesExhausted { attempts: u32, last: String },
    #[error("invalid request parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Cache(#[from] CacheError),
}

impl BackendError {
    /// Transient failures are retried; everything else is permanent.
    /// 429 is the one 4xx worth retrying.
    pub fn is_retryable(&self) -> bool {
        match self {
            BackendError::Transport(_) => true,
            BackendError::Status { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

/// Request parameters sent with every completion call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestParams {
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub stop: Vec<String>,
    /// Opaque passthrough merged into the request body.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, serde_json::Value>,
}

impl RequestParams {
    pub fn new(model: impl Into<String>) -> Self {
        RequestParams {
            model: model.into(),
            temperature: 0.2,
            max_tokens: 256,
            stop: Vec::new(),
            extra: BTreeMap::new(),
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(BackendError::InvalidParams(format!(
                "temperature {} must be finite and >= 0",
                self.temperature
            )));
        }
        if self.max_tokens < 1 {
            return Err(BackendError::InvalidParams(
                "max_tokens must be >= 1".into(),
            ));
        }
        Ok(())
    }

    /// Canonical serialization: sorted keys and normalized number formatting,
    /// so semantically equal parameter sets hash equally (0.2 == 0.20).
    fn canonical(&self) -> String {
        let mut map = BTreeMap::new();
        map.insert("max_tokens".to_string(), serde_json::json!(self.max_tokens));
        map.insert("stop".to_string(), serde_json::json!(self.stop));
        map.insert(
            "temperature".to_string(),
            serde_json::json!(self.temperature),
        );
        map.insert("extra".to_string(), serde_json::json!(self.extra));
        serde_json::to_string(&map).expect("canonical params serialize")
    }
}

/// Full provenance for one backend call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRecord {
    pub prompt_digest: String,
    pub condition: Condition,
    pub item_id: String,
    pub params: RequestParams,
    pub completion_text: String,
    pub backend_id: String,
    pub latency_ms: u64,
    pub from_cache: bool,
    pub timestamp: u64,
}

/// Content digest identifying a (backend, model, prompt, params) request.
/// Fields are length-prefixed before hashing so no concatenation of values
/// can collide with another field split.
pub fn cache_key(backend_id: &str, model: &str, prompt: &[u8], params: &RequestParams) -> String {
    let mut material = Vec::new();
    for field in [
        backend_id.as_bytes(),
        model.as_bytes(),
        params.canonical().as_bytes(),
        prompt,
    ] {
        material.extend_from_slice(&(field.len() as u64).to_le_bytes());
        material.extend_from_slice(field);
    }
    sha256_hex(&material)
}

/// Exponential backoff retry policy for transient backend failures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_backoff_ms: u64,
    pub max_backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 5,
            base_backoff_ms: 1_000,
            max_backoff_ms: 30_000,
        }
    }
}

impl RetryPolicy {
    pub fn backoff(&self, attempt: u32) -> Duration {
        let ms = self
            .base_backoff_ms
            .saturating_mul(1u64 << attempt.min(16))
            .min(self.max_backoff_ms);
        Duration::from_millis(ms)
    }
}

/// A completion provider. Implementations perform exactly one attempt;
/// retries and caching live in [`complete`].
pub trait Backend: Send + Sync {
    fn id(&self) -> &str;
    fn complete_once(&self, prompt: &str, params: &RequestParams) -> Result<String, BackendError>;
}

impl<B: Backend + ?Sized> Backend for Box<B> {
    fn id(&self) -> &str {
        (**self).id()
    }

    fn complete_once(&self, prompt: &str, params: &RequestParams) -> Result<String, BackendError> {
        (**self).complete_once(prompt, params)
    }
}

/// Token-bucket rate limiter wrapped around a backend. Only actual backend
/// calls consume tokens; cache hits never reach this layer.
pub struct RateLimited<B> {
    inner: B,
    bucket: std::sync::Mutex<TokenBucket>,
}

struct TokenBucket {
    rate_per_sec: f64,
    capacity: f64,
    tokens: f64,
    last_refill: Instant,
}

impl<B: Backend> RateLimited<B> {
    pub fn new(inner: B, rate_per_sec: f64) -> Self {
        assert!(rate_per_sec > 0.0, "rate must be positive");
        let capacity = rate_per_sec.max(1.0);
        RateLimited {
            inner,
            bucket: std::sync::Mutex::new(TokenBucket {
                rate_per_sec,
                capacity,
                tokens: capacity,
                last_refill: Instant::now(),
            }),
        }
    }

    fn acquire(&self) {
        loop {
            let wait = {
                let mut bucket = self.bucket.lock().expect("rate limiter lock");
                let elapsed = bucket.last_refill.elapsed().as_secs_f64();
                bucket.tokens =
                    (bucket.tokens + elapsed * bucket.rate_per_sec).min(bucket.capacity);
                bucket.last_refill = Instant::now();
                if bucket.tokens >= 1.0 {
                    bucket.tokens -= 1.0;
                    return;
                }
                Duration::from_secs_f64((1.0 - bucket.tokens) / bucket.rate_per_sec)
            };
            std::thread::sleep(wait);
        }
    }
}

impl<B: Backend> Backend for RateLimited<B> {
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn complete_once(&self, prompt: &str, params: &RequestParams) -> Result<String, BackendError> {
        self.acquire();
        self.inner.complete_once(prompt, params)
    }
}

/// Execute one prompt: consult the cache, then call the backend with
/// retries. The returned record is byte-identical on replay except for the
/// `from_cache` flag.
pub fn complete(
    backend: &dyn Backend,
    cache: &Cache,
    condition: Condition,
    item_id: &str,
    prompt: &str,
    params: &RequestParams,
    retry: &RetryPolicy,
) -> Result<CompletionRecord, BackendError> {
    params.validate()?;
    let digest = cache_key(backend.id(), &params.model, prompt.as_bytes(), params);
    if let Some(mut record) = cache.get(&digest)? {
        record.from_cache = true;
        return Ok(record);
    }

    let start = Instant::now();
    let mut attempts = 0u32;
    let completion_text = loop {
        attempts += 1;
        match backend.complete_once(prompt, params) {
            Ok(text) => break text,
            Err(e) if e.is_retryable() && attempts <= retry.max_retries => {
                std::thread::sleep(retry.backoff(attempts - 1));
            }
            Err(e) if e.is_retryable() => {
                return Err(BackendError::RetriesExhausted {
                    attempts,
                    last: e.to_string(),
                });
            }
            Err(e) => return Err(e),
        }
    };

    let record = CompletionRecord {
        prompt_digest: digest.clone(),
        condition,
        item_id: item_id.to_string(),
        params: params.clone(),
        completion_text,
        backend_id: backend.id().to_string(),
        latency_ms: start.elapsed().as_millis() as u64,
        from_cache: false,
        timestamp: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    };
    cache.put(&record)?;
    Ok(record)
}
