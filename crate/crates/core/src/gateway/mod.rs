//! Text generation behind a single interface.
//!
//! A [`Gateway`] wraps a [`Backend`] with request validation, bounded retries
//! with exponential backoff, and a cap on in-flight requests. Backends are an
//! OpenAI-compatible HTTP client ([`RemoteBackend`]) and a scripted,
//! deterministic [`MockBackend`]. [`serve`] exposes a mock script over HTTP so
//! the remote path can be exercised without network access.

mod mock;
mod remote;
pub mod serve;

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lang::LangCode;
use crate::prompts;

pub use mock::{MatchKind, MockBackend, MockRule, MockScript, MockScriptError};
pub use remote::{RemoteBackend, RemoteConfig, API_KEY_ENV};

pub const DEFAULT_MAX_NEW_TOKENS: u32 = 256;
pub const DEFAULT_TEMPERATURE: f64 = 0.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub system_message: String,
    pub user_message: String,
    pub max_new_tokens: u32,
    pub temperature: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl ChatRequest {
    /// Request with the default decoding settings (greedy, 256 new tokens).
    pub fn new(system_message: impl Into<String>, user_message: impl Into<String>) -> Self {
        ChatRequest {
            system_message: system_message.into(),
            user_message: user_message.into(),
            max_new_tokens: DEFAULT_MAX_NEW_TOKENS,
            temperature: DEFAULT_TEMPERATURE,
            seed: None,
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.system_message.trim().is_empty() || self.user_message.trim().is_empty() {
            return Err(GatewayError::InvalidRequest("empty system or user message".into()));
        }
        if self.max_new_tokens == 0 {
            return Err(GatewayError::InvalidRequest("max_new_tokens must be at least 1".into()));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(GatewayError::InvalidRequest(format!(
                "temperature {} must be finite and non-negative",
                self.temperature
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationResult {
    pub text: String,
    pub backend_id: String,
    pub latency_ms: u64,
    pub attempt_count: u32,
    /// Set when the backend stopped at the token limit.
    #[serde(default)]
    pub truncated: bool,
}

/// What a backend returns for one transport attempt.
#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub text: String,
    pub truncated: bool,
    /// Backends that simulate timing report it here instead of wall time.
    pub simulated_latency_ms: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransportError {
    /// Worth retrying: rate limits, server errors, connection failures.
    #[error("transient failure: {0}")]
    Transient(String),
    /// The backend refused the request itself; retrying cannot help.
    #[error("request rejected: {0}")]
    Rejected(String),
}

pub trait Backend: Send + Sync {
    fn id(&self) -> &str;
    fn complete(&self, request: &ChatRequest) -> Result<Completion, TransportError>;
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("backend {backend} unavailable after {attempts} attempts: {last_error}")]
    BackendUnavailable {
        backend: String,
        attempts: u32,
        last_error: String,
    },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("backend {0} returned an empty response")]
    ResponseEmpty(String),
    #[error("no backend configured with id {0}")]
    UnknownBackend(String),
    #[error("translation source and target are both {0}")]
    SameLanguage(LangCode),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 4,
            base_delay_ms: 250,
            max_delay_ms: 8_000,
        }
    }
}

impl RetryPolicy {
    /// Delay before attempt `attempt + 1`, doubling from the base.
    pub fn delay_after(&self, attempt: u32) -> Duration {
        let factor = 1u64.checked_shl(attempt.saturating_sub(1)).unwrap_or(u64::MAX);
        Duration::from_millis(self.base_delay_ms.saturating_mul(factor).min(self.max_delay_ms))
    }
}

/// Counting semaphore bounding in-flight requests.
#[derive(Debug)]
struct Limiter {
    available: Mutex<usize>,
    released: Condvar,
}

struct Permit<'a>(&'a Limiter);

impl Limiter {
    fn new(limit: usize) -> Self {
        Limiter {
            available: Mutex::new(limit.max(1)),
            released: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut available = self.available.lock().expect("limiter lock");
        while *available == 0 {
            available = self.released.wait(available).expect("limiter lock");
        }
        *available -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.available.lock().expect("limiter lock") += 1;
        self.0.released.notify_one();
    }
}

pub const DEFAULT_MAX_IN_FLIGHT: usize = 4;

/// A backend plus retry and concurrency policy. Cheap to share behind `Arc`.
pub struct Gateway {
    backend: Arc<dyn Backend>,
    retry: RetryPolicy,
    limiter: Limiter,
    in_flight: AtomicU64,
    peak_in_flight: AtomicU64,
    attempts: AtomicU64,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway")
            .field("backend", &self.backend.id())
            .field("retry", &self.retry)
            .finish()
    }
}

impl Gateway {
    pub fn new(backend: Arc<dyn Backend>) -> Self {
        Self::with_policy(backend, RetryPolicy::default(), DEFAULT_MAX_IN_FLIGHT)
    }

    pub fn with_policy(backend: Arc<dyn Backend>, retry: RetryPolicy, max_in_flight: usize) -> Self {
        Gateway {
            backend,
            retry,
            limiter: Limiter::new(max_in_flight),
            in_flight: AtomicU64::new(0),
            peak_in_flight: AtomicU64::new(0),
            attempts: AtomicU64::new(0),
        }
    }

    pub fn backend_id(&self) -> &str {
        self.backend.id()
    }

    /// Transport attempts issued so far, retries included.
    pub fn attempts(&self) -> u64 {
        self.attempts.load(Ordering::SeqCst)
    }

    /// Highest number of simultaneous requests observed.
    pub fn peak_in_flight(&self) -> u64 {
        self.peak_in_flight.load(Ordering::SeqCst)
    }

    pub fn generate(&self, request: &ChatRequest) -> Result<GenerationResult, GatewayError> {
        request.validate()?;
        let started = Instant::now();
        let mut attempt = 0;
        loop {
            attempt += 1;
            let outcome = {
                let _permit = self.limiter.acquire();
                let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
                self.peak_in_flight.fetch_max(now, Ordering::SeqCst);
                self.attempts.fetch_add(1, Ordering::SeqCst);
                let outcome = self.backend.complete(request);
                self.in_flight.fetch_sub(1, Ordering::SeqCst);
                outcome
            };
            match outcome {
                Ok(completion) => {
                    let text = completion.text.trim().to_string();
                    if text.is_empty() {
                        return Err(GatewayError::ResponseEmpty(self.backend_id().to_string()));
                    }
                    let latency_ms = completion
                        .simulated_latency_ms
                        .unwrap_or_else(|| started.elapsed().as_millis() as u64);
                    return Ok(GenerationResult {
                        text,
                        backend_id: self.backend_id().to_string(),
                        latency_ms,
                        attempt_count: attempt,
                        truncated: completion.truncated,
                    });
                }
                Err(TransportError::Rejected(reason)) => return Err(GatewayError::InvalidRequest(reason)),
                Err(TransportError::Transient(reason)) => {
                    if attempt >= self.retry.max_attempts {
                        return Err(GatewayError::BackendUnavailable {
                            backend: self.backend_id().to_string(),
                            attempts: attempt,
                            last_error: reason,
                        });
                    }
                    log::warn!(
                        "backend {} attempt {attempt} failed ({reason}); retrying",
                        self.backend_id()
                    );
                    thread::sleep(self.retry.delay_after(attempt));
                }
            }
        }
    }
}

/// Gateways keyed by backend id.
#[derive(Debug, Default, Clone)]
pub struct GatewaySet {
    gateways: BTreeMap<String, Arc<Gateway>>,
}

impl GatewaySet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Add `gateway` under its backend id, replacing any previous entry.
    pub fn insert(&mut self, gateway: Gateway) -> Arc<Gateway> {
        let gateway = Arc::new(gateway);
        self.gateways.insert(gateway.backend_id().to_string(), gateway.clone());
        gateway
    }

    pub fn get(&self, backend_id: &str) -> Result<&Gateway, GatewayError> {
        self.gateways
            .get(backend_id)
            .map(Arc::as_ref)
            .ok_or_else(|| GatewayError::UnknownBackend(backend_id.to_string()))
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.gateways.keys().map(String::as_str)
    }

    /// Transport attempts summed over every gateway.
    pub fn total_attempts(&self) -> u64 {
        self.gateways.values().map(|g| g.attempts()).sum()
    }
}

/// Free-function form of [`Gateway::generate`].
pub fn generate(gateway: &Gateway, request: &ChatRequest) -> Result<GenerationResult, GatewayError> {
    gateway.generate(request)
}

/// The chat request used for translation.
pub fn translation_request(text: &str, src: LangCode, tgt: LangCode) -> ChatRequest {
    ChatRequest::new(prompts::TRANSLATION_SYSTEM, prompts::translation_user(text, src, tgt))
}

/// Translate with one generation call; returns the full generation record.
pub fn translate_detailed(
    gateway: &Gateway,
    text: &str,
    src: LangCode,
    tgt: LangCode,
) -> Result<GenerationResult, GatewayError> {
    if src == tgt {
        return Err(GatewayError::SameLanguage(src));
    }
    gateway.generate(&translation_request(text, src, tgt))
}

pub fn translate(gateway: &Gateway, text: &str, src: LangCode, tgt: LangCode) -> Result<String, GatewayError> {
    translate_detailed(gateway, text, src, tgt).map(|r| r.text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::AtomicUsize;

    /// Fails with the given errors in order, then succeeds.
    struct Flaky {
        failures: Vec<TransportError>,
        calls: AtomicUsize,
        seen: Mutex<Vec<ChatRequest>>,
    }

    impl Flaky {
        fn new(failures: Vec<TransportError>) -> Self {
            Flaky {
                failures,
                calls: AtomicUsize::new(0),
                seen: Mutex::new(Vec::new()),
            }
        }
    }

    impl Backend for Flaky {
        fn id(&self) -> &str {
            "flaky"
        }

        fn complete(&self, request: &ChatRequest) -> Result<Completion, TransportError> {
            self.seen.lock().unwrap().push(request.clone());
            let call = self.calls.fetch_add(1, Ordering::SeqCst);
            match self.failures.get(call) {
                Some(err) => Err(err.clone()),
                None => Ok(Completion {
                    text: "  ok \n".into(),
                    truncated: false,
                    simulated_latency_ms: Some(7),
                }),
            }
        }
    }

    fn fast_policy(max_attempts: u32) -> RetryPolicy {
        RetryPolicy {
            max_attempts,
            base_delay_ms: 1,
            max_delay_ms: 2,
        }
    }

    fn rate_limited() -> TransportError {
        TransportError::Transient("HTTP 429".into())
    }

    #[test]
    fn retries_transient_failures() {
        let backend = Arc::new(Flaky::new(vec![rate_limited(), rate_limited()]));
        let gateway = Gateway::with_policy(backend.clone(), fast_policy(4), 2);
        let request = ChatRequest::new("sys", "user");
        let result = gateway.generate(&request).unwrap();
        assert_eq!(result.attempt_count, 3);
        assert_eq!(result.text, "ok");
        assert_eq!(result.latency_ms, 7);
        assert_eq!(gateway.attempts(), 3);
        let seen = backend.seen.lock().unwrap();
        assert!(seen.iter().all(|r| *r == request));
    }

    #[test]
    fn gives_up_when_budget_exhausted() {
        let backend = Arc::new(Flaky::new(vec![rate_limited(); 5]));
        let gateway = Gateway::with_policy(backend, fast_policy(3), 1);
        match gateway.generate(&ChatRequest::new("s", "u")) {
            Err(GatewayError::BackendUnavailable { attempts, .. }) => assert_eq!(attempts, 3),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(gateway.attempts(), 3);
    }

    #[test]
    fn rejected_requests_are_not_retried() {
        let backend = Arc::new(Flaky::new(vec![TransportError::Rejected("HTTP 400".into())]));
        let gateway = Gateway::with_policy(backend, fast_policy(4), 1);
        assert!(matches!(
            gateway.generate(&ChatRequest::new("s", "u")),
            Err(GatewayError::InvalidRequest(_))
        ));
        assert_eq!(gateway.attempts(), 1);
    }

    #[test]
    fn invalid_requests_never_reach_the_backend() {
        let backend = Arc::new(Flaky::new(vec![]));
        let gateway = Gateway::with_policy(backend, fast_policy(4), 1);
        let mut request = ChatRequest::new("s", "u");
        request.max_new_tokens = 0;
        assert!(matches!(
            gateway.generate(&request),
            Err(GatewayError::InvalidRequest(_))
        ));
        assert!(matches!(
            gateway.generate(&ChatRequest::new("s", "  ")),
            Err(GatewayError::InvalidRequest(_))
        ));
        let mut request = ChatRequest::new("s", "u");
        request.temperature = -1.0;
        assert!(gateway.generate(&request).is_err());
        assert_eq!(gateway.attempts(), 0);
    }

    #[test]
    fn backoff_doubles_and_caps() {
        let policy = RetryPolicy {
            max_attempts: 10,
            base_delay_ms: 100,
            max_delay_ms: 500,
        };
        assert_eq!(policy.delay_after(1), Duration::from_millis(100));
        assert_eq!(policy.delay_after(2), Duration::from_millis(200));
        assert_eq!(policy.delay_after(3), Duration::from_millis(400));
        assert_eq!(policy.delay_after(4), Duration::from_millis(500));
        assert_eq!(policy.delay_after(200), Duration::from_millis(500));
    }

    struct Slow;

    impl Backend for Slow {
        fn id(&self) -> &str {
            "slow"
        }

        fn complete(&self, _: &ChatRequest) -> Result<Completion, TransportError> {
            thread::sleep(Duration::from_millis(20));
            Ok(Completion {
                text: "x".into(),
                truncated: true,
                simulated_latency_ms: None,
            })
        }
    }

    #[test]
    fn in_flight_limit_is_enforced() {
        let gateway = Arc::new(Gateway::with_policy(Arc::new(Slow), fast_policy(1), 2));
        let handles: Vec<_> = (0..8)
            .map(|_| {
                let gateway = gateway.clone();
                thread::spawn(move || gateway.generate(&ChatRequest::new("s", "u")).unwrap())
            })
            .collect();
        for handle in handles {
            let result = handle.join().unwrap();
            assert!(result.truncated);
            assert!(result.latency_ms >= 20);
        }
        assert!(gateway.peak_in_flight() <= 2);
        assert_eq!(gateway.attempts(), 8);
    }

    #[test]
    fn translate_rejects_same_language() {
        let gateway = Gateway::new(Arc::new(Flaky::new(vec![])));
        let fr: LangCode = "fr".parse().unwrap();
        assert!(matches!(
            translate(&gateway, "x", fr, fr),
            Err(GatewayError::SameLanguage(_))
        ));
        assert_eq!(gateway.attempts(), 0);
    }
}
