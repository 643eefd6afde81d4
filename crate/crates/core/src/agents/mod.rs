//! Completion and embedding providers behind one contract.
//!
//! Every language-model call in the pipeline goes through [`complete`], which
//! validates the request, applies the retry policy and never mutates its input.
//! Offline runs use [`MockProvider`] (recorded fixtures keyed by request hash)
//! backed by [`OfflineAgent`], a rule-based stand-in that makes the whole
//! pipeline reproducible without network access.

mod embed;
mod http;
mod mock;
mod offline;
pub mod prompts;

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Condvar, Mutex};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use embed::{cosine, embed, EmbeddingProvider, EmbeddingVector, NgramHashEmbedder};
pub use http::{HttpProvider, HttpProviderConfig};
pub use mock::MockProvider;
pub use offline::OfflineAgent;
pub use prompts::{render_prompt, section, TemplateId, TEMPLATE_IDS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentRole {
    Extractor,
    Refiner,
    Judge,
    Adversary,
}

impl AgentRole {
    pub const ALL: [AgentRole; 4] = [
        AgentRole::Extractor,
        AgentRole::Refiner,
        AgentRole::Judge,
        AgentRole::Adversary,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            AgentRole::Extractor => "extractor",
            AgentRole::Refiner => "refiner",
            AgentRole::Judge => "judge",
            AgentRole::Adversary => "adversary",
        }
    }
}

impl fmt::Display for AgentRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Sampling temperature used for self-consistency prompt variants.
pub const VARIANT_TEMPERATURE: f64 = 0.7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentRequest {
    pub role: AgentRole,
    pub prompt: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub want_token_probs: bool,
}

impl AgentRequest {
    /// Greedy decoding with a generous token budget.
    pub fn new(role: AgentRole, prompt: impl Into<String>) -> Self {
        AgentRequest {
            role,
            prompt: prompt.into(),
            temperature: 0.0,
            max_tokens: 2048,
            want_token_probs: false,
        }
    }

    pub fn with_temperature(mut self, t: f64) -> Self {
        self.temperature = t;
        self
    }

    pub fn with_token_probs(mut self) -> Self {
        self.want_token_probs = true;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.prompt.trim().is_empty() {
            return Err(Error::MalformedRequest("empty prompt".into()));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(Error::MalformedRequest(format!(
                "temperature must be >= 0, got {}",
                self.temperature
            )));
        }
        if self.max_tokens == 0 {
            return Err(Error::MalformedRequest("max_tokens must be positive".into()));
        }
        Ok(())
    }

    /// Stable key over (role, prompt); names mock fixture files.
    pub fn fixture_key(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.role.as_str().as_bytes());
        h.update(b"\n");
        h.update(self.prompt.as_bytes());
        let digest = h.finalize();
        digest[..16].iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenProb {
    pub token: String,
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentResponse {
    pub text: String,
    pub token_probs: Option<Vec<TokenProb>>,
    pub provider_id: String,
}

impl AgentResponse {
    pub fn text(provider_id: &str, text: impl Into<String>) -> Self {
        AgentResponse {
            text: text.into(),
            token_probs: None,
            provider_id: provider_id.to_string(),
        }
    }
}

/// Failure reported by a provider for a single attempt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProviderError {
    /// Timeouts, connection resets, rate limits, 5xx. Retried.
    Transient(String),
    /// The provider could not accept the request as formed. Never retried.
    Malformed(String),
    /// The model declined to answer.
    Refusal(String),
}

pub trait CompletionProvider: Send + Sync {
    fn id(&self) -> &str;
    fn complete_once(&self, request: &AgentRequest) -> std::result::Result<AgentResponse, ProviderError>;
}

impl<P: CompletionProvider + ?Sized> CompletionProvider for Arc<P> {
    fn id(&self) -> &str {
        (**self).id()
    }

    fn complete_once(&self, request: &AgentRequest) -> std::result::Result<AgentResponse, ProviderError> {
        (**self).complete_once(request)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 3,
            base_delay: Duration::from_millis(250),
        }
    }
}

impl RetryPolicy {
    pub fn no_delay(max_retries: u32) -> Self {
        RetryPolicy {
            max_retries,
            base_delay: Duration::ZERO,
        }
    }

    fn delay(&self, attempt: u32) -> Duration {
        self.base_delay.saturating_mul(1u32 << attempt.min(16))
    }
}

/// Runs a request against a provider with retries on transient failures.
pub fn complete(
    request: &AgentRequest,
    provider: &dyn CompletionProvider,
    retry: &RetryPolicy,
) -> Result<AgentResponse> {
    request.validate()?;
    let mut attempt = 0;
    loop {
        match provider.complete_once(request) {
            Ok(resp) => {
                if let Some(probs) = &resp.token_probs {
                    if let Some(bad) = probs.iter().find(|t| !(t.prob > 0.0 && t.prob <= 1.0)) {
                        return Err(Error::Content {
                            provider: provider.id().to_string(),
                            message: format!("token probability {} out of (0, 1]", bad.prob),
                        });
                    }
                }
                return Ok(resp);
            }
            Err(ProviderError::Transient(msg)) => {
                if attempt >= retry.max_retries {
                    return Err(Error::Transport {
                        attempts: attempt + 1,
                        message: msg,
                    });
                }
                log::debug!("{}: transient failure ({msg}), retrying", provider.id());
                thread::sleep(retry.delay(attempt));
                attempt += 1;
            }
            Err(ProviderError::Malformed(msg)) => return Err(Error::MalformedRequest(msg)),
            Err(ProviderError::Refusal(msg)) => {
                return Err(Error::Content {
                    provider: provider.id().to_string(),
                    message: msg,
                })
            }
        }
    }
}

/// Counting semaphore bounding concurrent remote calls.
#[derive(Debug)]
pub struct InflightLimit {
    max: usize,
    current: Mutex<usize>,
    freed: Condvar,
}

impl InflightLimit {
    pub fn new(max: usize) -> Self {
        InflightLimit {
            max: max.max(1),
            current: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    pub fn acquire(&self) -> InflightPermit<'_> {
        let mut n = self.current.lock().unwrap_or_else(|e| e.into_inner());
        while *n >= self.max {
            n = self.freed.wait(n).unwrap_or_else(|e| e.into_inner());
        }
        *n += 1;
        InflightPermit { limit: self }
    }

    pub fn in_flight(&self) -> usize {
        *self.current.lock().unwrap_or_else(|e| e.into_inner())
    }
}

pub struct InflightPermit<'a> {
    limit: &'a InflightLimit,
}

impl Drop for InflightPermit<'_> {
    fn drop(&mut self) {
        let mut n = self.limit.current.lock().unwrap_or_else(|e| e.into_inner());
        *n -= 1;
        self.limit.freed.notify_one();
    }
}

/// Wraps a provider so at most `limit` calls are in flight at once.
pub struct Throttled<P> {
    inner: P,
    limit: Arc<InflightLimit>,
}

impl<P: CompletionProvider> Throttled<P> {
    pub fn new(inner: P, limit: Arc<InflightLimit>) -> Self {
        Throttled { inner, limit }
    }
}

impl<P: CompletionProvider> CompletionProvider for Throttled<P> {
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn complete_once(&self, request: &AgentRequest) -> std::result::Result<AgentResponse, ProviderError> {
        let _permit = self.limit.acquire();
        self.inner.complete_once(request)
    }
}

/// Providers by id.
#[derive(Default, Clone)]
pub struct ProviderRegistry {
    providers: HashMap<String, Arc<dyn CompletionProvider>>,
}

impl ProviderRegistry {
    pub fn register(&mut self, provider: Arc<dyn CompletionProvider>) {
        self.providers.insert(provider.id().to_string(), provider);
    }

    pub fn get(&self, id: &str) -> Result<Arc<dyn CompletionProvider>> {
        self.providers
            .get(id)
            .cloned()
            .ok_or_else(|| Error::Config(format!("unknown provider id {id:?}")))
    }
}

/// The provider assigned to each agent role for a run.
#[derive(Clone)]
pub struct AgentSet {
    pub extractor: Arc<dyn CompletionProvider>,
    pub refiner: Arc<dyn CompletionProvider>,
    pub judge: Arc<dyn CompletionProvider>,
    pub adversary: Arc<dyn CompletionProvider>,
    pub retry: RetryPolicy,
}

impl AgentSet {
    /// The same provider for every role.
    pub fn uniform(provider: Arc<dyn CompletionProvider>, retry: RetryPolicy) -> Self {
        AgentSet {
            extractor: provider.clone(),
            refiner: provider.clone(),
            judge: provider.clone(),
            adversary: provider,
            retry,
        }
    }

    pub fn for_role(&self, role: AgentRole) -> &dyn CompletionProvider {
        match role {
            AgentRole::Extractor => self.extractor.as_ref(),
            AgentRole::Refiner => self.refiner.as_ref(),
            AgentRole::Judge => self.judge.as_ref(),
            AgentRole::Adversary => self.adversary.as_ref(),
        }
    }

    pub fn call(&self, request: &AgentRequest) -> Result<AgentResponse> {
        complete(request, self.for_role(request.role), &self.retry)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    struct Flaky {
        failures_left: AtomicUsize,
        calls: AtomicUsize,
        kind: fn(String) -> ProviderError,
    }

    impl CompletionProvider for Flaky {
        fn id(&self) -> &str {
            "flaky"
        }

        fn complete_once(&self, _r: &AgentRequest) -> std::result::Result<AgentResponse, ProviderError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            let left = self.failures_left.load(Ordering::SeqCst);
            if left > 0 {
                self.failures_left.store(left - 1, Ordering::SeqCst);
                return Err((self.kind)("timeout".into()));
            }
            Ok(AgentResponse::text("flaky", "ok"))
        }
    }

    fn flaky(failures: usize, kind: fn(String) -> ProviderError) -> Flaky {
        Flaky {
            failures_left: AtomicUsize::new(failures),
            calls: AtomicUsize::new(0),
            kind,
        }
    }

    #[test]
    fn retries_transient_failures() {
        let p = flaky(2, ProviderError::Transient);
        let req = AgentRequest::new(AgentRole::Extractor, "hi");
        let resp = complete(&req, &p, &RetryPolicy::no_delay(3)).unwrap();
        assert_eq!(resp.text, "ok");
        assert_eq!(p.calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn exhausted_retries_is_transport_error() {
        let p = flaky(10, ProviderError::Transient);
        let req = AgentRequest::new(AgentRole::Judge, "hi");
        let err = complete(&req, &p, &RetryPolicy::no_delay(2)).unwrap_err();
        assert!(matches!(err, Error::Transport { attempts: 3, .. }));
    }

    #[test]
    fn malformed_is_not_retried() {
        let p = flaky(1, ProviderError::Malformed);
        let req = AgentRequest::new(AgentRole::Judge, "hi");
        assert!(matches!(
            complete(&req, &p, &RetryPolicy::no_delay(5)),
            Err(Error::MalformedRequest(_))
        ));
        assert_eq!(p.calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn refusal_carries_message() {
        let p = flaky(1, ProviderError::Refusal);
        let req = AgentRequest::new(AgentRole::Judge, "hi");
        match complete(&req, &p, &RetryPolicy::no_delay(5)) {
            Err(Error::Content { provider, message }) => {
                assert_eq!(provider, "flaky");
                assert_eq!(message, "timeout");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn invalid_requests_rejected_before_call() {
        let p = flaky(0, ProviderError::Transient);
        let req = AgentRequest::new(AgentRole::Judge, "  ");
        assert!(complete(&req, &p, &RetryPolicy::default()).is_err());
        let req = AgentRequest::new(AgentRole::Judge, "x").with_temperature(-1.0);
        assert!(complete(&req, &p, &RetryPolicy::default()).is_err());
        assert_eq!(p.calls.load(Ordering::SeqCst), 0);
    }

    #[test]
    fn unknown_provider_is_config_error() {
        let reg = ProviderRegistry::default();
        assert!(matches!(reg.get("nope"), Err(Error::Config(_))));
    }

    #[test]
    fn fixture_key_depends_on_role_and_prompt() {
        let a = AgentRequest::new(AgentRole::Judge, "x");
        let b = AgentRequest::new(AgentRole::Adversary, "x");
        let c = AgentRequest::new(AgentRole::Judge, "x").with_temperature(0.7);
        assert_ne!(a.fixture_key(), b.fixture_key());
        assert_eq!(a.fixture_key(), c.fixture_key());
        assert_eq!(a.fixture_key().len(), 32);
    }

    #[test]
    fn inflight_limit_bounds_concurrency() {
        struct Slow {
            limit: Arc<InflightLimit>,
            peak: AtomicUsize,
        }
        impl CompletionProvider for Slow {
            fn id(&self) -> &str {
                "slow"
            }
            fn complete_once(&self, _r: &AgentRequest) -> std::result::Result<AgentResponse, ProviderError> {
                self.peak.fetch_max(self.limit.in_flight(), Ordering::SeqCst);
                thread::sleep(Duration::from_millis(5));
                Ok(AgentResponse::text("slow", "ok"))
            }
        }
        let limit = Arc::new(InflightLimit::new(2));
        let p = Arc::new(Throttled::new(
            Slow {
                limit: limit.clone(),
                peak: AtomicUsize::new(0),
            },
            limit,
        ));
        thread::scope(|s| {
            for _ in 0..8 {
                let p = p.clone();
                s.spawn(move || {
                    let req = AgentRequest::new(AgentRole::Judge, "x");
                    complete(&req, p.as_ref(), &RetryPolicy::default()).unwrap();
                });
            }
        });
        let peak = p.inner.peak.load(Ordering::SeqCst);
        assert!(peak <= 2 && peak >= 1, "peak {peak}");
    }
}
