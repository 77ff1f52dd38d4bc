//! Chat-completion backends: live HTTP, scripted oracles, and a record/replay
//! cache that wraps either.

mod budget;
mod cache;
mod live;
mod scripted;
mod types;

use std::sync::Arc;

use thiserror::Error;

pub use budget::{Budget, BudgetUsage};
pub use cache::{CacheMode, CacheRecord, CachingProvider, ReplayStore};
pub use live::{LiveConfig, LiveProvider, API_BASE_ENV, API_KEY_ENV, DEFAULT_API_BASE};
pub use scripted::{parse_scenario_tag, scenario_tag, OracleRegistry, ScenarioOracle, ScriptedProvider};
pub use types::{CacheKey, ChatRequest, ChatResponse, FinishReason, LlmSettings, Message, Role, Usage};

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("http status {status}: {body}")]
    Http { status: u16, body: String },
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("budget exceeded: {0}")]
    BudgetExceeded(String),
    #[error("no recorded response for request {0}")]
    CacheMiss(CacheKey),
    #[error("no oracle registered for scenario tag `{0}`")]
    UnknownScenarioTag(String),
    #[error("replay store error: {0}")]
    Store(String),
}

impl ProviderError {
    /// Errors that abort a run rather than being absorbed as a per-agent
    /// failure.
    pub fn is_fatal(&self) -> bool {
        matches!(
            self,
            ProviderError::Auth(_)
                | ProviderError::BudgetExceeded(_)
                | ProviderError::CacheMiss(_)
                | ProviderError::UnknownScenarioTag(_)
                | ProviderError::InvalidRequest(_)
                | ProviderError::Store(_)
        )
    }
}

/// A chat-completion backend. Implementations are immutable after
/// construction apart from internal counters and are shared across threads.
pub trait Provider: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, ProviderError>;
}

pub type ProviderHandle = Arc<dyn Provider>;

impl<P: Provider + ?Sized> Provider for Arc<P> {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, ProviderError> {
        (**self).complete(request)
    }
}

/// Validates the request and forwards it to the backend.
pub fn complete(request: &ChatRequest, backend: &dyn Provider) -> Result<ChatResponse, ProviderError> {
    request.validate()?;
    backend.complete(request)
}

/// Canonical digest of a request.
pub fn cache_key(request: &ChatRequest) -> CacheKey {
    CacheKey::of(request)
}
