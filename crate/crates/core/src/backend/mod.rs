//! Text-generation backends.
//!
//! Every backend answers a [`GenerationRequest`] with a [`Completion`] or a
//! [`BackendError`]. Two implementations ship with the crate: [`OllamaBackend`]
//! speaks the Ollama `/api/generate` wire format over HTTP, and
//! [`MockBackend`] replays a scripted set of role-keyed responses on a virtual
//! clock so whole evaluations run offline in milliseconds.

mod clock;
mod mock;
mod ollama;
mod rate_limit;

use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use clock::{Clock, SystemClock, VirtualClock};
pub use mock::{MockBackend, MockScript, RoleResponse, ScriptOverride, DEFAULT_MOCK_SCRIPT};
pub use ollama::{OllamaBackend, BACKEND_URL_ENV, DEFAULT_BACKEND_URL};
pub use rate_limit::{Permit, RateLimiter, SharedRateLimiter};

pub const DEFAULT_TEMPERATURE: f64 = 0.7;
pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_MAX_TOKENS: u32 = 512;
pub const DEFAULT_MODEL: &str = "tinyllama";
pub const DEFAULT_DEADLINE: Duration = Duration::from_secs(120);

/// The specialised prompt an inference call was made with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentRole {
    Single,
    Diagnosis,
    Planner,
    Risk,
}

impl AgentRole {
    pub const ALL: [AgentRole; 4] = [
        AgentRole::Single,
        AgentRole::Diagnosis,
        AgentRole::Planner,
        AgentRole::Risk,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AgentRole::Single => "single",
            AgentRole::Diagnosis => "diagnosis",
            AgentRole::Planner => "planner",
            AgentRole::Risk => "risk",
        }
    }
}

impl std::fmt::Display for AgentRole {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Identifies the trial a request belongs to; scripted backends key on it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialTag {
    /// Zero-based trial index within its condition.
    pub index: usize,
    /// Seed derived for this trial by the runner.
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub prompt: String,
    pub temperature: f64,
    pub seed: u64,
    pub max_tokens: u32,
    pub model_name: String,
    pub role: AgentRole,
    pub trial: Option<TrialTag>,
}

impl GenerationRequest {
    pub fn new(role: AgentRole, prompt: impl Into<String>) -> Self {
        GenerationRequest {
            prompt: prompt.into(),
            temperature: DEFAULT_TEMPERATURE,
            seed: DEFAULT_SEED,
            max_tokens: DEFAULT_MAX_TOKENS,
            model_name: DEFAULT_MODEL.to_string(),
            role,
            trial: None,
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.prompt.trim().is_empty() {
            return Err(BackendError::InvalidRequest("prompt is empty".into()));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(BackendError::InvalidRequest(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        if self.max_tokens == 0 {
            return Err(BackendError::InvalidRequest(
                "max_tokens must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Verbatim request and response bodies of one backend exchange.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawExchange {
    pub request: String,
    pub response: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    pub latency: Duration,
    pub backend_id: String,
    pub truncated: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw: Option<RawExchange>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BackendError {
    #[error("deadline of {deadline:?} exceeded after {elapsed:?}")]
    Timeout {
        elapsed: Duration,
        deadline: Duration,
    },
    #[error("backend unreachable: {0}")]
    Connection(String),
    #[error("backend returned status {status}: {body}")]
    Api { status: u16, body: String },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("malformed backend response: {0}")]
    Protocol(String),
    #[error("mock script has no response for role `{0}`")]
    Unscripted(AgentRole),
}

impl BackendError {
    pub fn is_timeout(&self) -> bool {
        matches!(self, BackendError::Timeout { .. })
    }

    /// Time consumed by the failed call, when known.
    pub fn elapsed(&self) -> Option<Duration> {
        match self {
            BackendError::Timeout { elapsed, .. } => Some(*elapsed),
            _ => None,
        }
    }
}

pub trait Backend: Send + Sync {
    fn id(&self) -> &str;

    /// The clock latencies are measured against. Scripted backends advance a
    /// virtual clock instead of sleeping.
    fn clock(&self) -> Arc<dyn Clock>;

    /// Issues one inference call. The caller must already hold a rate-limit
    /// permit.
    fn generate(
        &self,
        request: &GenerationRequest,
        deadline: Duration,
    ) -> Result<Completion, BackendError>;
}

impl<B: Backend + ?Sized> Backend for Arc<B> {
    fn id(&self) -> &str {
        (**self).id()
    }

    fn clock(&self) -> Arc<dyn Clock> {
        (**self).clock()
    }

    fn generate(
        &self,
        request: &GenerationRequest,
        deadline: Duration,
    ) -> Result<Completion, BackendError> {
        (**self).generate(request, deadline)
    }
}

/// Rounds a duration in seconds to whole microseconds.
pub fn secs_to_duration(secs: f64) -> Duration {
    if !secs.is_finite() || secs <= 0.0 {
        return Duration::ZERO;
    }
    Duration::from_micros((secs * 1e6).round() as u64)
}
