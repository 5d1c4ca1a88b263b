use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{
    Backend, BackendError, Clock, Completion, GenerationRequest, RawExchange, SystemClock,
};

/// Environment variable consulted for the backend base URL.
pub const BACKEND_URL_ENV: &str = "INCIDENT_EVAL_BACKEND_URL";
pub const DEFAULT_BACKEND_URL: &str = "http://localhost:11434";

#[derive(Debug, Serialize)]
struct GenerateBody<'a> {
    model: &'a str,
    prompt: &'a str,
    stream: bool,
    options: GenerateOptions,
}

#[derive(Debug, Serialize)]
struct GenerateOptions {
    temperature: f64,
    seed: u64,
    num_predict: u32,
}

#[derive(Debug, Deserialize)]
struct GenerateReply {
    response: String,
    #[serde(default)]
    done_reason: Option<String>,
}

/// Client for an Ollama-compatible `/api/generate` endpoint (streaming off).
pub struct OllamaBackend {
    base_url: String,
    client: reqwest::blocking::Client,
    clock: Arc<SystemClock>,
    id: String,
}

impl OllamaBackend {
    pub fn new(base_url: impl Into<String>) -> Result<Self, BackendError> {
        let base_url = base_url.into().trim_end_matches('/').to_string();
        let client = reqwest::blocking::Client::builder()
            .build()
            .map_err(|e| BackendError::Connection(e.to_string()))?;
        Ok(OllamaBackend {
            id: format!("ollama@{base_url}"),
            base_url,
            client,
            clock: Arc::new(SystemClock::new()),
        })
    }

    /// Base URL from [`BACKEND_URL_ENV`], falling back to localhost.
    pub fn from_env() -> Result<Self, BackendError> {
        let url = std::env::var(BACKEND_URL_ENV).unwrap_or_else(|_| DEFAULT_BACKEND_URL.into());
        Self::new(url)
    }

    pub fn endpoint(&self) -> String {
        format!("{}/api/generate", self.base_url)
    }
}

impl Backend for OllamaBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn clock(&self) -> Arc<dyn Clock> {
        self.clock.clone()
    }

    fn generate(
        &self,
        request: &GenerationRequest,
        deadline: Duration,
    ) -> Result<Completion, BackendError> {
        request.validate()?;
        if deadline.is_zero() {
            return Err(BackendError::InvalidRequest(
                "deadline must be positive".into(),
            ));
        }
        let body = GenerateBody {
            model: &request.model_name,
            prompt: &request.prompt,
            stream: false,
            options: GenerateOptions {
                temperature: request.temperature,
                seed: request.seed,
                num_predict: request.max_tokens,
            },
        };
        let request_body =
            serde_json::to_string(&body).map_err(|e| BackendError::Protocol(e.to_string()))?;

        let started = Instant::now();
        let result = self
            .client
            .post(self.endpoint())
            .header(reqwest::header::CONTENT_TYPE, "application/json")
            .body(request_body.clone())
            .timeout(deadline)
            .send()
            .and_then(|resp| {
                let status = resp.status();
                resp.text().map(|text| (status, text))
            });
        let latency = started.elapsed();

        let (status, text) = result.map_err(|e| {
            if e.is_timeout() {
                BackendError::Timeout {
                    elapsed: latency,
                    deadline,
                }
            } else {
                BackendError::Connection(e.to_string())
            }
        })?;
        if !status.is_success() {
            return Err(BackendError::Api {
                status: status.as_u16(),
                body: text,
            });
        }
        let reply: GenerateReply =
            serde_json::from_str(&text).map_err(|e| BackendError::Protocol(e.to_string()))?;
        Ok(Completion {
            truncated: reply.done_reason.as_deref() == Some("length"),
            text: reply.response,
            latency,
            backend_id: self.id.clone(),
            raw: Some(RawExchange {
                request: request_body,
                response: text,
            }),
        })
    }
}
