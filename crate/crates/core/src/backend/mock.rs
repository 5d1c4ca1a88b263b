use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{
    secs_to_duration, AgentRole, Backend, BackendError, Clock, Completion, GenerationRequest,
    RawExchange, VirtualClock,
};
use crate::seeding::derive_seed;

/// The bundled mock script.
pub const DEFAULT_MOCK_SCRIPT: &str = include_str!("../../assets/mock-script.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoleResponse {
    pub text: String,
    pub latency_secs: f64,
    #[serde(default)]
    pub jitter_secs: f64,
}

/// Pins the response text and/or latency of one trial for one role.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptOverride {
    pub role: AgentRole,
    /// 1-based trial number.
    pub trial: usize,
    #[serde(default)]
    pub text: Option<String>,
    #[serde(default)]
    pub latency_secs: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptRoles {
    pub single: Option<RoleResponse>,
    pub diagnosis: Option<RoleResponse>,
    pub planner: Option<RoleResponse>,
    pub risk: Option<RoleResponse>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockScript {
    #[serde(default = "default_backend_id")]
    pub backend_id: String,
    #[serde(default)]
    pub min_latency_secs: f64,
    pub roles: ScriptRoles,
    #[serde(default)]
    pub overrides: Vec<ScriptOverride>,
}

fn default_backend_id() -> String {
    "mock".to_string()
}

impl MockScript {
    pub fn from_toml_str(source: &str) -> Result<Self, String> {
        let script: MockScript = toml::from_str(source).map_err(|e| e.message().to_string())?;
        script.validate()?;
        Ok(script)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, String> {
        let path = path.as_ref();
        let source = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read mock script {}: {e}", path.display()))?;
        Self::from_toml_str(&source)
    }

    pub fn bundled() -> Self {
        Self::from_toml_str(DEFAULT_MOCK_SCRIPT).expect("bundled mock script is valid")
    }

    /// A script where every role answers with `text` after `latency_secs`.
    pub fn uniform(text: &str, latency_secs: f64) -> Self {
        let response = RoleResponse {
            text: text.to_string(),
            latency_secs,
            jitter_secs: 0.0,
        };
        MockScript {
            backend_id: default_backend_id(),
            min_latency_secs: 0.0,
            roles: ScriptRoles {
                single: Some(response.clone()),
                diagnosis: Some(response.clone()),
                planner: Some(response.clone()),
                risk: Some(response),
            },
            overrides: Vec::new(),
        }
    }

    pub fn role(&self, role: AgentRole) -> Option<&RoleResponse> {
        match role {
            AgentRole::Single => self.roles.single.as_ref(),
            AgentRole::Diagnosis => self.roles.diagnosis.as_ref(),
            AgentRole::Planner => self.roles.planner.as_ref(),
            AgentRole::Risk => self.roles.risk.as_ref(),
        }
    }

    pub fn role_mut(&mut self, role: AgentRole) -> &mut Option<RoleResponse> {
        match role {
            AgentRole::Single => &mut self.roles.single,
            AgentRole::Diagnosis => &mut self.roles.diagnosis,
            AgentRole::Planner => &mut self.roles.planner,
            AgentRole::Risk => &mut self.roles.risk,
        }
    }

    fn validate(&self) -> Result<(), String> {
        if !(self.min_latency_secs >= 0.0) {
            return Err("min_latency_secs must be non-negative".into());
        }
        for role in AgentRole::ALL {
            if let Some(r) = self.role(role) {
                if !(r.latency_secs >= 0.0) || !(r.jitter_secs >= 0.0) {
                    return Err(format!("role `{role}`: latencies must be non-negative"));
                }
            }
        }
        for o in &self.overrides {
            if o.trial == 0 {
                return Err(format!(
                    "override for `{}`: trial numbers start at 1",
                    o.role
                ));
            }
            if matches!(o.latency_secs, Some(l) if !(l >= 0.0)) {
                return Err(format!("override for `{}`: negative latency", o.role));
            }
        }
        Ok(())
    }

    /// Response text and latency for a request.
    pub fn resolve(&self, request: &GenerationRequest) -> Result<(String, Duration), BackendError> {
        let base = self
            .role(request.role)
            .ok_or(BackendError::Unscripted(request.role))?;
        let pinned = request.trial.and_then(|tag| {
            self.overrides
                .iter()
                .find(|o| o.role == request.role && o.trial == tag.index + 1)
        });
        let text = pinned
            .and_then(|o| o.text.clone())
            .unwrap_or_else(|| base.text.clone());
        let latency_secs = match (pinned.and_then(|o| o.latency_secs), request.trial) {
            (Some(exact), _) => exact,
            (None, Some(tag)) if base.jitter_secs > 0.0 => {
                let seed =
                    derive_seed(&[&tag.seed.to_le_bytes(), request.role.as_str().as_bytes()]);
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let noise = Normal::new(0.0, base.jitter_secs)
                    .expect("jitter is finite and non-negative")
                    .sample(&mut rng);
                (base.latency_secs + noise).max(self.min_latency_secs)
            }
            (None, _) => base.latency_secs,
        };
        Ok((text, secs_to_duration(latency_secs)))
    }
}

/// Deterministic scripted backend running on a virtual clock.
pub struct MockBackend {
    script: MockScript,
    clock: Arc<VirtualClock>,
    log: Mutex<Vec<GenerationRequest>>,
}

impl MockBackend {
    pub fn new(script: MockScript) -> Self {
        MockBackend {
            script,
            clock: Arc::new(VirtualClock::new()),
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn script(&self) -> &MockScript {
        &self.script
    }

    pub fn virtual_clock(&self) -> &Arc<VirtualClock> {
        &self.clock
    }

    pub fn call_count(&self) -> usize {
        self.log.lock().expect("mock log poisoned").len()
    }

    /// Every request received so far, in order.
    pub fn requests(&self) -> Vec<GenerationRequest> {
        self.log.lock().expect("mock log poisoned").clone()
    }

    pub fn reset_log(&self) {
        self.log.lock().expect("mock log poisoned").clear();
    }
}

impl Backend for MockBackend {
    fn id(&self) -> &str {
        &self.script.backend_id
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
        self.log
            .lock()
            .expect("mock log poisoned")
            .push(request.clone());
        let (text, latency) = self.script.resolve(request)?;
        if latency > deadline {
            self.clock.advance(deadline);
            return Err(BackendError::Timeout {
                elapsed: deadline,
                deadline,
            });
        }
        self.clock.advance(latency);
        let raw = RawExchange {
            request: serde_json::to_string(request).unwrap_or_default(),
            response: text.clone(),
        };
        Ok(Completion {
            text,
            latency,
            backend_id: self.script.backend_id.clone(),
            truncated: false,
            raw: Some(raw),
        })
    }
}
