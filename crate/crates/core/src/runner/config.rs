use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::backend::{
    Backend, BackendError, MockBackend, MockScript, OllamaBackend, SharedRateLimiter,
    DEFAULT_BACKEND_URL, DEFAULT_MAX_TOKENS, DEFAULT_MODEL, DEFAULT_SEED, DEFAULT_TEMPERATURE,
};
use crate::pipelines::{Condition, PromptError, PromptSet};
use crate::scenario::{load_scenario, IncidentScenario, ScenarioError};
use crate::scoring::{GroundTruth, Scorer, ScoringConfig, ScoringError};

pub const DEFAULT_TRIALS: usize = 116;
pub const DEFAULT_OUTLIER_THRESHOLD: f64 = 3.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendMode {
    Live,
    Mock,
}

impl std::str::FromStr for BackendMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "live" => Ok(BackendMode::Live),
            "mock" => Ok(BackendMode::Mock),
            other => Err(format!("unknown backend `{other}` (expected live or mock)")),
        }
    }
}

/// Everything that determines a run. Relative paths are resolved against the
/// directory of the config file they were read from; `None` selects the
/// bundled asset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub trials_per_condition: usize,
    pub seed: u64,
    pub conditions: Vec<Condition>,
    pub deadline_secs: f64,
    pub rate_capacity: usize,
    pub rate_window_secs: f64,
    pub backend: BackendMode,
    pub backend_url: String,
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub outlier_threshold: f64,
    pub no_stopwords: bool,
    pub log_raw: bool,
    pub scenario: Option<PathBuf>,
    pub templates: Option<PathBuf>,
    pub scoring: Option<PathBuf>,
    pub mock_script: Option<PathBuf>,
    pub store: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            trials_per_condition: DEFAULT_TRIALS,
            seed: DEFAULT_SEED,
            conditions: Condition::ALL.to_vec(),
            deadline_secs: 120.0,
            rate_capacity: 10,
            rate_window_secs: 60.0,
            backend: BackendMode::Mock,
            backend_url: DEFAULT_BACKEND_URL.to_string(),
            model: DEFAULT_MODEL.to_string(),
            temperature: DEFAULT_TEMPERATURE,
            max_tokens: DEFAULT_MAX_TOKENS,
            outlier_threshold: DEFAULT_OUTLIER_THRESHOLD,
            no_stopwords: false,
            log_raw: false,
            scenario: None,
            templates: None,
            scoring: None,
            mock_script: None,
            store: PathBuf::from("trials.jsonl"),
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config field `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error("cannot read config {path}: {reason}")]
    Io { path: String, reason: String },
    #[error("malformed config {path}: {reason}")]
    Parse { path: String, reason: String },
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Scoring(#[from] ScoringError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("mock script: {0}")]
    MockScript(String),
    #[error("backend: {0}")]
    Backend(#[from] BackendError),
}

fn invalid(field: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field,
        reason: reason.into(),
    }
}

impl RunConfig {
    pub fn from_toml_str(source: &str) -> Result<Self, ConfigError> {
        let config: RunConfig = toml::from_str(source).map_err(|e| ConfigError::Parse {
            path: "<inline>".into(),
            reason: e.message().to_string(),
        })?;
        config.validate()?;
        Ok(config)
    }

    /// Reads a TOML config and resolves its relative paths against the
    /// file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        let mut config: RunConfig = toml::from_str(&text).map_err(|e| ConfigError::Parse {
            path: path.display().to_string(),
            reason: e.message().to_string(),
        })?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        config.resolve_paths(base);
        config.validate()?;
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [
            &mut self.scenario,
            &mut self.templates,
            &mut self.scoring,
            &mut self.mock_script,
        ]
        .into_iter()
        .flatten()
        {
            join(p);
        }
        join(&mut self.store);
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.trials_per_condition == 0 {
            return Err(invalid("trials_per_condition", "must be at least 1"));
        }
        if !(self.deadline_secs > 0.0 && self.deadline_secs.is_finite()) {
            return Err(invalid(
                "deadline_secs",
                "must be a positive number of seconds",
            ));
        }
        if self.rate_capacity == 0 {
            return Err(invalid("rate_capacity", "must be at least 1"));
        }
        if !(self.rate_window_secs > 0.0 && self.rate_window_secs.is_finite()) {
            return Err(invalid(
                "rate_window_secs",
                "must be a positive number of seconds",
            ));
        }
        if self.conditions.is_empty() {
            return Err(invalid("conditions", "select at least one of C1, C2, C3"));
        }
        for (i, c) in self.conditions.iter().enumerate() {
            if self.conditions[..i].contains(c) {
                return Err(invalid("conditions", format!("{c} listed twice")));
            }
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(invalid("temperature", "must lie in [0, 2]"));
        }
        if self.max_tokens == 0 {
            return Err(invalid("max_tokens", "must be positive"));
        }
        if !(self.outlier_threshold > 0.0) {
            return Err(invalid("outlier_threshold", "must be positive"));
        }
        if self.backend == BackendMode::Live && self.backend_url.trim().is_empty() {
            return Err(invalid("backend_url", "required for the live backend"));
        }
        Ok(())
    }

    pub fn deadline(&self) -> Duration {
        Duration::from_secs_f64(self.deadline_secs)
    }

    pub fn rate_window(&self) -> Duration {
        Duration::from_secs_f64(self.rate_window_secs)
    }
}

/// A validated config together with every asset it refers to.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: RunConfig,
    pub scenario: IncidentScenario,
    pub prompts: PromptSet,
    pub scorer: Scorer,
    pub ground_truth: GroundTruth,
    pub mock_script: Option<MockScript>,
    pub fingerprint: String,
}

/// Inputs to the fingerprint. The store path and condition selection are
/// left out: they choose where and which trials run, not how.
#[derive(Serialize)]
struct FingerprintInput<'a> {
    trials_per_condition: usize,
    seed: u64,
    deadline_secs: f64,
    rate_capacity: usize,
    rate_window_secs: f64,
    backend: BackendMode,
    backend_url: Option<&'a str>,
    model: &'a str,
    temperature: f64,
    max_tokens: u32,
    outlier_threshold: f64,
    scenario: &'a IncidentScenario,
    prompts: &'a PromptSet,
    scoring: &'a ScoringConfig,
    mock_script: Option<&'a MockScript>,
}

impl Experiment {
    pub fn new(config: RunConfig) -> Result<Self, ConfigError> {
        config.validate()?;
        let scenario = match &config.scenario {
            Some(path) => load_scenario(path)?,
            None => IncidentScenario::auth_regression(),
        };
        let prompts = match &config.templates {
            Some(dir) if !dir.is_dir() => {
                return Err(invalid(
                    "templates",
                    format!("{} is not a directory", dir.display()),
                ))
            }
            Some(dir) => PromptSet::load_dir(dir)?,
            None => PromptSet::default(),
        };
        let mut scoring = match &config.scoring {
            Some(path) => ScoringConfig::load(path)?,
            None => ScoringConfig::default(),
        };
        if config.no_stopwords {
            scoring = scoring.without_stopwords();
        }
        let scorer = Scorer::new(scoring)?;
        let ground_truth = scorer.ground_truth(&scenario)?;
        let mock_script = match (config.backend, &config.mock_script) {
            (BackendMode::Live, _) => None,
            (BackendMode::Mock, Some(path)) => {
                Some(MockScript::load(path).map_err(ConfigError::MockScript)?)
            }
            (BackendMode::Mock, None) => Some(MockScript::bundled()),
        };
        let fingerprint = fingerprint(
            &config,
            &scenario,
            &prompts,
            scorer.config(),
            mock_script.as_ref(),
        );
        Ok(Experiment {
            config,
            scenario,
            prompts,
            scorer,
            ground_truth,
            mock_script,
            fingerprint,
        })
    }

    /// Bundled assets under the default configuration.
    pub fn bundled() -> Self {
        Self::new(RunConfig::default()).expect("bundled assets are valid")
    }

    /// Builds the backend the config selects.
    pub fn backend(&self) -> Result<Arc<dyn Backend>, ConfigError> {
        Ok(match &self.mock_script {
            Some(script) => Arc::new(MockBackend::new(script.clone())),
            None => Arc::new(OllamaBackend::new(self.config.backend_url.clone())?),
        })
    }

    pub fn rate_limiter(&self) -> SharedRateLimiter {
        SharedRateLimiter::new(self.config.rate_capacity, self.config.rate_window())
    }
}

fn fingerprint(
    config: &RunConfig,
    scenario: &IncidentScenario,
    prompts: &PromptSet,
    scoring: &ScoringConfig,
    mock_script: Option<&MockScript>,
) -> String {
    let input = FingerprintInput {
        trials_per_condition: config.trials_per_condition,
        seed: config.seed,
        deadline_secs: config.deadline_secs,
        rate_capacity: config.rate_capacity,
        rate_window_secs: config.rate_window_secs,
        backend: config.backend,
        backend_url: (config.backend == BackendMode::Live).then_some(config.backend_url.as_str()),
        model: &config.model,
        temperature: config.temperature,
        max_tokens: config.max_tokens,
        outlier_threshold: config.outlier_threshold,
        scenario,
        prompts,
        scoring,
        mock_script,
    };
    let json = serde_json::to_vec(&input).expect("fingerprint input serializes");
    hex::encode(Sha256::digest(&json))
}
