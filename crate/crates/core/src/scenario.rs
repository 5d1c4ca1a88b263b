//! Incident scenarios and the tokenizer used for ground-truth overlap.
//!
//! A scenario is a small TOML document (bundled example:
//! `assets/auth-regression.scenario`). The telemetry summary handed to custom
//! prompt templates is rendered once, at load time, with a fixed field order.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The bundled authentication-service regression scenario.
pub const AUTH_REGRESSION_SOURCE: &str = include_str!("../assets/auth-regression.scenario");

/// Stopwords dropped before computing token overlap.
pub const DEFAULT_STOPWORDS: &[&str] = &[
    "to", "the", "a", "an", "and", "or", "of", "for", "with", "using", "in", "on", "at", "is",
];

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("scenario file not found: {0}")]
    FileNotFound(String),
    #[error("failed to read scenario file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed scenario: {0}")]
    Parse(String),
    #[error("invalid scenario field `{field}`: {reason}")]
    Validation { field: &'static str, reason: String },
}

/// On-disk shape of a scenario file.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    id: String,
    #[serde(default)]
    title: String,
    service_name: String,
    service_version: String,
    previous_stable_version: String,
    #[serde(default)]
    previous_stable_age: String,
    error_rate_pct: f64,
    db_connection_pct: f64,
    #[serde(default)]
    p95_degradation_factor: Option<f64>,
    #[serde(default)]
    affected_endpoints: Vec<String>,
    deployment_timestamp: String,
    ground_truth: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncidentScenario {
    pub id: String,
    pub title: String,
    pub service_name: String,
    pub service_version: String,
    pub previous_stable_version: String,
    pub previous_stable_age: String,
    pub error_rate_pct: f64,
    pub db_connection_pct: f64,
    pub p95_degradation_factor: Option<f64>,
    pub affected_endpoints: Vec<String>,
    pub deployment_timestamp: String,
    pub ground_truth: String,
    pub telemetry_summary: String,
}

impl IncidentScenario {
    /// Parses and validates a scenario document.
    pub fn from_toml_str(source: &str) -> Result<Self, ScenarioError> {
        let file: ScenarioFile =
            toml::from_str(source).map_err(|e| ScenarioError::Parse(e.message().to_string()))?;
        let mut scenario = IncidentScenario {
            id: file.id,
            title: file.title,
            service_name: file.service_name,
            service_version: file.service_version,
            previous_stable_version: file.previous_stable_version,
            previous_stable_age: file.previous_stable_age,
            error_rate_pct: file.error_rate_pct,
            db_connection_pct: file.db_connection_pct,
            p95_degradation_factor: file.p95_degradation_factor,
            affected_endpoints: file.affected_endpoints,
            deployment_timestamp: file.deployment_timestamp,
            ground_truth: file.ground_truth,
            telemetry_summary: String::new(),
        };
        scenario.validate()?;
        scenario.telemetry_summary = scenario.render_telemetry();
        Ok(scenario)
    }

    /// The bundled scenario.
    pub fn auth_regression() -> Self {
        Self::from_toml_str(AUTH_REGRESSION_SOURCE).expect("bundled scenario is valid")
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let invalid = |field, reason: &str| {
            Err(ScenarioError::Validation {
                field,
                reason: reason.to_string(),
            })
        };
        if self.id.trim().is_empty() {
            return invalid("id", "must not be empty");
        }
        if self.ground_truth.trim().is_empty() {
            return invalid("ground_truth", "must not be empty");
        }
        if !(0.0..=100.0).contains(&self.error_rate_pct) {
            return invalid("error_rate_pct", "must lie in [0, 100]");
        }
        if !(0.0..=100.0).contains(&self.db_connection_pct) {
            return invalid("db_connection_pct", "must lie in [0, 100]");
        }
        if self.service_version == self.previous_stable_version {
            return invalid(
                "previous_stable_version",
                "must differ from service_version",
            );
        }
        Ok(())
    }

    fn render_telemetry(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "Service: {} {}",
            self.service_name, self.service_version
        );
        let _ = writeln!(out, "Error rate: {}", format_number(self.error_rate_pct));
        let _ = writeln!(out, "Database: {}", format_number(self.db_connection_pct));
        if !self.affected_endpoints.is_empty() {
            let _ = writeln!(
                out,
                "Affected endpoints: {}",
                self.affected_endpoints.join(", ")
            );
        }
        if let Some(factor) = self.p95_degradation_factor {
            let _ = writeln!(out, "p95 latency degradation: {}x", format_number(factor));
        }
        let _ = writeln!(
            out,
            "Recent deployment: {} at {}",
            self.service_version, self.deployment_timestamp
        );
        let _ = write!(
            out,
            "Previous stable version: {}",
            self.previous_stable_version
        );
        out
    }

    /// Named values available to prompt templates.
    pub fn fields(&self) -> Vec<(&'static str, String)> {
        vec![
            ("id", self.id.clone()),
            ("title", self.title.clone()),
            ("service_name", self.service_name.clone()),
            ("service_version", self.service_version.clone()),
            (
                "previous_stable_version",
                self.previous_stable_version.clone(),
            ),
            ("previous_stable_age", self.previous_stable_age.clone()),
            ("error_rate_pct", format_number(self.error_rate_pct)),
            ("db_connection_pct", format_number(self.db_connection_pct)),
            ("affected_endpoints", self.affected_endpoints.join(", ")),
            ("deployment_timestamp", self.deployment_timestamp.clone()),
            ("telemetry_summary", self.telemetry_summary.clone()),
        ]
    }
}

/// Loads and validates a scenario file.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<IncidentScenario, ScenarioError> {
    let path = path.as_ref();
    let source = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => ScenarioError::FileNotFound(path.display().to_string()),
        _ => ScenarioError::Io {
            path: path.display().to_string(),
            source: e,
        },
    })?;
    IncidentScenario::from_toml_str(&source)
}

/// Integral values print without a fractional part ("45", not "45.0").
pub(crate) fn format_number(value: f64) -> String {
    if value.fract() == 0.0 && value.abs() < 1e15 {
        format!("{}", value as i64)
    } else {
        format!("{value}")
    }
}

/// A deduplicated set of lowercase, whitespace-free tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSet {
    pub tokens: BTreeSet<String>,
    pub source: String,
}

impl TokenSet {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.tokens.contains(token)
    }

    pub fn intersection_count(&self, other: &TokenSet) -> usize {
        self.tokens.intersection(&other.tokens).count()
    }
}

/// Lowercases, splits on whitespace, drops stopwords and deduplicates.
///
/// Stopwords are compared after lowercasing, so the caller's list may use any
/// case.
pub fn tokenize<S: AsRef<str>>(text: &str, stopwords: &[S]) -> TokenSet {
    let stop: BTreeSet<String> = stopwords
        .iter()
        .map(|s| s.as_ref().to_lowercase())
        .collect();
    let tokens = text
        .split_whitespace()
        .map(str::to_lowercase)
        // Some characters lowercase into sequences containing whitespace.
        .flat_map(|t| t.split_whitespace().map(str::to_string).collect::<Vec<_>>())
        .filter(|t| !stop.contains(t))
        .collect();
    TokenSet {
        tokens,
        source: text.to_string(),
    }
}

pub fn default_stopwords() -> Vec<String> {
    DEFAULT_STOPWORDS.iter().map(|s| s.to_string()).collect()
}
