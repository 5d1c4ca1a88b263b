use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::AgentRole;
use crate::scenario::IncidentScenario;

pub const SINGLE_TEMPLATE: &str = include_str!("../../assets/templates/single.txt");
pub const DIAGNOSIS_TEMPLATE: &str = include_str!("../../assets/templates/diagnosis.txt");
pub const PLANNER_TEMPLATE: &str = include_str!("../../assets/templates/planner.txt");
pub const RISK_TEMPLATE: &str = include_str!("../../assets/templates/risk.txt");

/// Placeholder carrying the previous agent's output.
pub const UPSTREAM: &str = "upstream";

const SCENARIO_PLACEHOLDERS: &[&str] = &[
    "id",
    "title",
    "service_name",
    "service_version",
    "previous_stable_version",
    "previous_stable_age",
    "error_rate_pct",
    "db_connection_pct",
    "affected_endpoints",
    "deployment_timestamp",
    "telemetry_summary",
];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PromptError {
    #[error("template for `{role}` references unbound placeholder `{{{name}}}`")]
    UnboundPlaceholder { role: AgentRole, name: String },
    #[error("cannot read template {path}: {reason}")]
    Io { path: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub role: AgentRole,
    pub template_text: String,
}

impl PromptTemplate {
    pub fn new(role: AgentRole, template_text: impl Into<String>) -> Self {
        PromptTemplate {
            role,
            template_text: template_text.into(),
        }
    }

    pub fn bundled(role: AgentRole) -> Self {
        let text = match role {
            AgentRole::Single => SINGLE_TEMPLATE,
            AgentRole::Diagnosis => DIAGNOSIS_TEMPLATE,
            AgentRole::Planner => PLANNER_TEMPLATE,
            AgentRole::Risk => RISK_TEMPLATE,
        };
        Self::new(role, text)
    }

    /// Placeholder names in order of appearance (with repeats).
    pub fn placeholders(&self) -> Vec<&str> {
        segments(&self.template_text)
            .filter_map(|s| match s {
                Segment::Placeholder(name) => Some(name),
                Segment::Literal(_) => None,
            })
            .collect()
    }

    /// Fails if the template names a placeholder no scenario can bind.
    pub fn check_placeholders(&self) -> Result<(), PromptError> {
        for name in self.placeholders() {
            if name != UPSTREAM && !SCENARIO_PLACEHOLDERS.contains(&name) {
                return Err(PromptError::UnboundPlaceholder {
                    role: self.role,
                    name: name.to_string(),
                });
            }
        }
        Ok(())
    }
}

enum Segment<'a> {
    Literal(&'a str),
    Placeholder(&'a str),
}

/// Splits template text into literals and `{identifier}` placeholders. Braces
/// that do not enclose an identifier stay literal.
fn segments(text: &str) -> impl Iterator<Item = Segment<'_>> {
    let mut rest = text;
    std::iter::from_fn(move || {
        if rest.is_empty() {
            return None;
        }
        let mut search_from = 0;
        loop {
            let Some(open) = rest[search_from..].find('{').map(|i| i + search_from) else {
                let lit = rest;
                rest = "";
                return Some(Segment::Literal(lit));
            };
            let after = &rest[open + 1..];
            let ident_len = after
                .bytes()
                .take_while(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || *b == b'_')
                .count();
            if ident_len > 0 && after.as_bytes().get(ident_len) == Some(&b'}') {
                if open > 0 {
                    let lit = &rest[..open];
                    rest = &rest[open..];
                    return Some(Segment::Literal(lit));
                }
                let name = &after[..ident_len];
                rest = &after[ident_len + 1..];
                return Some(Segment::Placeholder(name));
            }
            search_from = open + 1;
        }
    })
}

/// Substitutes scenario fields and the upstream agent output into a template.
///
/// `upstream` must be non-empty whenever the template references
/// `{upstream}`.
pub fn render_prompt(
    template: &PromptTemplate,
    scenario: &IncidentScenario,
    upstream: Option<&str>,
) -> Result<String, PromptError> {
    let fields = scenario.fields();
    let mut out = String::with_capacity(template.template_text.len() + 256);
    for segment in segments(&template.template_text) {
        match segment {
            Segment::Literal(lit) => out.push_str(lit),
            Segment::Placeholder(UPSTREAM) => match upstream {
                Some(text) if !text.trim().is_empty() => out.push_str(text.trim()),
                _ => {
                    return Err(PromptError::UnboundPlaceholder {
                        role: template.role,
                        name: UPSTREAM.to_string(),
                    })
                }
            },
            Segment::Placeholder(name) => {
                let value = fields
                    .iter()
                    .find(|(k, _)| *k == name)
                    .map(|(_, v)| v.as_str())
                    .ok_or_else(|| PromptError::UnboundPlaceholder {
                        role: template.role,
                        name: name.to_string(),
                    })?;
                out.push_str(value);
            }
        }
    }
    Ok(out)
}

/// The four role templates used by the pipelines.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSet {
    pub single: PromptTemplate,
    pub diagnosis: PromptTemplate,
    pub planner: PromptTemplate,
    pub risk: PromptTemplate,
}

impl Default for PromptSet {
    fn default() -> Self {
        PromptSet {
            single: PromptTemplate::bundled(AgentRole::Single),
            diagnosis: PromptTemplate::bundled(AgentRole::Diagnosis),
            planner: PromptTemplate::bundled(AgentRole::Planner),
            risk: PromptTemplate::bundled(AgentRole::Risk),
        }
    }
}

impl PromptSet {
    /// Reads `single.txt`, `diagnosis.txt`, `planner.txt` and `risk.txt` from
    /// `dir`; missing files fall back to the bundled text.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self, PromptError> {
        let dir = dir.as_ref();
        let load = |role: AgentRole| -> Result<PromptTemplate, PromptError> {
            let path = dir.join(format!("{}.txt", role.as_str()));
            if !path.exists() {
                return Ok(PromptTemplate::bundled(role));
            }
            let text = std::fs::read_to_string(&path).map_err(|e| PromptError::Io {
                path: path.display().to_string(),
                reason: e.to_string(),
            })?;
            let template = PromptTemplate::new(role, text);
            template.check_placeholders()?;
            Ok(template)
        };
        Ok(PromptSet {
            single: load(AgentRole::Single)?,
            diagnosis: load(AgentRole::Diagnosis)?,
            planner: load(AgentRole::Planner)?,
            risk: load(AgentRole::Risk)?,
        })
    }

    pub fn get(&self, role: AgentRole) -> &PromptTemplate {
        match role {
            AgentRole::Single => &self.single,
            AgentRole::Diagnosis => &self.diagnosis,
            AgentRole::Planner => &self.planner,
            AgentRole::Risk => &self.risk,
        }
    }
}
