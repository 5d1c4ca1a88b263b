//! The three experimental conditions.
//!
//! * C1 simulates a manual dashboard review: no backend calls, a Gaussian
//!   review time and an empty action list.
//! * C2 issues one call with a multi-objective prompt and parses whatever list
//!   comes back.
//! * C3 chains diagnosis, planner and risk calls, each prompt embedding the
//!   previous agent's output, and a coordinator assembles the brief.

mod actions;
mod prompts;

use std::time::Duration;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use actions::{extract_actions, split_response, ActionItem};
pub use prompts::{
    render_prompt, PromptError, PromptSet, PromptTemplate, DIAGNOSIS_TEMPLATE, PLANNER_TEMPLATE,
    RISK_TEMPLATE, SINGLE_TEMPLATE,
};

use crate::backend::{
    secs_to_duration, AgentRole, Backend, BackendError, Completion, GenerationRequest,
    SharedRateLimiter, TrialTag, DEFAULT_DEADLINE, DEFAULT_MAX_TOKENS, DEFAULT_MODEL, DEFAULT_SEED,
    DEFAULT_TEMPERATURE,
};
use crate::scenario::IncidentScenario;

pub const BASELINE_MEAN_SECS: f64 = 120.0;
pub const BASELINE_STD_SECS: f64 = 6.5;
pub const BASELINE_MIN_SECS: f64 = 1.0;
pub const BASELINE_SUMMARY: &str = "Manual dashboard review (simulated); no structured actions.";

/// Substituted for an agent's output when that agent produced nothing.
pub const MISSING_UPSTREAM: &str = "(no output: the upstream agent did not respond)";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Condition {
    C1,
    C2,
    C3,
}

impl Condition {
    pub const ALL: [Condition; 3] = [Condition::C1, Condition::C2, Condition::C3];

    pub fn as_str(self) -> &'static str {
        match self {
            Condition::C1 => "C1",
            Condition::C2 => "C2",
            Condition::C3 => "C3",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Condition::C1 => "C1 (Baseline)",
            Condition::C2 => "C2 (Single-Agent)",
            Condition::C3 => "C3 (Multi-Agent)",
        }
    }
}

impl std::fmt::Display for Condition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Condition {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "C1" => Ok(Condition::C1),
            "C2" => Ok(Condition::C2),
            "C3" => Ok(Condition::C3),
            other => Err(format!(
                "unknown condition `{other}` (expected C1, C2 or C3)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Brief {
    pub condition: Condition,
    pub summary: String,
    pub root_cause: String,
    pub actions: Vec<ActionItem>,
    pub risk_notes: String,
    pub raw_responses: Vec<String>,
}

impl Brief {
    pub fn action_texts(&self) -> Vec<&str> {
        self.actions.iter().map(|a| a.text.as_str()).collect()
    }

    /// A brief carrying only the given actions.
    pub fn from_actions<S: AsRef<str>>(condition: Condition, actions: &[S]) -> Self {
        Brief {
            condition,
            summary: String::new(),
            root_cause: String::new(),
            actions: actions
                .iter()
                .enumerate()
                .map(|(i, a)| ActionItem {
                    text: a.as_ref().to_string(),
                    ordinal: i + 1,
                })
                .collect(),
            risk_notes: String::new(),
            raw_responses: Vec::new(),
        }
    }

    pub fn check_invariants(&self) -> Result<(), String> {
        if self.condition == Condition::C1 && !self.actions.is_empty() {
            return Err("C1 briefs carry no actions".into());
        }
        if self.condition == Condition::C3 && self.raw_responses.len() != 3 {
            return Err(format!(
                "C3 briefs carry exactly 3 raw responses, found {}",
                self.raw_responses.len()
            ));
        }
        if let Some(a) = self.actions.iter().find(|a| a.text.trim().is_empty()) {
            return Err(format!("action #{} is empty", a.ordinal));
        }
        Ok(())
    }
}

/// Generation settings shared by every call of a trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineParams {
    pub temperature: f64,
    pub seed: u64,
    pub max_tokens: u32,
    pub model_name: String,
    pub deadline: Duration,
    pub trial: Option<TrialTag>,
}

impl Default for PipelineParams {
    fn default() -> Self {
        PipelineParams {
            temperature: DEFAULT_TEMPERATURE,
            seed: DEFAULT_SEED,
            max_tokens: DEFAULT_MAX_TOKENS,
            model_name: DEFAULT_MODEL.to_string(),
            deadline: DEFAULT_DEADLINE,
            trial: None,
        }
    }
}

impl PipelineParams {
    fn request(&self, role: AgentRole, prompt: String) -> GenerationRequest {
        GenerationRequest {
            prompt,
            temperature: self.temperature,
            seed: self.seed,
            max_tokens: self.max_tokens,
            model_name: self.model_name.clone(),
            role,
            trial: self.trial,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PipelineStatus {
    Ok,
    /// At least one agent failed but a brief was still assembled.
    Degraded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutcome {
    pub brief: Brief,
    /// From initiation of the first backend request to brief assembly.
    pub elapsed: Duration,
    pub status: PipelineStatus,
    pub completions: Vec<Completion>,
    /// Agent failures tolerated under the partial-result policy.
    pub agent_errors: Vec<(AgentRole, BackendError)>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PipelineError {
    #[error("{role} agent failed after {elapsed:?}: {source}")]
    Backend {
        role: AgentRole,
        elapsed: Duration,
        #[source]
        source: BackendError,
    },
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

impl PipelineError {
    pub fn elapsed(&self) -> Duration {
        match self {
            PipelineError::Backend { elapsed, .. } => *elapsed,
            PipelineError::Prompt(_) => Duration::ZERO,
        }
    }
}

/// Backend plus the rate limiter every call must pass through.
pub struct CallContext<'a> {
    pub backend: &'a dyn Backend,
    pub limiter: Option<&'a SharedRateLimiter>,
}

impl<'a> CallContext<'a> {
    pub fn new(backend: &'a dyn Backend) -> Self {
        CallContext {
            backend,
            limiter: None,
        }
    }

    pub fn with_limiter(mut self, limiter: &'a SharedRateLimiter) -> Self {
        self.limiter = Some(limiter);
        self
    }
}

/// Simulated manual review: a Normal(120 s, 6.5 s) duration, floored at 1 s.
pub fn run_baseline<R: Rng + ?Sized>(rng: &mut R) -> (Brief, Duration) {
    let normal =
        Normal::new(BASELINE_MEAN_SECS, BASELINE_STD_SECS).expect("baseline parameters are valid");
    let secs = normal.sample(rng).max(BASELINE_MIN_SECS);
    let brief = Brief {
        condition: Condition::C1,
        summary: BASELINE_SUMMARY.to_string(),
        root_cause: String::new(),
        actions: Vec::new(),
        risk_notes: String::new(),
        raw_responses: Vec::new(),
    };
    (brief, secs_to_duration(secs))
}

fn root_cause_line(prose: &str) -> String {
    prose
        .lines()
        .find_map(|l| {
            let lower = l.to_ascii_lowercase();
            lower.starts_with("root cause").then(|| {
                l["root cause".len()..]
                    .trim_start_matches([':', ' ', '-'])
                    .trim()
                    .to_string()
            })
        })
        .unwrap_or_default()
}

/// One call with the multi-objective prompt.
pub fn run_single_agent(
    scenario: &IncidentScenario,
    prompts: &PromptSet,
    ctx: &CallContext<'_>,
    params: &PipelineParams,
) -> Result<PipelineOutcome, PipelineError> {
    let prompt = render_prompt(&prompts.single, scenario, None)?;
    let request = params.request(AgentRole::Single, prompt);
    let clock = ctx.backend.clock();

    if let Some(limiter) = ctx.limiter {
        limiter.acquire(clock.as_ref());
    }
    let start = clock.now();
    let completion = ctx
        .backend
        .generate(&request, params.deadline)
        .map_err(|source| PipelineError::Backend {
            role: AgentRole::Single,
            elapsed: clock.now().saturating_sub(start),
            source,
        })?;
    let (summary, actions) = split_response(&completion.text);
    let brief = Brief {
        condition: Condition::C2,
        root_cause: root_cause_line(&summary),
        summary,
        actions,
        risk_notes: String::new(),
        raw_responses: vec![completion.text.clone()],
    };
    let elapsed = clock.now().saturating_sub(start);
    Ok(PipelineOutcome {
        brief,
        elapsed,
        status: PipelineStatus::Ok,
        completions: vec![completion],
        agent_errors: Vec::new(),
    })
}

/// Builds the C3 brief from whatever the three agents returned.
pub fn assemble_brief(diagnosis: Option<&str>, planner: Option<&str>, risk: Option<&str>) -> Brief {
    let root_cause = diagnosis.map(str::trim).unwrap_or_default().to_string();
    let (plan_prose, actions) = planner.map(split_response).unwrap_or_default();
    let mut summary = Vec::new();
    if !root_cause.is_empty() {
        summary.push(format!("Root cause: {root_cause}"));
    }
    if !plan_prose.is_empty() {
        summary.push(plan_prose);
    }
    if !actions.is_empty() {
        summary.push(format!("{} remediation action(s) proposed.", actions.len()));
    }
    Brief {
        condition: Condition::C3,
        summary: summary.join("\n"),
        root_cause,
        actions,
        risk_notes: risk.map(str::trim).unwrap_or_default().to_string(),
        raw_responses: [diagnosis, planner, risk]
            .iter()
            .map(|r| r.unwrap_or_default().to_string())
            .collect(),
    }
}

/// Diagnosis, planner and risk calls in sequence.
///
/// A timed-out agent does not abort the chain: its successor receives
/// [`MISSING_UPSTREAM`] and the outcome is marked degraded. Any other backend
/// error, or all three agents timing out, fails the trial.
pub fn run_multi_agent(
    scenario: &IncidentScenario,
    prompts: &PromptSet,
    ctx: &CallContext<'_>,
    params: &PipelineParams,
) -> Result<PipelineOutcome, PipelineError> {
    let clock = ctx.backend.clock();
    let mut start = None;
    let mut completions = Vec::with_capacity(3);
    let mut agent_errors = Vec::new();
    let mut outputs: [Option<String>; 3] = [None, None, None];

    let chain = [AgentRole::Diagnosis, AgentRole::Planner, AgentRole::Risk];
    for (step, role) in chain.into_iter().enumerate() {
        let upstream = match step {
            0 => None,
            _ => Some(outputs[step - 1].as_deref().unwrap_or(MISSING_UPSTREAM)),
        };
        let prompt = render_prompt(prompts.get(role), scenario, upstream)?;
        let request = params.request(role, prompt);
        if let Some(limiter) = ctx.limiter {
            limiter.acquire(clock.as_ref());
        }
        let started = *start.get_or_insert_with(|| clock.now());
        match ctx.backend.generate(&request, params.deadline) {
            Ok(c) if !c.text.trim().is_empty() => {
                outputs[step] = Some(c.text.clone());
                completions.push(c);
            }
            Ok(c) => completions.push(c),
            Err(e) if e.is_timeout() => agent_errors.push((role, e)),
            Err(source) => {
                return Err(PipelineError::Backend {
                    role,
                    elapsed: clock.now().saturating_sub(started),
                    source,
                })
            }
        }
    }

    let started = start.unwrap_or_default();
    if agent_errors.len() == chain.len() {
        let (role, source) = agent_errors.pop().expect("three errors");
        return Err(PipelineError::Backend {
            role,
            elapsed: clock.now().saturating_sub(started),
            source,
        });
    }
    let brief = assemble_brief(
        outputs[0].as_deref(),
        outputs[1].as_deref(),
        outputs[2].as_deref(),
    );
    let elapsed = clock.now().saturating_sub(started);
    Ok(PipelineOutcome {
        brief,
        elapsed,
        status: if agent_errors.is_empty() {
            PipelineStatus::Ok
        } else {
            PipelineStatus::Degraded
        },
        completions,
        agent_errors,
    })
}
