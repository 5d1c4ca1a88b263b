//! Decision Quality: per-action validity, specificity and correctness, and
//! their weighted per-trial aggregate.
//!
//! ```text
//! DQ = alpha * validity + beta * specificity + gamma * correctness
//! ```
//!
//! Each component is the mean of its per-action values. A brief without
//! actions scores zero on all three components.

use std::path::Path;

use regex::{Regex, RegexBuilder};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pipelines::{ActionItem, Brief};
use crate::scenario::{tokenize, IncidentScenario, TokenSet, DEFAULT_STOPWORDS};

pub const DEFAULT_SCORING_CONFIG: &str = include_str!("../assets/scoring.toml");

pub const DEFAULT_ACTIONABLE_THRESHOLD: f64 = 0.5;

const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ScoringError {
    #[error("weights must be non-negative and sum to 1 (got {alpha} + {beta} + {gamma})")]
    InvalidWeights { alpha: f64, beta: f64, gamma: f64 },
    #[error("pattern `{name}` does not compile: {reason}")]
    BadPattern { name: String, reason: String },
    #[error("ground truth has no tokens after stopword removal")]
    EmptyGroundTruth,
    #[error("malformed scoring config: {0}")]
    Parse(String),
    #[error("cannot read scoring config {path}: {reason}")]
    Io { path: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DqWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for DqWeights {
    fn default() -> Self {
        DqWeights {
            alpha: 0.40,
            beta: 0.30,
            gamma: 0.30,
        }
    }
}

impl DqWeights {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Result<Self, ScoringError> {
        let w = DqWeights { alpha, beta, gamma };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<(), ScoringError> {
        let Self { alpha, beta, gamma } = *self;
        let non_negative = [alpha, beta, gamma].iter().all(|w| *w >= 0.0);
        if !non_negative || ((alpha + beta + gamma) - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(ScoringError::InvalidWeights { alpha, beta, gamma });
        }
        Ok(())
    }

    pub fn combine(&self, validity: f64, specificity: f64, correctness: f64) -> f64 {
        self.alpha * validity + self.beta * specificity + self.gamma * correctness
    }
}

/// Regex sources for the specificity rubric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecificityRules {
    pub version_pattern: String,
    pub command_pattern: String,
    pub service_pattern: String,
    pub category_pattern: String,
    pub vague_markers: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidityRules {
    pub resource_pattern: String,
    pub contradictory_pairs: Vec<[String; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoringConfig {
    pub weights: DqWeights,
    #[serde(default = "default_threshold")]
    pub actionable_threshold: f64,
    pub stopwords: Vec<String>,
    pub specificity: SpecificityRules,
    pub validity: ValidityRules,
}

fn default_threshold() -> f64 {
    DEFAULT_ACTIONABLE_THRESHOLD
}

impl Default for ScoringConfig {
    fn default() -> Self {
        Self::from_toml_str(DEFAULT_SCORING_CONFIG).expect("bundled scoring config is valid")
    }
}

impl ScoringConfig {
    pub fn from_toml_str(source: &str) -> Result<Self, ScoringError> {
        let config: ScoringConfig =
            toml::from_str(source).map_err(|e| ScoringError::Parse(e.message().to_string()))?;
        config.weights.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScoringError> {
        let path = path.as_ref();
        let source = std::fs::read_to_string(path).map_err(|e| ScoringError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        Self::from_toml_str(&source)
    }

    /// Overlap computed on the raw lowercased, whitespace-split tokens.
    pub fn without_stopwords(mut self) -> Self {
        self.stopwords.clear();
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SpecificityTier {
    Vague,
    Category,
    Service,
    Identifier,
}

impl SpecificityTier {
    pub fn value(self) -> f64 {
        match self {
            SpecificityTier::Vague => 0.0,
            SpecificityTier::Category => 0.33,
            SpecificityTier::Service => 0.67,
            SpecificityTier::Identifier => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CorrectnessTier {
    Unrelated,
    Tangential,
    Symptom,
    Alternative,
    Match,
}

impl CorrectnessTier {
    /// Left-closed bands: `[0.70, 1]`, `[0.50, 0.70)`, `[0.30, 0.50)`,
    /// `[0.10, 0.30)`, `[0, 0.10)`.
    pub fn from_ratio(ratio: f64) -> Self {
        if ratio >= 0.70 {
            CorrectnessTier::Match
        } else if ratio >= 0.50 {
            CorrectnessTier::Alternative
        } else if ratio >= 0.30 {
            CorrectnessTier::Symptom
        } else if ratio >= 0.10 {
            CorrectnessTier::Tangential
        } else {
            CorrectnessTier::Unrelated
        }
    }

    pub fn value(self) -> f64 {
        match self {
            CorrectnessTier::Unrelated => 0.0,
            CorrectnessTier::Tangential => 0.25,
            CorrectnessTier::Symptom => 0.50,
            CorrectnessTier::Alternative => 0.75,
            CorrectnessTier::Match => 1.0,
        }
    }
}

/// Compiled specificity rubric.
#[derive(Debug, Clone)]
pub struct SpecificityMatcher {
    version: Regex,
    command: Regex,
    service: Regex,
    category: Regex,
    vague_markers: Vec<String>,
}

fn compile(name: &str, source: &str) -> Result<Regex, ScoringError> {
    RegexBuilder::new(source)
        .case_insensitive(true)
        .build()
        .map_err(|e| ScoringError::BadPattern {
            name: name.to_string(),
            reason: e.to_string(),
        })
}

impl SpecificityMatcher {
    pub fn new(rules: &SpecificityRules) -> Result<Self, ScoringError> {
        Ok(SpecificityMatcher {
            version: compile("version_pattern", &rules.version_pattern)?,
            command: compile("command_pattern", &rules.command_pattern)?,
            service: compile("service_pattern", &rules.service_pattern)?,
            category: compile("category_pattern", &rules.category_pattern)?,
            vague_markers: rules
                .vague_markers
                .iter()
                .map(|m| m.trim().to_lowercase())
                .filter(|m| !m.is_empty())
                .collect(),
        })
    }

    fn opens_vague(&self, text: &str) -> bool {
        let lower = text.trim_start().to_lowercase();
        self.vague_markers.iter().any(|m| {
            lower
                .strip_prefix(m.as_str())
                .is_some_and(|rest| !rest.starts_with(char::is_alphanumeric))
        })
    }

    pub fn tier(&self, text: &str) -> SpecificityTier {
        if self.version.is_match(text) || self.command.is_match(text) {
            SpecificityTier::Identifier
        } else if self.service.is_match(text) {
            SpecificityTier::Service
        } else if self.category.is_match(text) && !self.opens_vague(text) {
            SpecificityTier::Category
        } else {
            SpecificityTier::Vague
        }
    }
}

/// Compiled validity checks.
#[derive(Debug, Clone)]
pub struct ValidityChecker {
    percentage: Regex,
    resource: Regex,
    pairs: Vec<(Regex, Regex)>,
    command: Regex,
}

fn word(term: &str) -> Result<Regex, ScoringError> {
    compile(
        "contradictory_pairs",
        &format!(r"\b{}\b", regex::escape(term.trim())),
    )
}

impl ValidityChecker {
    pub fn new(rules: &ValidityRules, command_pattern: &str) -> Result<Self, ScoringError> {
        let pairs = rules
            .contradictory_pairs
            .iter()
            .map(|[a, b]| Ok((word(a)?, word(b)?)))
            .collect::<Result<Vec<_>, ScoringError>>()?;
        Ok(ValidityChecker {
            percentage: compile("percentage", r"(\d+(?:\.\d+)?)\s*%")?,
            resource: compile("resource_pattern", &rules.resource_pattern)?,
            pairs,
            command: compile(
                "command_pattern",
                &format!(r"\b(?:{command_pattern})\b(?P<args>[^\n]*)"),
            )?,
        })
    }

    fn impossible_value(&self, text: &str) -> bool {
        self.resource.is_match(text)
            && self
                .percentage
                .captures_iter(text)
                .any(|c| c[1].parse::<f64>().map(|v| v > 100.0).unwrap_or(false))
    }

    fn contradictory(&self, text: &str) -> bool {
        self.pairs
            .iter()
            .any(|(a, b)| a.is_match(text) && b.is_match(text))
    }

    /// A command keyword followed by nothing but punctuation.
    fn malformed_command(&self, text: &str) -> bool {
        self.command.captures_iter(text).any(|c| {
            c.name("args")
                .map(|m| !m.as_str().chars().any(char::is_alphanumeric))
                .unwrap_or(true)
        })
    }

    pub fn is_valid(&self, text: &str) -> bool {
        !(self.impossible_value(text) || self.contradictory(text) || self.malformed_command(text))
    }
}

/// Ground-truth resolution tokenized with the scorer's stopwords.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruth {
    pub tokens: TokenSet,
}

impl GroundTruth {
    pub fn new<S: AsRef<str>>(text: &str, stopwords: &[S]) -> Result<Self, ScoringError> {
        let tokens = tokenize(text, stopwords);
        if tokens.is_empty() {
            return Err(ScoringError::EmptyGroundTruth);
        }
        Ok(GroundTruth { tokens })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionScore {
    pub text: String,
    pub valid: bool,
    pub spec_tier: f64,
    pub corr_tier: f64,
    pub overlap_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DqBreakdown {
    pub validity: f64,
    pub specificity: f64,
    pub correctness: f64,
    pub dq: f64,
    pub weights: DqWeights,
    pub per_action: Vec<ActionScore>,
}

impl DqBreakdown {
    /// All-zero breakdown for briefs without actions (or failed trials).
    pub fn empty(weights: DqWeights) -> Self {
        DqBreakdown {
            validity: 0.0,
            specificity: 0.0,
            correctness: 0.0,
            dq: 0.0,
            weights,
            per_action: Vec::new(),
        }
    }

    /// `dq` equals the weighted sum of its components within 1e-9.
    pub fn satisfies_identity(&self) -> bool {
        let expected = self
            .weights
            .combine(self.validity, self.specificity, self.correctness);
        (self.dq - expected).abs() <= 1e-9
    }
}

/// Fraction of valid actions, with one flag per action. Empty input scores 0.
pub fn score_validity(actions: &[ActionItem], checker: &ValidityChecker) -> (f64, Vec<bool>) {
    let flags: Vec<bool> = actions.iter().map(|a| checker.is_valid(&a.text)).collect();
    if flags.is_empty() {
        return (0.0, flags);
    }
    let valid = flags.iter().filter(|v| **v).count();
    (valid as f64 / flags.len() as f64, flags)
}

pub fn score_specificity(action: &ActionItem, matcher: &SpecificityMatcher) -> SpecificityTier {
    matcher.tier(&action.text)
}

/// Token overlap with the ground truth and the banded tier.
pub fn score_correctness<S: AsRef<str>>(
    action: &ActionItem,
    ground_truth: &TokenSet,
    stopwords: &[S],
) -> Result<(CorrectnessTier, f64), ScoringError> {
    if ground_truth.is_empty() {
        return Err(ScoringError::EmptyGroundTruth);
    }
    let tokens = tokenize(&action.text, stopwords);
    let ratio = tokens.intersection_count(ground_truth) as f64 / ground_truth.len() as f64;
    Ok((CorrectnessTier::from_ratio(ratio), ratio))
}

/// Strict threshold: exactly 0.5 is not actionable.
pub fn is_actionable(dq: f64) -> bool {
    dq > DEFAULT_ACTIONABLE_THRESHOLD
}

fn mean(values: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = values.len();
    if n == 0 {
        0.0
    } else {
        values.sum::<f64>() / n as f64
    }
}

/// A compiled scoring configuration.
#[derive(Debug, Clone)]
pub struct Scorer {
    config: ScoringConfig,
    specificity: SpecificityMatcher,
    validity: ValidityChecker,
}

impl Scorer {
    pub fn new(config: ScoringConfig) -> Result<Self, ScoringError> {
        config.weights.validate()?;
        let specificity = SpecificityMatcher::new(&config.specificity)?;
        let validity = ValidityChecker::new(&config.validity, &config.specificity.command_pattern)?;
        Ok(Scorer {
            config,
            specificity,
            validity,
        })
    }

    pub fn config(&self) -> &ScoringConfig {
        &self.config
    }

    pub fn weights(&self) -> DqWeights {
        self.config.weights
    }

    pub fn stopwords(&self) -> &[String] {
        &self.config.stopwords
    }

    pub fn specificity_matcher(&self) -> &SpecificityMatcher {
        &self.specificity
    }

    pub fn validity_checker(&self) -> &ValidityChecker {
        &self.validity
    }

    pub fn ground_truth(&self, scenario: &IncidentScenario) -> Result<GroundTruth, ScoringError> {
        GroundTruth::new(&scenario.ground_truth, &self.config.stopwords)
    }

    pub fn is_actionable(&self, dq: f64) -> bool {
        dq > self.config.actionable_threshold
    }

    pub fn score_actions(&self, actions: &[ActionItem], truth: &GroundTruth) -> DqBreakdown {
        let weights = self.config.weights;
        if actions.is_empty() {
            return DqBreakdown::empty(weights);
        }
        let (_, valid_flags) = score_validity(actions, &self.validity);
        let per_action: Vec<ActionScore> = actions
            .iter()
            .zip(valid_flags)
            .map(|(action, valid)| {
                let spec = score_specificity(action, &self.specificity);
                let (corr, overlap) =
                    score_correctness(action, &truth.tokens, &self.config.stopwords)
                        .expect("ground truth is non-empty by construction");
                ActionScore {
                    text: action.text.clone(),
                    valid,
                    spec_tier: spec.value(),
                    corr_tier: corr.value(),
                    overlap_ratio: overlap,
                }
            })
            .collect();
        let validity = mean(per_action.iter().map(|a| if a.valid { 1.0 } else { 0.0 }));
        let specificity = mean(per_action.iter().map(|a| a.spec_tier));
        let correctness = mean(per_action.iter().map(|a| a.corr_tier));
        DqBreakdown {
            validity,
            specificity,
            correctness,
            dq: weights.combine(validity, specificity, correctness),
            weights,
            per_action,
        }
    }

    pub fn score_dq(&self, brief: &Brief, truth: &GroundTruth) -> DqBreakdown {
        self.score_actions(&brief.actions, truth)
    }
}

impl Default for Scorer {
    fn default() -> Self {
        Scorer::new(ScoringConfig::default()).expect("bundled scoring config compiles")
    }
}

/// Ground truth of the bundled scenario under the default stopwords.
pub fn default_ground_truth() -> GroundTruth {
    GroundTruth::new(
        &IncidentScenario::auth_regression().ground_truth,
        DEFAULT_STOPWORDS,
    )
    .expect("bundled ground truth is non-empty")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipelines::Condition;
    use proptest::prelude::*;

    const C3_ACTIONS: [&str; 3] = [
        "Rollback auth-service to v2.3.0 using kubectl rollout undo",
        "Verify database connection pool max_connections setting",
        "Monitor error rates for 5 minutes post-rollback",
    ];
    const C2_ACTIONS: [&str; 2] = ["Investigate recent changes", "Review system metrics"];

    fn item(text: &str) -> ActionItem {
        ActionItem {
            text: text.into(),
            ordinal: 1,
        }
    }

    #[test]
    fn default_weights() {
        let w = DqWeights::default();
        assert_eq!((w.alpha, w.beta, w.gamma), (0.40, 0.30, 0.30));
        assert!(DqWeights::new(0.5, 0.5, 0.1).is_err());
        assert!(DqWeights::new(1.2, -0.1, -0.1).is_err());
    }

    #[test]
    fn validity_examples() {
        let scorer = Scorer::default();
        let v = |t: &str| score_validity(&[item(t)], scorer.validity_checker()).0;
        assert_eq!(v(C3_ACTIONS[0]), 1.0);
        assert_eq!(v("Scale CPU to 500%"), 0.0);
        assert_eq!(v("restart and rollback the service simultaneously"), 0.0);
        assert_eq!(v("Run kubectl"), 0.0);
        assert_eq!(v("Restart the pods then run docker."), 0.0);
        assert_eq!(v("Raise the pool to 90% of capacity"), 1.0);
        assert_eq!(v("Restart auth-service pods"), 1.0);
        assert_eq!(score_validity(&[], scorer.validity_checker()).0, 0.0);
    }

    #[test]
    fn specificity_examples() {
        let m = Scorer::default();
        let t = |s: &str| m.specificity_matcher().tier(s);
        assert_eq!(t(C3_ACTIONS[0]), SpecificityTier::Identifier);
        assert_eq!(t("rollback auth-service"), SpecificityTier::Service);
        assert_eq!(t("rollback recent deployment"), SpecificityTier::Category);
        assert_eq!(t("investigate recent deployment"), SpecificityTier::Vague);
        assert_eq!(t("check logs"), SpecificityTier::Vague);
        assert_eq!(t(C3_ACTIONS[1]), SpecificityTier::Service);
        assert_eq!(t(C3_ACTIONS[2]), SpecificityTier::Vague);
        assert_eq!(t("systemctl restart nginx"), SpecificityTier::Identifier);
    }

    #[test]
    fn correctness_hand_counts() {
        let truth = default_ground_truth();
        assert_eq!(truth.tokens.len(), 8);
        let c = |s: &str| score_correctness(&item(s), &truth.tokens, DEFAULT_STOPWORDS).unwrap();
        assert_eq!(c(C3_ACTIONS[0]), (CorrectnessTier::Symptom, 3.0 / 8.0));
        assert_eq!(c(C3_ACTIONS[1]), (CorrectnessTier::Alternative, 0.5));
        assert_eq!(c(C3_ACTIONS[2]), (CorrectnessTier::Unrelated, 0.0));
        let own = IncidentScenario::auth_regression().ground_truth;
        assert_eq!(c(&own), (CorrectnessTier::Match, 1.0));
    }

    #[test]
    fn empty_ground_truth_errors() {
        let empty = tokenize("", DEFAULT_STOPWORDS);
        assert!(matches!(
            score_correctness(&item("x"), &empty, DEFAULT_STOPWORDS),
            Err(ScoringError::EmptyGroundTruth)
        ));
        assert!(GroundTruth::new("to the and", DEFAULT_STOPWORDS).is_err());
    }

    #[test]
    fn band_edges() {
        use CorrectnessTier::*;
        let cases = [
            (0.0, Unrelated),
            (0.0999, Unrelated),
            (0.10, Tangential),
            (0.2999, Tangential),
            (0.30, Symptom),
            (0.4999, Symptom),
            (0.50, Alternative),
            (0.6999, Alternative),
            (0.70, Match),
            (1.0, Match),
        ];
        for (ratio, tier) in cases {
            assert_eq!(CorrectnessTier::from_ratio(ratio), tier, "ratio {ratio}");
        }
        // exact integer ratios landing on an edge
        assert_eq!(CorrectnessTier::from_ratio(3.0 / 10.0), Symptom);
        assert_eq!(CorrectnessTier::from_ratio(7.0 / 10.0), Match);
        assert_eq!(CorrectnessTier::from_ratio(21.0 / 30.0), Match);
    }

    #[test]
    fn table_briefs() {
        let scorer = Scorer::default();
        let truth = default_ground_truth();
        let c3 = scorer.score_dq(&Brief::from_actions(Condition::C3, &C3_ACTIONS), &truth);
        assert!((c3.specificity - 0.5567).abs() < 5e-4, "{}", c3.specificity);
        assert!((c3.correctness - 0.4167).abs() < 5e-4, "{}", c3.correctness);
        assert!((c3.dq - 0.692).abs() < 1e-3, "{}", c3.dq);
        assert!(scorer.is_actionable(c3.dq));

        let c2 = scorer.score_dq(&Brief::from_actions(Condition::C2, &C2_ACTIONS), &truth);
        assert_eq!(
            (c2.validity, c2.specificity, c2.correctness),
            (1.0, 0.0, 0.0)
        );
        assert!((c2.dq - 0.400).abs() < 1e-12);
        assert!(!is_actionable(c2.dq));
    }

    #[test]
    fn literal_overlap_without_stopwords() {
        let scorer = Scorer::new(ScoringConfig::default().without_stopwords()).unwrap();
        let truth = scorer
            .ground_truth(&IncidentScenario::auth_regression())
            .unwrap();
        assert_eq!(truth.tokens.len(), 9);
        let c3 = scorer.score_dq(&Brief::from_actions(Condition::C3, &C3_ACTIONS), &truth);
        assert!((c3.correctness - 1.0 / 3.0).abs() < 1e-12);
        assert!((c3.dq - 0.667).abs() < 1e-3);
    }

    #[test]
    fn empty_brief_scores_zero() {
        let scorer = Scorer::default();
        let b = Brief::from_actions::<&str>(Condition::C1, &[]);
        let d = scorer.score_dq(&b, &default_ground_truth());
        assert_eq!(d.dq, 0.0);
        assert!(d.satisfies_identity());
    }

    #[test]
    fn actionable_threshold_is_strict() {
        assert!(is_actionable(0.692));
        assert!(!is_actionable(0.400));
        assert!(!is_actionable(0.5));
    }

    #[test]
    fn bad_pattern_is_reported() {
        let mut config = ScoringConfig::default();
        config.specificity.service_pattern = "(auth".into();
        assert!(matches!(
            Scorer::new(config),
            Err(ScoringError::BadPattern { name, .. }) if name == "service_pattern"
        ));
    }

    proptest! {
        #[test]
        fn raising_a_tier_never_lowers_dq(
            tiers in proptest::collection::vec((0usize..4, 0usize..5), 1..6),
            pick in 0usize..6,
        ) {
            let spec = [0.0, 0.33, 0.67, 1.0];
            let corr = [0.0, 0.25, 0.5, 0.75, 1.0];
            let w = DqWeights::default();
            let dq = |t: &[(usize, usize)]| {
                let n = t.len() as f64;
                let s = t.iter().map(|(a, _)| spec[a.to_owned()]).sum::<f64>() / n;
                let r = t.iter().map(|(_, b)| corr[b.to_owned()]).sum::<f64>() / n;
                w.combine(1.0, s, r)
            };
            let i = pick % tiers.len();
            let mut raised = tiers.clone();
            raised[i].0 = (raised[i].0 + 1).min(3);
            prop_assert!(dq(&raised) >= dq(&tiers));
            let mut raised = tiers.clone();
            raised[i].1 = (raised[i].1 + 1).min(4);
            prop_assert!(dq(&raised) >= dq(&tiers));
        }
    }
}
