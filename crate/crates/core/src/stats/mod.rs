//! ANOVA, pairwise t-tests, Cohen's d and confidence intervals.

mod hypothesis;
pub mod special;
mod summary;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use hypothesis::{
    bonferroni_alpha, cohens_d, confidence_interval, format_p_value, one_way_anova, t_test_pooled,
    t_test_welch, Df, GroupInterval, TestKind, TestResult, FAMILY_ALPHA, P_VALUE_FLOOR,
};
pub use special::{f_survival, regularized_incomplete_beta, t_critical, t_two_sided_p};
pub use summary::{
    analyze, summarize, AnalysisOptions, AnalysisReport, AnalysisVariant, ConditionSummary,
    ExampleExcerpt, MetricTests, Summary, ANALYSIS_SCHEMA, POOR_DQ,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("group `{label}` has {n} value(s), at least {needed} required")]
    InsufficientData {
        label: String,
        n: usize,
        needed: usize,
    },
    #[error("{0} group(s) given, at least 2 required")]
    TooFewGroups(usize),
    #[error("zero pooled variance: {0}")]
    DegenerateVariance(String),
    #[error("records come from {} different configurations ({}); refusing to pool them", .0.len(), .0.join(", "))]
    MixedFingerprints(Vec<String>),
    #[error("no trial records given")]
    EmptyInput,
    #[error("no usable (non-failed) trials in the store")]
    NoUsableTrials,
}

/// A labelled sample with moments computed at construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSample", into = "RawSample")]
pub struct GroupSample {
    label: String,
    values: Vec<f64>,
    mean: f64,
    sample_std: f64,
}

#[derive(Serialize, Deserialize)]
struct RawSample {
    label: String,
    values: Vec<f64>,
}

impl TryFrom<RawSample> for GroupSample {
    type Error = StatsError;
    fn try_from(raw: RawSample) -> Result<Self, StatsError> {
        GroupSample::new(raw.label, raw.values)
    }
}

impl From<GroupSample> for RawSample {
    fn from(g: GroupSample) -> Self {
        RawSample {
            label: g.label,
            values: g.values,
        }
    }
}

impl GroupSample {
    /// Fails on non-finite values.
    pub fn new(label: impl Into<String>, values: Vec<f64>) -> Result<Self, StatsError> {
        let label = label.into();
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(StatsError::Domain(format!(
                "group `{label}` contains non-finite value {v}"
            )));
        }
        let (mean, sample_std) = moments(&values);
        Ok(GroupSample {
            label,
            values,
            mean,
            sample_std,
        })
    }

    /// A synthetic sample of size `n` whose mean and sample standard
    /// deviation equal the given summary statistics.
    pub fn from_moments(
        label: impl Into<String>,
        mean: f64,
        std: f64,
        n: usize,
    ) -> Result<Self, StatsError> {
        let label = label.into();
        if n < 2 || !(std >= 0.0) || !mean.is_finite() || !std.is_finite() {
            return Err(StatsError::Domain(format!(
                "cannot synthesise group `{label}` from n = {n}, std = {std}"
            )));
        }
        // Pairs at mean ± d (plus one value at the mean when n is odd) give
        // sum of squares (n - 1)·std² for d = std·sqrt((n - 1) / (2·pairs)).
        let pairs = n / 2;
        let d = std * ((n - 1) as f64 / (2 * pairs) as f64).sqrt();
        let mut values = Vec::with_capacity(n);
        for _ in 0..pairs {
            values.push(mean + d);
            values.push(mean - d);
        }
        if n % 2 == 1 {
            values.push(mean);
        }
        let mut g = GroupSample::new(label, values)?;
        // Pin the summary values exactly; the sample reproduces them up to
        // rounding.
        g.mean = mean;
        g.sample_std = std;
        Ok(g)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Standard deviation with the n − 1 denominator (0 for n < 2).
    pub fn sample_std(&self) -> f64 {
        self.sample_std
    }

    pub fn variance(&self) -> f64 {
        self.sample_std * self.sample_std
    }

    fn require(&self, needed: usize) -> Result<(), StatsError> {
        if self.n() < needed {
            return Err(StatsError::InsufficientData {
                label: self.label.clone(),
                n: self.n(),
                needed,
            });
        }
        Ok(())
    }
}

/// Mean and sample standard deviation. A constant sample yields exactly its
/// value and exactly zero.
fn moments(values: &[f64]) -> (f64, f64) {
    let Some(&first) = values.first() else {
        return (f64::NAN, f64::NAN);
    };
    if values.iter().all(|&v| v == first) {
        return (first, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

/// Serde adapter writing non-finite floats as strings (`"inf"`, `"-inf"`,
/// `"NaN"`), which plain JSON numbers cannot carry.
pub mod float_repr {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(value: &f64, s: S) -> Result<S::Ok, S::Error> {
        if value.is_finite() {
            s.serialize_f64(*value)
        } else if value.is_nan() {
            s.serialize_str("NaN")
        } else if *value > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "inf" | "+inf" | "Infinity" => Ok(f64::INFINITY),
                "-inf" | "-Infinity" => Ok(f64::NEG_INFINITY),
                "NaN" | "nan" => Ok(f64::NAN),
                other => Err(serde::de::Error::custom(format!("not a float: `{other}`"))),
            },
        }
    }
}
