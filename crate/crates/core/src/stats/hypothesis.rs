use serde::{Deserialize, Serialize};

use super::special::{f_survival, t_critical, t_two_sided_p};
use super::{float_repr, GroupSample, StatsError};

/// Family-wise significance level before correction.
pub const FAMILY_ALPHA: f64 = 0.05;

/// p-values below this are stored as 0 and rendered as "< 1e-300".
pub const P_VALUE_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    Anova,
    TTest,
    WelchTTest,
}

/// Degrees of freedom: one value for t-tests, a pair for ANOVA.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Df {
    One(f64),
    Two(f64, f64),
}

impl std::fmt::Display for Df {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let num = |v: f64| {
            if v.fract() == 0.0 {
                format!("{v:.0}")
            } else {
                format!("{v:.1}")
            }
        };
        match *self {
            Df::One(v) => write!(f, "{}", num(v)),
            Df::Two(a, b) => write!(f, "{}, {}", num(a), num(b)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupInterval {
    pub label: String,
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub kind: TestKind,
    /// Group labels joined with " vs ".
    pub label: String,
    #[serde(with = "float_repr")]
    pub statistic: f64,
    pub df: Df,
    pub p_value: f64,
    pub alpha_effective: f64,
    pub significant: bool,
    /// Zero within-group variance: the statistic is 0 or ±inf by convention.
    pub degenerate: bool,
    pub effect_size_d: Option<f64>,
    #[serde(default)]
    pub ci_95: Vec<GroupInterval>,
}

impl TestResult {
    fn new(
        kind: TestKind,
        label: String,
        statistic: f64,
        df: Df,
        p_value: f64,
        alpha_effective: f64,
        degenerate: bool,
    ) -> Self {
        let p_value = if p_value < P_VALUE_FLOOR {
            0.0
        } else {
            p_value
        };
        TestResult {
            kind,
            label,
            statistic,
            df,
            p_value,
            alpha_effective,
            significant: p_value < alpha_effective,
            degenerate,
            effect_size_d: None,
            ci_95: Vec::new(),
        }
    }
}

pub fn bonferroni_alpha(family_alpha: f64, comparisons: usize) -> f64 {
    family_alpha / comparisons.max(1) as f64
}

pub fn format_p_value(p: f64) -> String {
    if p < P_VALUE_FLOOR {
        "< 1e-300".to_string()
    } else if p < 1e-3 {
        format!("{p:.2e}")
    } else {
        format!("{p:.4}")
    }
}

/// Statistic and p-value for a zero denominator: no difference gives 0 and
/// p = 1, any difference an infinite statistic with p = 0.
fn degenerate_statistic(numerator: f64) -> (f64, f64) {
    if numerator == 0.0 {
        (0.0, 1.0)
    } else {
        (f64::INFINITY.copysign(numerator), 0.0)
    }
}

/// One-way ANOVA at the family level [`FAMILY_ALPHA`].
pub fn one_way_anova(groups: &[GroupSample]) -> Result<TestResult, StatsError> {
    if groups.len() < 2 {
        return Err(StatsError::TooFewGroups(groups.len()));
    }
    for g in groups {
        g.require(2)?;
    }
    let total: usize = groups.iter().map(GroupSample::n).sum();
    let grand = groups.iter().flat_map(|g| g.values()).sum::<f64>() / total as f64;
    let ss_between: f64 = groups
        .iter()
        .map(|g| g.n() as f64 * (g.mean() - grand).powi(2))
        .sum();
    let ss_within: f64 = groups
        .iter()
        .map(|g| g.variance() * (g.n() - 1) as f64)
        .sum();
    let df1 = (groups.len() - 1) as f64;
    let df2 = (total - groups.len()) as f64;
    let label = groups
        .iter()
        .map(GroupSample::label)
        .collect::<Vec<_>>()
        .join(" vs ");

    let means_equal = groups.iter().all(|g| g.mean() == groups[0].mean());
    let (f, p, degenerate) = if ss_within == 0.0 {
        let (f, p) = degenerate_statistic(if means_equal { 0.0 } else { ss_between });
        (f, p, true)
    } else if means_equal {
        (0.0, 1.0, false)
    } else {
        let f = (ss_between / df1) / (ss_within / df2);
        (f, f_survival(f, df1, df2), false)
    };
    Ok(TestResult::new(
        TestKind::Anova,
        label,
        f,
        Df::Two(df1, df2),
        p,
        FAMILY_ALPHA,
        degenerate,
    ))
}

fn pair_result(
    kind: TestKind,
    a: &GroupSample,
    b: &GroupSample,
    se: f64,
    df: f64,
    alpha_effective: f64,
) -> Result<TestResult, StatsError> {
    let diff = a.mean() - b.mean();
    let (t, p, degenerate) = if se == 0.0 {
        let (t, p) = degenerate_statistic(diff);
        (t, p, true)
    } else if diff == 0.0 {
        (0.0, 1.0, false)
    } else {
        let t = diff / se;
        (t, t_two_sided_p(t, df), false)
    };
    let mut result = TestResult::new(
        kind,
        format!("{} vs {}", a.label(), b.label()),
        t,
        Df::One(df),
        p,
        alpha_effective,
        degenerate,
    );
    result.effect_size_d = cohens_d(a, b).ok();
    for g in [a, b] {
        let (lo, hi) = confidence_interval(g, 0.95)?;
        result.ci_95.push(GroupInterval {
            label: g.label().to_string(),
            mean: g.mean(),
            lo,
            hi,
        });
    }
    Ok(result)
}

/// Student's two-sample t-test with pooled variance, df = n_a + n_b − 2.
pub fn t_test_pooled(
    a: &GroupSample,
    b: &GroupSample,
    alpha_effective: f64,
) -> Result<TestResult, StatsError> {
    a.require(2)?;
    b.require(2)?;
    let (na, nb) = (a.n() as f64, b.n() as f64);
    let df = na + nb - 2.0;
    let pooled_var = ((na - 1.0) * a.variance() + (nb - 1.0) * b.variance()) / df;
    let se = (pooled_var * (1.0 / na + 1.0 / nb)).sqrt();
    pair_result(TestKind::TTest, a, b, se, df, alpha_effective)
}

/// Welch's unequal-variance t-test with Welch–Satterthwaite df.
pub fn t_test_welch(
    a: &GroupSample,
    b: &GroupSample,
    alpha_effective: f64,
) -> Result<TestResult, StatsError> {
    a.require(2)?;
    b.require(2)?;
    let (na, nb) = (a.n() as f64, b.n() as f64);
    let (qa, qb) = (a.variance() / na, b.variance() / nb);
    let se = (qa + qb).sqrt();
    let df = if se == 0.0 {
        na + nb - 2.0
    } else {
        (qa + qb).powi(2) / (qa * qa / (na - 1.0) + qb * qb / (nb - 1.0))
    };
    pair_result(TestKind::WelchTTest, a, b, se, df, alpha_effective)
}

/// `(mean_a − mean_b) / sqrt((s_a² + s_b²) / 2)`.
pub fn cohens_d(a: &GroupSample, b: &GroupSample) -> Result<f64, StatsError> {
    a.require(2)?;
    b.require(2)?;
    let pooled = ((a.variance() + b.variance()) / 2.0).sqrt();
    let diff = a.mean() - b.mean();
    if pooled == 0.0 {
        if diff == 0.0 {
            return Ok(0.0);
        }
        return Err(StatsError::DegenerateVariance(format!(
            "`{}` and `{}` both have zero variance but different means",
            a.label(),
            b.label()
        )));
    }
    Ok(diff / pooled)
}

/// `mean ± t_crit(n − 1, level) · s / sqrt(n)`.
pub fn confidence_interval(g: &GroupSample, level: f64) -> Result<(f64, f64), StatsError> {
    g.require(2)?;
    if g.sample_std() == 0.0 {
        return Ok((g.mean(), g.mean()));
    }
    let t = t_critical((g.n() - 1) as f64, level)?;
    let half = t * g.sample_std() / (g.n() as f64).sqrt();
    Ok((g.mean() - half, g.mean() + half))
}
