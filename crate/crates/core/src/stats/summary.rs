use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::hypothesis::{
    bonferroni_alpha, confidence_interval, one_way_anova, t_test_pooled, t_test_welch, TestResult,
    FAMILY_ALPHA,
};
use super::{GroupSample, StatsError};
use crate::pipelines::Condition;
use crate::runner::{TrialRecord, TrialStatus};
use crate::scoring::DqBreakdown;

pub const ANALYSIS_SCHEMA: &str = "incident-eval/analysis";

/// DQ below which a brief counts as poor.
pub const POOR_DQ: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionSummary {
    pub condition: Condition,
    pub label: String,
    /// Records entering the statistics.
    pub n: usize,
    /// Records in the store for this condition.
    pub n_total: usize,
    pub n_failed: usize,
    pub n_outliers: usize,
    pub t2u_mean: f64,
    pub t2u_std: f64,
    pub t2u_ci: Option<(f64, f64)>,
    pub dq_mean: f64,
    pub dq_std: f64,
    pub dq_ci: Option<(f64, f64)>,
    pub validity_mean: f64,
    pub validity_std: f64,
    pub specificity_mean: f64,
    pub specificity_std: f64,
    pub correctness_mean: f64,
    pub correctness_std: f64,
    pub actions_mean: f64,
    /// Trials with DQ above the actionable threshold.
    pub actionable: usize,
    pub actionable_fraction: f64,
    /// Trials with DQ below [`POOR_DQ`].
    pub poor: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub include_outliers: bool,
    pub conditions: Vec<ConditionSummary>,
}

impl Summary {
    pub fn get(&self, condition: Condition) -> Option<&ConditionSummary> {
        self.conditions.iter().find(|c| c.condition == condition)
    }
}

fn moments_of(
    label: Condition,
    values: impl Iterator<Item = f64>,
) -> Result<(f64, f64), StatsError> {
    let g = GroupSample::new(label.as_str(), values.collect())?;
    Ok((g.mean(), g.sample_std()))
}

/// Records grouped by condition, checked for a single configuration.
fn grouped(records: &[TrialRecord]) -> Result<BTreeMap<Condition, Vec<&TrialRecord>>, StatsError> {
    let Some(first) = records.first() else {
        return Err(StatsError::EmptyInput);
    };
    let mut fingerprints = vec![first.config_fingerprint.clone()];
    for r in records {
        if !fingerprints.contains(&r.config_fingerprint) {
            fingerprints.push(r.config_fingerprint.clone());
        }
    }
    if fingerprints.len() > 1 {
        return Err(StatsError::MixedFingerprints(fingerprints));
    }
    let mut map: BTreeMap<Condition, Vec<&TrialRecord>> = BTreeMap::new();
    for r in records {
        map.entry(r.condition).or_default().push(r);
    }
    Ok(map)
}

fn selected<'a>(all: &[&'a TrialRecord], include_outliers: bool) -> Vec<&'a TrialRecord> {
    all.iter()
        .copied()
        .filter(|r| include_outliers || !(r.outlier || r.status == TrialStatus::Failed))
        .collect()
}

/// Per-condition means and standard deviations. Outlier-flagged and failed
/// records are dropped unless `include_outliers`. Conditions left with no
/// records are omitted.
pub fn summarize(records: &[TrialRecord], include_outliers: bool) -> Result<Summary, StatsError> {
    let groups = grouped(records)?;
    if records.iter().all(|r| r.status == TrialStatus::Failed) {
        return Err(StatsError::NoUsableTrials);
    }
    let mut conditions = Vec::new();
    for (condition, all) in &groups {
        let chosen = selected(all, include_outliers);
        if chosen.is_empty() {
            continue;
        }
        let t2u = GroupSample::new(
            condition.as_str(),
            chosen.iter().map(|r| r.t2u_secs).collect(),
        )?;
        let dq = GroupSample::new(condition.as_str(), chosen.iter().map(|r| r.dq.dq).collect())?;
        let actionable = chosen.iter().filter(|r| r.actionable).count();
        let (validity_mean, validity_std) =
            moments_of(*condition, chosen.iter().map(|r| r.dq.validity))?;
        let (specificity_mean, specificity_std) =
            moments_of(*condition, chosen.iter().map(|r| r.dq.specificity))?;
        let (correctness_mean, correctness_std) =
            moments_of(*condition, chosen.iter().map(|r| r.dq.correctness))?;
        let (actions_mean, _) =
            moments_of(*condition, chosen.iter().map(|r| r.actions_count() as f64))?;
        conditions.push(ConditionSummary {
            condition: *condition,
            label: condition.label().to_string(),
            n: chosen.len(),
            n_total: all.len(),
            n_failed: all
                .iter()
                .filter(|r| r.status == TrialStatus::Failed)
                .count(),
            n_outliers: all.iter().filter(|r| r.outlier).count(),
            t2u_mean: t2u.mean(),
            t2u_std: t2u.sample_std(),
            t2u_ci: confidence_interval(&t2u, 0.95).ok(),
            dq_mean: dq.mean(),
            dq_std: dq.sample_std(),
            dq_ci: confidence_interval(&dq, 0.95).ok(),
            validity_mean,
            validity_std,
            specificity_mean,
            specificity_std,
            correctness_mean,
            correctness_std,
            actions_mean,
            actionable,
            actionable_fraction: actionable as f64 / chosen.len() as f64,
            poor: chosen.iter().filter(|r| r.dq.dq < POOR_DQ).count(),
        });
    }
    Ok(Summary {
        include_outliers,
        conditions,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalysisOptions {
    /// Welch's t-test instead of the pooled-variance test.
    pub welch: bool,
    pub family_alpha: f64,
    /// Make the outlier-included variant primary.
    pub include_outliers: bool,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        AnalysisOptions {
            welch: false,
            family_alpha: FAMILY_ALPHA,
            include_outliers: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricTests {
    pub metric: String,
    pub anova: Option<TestResult>,
    pub pairwise: Vec<TestResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisVariant {
    pub summary: Summary,
    pub t2u: MetricTests,
    pub dq: MetricTests,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleExcerpt {
    pub condition: Condition,
    pub trial_id: String,
    pub summary: String,
    pub actions: Vec<String>,
    pub dq: DqBreakdown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub schema: String,
    pub version: u32,
    pub config_fingerprint: String,
    pub options: AnalysisOptions,
    /// Bonferroni-corrected level applied to each pairwise test.
    pub pairwise_alpha: f64,
    /// Outlier-excluded unless `options.include_outliers`.
    pub primary: AnalysisVariant,
    /// The other outlier policy.
    pub alternate: AnalysisVariant,
    pub examples: Vec<ExampleExcerpt>,
    pub notices: Vec<String>,
}

fn metric_tests(
    metric: &str,
    groups: &[GroupSample],
    options: &AnalysisOptions,
    notices: &mut Vec<String>,
    variant: &str,
) -> Result<MetricTests, StatsError> {
    let usable: Vec<&GroupSample> = groups.iter().filter(|g| g.n() >= 2).collect();
    for g in groups.iter().filter(|g| g.n() < 2) {
        notices.push(format!(
            "{variant}: {} has {} {metric} value(s); excluded from hypothesis tests",
            g.label(),
            g.n()
        ));
    }
    let anova = if usable.len() >= 2 {
        let owned: Vec<GroupSample> = usable.iter().map(|g| (*g).clone()).collect();
        Some(one_way_anova(&owned)?)
    } else {
        notices.push(format!(
            "{variant}: ANOVA on {metric} skipped, fewer than two conditions with data"
        ));
        None
    };
    let pairs: Vec<(usize, usize)> = (0..usable.len())
        .flat_map(|i| (i + 1..usable.len()).map(move |j| (i, j)))
        .collect();
    let alpha = bonferroni_alpha(options.family_alpha, pairs.len());
    let mut pairwise = Vec::with_capacity(pairs.len());
    for (i, j) in pairs {
        let test = if options.welch {
            t_test_welch(usable[i], usable[j], alpha)?
        } else {
            t_test_pooled(usable[i], usable[j], alpha)?
        };
        if test.degenerate {
            notices.push(format!(
                "{variant}: {metric} {} has zero variance in both groups; statistic reported as {} and Cohen's d left undefined",
                test.label, test.statistic
            ));
        }
        pairwise.push(test);
    }
    Ok(MetricTests {
        metric: metric.to_string(),
        anova,
        pairwise,
    })
}

fn variant(
    records: &[TrialRecord],
    include_outliers: bool,
    options: &AnalysisOptions,
    notices: &mut Vec<String>,
) -> Result<AnalysisVariant, StatsError> {
    let summary = summarize(records, include_outliers)?;
    let groups = grouped(records)?;
    let name = if include_outliers {
        "with outliers"
    } else {
        "outliers excluded"
    };
    let mut t2u = Vec::new();
    let mut dq = Vec::new();
    for (condition, all) in &groups {
        let chosen = selected(all, include_outliers);
        if chosen.is_empty() {
            continue;
        }
        t2u.push(GroupSample::new(
            condition.as_str(),
            chosen.iter().map(|r| r.t2u_secs).collect(),
        )?);
        dq.push(GroupSample::new(
            condition.as_str(),
            chosen.iter().map(|r| r.dq.dq).collect(),
        )?);
    }
    Ok(AnalysisVariant {
        summary,
        t2u: metric_tests("T2U", &t2u, options, notices, name)?,
        dq: metric_tests("DQ", &dq, options, notices, name)?,
    })
}

/// Summaries, ANOVA, Bonferroni-corrected pairwise tests, confidence
/// intervals and effect sizes, with and without outliers.
pub fn analyze(
    records: &[TrialRecord],
    options: &AnalysisOptions,
) -> Result<AnalysisReport, StatsError> {
    let groups = grouped(records)?;
    let mut notices = Vec::new();
    if groups.len() == 1 {
        notices.push(format!(
            "only {} present; between-condition tests skipped",
            groups.keys().next().expect("one group")
        ));
    }
    let primary = variant(records, options.include_outliers, options, &mut notices)?;
    let alternate = variant(records, !options.include_outliers, options, &mut notices)?;
    let examples = groups
        .values()
        .filter_map(|all| {
            all.iter()
                .find(|r| !r.outlier && r.status != TrialStatus::Failed)
        })
        .filter_map(|r| {
            let brief = r.brief.as_ref()?;
            Some(ExampleExcerpt {
                condition: r.condition,
                trial_id: r.trial_id.clone(),
                summary: brief.summary.clone(),
                actions: brief.actions.iter().map(|a| a.text.clone()).collect(),
                dq: r.dq.clone(),
            })
        })
        .collect();
    let pairs = primary.dq.pairwise.len();
    Ok(AnalysisReport {
        schema: ANALYSIS_SCHEMA.to_string(),
        version: 1,
        config_fingerprint: records[0].config_fingerprint.clone(),
        options: *options,
        pairwise_alpha: bonferroni_alpha(options.family_alpha, pairs),
        primary,
        alternate,
        examples,
        notices,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::MockBackend;
    use crate::pipelines::CallContext;
    use crate::runner::{flag_outliers, run_condition, Experiment, RunConfig};

    fn run(conditions: &[Condition], trials: usize) -> Vec<TrialRecord> {
        let e = Experiment::new(RunConfig {
            trials_per_condition: trials,
            ..RunConfig::default()
        })
        .unwrap();
        let backend = MockBackend::new(e.mock_script.clone().unwrap());
        let ctx = CallContext::new(&backend);
        let mut out = Vec::new();
        for &c in conditions {
            let mut rs = run_condition(&e, &ctx, c, |_| Ok(())).unwrap();
            flag_outliers(&mut rs, 3.5).unwrap();
            out.extend(rs);
        }
        out
    }

    #[test]
    fn empty_input() {
        assert!(matches!(summarize(&[], false), Err(StatsError::EmptyInput)));
    }

    #[test]
    fn mixed_fingerprints_refused() {
        let mut rs = run(&[Condition::C3], 4);
        rs[3].config_fingerprint = "different".into();
        assert!(
            matches!(summarize(&rs, false), Err(StatsError::MixedFingerprints(f)) if f.len() == 2)
        );
        assert!(analyze(&rs, &AnalysisOptions::default()).is_err());
    }

    #[test]
    fn only_failed_trials() {
        let mut rs = run(&[Condition::C2], 3);
        for r in &mut rs {
            r.status = TrialStatus::Failed;
        }
        assert!(matches!(
            summarize(&rs, true),
            Err(StatsError::NoUsableTrials)
        ));
    }

    #[test]
    fn c3_summary_is_exact() {
        let rs = run(&[Condition::C3], 10);
        let s = summarize(&rs, false).unwrap();
        let c3 = s.get(Condition::C3).unwrap();
        assert_eq!(c3.n, 10);
        assert_eq!(c3.dq_std, 0.0);
        assert!((c3.dq_mean - 0.692).abs() < 1e-3);
        assert_eq!(c3.actions_mean, 3.0);
        assert_eq!(c3.actionable, 10);
        assert_eq!(c3.dq_ci, Some((c3.dq_mean, c3.dq_mean)));
    }

    #[test]
    fn single_condition_skips_anova() {
        let rs = run(&[Condition::C1], 5);
        let a = analyze(&rs, &AnalysisOptions::default()).unwrap();
        assert!(a.primary.dq.anova.is_none());
        assert!(a.primary.dq.pairwise.is_empty());
        assert!(a.notices.iter().any(|n| n.contains("only C1 present")));
        assert_eq!(a.primary.summary.conditions.len(), 1);
    }

    #[test]
    fn three_conditions_give_three_pairs() {
        let rs = run(&Condition::ALL, 8);
        let a = analyze(&rs, &AnalysisOptions::default()).unwrap();
        let labels: Vec<&str> = a
            .primary
            .dq
            .pairwise
            .iter()
            .map(|t| t.label.as_str())
            .collect();
        assert_eq!(labels, ["C1 vs C2", "C1 vs C3", "C2 vs C3"]);
        assert!((a.pairwise_alpha - 0.05 / 3.0).abs() < 1e-15);
        assert_eq!(a.examples.len(), 3);
        let c1_c3 = &a.primary.dq.pairwise[1];
        assert!(c1_c3.degenerate && c1_c3.effect_size_d.is_none());
        let json = serde_json::to_string(&a).unwrap();
        let back: AnalysisReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, a);
    }
}
