//! Markdown and CSV rendering of an analysis document.
//!
//! Seconds are printed with two decimals and DQ components with three.
//! Output depends only on the analysis document.

use std::fmt::Write as _;

use serde::Serialize;

use crate::pipelines::Condition;
use crate::scoring::is_actionable;
use crate::stats::{
    format_p_value, AnalysisReport, AnalysisVariant, ConditionSummary, MetricTests, TestKind,
    TestResult,
};

/// Improvement of a C3 component over C2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Ratio {
    /// C3 / C2.
    Times(f64),
    /// Relative increase in percent.
    Percent(f64),
    /// C2 is zero and C3 is not.
    Unbounded,
    /// No difference.
    Equal,
}

impl Ratio {
    pub fn times(c2: f64, c3: f64) -> Self {
        if c2 == c3 {
            Ratio::Equal
        } else if c2 == 0.0 {
            Ratio::Unbounded
        } else {
            Ratio::Times(c3 / c2)
        }
    }

    pub fn percent(c2: f64, c3: f64) -> Self {
        match Ratio::times(c2, c3) {
            Ratio::Times(r) => Ratio::Percent((r - 1.0) * 100.0),
            other => other,
        }
    }
}

impl std::fmt::Display for Ratio {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Ratio::Times(r) => write!(f, "{r:.0}×"),
            Ratio::Percent(p) => write!(f, "{p:.1}%"),
            Ratio::Unbounded => f.write_str("∞†"),
            Ratio::Equal => f.write_str("---"),
        }
    }
}

fn statistic(v: f64) -> String {
    if v == f64::INFINITY {
        "∞".into()
    } else if v == f64::NEG_INFINITY {
        "-∞".into()
    } else {
        format!("{v:.2}")
    }
}

fn fraction(count: usize, n: usize) -> String {
    let pct = if n == 0 {
        0.0
    } else {
        100.0 * count as f64 / n as f64
    };
    if pct == 0.0 || pct == 100.0 {
        format!("{count}/{n} ({pct:.0}%)")
    } else {
        format!("{count}/{n} ({pct:.1}%)")
    }
}

fn ci(range: Option<(f64, f64)>, decimals: usize) -> String {
    match range {
        Some((lo, hi)) => format!("[{lo:.decimals$}, {hi:.decimals$}]"),
        None => "n/a".into(),
    }
}

fn performance_table(out: &mut String, variant: &AnalysisVariant) {
    out.push_str(
        "| Condition | N | Mean T2U (s) | Std T2U (s) | Mean DQ | Std DQ | Actions (mean) |\n\
         |---|---:|---:|---:|---:|---:|---:|\n",
    );
    for c in &variant.summary.conditions {
        let _ = writeln!(
            out,
            "| {} | {} | {:.2} | {:.2} | {:.3} | {:.3} | {:.2} |",
            c.label, c.n, c.t2u_mean, c.t2u_std, c.dq_mean, c.dq_std, c.actions_mean
        );
    }
}

fn component_table(out: &mut String, c2: &ConditionSummary, c3: &ConditionSummary) -> bool {
    out.push_str(
        "| Component | C2 Mean | C3 Mean | Improvement |\n\
         |---|---:|---:|---:|\n",
    );
    let rows = [
        (
            "Validity",
            c2.validity_mean,
            c2.validity_std,
            c3.validity_mean,
            c3.validity_std,
            false,
        ),
        (
            "Specificity",
            c2.specificity_mean,
            c2.specificity_std,
            c3.specificity_mean,
            c3.specificity_std,
            false,
        ),
        (
            "Correctness",
            c2.correctness_mean,
            c2.correctness_std,
            c3.correctness_mean,
            c3.correctness_std,
            false,
        ),
        (
            "Overall DQ",
            c2.dq_mean,
            c2.dq_std,
            c3.dq_mean,
            c3.dq_std,
            true,
        ),
    ];
    let mut unbounded = false;
    for (name, m2, s2, m3, s3, percent) in rows {
        let ratio = if percent {
            Ratio::percent(m2, m3)
        } else {
            Ratio::times(m2, m3)
        };
        unbounded |= ratio == Ratio::Unbounded;
        let _ = writeln!(
            out,
            "| {name} | {m2:.3} ± {s2:.3} | {m3:.3} ± {s3:.3} | {ratio} |"
        );
    }
    unbounded
}

fn actionability_table(out: &mut String, variant: &AnalysisVariant) {
    let conds = &variant.summary.conditions;
    out.push_str("| Metric |");
    for c in conds {
        let _ = write!(out, " {} |", c.condition);
    }
    out.push_str("\n|---|");
    for _ in conds {
        out.push_str("---:|");
    }
    out.push_str("\n| Trials with DQ > 0.5 |");
    for c in conds {
        let mark = if c.n < c.n_total { "*" } else { "" };
        let _ = write!(out, " {}{mark} |", fraction(c.actionable, c.n));
    }
    out.push_str("\n| Trials with DQ < 0.3 |");
    for c in conds {
        let _ = write!(out, " {} |", fraction(c.poor, c.n));
    }
    out.push_str("\n| Consistent quality |");
    for c in conds {
        let _ = write!(out, " {} |", if c.dq_std == 0.0 { "Yes" } else { "No" });
    }
    out.push('\n');
    for c in conds.iter().filter(|c| c.n < c.n_total) {
        let _ = writeln!(
            out,
            "\n\\* {} reports {} of {} trials; {} outlier trial(s) removed.",
            c.condition,
            c.n,
            c.n_total,
            c.n_total - c.n
        );
    }
}

fn test_name(t: &TestResult) -> &'static str {
    match t.kind {
        TestKind::Anova => "F",
        TestKind::TTest | TestKind::WelchTTest => "t",
    }
}

fn tests_section(out: &mut String, tests: &MetricTests) {
    let _ = writeln!(out, "#### {}\n", tests.metric);
    match &tests.anova {
        Some(a) => {
            let _ = writeln!(
                out,
                "One-way ANOVA: F({}) = {}, p {}{}\n",
                a.df,
                statistic(a.statistic),
                p_phrase(a.p_value),
                if a.degenerate {
                    " (zero within-group variance)"
                } else {
                    ""
                }
            );
        }
        None => out.push_str("One-way ANOVA: not run.\n\n"),
    }
    if tests.pairwise.is_empty() {
        return;
    }
    let alpha = tests.pairwise[0].alpha_effective;
    let _ = writeln!(
        out,
        "| Comparison | {} | df | p | Significant (α = {alpha:.4}) | Cohen's d |\n|---|---:|---:|---:|:---:|---:|",
        test_name(&tests.pairwise[0])
    );
    for t in &tests.pairwise {
        let d = match t.effect_size_d {
            Some(d) => format!("{d:.2}"),
            None => "undefined".into(),
        };
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} | {d} |",
            t.label,
            statistic(t.statistic),
            t.df,
            format_p_value(t.p_value),
            if t.significant { "yes" } else { "no" }
        );
    }
    out.push('\n');
}

fn p_phrase(p: f64) -> String {
    let s = format_p_value(p);
    if s.starts_with('<') {
        s
    } else {
        format!("= {s}")
    }
}

fn interval_table(out: &mut String, variant: &AnalysisVariant) {
    out.push_str("| Condition | T2U 95% CI (s) | DQ 95% CI |\n|---|---|---|\n");
    for c in &variant.summary.conditions {
        let _ = writeln!(
            out,
            "| {} | {} | {} |",
            c.condition,
            ci(c.t2u_ci, 2),
            ci(c.dq_ci, 3)
        );
    }
    out.push('\n');
}

fn variant_stats(out: &mut String, variant: &AnalysisVariant) {
    interval_table(out, variant);
    tests_section(out, &variant.dq);
    tests_section(out, &variant.t2u);
}

pub fn render_markdown(report: &AnalysisReport) -> String {
    let mut out = String::new();
    let primary = &report.primary;
    out.push_str("# Incident-response evaluation report\n\n");
    let fp = report
        .config_fingerprint
        .get(..12)
        .unwrap_or(&report.config_fingerprint);
    let _ = writeln!(out, "Configuration fingerprint: `{fp}`  ");
    let _ = writeln!(
        out,
        "Pairwise tests: {}, Bonferroni-corrected α = {:.4}\n",
        if report.options.welch {
            "Welch's t-test"
        } else {
            "Student's pooled-variance t-test"
        },
        report.pairwise_alpha
    );

    let policy = |v: &AnalysisVariant| {
        if v.summary.include_outliers {
            "outliers included"
        } else {
            "outliers removed"
        }
    };
    let _ = writeln!(out, "## Aggregated performance ({})\n", policy(primary));
    performance_table(&mut out, primary);
    out.push('\n');

    let c2 = primary.summary.get(Condition::C2);
    let c3 = primary.summary.get(Condition::C3);
    if let (Some(c2), Some(c3)) = (c2, c3) {
        out.push_str("## Decision-quality components\n\n");
        if component_table(&mut out, c2, c3) {
            out.push_str("\n† C2 mean is exactly zero; the ratio is unbounded.\n");
        }
        out.push('\n');
    }

    out.push_str("## Actionability\n\n");
    actionability_table(&mut out, primary);
    out.push('\n');

    let _ = writeln!(out, "## Statistical tests ({})\n", policy(primary));
    variant_stats(&mut out, primary);

    let alternate = &report.alternate;
    if alternate.summary.conditions != primary.summary.conditions {
        let _ = writeln!(out, "## Alternate view ({})\n", policy(alternate));
        performance_table(&mut out, alternate);
        out.push('\n');
        variant_stats(&mut out, alternate);
    }

    if !report.examples.is_empty() {
        out.push_str("## Example outputs\n\n");
        for e in &report.examples {
            let _ = writeln!(out, "### {} ({})\n", e.condition.label(), e.trial_id);
            if e.actions.is_empty() {
                out.push_str("No actions.\n\n");
            } else {
                out.push_str("```\n");
                for a in &e.actions {
                    let _ = writeln!(out, "- {a}");
                }
                out.push_str("```\n\n");
            }
            let _ = writeln!(
                out,
                "DQ {:.3} (validity {:.3}, specificity {:.3}, correctness {:.3}); actionable: {}\n",
                e.dq.dq,
                e.dq.validity,
                e.dq.specificity,
                e.dq.correctness,
                if is_actionable(e.dq.dq) { "yes" } else { "no" }
            );
        }
    }

    if !report.notices.is_empty() {
        out.push_str("## Notices\n\n");
        for n in &report.notices {
            let _ = writeln!(out, "- {n}");
        }
    }
    out
}

#[derive(Serialize)]
struct CsvRow<'a> {
    condition: &'a str,
    n: usize,
    n_total: usize,
    t2u_mean: f64,
    t2u_std: f64,
    dq_mean: f64,
    dq_std: f64,
    validity_mean: f64,
    specificity_mean: f64,
    correctness_mean: f64,
    actions_mean: f64,
    actionable: usize,
    actionable_fraction: f64,
}

/// One row per condition of the primary summary.
pub fn render_csv(report: &AnalysisReport) -> Result<String, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for c in &report.primary.summary.conditions {
        w.serialize(CsvRow {
            condition: c.condition.as_str(),
            n: c.n,
            n_total: c.n_total,
            t2u_mean: c.t2u_mean,
            t2u_std: c.t2u_std,
            dq_mean: c.dq_mean,
            dq_std: c.dq_std,
            validity_mean: c.validity_mean,
            specificity_mean: c.specificity_mean,
            correctness_mean: c.correctness_mean,
            actions_mean: c.actions_mean,
            actionable: c.actionable,
            actionable_fraction: c.actionable_fraction,
        })?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
