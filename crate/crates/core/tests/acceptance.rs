//! Acceptance suite. Each criterion prints one PASS/FAIL line to stderr
//! (bypassing the test harness capture) and the test fails if any criterion
//! does.

use std::io::Write;
use std::time::{Duration, Instant};

use incident_eval::backend::{AgentRole, MockBackend, MockScript, ScriptOverride};
use incident_eval::cli;
use incident_eval::pipelines::{run_baseline, ActionItem, Brief, CallContext, Condition};
use incident_eval::runner::{flag_outliers, run_condition, Experiment, TrialRecord};
use incident_eval::scoring::{default_ground_truth, Scorer};
use incident_eval::stats::{
    cohens_d, one_way_anova, regularized_incomplete_beta, t_test_pooled, AnalysisReport,
    GroupSample, StatsError,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

const C3_BRIEF: [&str; 3] = [
    "Rollback auth-service to v2.3.0 using kubectl rollout undo",
    "Verify database connection pool max_connections setting",
    "Monitor error rates for 5 minutes post-rollback",
];
const C2_BRIEF: [&str; 2] = ["Investigate recent changes", "Review system metrics"];

fn check(cond: bool, what: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(what.into())
    }
}

fn within(budget: Duration, started: Instant) -> Result<(), String> {
    let took = started.elapsed();
    check(took < budget, format!("took {took:?}, budget {budget:?}"))
}

fn run_mock_condition(exp: &Experiment, condition: Condition) -> Vec<TrialRecord> {
    let backend = MockBackend::new(exp.mock_script.clone().expect("mock mode"));
    let limiter = exp.rate_limiter();
    let ctx = CallContext::new(&backend).with_limiter(&limiter);
    run_condition(exp, &ctx, condition, |_| Ok(())).expect("in-memory sink never fails")
}

fn reference_brief_scoring() -> Outcome {
    let started = Instant::now();
    let scorer = Scorer::default();
    let truth = default_ground_truth();
    let c3 = scorer.score_dq(&Brief::from_actions(Condition::C3, &C3_BRIEF), &truth);
    let c2 = scorer.score_dq(&Brief::from_actions(Condition::C2, &C2_BRIEF), &truth);
    check(
        (c3.specificity - 0.5567).abs() <= 0.0005,
        format!("C3 specificity {}", c3.specificity),
    )?;
    check(
        (c3.correctness - 0.4167).abs() <= 0.0005,
        format!("C3 correctness {}", c3.correctness),
    )?;
    check((c3.dq - 0.692).abs() <= 0.001, format!("C3 DQ {}", c3.dq))?;
    check((c2.dq - 0.400).abs() <= 0.001, format!("C2 DQ {}", c2.dq))?;
    within(Duration::from_secs(1), started)?;
    Ok(format!(
        "C3 S={:.4} R={:.4} DQ={:.4}; C2 DQ={:.4}",
        c3.specificity, c3.correctness, c3.dq, c2.dq
    ))
}

fn zero_variance_c3() -> Outcome {
    let started = Instant::now();
    let exp = Experiment::bundled();
    let records = run_mock_condition(&exp, Condition::C3);
    check(records.len() == 116, format!("{} records", records.len()))?;
    let first = &records[0].dq;
    for r in &records {
        let same = r.dq.dq.to_bits() == first.dq.to_bits()
            && r.dq.validity.to_bits() == first.validity.to_bits()
            && r.dq.specificity.to_bits() == first.specificity.to_bits()
            && r.dq.correctness.to_bits() == first.correctness.to_bits();
        check(
            same,
            format!("{} differs from {}", r.trial_id, records[0].trial_id),
        )?;
    }
    let dqs: Vec<f64> = records.iter().map(|r| r.dq.dq).collect();
    let g = GroupSample::new("C3", dqs).map_err(|e| e.to_string())?;
    check(g.sample_std() == 0.0, format!("std {}", g.sample_std()))?;
    check(
        format!("{:.3}", g.mean()) == "0.692",
        format!("mean {}", g.mean()),
    )?;
    let actionable = records.iter().filter(|r| r.actionable).count();
    check(actionable == 116, format!("{actionable}/116 actionable"))?;
    within(Duration::from_secs(60), started)?;
    Ok(format!(
        "mean {:.3}, std exactly 0, {actionable}/116 actionable",
        g.mean()
    ))
}

fn baseline_distribution() -> Outcome {
    let started = Instant::now();
    let exp = Experiment::bundled();
    let records = run_mock_condition(&exp, Condition::C1);
    let t2u: Vec<f64> = records.iter().map(|r| r.t2u_secs).collect();
    let g = GroupSample::new("C1", t2u).map_err(|e| e.to_string())?;
    check(
        (g.mean() - 120.0).abs() <= 2.0,
        format!("116-trial mean {}", g.mean()),
    )?;
    check(
        (4.5..=8.5).contains(&g.sample_std()),
        format!("116-trial std {}", g.sample_std()),
    )?;

    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let n = 100_000;
    let total: f64 = (0..n).map(|_| run_baseline(&mut rng).1.as_secs_f64()).sum();
    let big_mean = total / n as f64;
    check(
        (big_mean - 120.0).abs() <= 0.1,
        format!("100k mean {big_mean}"),
    )?;
    within(Duration::from_secs(10), started)?;
    Ok(format!(
        "116 trials: mean {:.2} s, std {:.2} s; 100k draws: mean {big_mean:.3} s",
        g.mean(),
        g.sample_std()
    ))
}

fn outlier_pipeline() -> Outcome {
    let started = Instant::now();
    let mut exp = Experiment::bundled();
    let mut script = MockScript::bundled();
    script.overrides = vec![ScriptOverride {
        role: AgentRole::Single,
        trial: 28,
        text: None,
        latency_secs: Some(4009.0),
    }];
    exp.mock_script = Some(script);
    let mut records = run_mock_condition(&exp, Condition::C2);
    let flagged = flag_outliers(&mut records, exp.config.outlier_threshold)
        .map_err(|e| e.to_string())?
        .remove(&Condition::C2)
        .unwrap_or_default();
    check(flagged == ["C2_028"], format!("flagged {flagged:?}"))?;
    let summary = incident_eval::stats::summarize(&records, false).map_err(|e| e.to_string())?;
    let c2 = summary.get(Condition::C2).ok_or("no C2 summary")?;
    check(c2.n == 115, format!("excluded summary n = {}", c2.n))?;
    within(Duration::from_secs(60), started)?;
    Ok(format!(
        "flagged {flagged:?}; excluded summary n = {}",
        c2.n
    ))
}

fn anova_oracle(groups: &[Vec<f64>]) -> f64 {
    let k = groups.len() as f64;
    let n: f64 = groups.iter().map(|g| g.len() as f64).sum();
    let grand = groups.iter().flatten().sum::<f64>() / n;
    let mut ssb = 0.0;
    let mut ssw = 0.0;
    for g in groups {
        let m = g.iter().sum::<f64>() / g.len() as f64;
        ssb += g.len() as f64 * (m - grand).powi(2);
        ssw += g.iter().map(|x| (x - m).powi(2)).sum::<f64>();
    }
    (ssb / (k - 1.0)) / (ssw / (n - k))
}

fn pooled_t_oracle(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let ma = a.iter().sum::<f64>() / na;
    let mb = b.iter().sum::<f64>() / nb;
    let ssa: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let ssb: f64 = b.iter().map(|x| (x - mb).powi(2)).sum();
    let sp2 = (ssa + ssb) / (na + nb - 2.0);
    (ma - mb) / (sp2 * (1.0 / na + 1.0 / nb)).sqrt()
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

fn statistics_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst_identity: f64 = 0.0;
    for case in 0..1000 {
        let k = rng.random_range(2..=4);
        let groups: Vec<Vec<f64>> = (0..k)
            .map(|_| {
                let n = rng.random_range(2..=12);
                (0..n).map(|_| rng.random_range(-50.0..50.0)).collect()
            })
            .collect();
        let samples: Vec<GroupSample> = groups
            .iter()
            .enumerate()
            .map(|(i, g)| GroupSample::new(format!("g{i}"), g.clone()).unwrap())
            .collect();
        let f = one_way_anova(&samples)
            .map_err(|e| format!("case {case}: {e}"))?
            .statistic;
        let f_oracle = anova_oracle(&groups);
        check(
            rel_close(f, f_oracle, 1e-9),
            format!("case {case}: F {f} vs {f_oracle}"),
        )?;

        let t = t_test_pooled(&samples[0], &samples[1], 0.05)
            .map_err(|e| format!("case {case}: {e}"))?
            .statistic;
        let t_oracle = pooled_t_oracle(&groups[0], &groups[1]);
        check(
            rel_close(t, t_oracle, 1e-9),
            format!("case {case}: t {t} vs {t_oracle}"),
        )?;

        let f2 = one_way_anova(&samples[..2]).unwrap().statistic;
        let gap = (f2 - t * t).abs() / (1.0 + f2.abs());
        worst_identity = worst_identity.max(gap);
        check(gap <= 1e-6, format!("case {case}: F {f2} vs t² {}", t * t))?;

        let a = rng.random_range(0.5..60.0);
        let b = rng.random_range(0.5..60.0);
        let x = rng.random_range(0.001..0.999);
        let lhs = regularized_incomplete_beta(a, b, x).map_err(|e| e.to_string())?;
        let rhs = 1.0 - regularized_incomplete_beta(b, a, 1.0 - x).map_err(|e| e.to_string())?;
        check(
            (lhs - rhs).abs() <= 1e-10,
            format!("I_{x}({a}, {b}) = {lhs}, reflection gives {rhs}"),
        )?;
    }
    Ok(format!(
        "1000 cases agree; worst relative F - t² gap {worst_identity:.1e}"
    ))
}

fn effect_sizes() -> Outcome {
    let c1 = GroupSample::from_moments("C1", 0.000, 0.000, 116).map_err(|e| e.to_string())?;
    let c2 = GroupSample::from_moments("C2", 0.403, 0.023, 116).map_err(|e| e.to_string())?;
    let c3 = GroupSample::from_moments("C3", 0.692, 0.000, 116).map_err(|e| e.to_string())?;
    let d = cohens_d(&c1, &c2).map_err(|e| e.to_string())?;
    check(
        (24.3..=25.3).contains(&d.abs()),
        format!("|d| C1 vs C2 = {}", d.abs()),
    )?;
    let t = t_test_pooled(&c2, &c3, 0.05)
        .map_err(|e| e.to_string())?
        .statistic;
    check(
        (t.abs() - 137.2).abs() <= 0.05 * 137.2,
        format!("|t| C2 vs C3 = {}", t.abs()),
    )?;
    let degenerate = cohens_d(&c1, &c3);
    check(
        matches!(degenerate, Err(StatsError::DegenerateVariance(_))),
        format!("C1 vs C3 d gave {degenerate:?}"),
    )?;
    let t13 = t_test_pooled(&c1, &c3, 0.05).map_err(|e| e.to_string())?;
    check(t13.degenerate, "C1 vs C3 t-test not flagged degenerate")?;
    Ok(format!(
        "|d| = {:.2}; |t| = {:.1}; C1 vs C3 d refused as degenerate",
        d.abs(),
        t.abs()
    ))
}

const WORDS: &[&str] = &[
    "rollback",
    "restart",
    "auth-service",
    "database",
    "pool",
    "connection",
    "v2.3.0",
    "v2.4.0",
    "kubectl",
    "rollout",
    "undo",
    "docker",
    "systemctl",
    "monitor",
    "metrics",
    "logs",
    "check",
    "the",
    "and",
    "to",
    "500%",
    "90%",
    "max_connections",
    "simultaneously",
    "then",
    "leak",
    "investigate",
    "recent",
    "changes",
    "review",
    "scale",
    "pods",
    "latency",
    "error",
    "rates",
    "api-gateway",
    "1.2",
    "--replicas=3",
    "CPU",
    "memory",
    "login",
    "-",
    ".",
    "!",
    "Rollback",
];

fn random_action(rng: &mut ChaCha8Rng) -> String {
    let len = rng.random_range(0..12);
    let mut parts = Vec::with_capacity(len);
    for _ in 0..len {
        if rng.random_bool(0.15) {
            let n = rng.random_range(1..8);
            parts.push(
                (0..n)
                    .map(|_| rng.random_range(0x20u8..0x7f) as char)
                    .collect::<String>(),
            );
        } else {
            parts.push(WORDS[rng.random_range(0..WORDS.len())].to_string());
        }
    }
    parts.join(" ")
}

fn scorer_properties() -> Outcome {
    let scorer = Scorer::default();
    let truth = default_ground_truth();
    let matcher = scorer.specificity_matcher();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for i in 0..10_000 {
        let n = rng.random_range(1..5);
        let actions: Vec<ActionItem> = (0..n)
            .map(|j| ActionItem {
                text: random_action(&mut rng),
                ordinal: j + 1,
            })
            .collect();
        let b = scorer.score_actions(&actions, &truth);
        for (name, v) in [
            ("validity", b.validity),
            ("specificity", b.specificity),
            ("correctness", b.correctness),
            ("dq", b.dq),
        ] {
            check((0.0..=1.0).contains(&v), format!("case {i}: {name} = {v}"))?;
        }
        check(
            b.satisfies_identity(),
            format!("case {i}: identity broken {b:?}"),
        )?;
        for a in &actions {
            let before = matcher.tier(&a.text);
            let after = matcher.tier(&format!("{} v2.3.0", a.text));
            check(
                after >= before,
                format!(
                    "case {i}: `{}` dropped from {before:?} to {after:?}",
                    a.text
                ),
            )?;
        }
    }
    Ok("10000 random briefs: components in [0,1], identity holds, tiers monotone".into())
}

fn end_to_end() -> Outcome {
    let started = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let store = dir.path().join("trials.jsonl");
    let analysis = dir.path().join("analysis.json");
    let report = dir.path().join("report.md");
    let s = |p: &std::path::Path| p.to_str().unwrap().to_string();
    let steps: [Vec<String>; 3] = [
        vec![
            "run".into(),
            "--backend".into(),
            "mock".into(),
            "--store".into(),
            s(&store),
        ],
        vec![
            "analyze".into(),
            "--store".into(),
            s(&store),
            "--out".into(),
            s(&analysis),
        ],
        vec![
            "report".into(),
            "--analysis".into(),
            s(&analysis),
            "--out".into(),
            s(&report),
        ],
    ];
    for step in steps {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let args = std::iter::once("incident-eval".to_string()).chain(step.iter().cloned());
        let code = cli::run(args, &mut out, &mut err);
        check(
            code == cli::EXIT_OK,
            format!(
                "`{}` exited {code}: {}",
                step[0],
                String::from_utf8_lossy(&err)
            ),
        )?;
    }
    let doc: AnalysisReport =
        serde_json::from_str(&std::fs::read_to_string(&analysis).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
    let pairwise = &doc.primary.dq.pairwise;
    check(
        pairwise.len() == 3,
        format!("{} pairwise DQ tests", pairwise.len()),
    )?;
    check(
        (doc.pairwise_alpha - 0.05 / 3.0).abs() < 1e-12,
        "pairwise alpha",
    )?;
    for t in pairwise {
        check(
            t.significant,
            format!("{} not significant (p = {})", t.label, t.p_value),
        )?;
    }

    let md = std::fs::read_to_string(&report).map_err(|e| e.to_string())?;
    for heading in [
        "Aggregated performance",
        "Decision-quality components",
        "Actionability",
    ] {
        check(md.contains(heading), format!("report lacks `{heading}`"))?;
    }
    let ratio = |component: &str| -> Result<f64, String> {
        let row = md
            .lines()
            .find(|l| l.starts_with(&format!("| {component} |")))
            .ok_or(format!("no {component} row"))?;
        let cell = row.split('|').nth(4).unwrap_or("").trim();
        cell.trim_end_matches('×')
            .parse::<f64>()
            .map_err(|_| format!("{component} ratio cell `{cell}`"))
    };
    let (spec, corr) = (ratio("Specificity")?, ratio("Correctness")?);
    check(spec >= 80.0, format!("specificity ratio {spec}×"))?;
    check(corr >= 140.0, format!("correctness ratio {corr}×"))?;
    within(Duration::from_secs(300), started)?;
    Ok(format!(
        "3/3 DQ pairs significant at α = {:.4}; ratios {spec}× / {corr}×; {:.2?}",
        doc.pairwise_alpha,
        started.elapsed()
    ))
}

#[test]
fn acceptance_criteria() {
    let criteria: [Criterion; 8] = [
        ("1 reference brief scoring", reference_brief_scoring),
        ("2 zero-variance multi-agent DQ", zero_variance_c3),
        ("3 baseline timing distribution", baseline_distribution),
        ("4 outlier pipeline", outlier_pipeline),
        ("5 statistics oracle equivalence", statistics_oracle),
        ("6 effect-size cross-check", effect_sizes),
        ("7 scorer property suite", scorer_properties),
        ("8 end-to-end reproduction", end_to_end),
    ];
    let mut failed = Vec::new();
    let stderr = std::io::stderr();
    for (name, criterion) in criteria {
        let line = match criterion() {
            Ok(detail) => format!("PASS  criterion {name}: {detail}\n"),
            Err(why) => {
                failed.push(name);
                format!("FAIL  criterion {name}: {why}\n")
            }
        };
        stderr.lock().write_all(line.as_bytes()).unwrap();
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
