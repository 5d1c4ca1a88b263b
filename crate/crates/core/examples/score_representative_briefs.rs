//! Scores the two representative briefs and prints the per-action rubric.
//!
//! `cargo run --example score_representative_briefs`

use incident_eval::pipelines::{Brief, Condition};
use incident_eval::scoring::{default_ground_truth, DqBreakdown, Scorer};

fn show(name: &str, b: &DqBreakdown, scorer: &Scorer) {
    println!("{name}");
    for a in &b.per_action {
        println!(
            "  {:<60} valid={:<5} spec={:.2} corr={:.2} (overlap {:.2})",
            a.text, a.valid, a.spec_tier, a.corr_tier, a.overlap_ratio
        );
    }
    println!(
        "  V={:.3} S={:.4} R={:.4} DQ={:.3} actionable={}\n",
        b.validity,
        b.specificity,
        b.correctness,
        b.dq,
        scorer.is_actionable(b.dq)
    );
}

fn main() {
    let scorer = Scorer::default();
    let truth = default_ground_truth();

    let multi = Brief::from_actions(
        Condition::C3,
        &[
            "Rollback auth-service to v2.3.0 using kubectl rollout undo",
            "Verify database connection pool max_connections setting",
            "Monitor error rates for 5 minutes post-rollback",
        ],
    );
    let single = Brief::from_actions(
        Condition::C2,
        &["Investigate recent changes", "Review system metrics"],
    );

    show(
        "multi-agent brief",
        &scorer.score_dq(&multi, &truth),
        &scorer,
    );
    show(
        "single-agent brief",
        &scorer.score_dq(&single, &truth),
        &scorer,
    );

    // Same briefs with stopwords kept in the overlap ratio.
    let raw = Scorer::new(scorer.config().clone().without_stopwords()).unwrap();
    let raw_truth = raw
        .ground_truth(&incident_eval::scenario::IncidentScenario::auth_regression())
        .unwrap();
    show(
        "multi-agent brief, no stopwords",
        &raw.score_dq(&multi, &raw_truth),
        &raw,
    );
}
