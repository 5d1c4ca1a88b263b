//! Hypothesis tests on groups rebuilt from published-style summary
//! statistics (mean, std, n).
//!
//! `cargo run --example statistics`

use incident_eval::stats::{
    bonferroni_alpha, cohens_d, format_p_value, one_way_anova, t_test_pooled, t_test_welch,
    GroupSample,
};

fn main() {
    let n = 116;
    let c1 = GroupSample::from_moments("C1", 0.000, 0.000, n).unwrap();
    let c2 = GroupSample::from_moments("C2", 0.403, 0.023, n).unwrap();
    let c3 = GroupSample::from_moments("C3", 0.692, 0.000, n).unwrap();

    let anova = one_way_anova(&[c1.clone(), c2.clone(), c3.clone()]).unwrap();
    println!(
        "ANOVA: F({}) = {:.1}, p {}",
        anova.df,
        anova.statistic,
        format_p_value(anova.p_value)
    );

    let alpha = bonferroni_alpha(0.05, 3);
    println!("pairwise α = {alpha:.4}");
    for (a, b) in [(&c1, &c2), (&c1, &c3), (&c2, &c3)] {
        let pooled = t_test_pooled(a, b, alpha).unwrap();
        let welch = t_test_welch(a, b, alpha).unwrap();
        let d = match cohens_d(a, b) {
            Ok(d) => format!("{d:.2}"),
            Err(e) => format!("undefined ({e})"),
        };
        println!(
            "{}: t = {:.2} (df {}), Welch t = {:.2} (df {}), p {}, d = {d}",
            pooled.label,
            pooled.statistic,
            pooled.df,
            welch.statistic,
            welch.df,
            format_p_value(pooled.p_value),
        );
    }
}
