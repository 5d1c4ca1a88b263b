//! Runs the single-agent condition with its scripted 4009 s stall and shows
//! the modified z-scores that flag it.
//!
//! `cargo run --example outlier_detection`

use incident_eval::backend::MockBackend;
use incident_eval::pipelines::{CallContext, Condition};
use incident_eval::runner::{flag_outliers, modified_z_scores, run_condition, Experiment};
use incident_eval::stats::summarize;

fn main() {
    let exp = Experiment::bundled();
    let backend = MockBackend::new(exp.mock_script.clone().unwrap());
    let limiter = exp.rate_limiter();
    let ctx = CallContext::new(&backend).with_limiter(&limiter);
    let mut records = run_condition(&exp, &ctx, Condition::C2, |_| Ok(())).unwrap();

    let usable: Vec<_> = records.iter().filter(|r| !r.is_failed()).collect();
    let t2u: Vec<f64> = usable.iter().map(|r| r.t2u_secs).collect();
    let z = modified_z_scores(&t2u);
    let mut ranked: Vec<(f64, &str, f64)> = usable
        .iter()
        .zip(&z)
        .map(|(r, z)| (*z, r.trial_id.as_str(), r.t2u_secs))
        .collect();
    ranked.sort_by(|a, b| b.0.abs().total_cmp(&a.0.abs()));
    println!("largest |z| among completed trials:");
    for (z, id, t) in ranked.iter().take(5) {
        println!("  {id}  T2U {t:>7.2} s  z {z:>6.2}");
    }
    for r in records.iter().filter(|r| r.is_failed()) {
        println!(
            "failed: {} after {:.0} s ({})",
            r.trial_id,
            r.t2u_secs,
            r.error.as_deref().unwrap_or("")
        );
    }

    let flagged = flag_outliers(&mut records, exp.config.outlier_threshold).unwrap();
    println!("flagged: {:?}", flagged[&Condition::C2]);
    for include in [false, true] {
        let s = summarize(&records, include).unwrap();
        let c2 = s.get(Condition::C2).unwrap();
        println!(
            "include_outliers={include}: n = {}, T2U {:.2} ± {:.2} s, DQ {:.3} ± {:.3}",
            c2.n, c2.t2u_mean, c2.t2u_std, c2.dq_mean, c2.dq_std
        );
    }
}
