//! Draws simulated manual-review durations and prints their distribution.
//!
//! `cargo run --example baseline_timing -- [draws] [seed]`

use incident_eval::pipelines::run_baseline;
use incident_eval::stats::{confidence_interval, GroupSample};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let mut args = std::env::args().skip(1);
    let draws: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(116);
    let seed: u64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(42);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let secs: Vec<f64> = (0..draws)
        .map(|_| run_baseline(&mut rng).1.as_secs_f64())
        .collect();
    let g = GroupSample::new("C1", secs.clone()).unwrap();
    let (lo, hi) = confidence_interval(&g, 0.95).unwrap();
    println!(
        "{draws} draws (seed {seed}): mean {:.2} s, std {:.2} s, 95% CI [{lo:.2}, {hi:.2}]",
        g.mean(),
        g.sample_std()
    );

    let mut bins = [0usize; 8];
    for s in &secs {
        let b = (((s - 100.0) / 5.0).floor().max(0.0) as usize).min(bins.len() - 1);
        bins[b] += 1;
    }
    let peak = *bins.iter().max().unwrap_or(&1) as f64;
    for (i, n) in bins.iter().enumerate() {
        let bar = "#".repeat((40.0 * *n as f64 / peak).round() as usize);
        println!("{:>5}-{:<5} {bar} {n}", 100 + 5 * i, 105 + 5 * i);
    }
}
