//! The whole offline pipeline in one process: run every condition against
//! the mock backend, write the store, analyze it and print the Markdown
//! report.
//!
//! `cargo run --example full_reproduction -- [store path]`

use std::path::PathBuf;

use incident_eval::pipelines::CallContext;
use incident_eval::report::render_markdown;
use incident_eval::runner::{
    read_store, run_experiment, Experiment, RunConfig, StoreHeader, StoreWriter,
};
use incident_eval::stats::{analyze, AnalysisOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let store = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("incident-eval-trials.jsonl"));
    let exp = Experiment::new(RunConfig {
        store: store.clone(),
        ..RunConfig::default()
    })?;

    let backend = exp.backend()?;
    let limiter = exp.rate_limiter();
    let ctx = CallContext::new(backend.as_ref()).with_limiter(&limiter);
    let header = StoreHeader::new(&exp.config, &exp.fingerprint, backend.id());
    let mut writer = StoreWriter::create(&store, &header)?;
    run_experiment(&exp, &ctx, &mut writer, |r| {
        eprintln!(
            "{}: {} trials, outliers {:?}",
            r.condition, r.trials, r.flagged
        );
    })?;
    drop(writer);

    let contents = read_store(&store)?;
    let report = analyze(&contents.records, &AnalysisOptions::default())?;
    print!("{}", render_markdown(&report));
    eprintln!("store: {}", store.display());
    Ok(())
}
