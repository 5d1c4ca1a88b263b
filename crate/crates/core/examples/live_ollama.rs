//! One multi-agent trial against a running Ollama-compatible server.
//!
//! `INCIDENT_EVAL_BACKEND_URL=http://localhost:11434 cargo run --example live_ollama -- [model]`
//!
//! Prints a hint and exits when no server answers.

use incident_eval::backend::{OllamaBackend, SharedRateLimiter};
use incident_eval::pipelines::{run_multi_agent, CallContext, PipelineParams, PromptSet};
use incident_eval::scenario::IncidentScenario;
use incident_eval::scoring::Scorer;

fn main() {
    let model = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "tinyllama".into());
    let backend = OllamaBackend::from_env().expect("HTTP client builds");
    let limiter = SharedRateLimiter::new(10, std::time::Duration::from_secs(60));
    let ctx = CallContext::new(&backend).with_limiter(&limiter);
    let params = PipelineParams {
        model_name: model,
        ..PipelineParams::default()
    };
    let scenario = IncidentScenario::auth_regression();

    match run_multi_agent(&scenario, &PromptSet::default(), &ctx, &params) {
        Ok(outcome) => {
            let scorer = Scorer::default();
            let truth = scorer.ground_truth(&scenario).unwrap();
            let dq = scorer.score_dq(&outcome.brief, &truth);
            println!(
                "T2U {:.1} s, status {:?}",
                outcome.elapsed.as_secs_f64(),
                outcome.status
            );
            for a in &dq.per_action {
                println!(
                    "  {:<70} spec {:.2} corr {:.2}",
                    a.text, a.spec_tier, a.corr_tier
                );
            }
            println!("DQ {:.3}", dq.dq);
        }
        Err(e) => {
            eprintln!("{e}");
            eprintln!("is an Ollama server listening at {}?", backend.endpoint());
        }
    }
}
