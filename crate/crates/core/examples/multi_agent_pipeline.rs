//! Runs one single-agent and one multi-agent trial against the mock backend
//! and prints the assembled briefs.
//!
//! `cargo run --example multi_agent_pipeline`

use incident_eval::backend::{MockBackend, MockScript, TrialTag};
use incident_eval::pipelines::{
    run_multi_agent, run_single_agent, CallContext, PipelineParams, PromptSet,
};
use incident_eval::scenario::IncidentScenario;

fn main() {
    let scenario = IncidentScenario::auth_regression();
    let prompts = PromptSet::default();
    let backend = MockBackend::new(MockScript::bundled());
    let ctx = CallContext::new(&backend);
    let params = PipelineParams {
        trial: Some(TrialTag { index: 0, seed: 7 }),
        ..PipelineParams::default()
    };

    let single = run_single_agent(&scenario, &prompts, &ctx, &params).expect("mock call succeeds");
    println!(
        "single agent: {:.2} s, status {:?}",
        single.elapsed.as_secs_f64(),
        single.status
    );
    for a in &single.brief.actions {
        println!("  {}. {}", a.ordinal, a.text);
    }

    let multi = run_multi_agent(&scenario, &prompts, &ctx, &params).expect("mock calls succeed");
    println!(
        "\nmulti agent: {:.2} s, status {:?}",
        multi.elapsed.as_secs_f64(),
        multi.status
    );
    println!("  root cause: {}", multi.brief.root_cause);
    for a in &multi.brief.actions {
        println!("  {}. {}", a.ordinal, a.text);
    }
    println!(
        "  risk: {}",
        multi.brief.risk_notes.lines().next().unwrap_or("")
    );

    println!("\nprompts sent to the backend:");
    for r in backend.requests() {
        let first = r.prompt.lines().next().unwrap_or("");
        println!("  [{}] {} ... ({} chars)", r.role, first, r.prompt.len());
    }
}
