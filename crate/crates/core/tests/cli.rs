use std::path::Path;
use std::process::{Command, Output};

use incident_eval::runner::read_store;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_incident-eval"));
    cmd.env_remove("INCIDENT_EVAL_BACKEND_URL");
    cmd
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    bin()
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn full_pipeline_markdown_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();

    let o = run_in(d, &["run", "--backend", "mock", "--store", "trials.jsonl"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("C2: 116 trials, 1 failed, 0 degraded, outliers [C2_028]"));

    let o = run_in(
        d,
        &[
            "analyze",
            "--store",
            "trials.jsonl",
            "--out",
            "analysis.json",
            "--trials-csv",
            "trials.csv",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("3/3 pairwise DQ tests significant"));
    let trials_csv = std::fs::read_to_string(d.join("trials.csv")).unwrap();
    assert_eq!(trials_csv.lines().count(), 349);

    let o = run_in(d, &["report", "--analysis", "analysis.json"]);
    assert_eq!(o.status.code(), Some(0));
    let md = stdout(&o);
    let c3_row = md
        .lines()
        .find(|l| l.starts_with("| C3 (Multi-Agent) |"))
        .expect("C3 row");
    let cells: Vec<&str> = c3_row.split('|').map(str::trim).collect();
    assert_eq!(&cells[5..8], ["0.692", "0.000", "3.00"]);

    let o = run_in(
        d,
        &["report", "--analysis", "analysis.json", "--format", "csv"],
    );
    assert_eq!(o.status.code(), Some(0));
    let mut reader = csv::Reader::from_reader(o.stdout.as_slice());
    let headers = reader.headers().unwrap().clone();
    assert_eq!(&headers[0], "condition");
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    let names: Vec<&str> = rows.iter().map(|r| &r[0]).collect();
    assert_eq!(names, ["C1", "C2", "C3"]);

    let again = run_in(d, &["report", "--analysis", "analysis.json"]);
    assert_eq!(stdout(&again), md, "report is deterministic");
}

#[test]
fn single_condition_store_skips_anova() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = run_in(
        d,
        &[
            "run",
            "--conditions",
            "C3",
            "--trials",
            "5",
            "--store",
            "c3.jsonl",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(read_store(d.join("c3.jsonl")).unwrap().records.len(), 5);

    let o = run_in(d, &["analyze", "--store", "c3.jsonl", "--out", "a.json"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stderr(&o).contains("only C3 present"), "{}", stderr(&o));
    assert!(stderr(&o).contains("ANOVA on DQ skipped"));
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("a.json")).unwrap()).unwrap();
    assert!(doc["primary"]["dq"]["anova"].is_null());
    assert_eq!(doc["primary"]["summary"]["conditions"][0]["n_total"], 5);
}

#[test]
fn missing_scenario_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("eval.toml"),
        "scenario = \"nope.scenario\"\n",
    )
    .unwrap();
    let o = run_in(dir.path(), &["validate-config", "--config", "eval.toml"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("nope.scenario"), "{}", stderr(&o));
    let o = run_in(dir.path(), &["run", "--config", "eval.toml"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!dir.path().join("trials.jsonl").exists());
}

#[test]
fn bad_flags_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["run", "--conditions", "C4"][..],
        &["run", "--trials", "0"],
        &["run", "--frobnicate"],
        &["report", "--format", "html"],
    ] {
        let o = run_in(dir.path(), args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", stderr(&o));
    }
}

#[test]
fn store_with_only_failed_trials_is_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("slow.toml"),
        "[roles.single]\nlatency_secs = 500.0\ntext = \"- Restart auth-service\"\n",
    )
    .unwrap();
    std::fs::write(
        d.join("eval.toml"),
        "conditions = [\"C2\"]\ntrials_per_condition = 4\nmock_script = \"slow.toml\"\n",
    )
    .unwrap();
    let o = run_in(d, &["run", "--config", "eval.toml"]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("every trial failed in C2"));

    let o = run_in(d, &["analyze", "--store", "trials.jsonl"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("no usable"), "{}", stderr(&o));
}

#[test]
fn missing_or_corrupt_store() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = run_in(d, &["analyze", "--store", "absent.jsonl"]);
    assert_eq!(o.status.code(), Some(1));

    std::fs::write(d.join("bad.jsonl"), "not json\n{\"kind\":\"header\"}\n").unwrap();
    let o = run_in(d, &["analyze", "--store", "bad.jsonl"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));

    std::fs::write(d.join("bad.json"), "{}").unwrap();
    let o = run_in(d, &["report", "--analysis", "bad.json"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn torn_final_line_is_tolerated() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = run_in(d, &["run", "--conditions", "C2,C3", "--trials", "6"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = std::fs::read_to_string(d.join("trials.jsonl")).unwrap();
    let cut = text.trim_end().rfind('\n').unwrap() + 20;
    std::fs::write(d.join("trials.jsonl"), &text[..cut]).unwrap();
    let o = run_in(
        d,
        &["analyze", "--store", "trials.jsonl", "--out", "a.json"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stderr(&o).contains("warning"), "{}", stderr(&o));
}

#[test]
fn flags_override_config_and_env() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("eval.toml"), "seed = 7\ntrials_per_condition = 3\n").unwrap();
    let o = run_in(d, &["validate-config", "--config", "eval.toml"]);
    assert!(stdout(&o).contains("3 trials"), "{}", stdout(&o));
    assert!(stdout(&o).contains("seed 7"));
    let o = run_in(
        d,
        &["validate-config", "--config", "eval.toml", "--seed", "9"],
    );
    assert!(stdout(&o).contains("seed 9"));

    let with_env = |args: &[&str]| {
        bin()
            .current_dir(d)
            .env("INCIDENT_EVAL_BACKEND_URL", "http://env-host:1")
            .args(args)
            .output()
            .unwrap()
    };
    // In live mode the backend URL is part of the fingerprint, so it shows
    // whether the environment took effect.
    let fp = |o: &Output| stdout(o).rsplit(' ').next().unwrap().trim().to_string();
    let live = ["validate-config", "--backend", "live"];
    let plain = fp(&run_in(d, &live));
    let env = fp(&with_env(&live));
    let flag = fp(&with_env(
        &[&live[..], &["--backend-url", "http://localhost:11434"]].concat(),
    ));
    assert_ne!(plain, env);
    assert_eq!(plain, flag);

    std::fs::write(
        d.join("url.toml"),
        "backend_url = \"http://localhost:11434\"\n",
    )
    .unwrap();
    let file = fp(&with_env(&[&live[..], &["--config", "url.toml"]].concat()));
    assert_eq!(plain, file, "config file wins over the environment");
}

#[test]
fn score_rewrites_records_and_fingerprint() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = run_in(d, &["run", "--conditions", "C2,C3", "--trials", "4"]);
    assert_eq!(o.status.code(), Some(0));
    let before = read_store(d.join("trials.jsonl")).unwrap();

    let o = run_in(
        d,
        &[
            "score",
            "--store",
            "trials.jsonl",
            "--out",
            "rescored.jsonl",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let same = read_store(d.join("rescored.jsonl")).unwrap();
    assert_eq!(
        same.records, before.records,
        "unchanged rules give identical records"
    );

    let o = run_in(
        d,
        &[
            "score",
            "--store",
            "trials.jsonl",
            "--out",
            "nostop.jsonl",
            "--no-stopwords",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let after = read_store(d.join("nostop.jsonl")).unwrap();
    assert_eq!(after.records.len(), before.records.len());
    assert_eq!(after.annotations.len(), 2);
    assert_ne!(after.fingerprints(), before.fingerprints());
    assert!(after.records.iter().all(|r| r.stopwords.is_empty()));
}

#[test]
fn append_adds_a_segment() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(
        run_in(d, &["run", "--conditions", "C1", "--trials", "3"])
            .status
            .code(),
        Some(0)
    );
    let o = run_in(
        d,
        &["run", "--conditions", "C3", "--trials", "3", "--append"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let store = read_store(d.join("trials.jsonl")).unwrap();
    assert_eq!(store.headers.len(), 2);
    assert_eq!(store.records.len(), 6);
    assert_eq!(
        store.fingerprints().len(),
        1,
        "condition choice is not fingerprinted"
    );
}

#[test]
fn help_and_version_exit_zero() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_in(dir.path(), &["--help"]);
    assert_eq!(o.status.code(), Some(0));
    for verb in ["run", "score", "analyze", "report", "validate-config"] {
        assert!(stdout(&o).contains(verb), "help lacks {verb}");
    }
    assert_eq!(run_in(dir.path(), &["--version"]).status.code(), Some(0));
}
