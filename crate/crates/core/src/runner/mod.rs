//! Seeded trial execution, outlier flagging and the trial store.

mod config;
mod store;

use std::collections::BTreeMap;
use std::time::Duration;

use chrono::{DateTime, SubsecRound, Utc};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{secs_to_duration, RawExchange, TrialTag};
use crate::pipelines::{
    run_baseline, run_multi_agent, run_single_agent, Brief, CallContext, Condition, PipelineParams,
    PipelineStatus,
};
use crate::scoring::DqBreakdown;
use crate::seeding::derive_seed;
use crate::stats::StatsError;

pub use config::{
    BackendMode, ConfigError, Experiment, RunConfig, DEFAULT_OUTLIER_THRESHOLD, DEFAULT_TRIALS,
};
pub use store::{
    parse_store, read_store, write_csv, OutlierAnnotation, StoreContents, StoreError, StoreHeader,
    StoreWriter, STORE_SCHEMA, STORE_VERSION,
};

/// Consistency constant of the modified z-score (0.6745 ≈ Φ⁻¹(0.75)).
pub const MODIFIED_Z_SCALE: f64 = 0.6745;

/// Lower bound on the MAD so constant samples do not divide by zero.
pub const MAD_FLOOR: f64 = 1e-9;

/// Minimum non-failed records per condition before outliers can be flagged.
pub const MIN_OUTLIER_SAMPLE: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialStatus {
    Ok,
    Degraded,
    Failed,
}

impl TrialStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            TrialStatus::Ok => "ok",
            TrialStatus::Degraded => "degraded",
            TrialStatus::Failed => "failed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    /// `C2_028` style: condition and 1-based index.
    pub trial_id: String,
    pub condition: Condition,
    /// Zero-based index within the condition.
    pub index: usize,
    pub seed: u64,
    pub started_at: DateTime<Utc>,
    pub finished_at: DateTime<Utc>,
    /// Time to usable understanding, whole microseconds.
    pub t2u_secs: f64,
    /// Absent for failed trials.
    pub brief: Option<Brief>,
    pub dq: DqBreakdown,
    pub actionable: bool,
    pub status: TrialStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub outlier: bool,
    pub config_fingerprint: String,
    pub backend_id: String,
    pub stopwords: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub raw: Vec<RawExchange>,
}

impl TrialRecord {
    pub fn t2u(&self) -> Duration {
        secs_to_duration(self.t2u_secs)
    }

    pub fn is_failed(&self) -> bool {
        self.status == TrialStatus::Failed
    }

    pub fn actions_count(&self) -> usize {
        self.brief.as_ref().map_or(0, |b| b.actions.len())
    }
}

pub fn trial_id(condition: Condition, index: usize) -> String {
    format!("{}_{:03}", condition.as_str(), index + 1)
}

/// Per-trial seed: a hash of the run seed, condition and index, so any trial
/// can be re-run alone.
pub fn trial_seed(seed: u64, condition: Condition, index: usize) -> u64 {
    derive_seed(&[
        &seed.to_le_bytes(),
        condition.as_str().as_bytes(),
        &(index as u64).to_le_bytes(),
    ])
}

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

/// Runs one trial. Backend failures become `failed` records.
pub fn run_trial(
    experiment: &Experiment,
    ctx: &CallContext<'_>,
    condition: Condition,
    index: usize,
) -> TrialRecord {
    let config = &experiment.config;
    let seed = trial_seed(config.seed, condition, index);
    let started_at = Utc::now().trunc_subsecs(6);
    let weights = experiment.scorer.weights();

    let mut raw = Vec::new();
    let mut error = None;
    let (brief, t2u, status) = match condition {
        Condition::C1 => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (brief, t2u) = run_baseline(&mut rng);
            (Some(brief), t2u, TrialStatus::Ok)
        }
        Condition::C2 | Condition::C3 => {
            let params = PipelineParams {
                temperature: config.temperature,
                seed,
                max_tokens: config.max_tokens,
                model_name: config.model.clone(),
                deadline: config.deadline(),
                trial: Some(TrialTag { index, seed }),
            };
            let run = if condition == Condition::C2 {
                run_single_agent
            } else {
                run_multi_agent
            };
            match run(&experiment.scenario, &experiment.prompts, ctx, &params) {
                Ok(outcome) => {
                    if config.log_raw {
                        raw = outcome
                            .completions
                            .iter()
                            .filter_map(|c| c.raw.clone())
                            .collect();
                    }
                    let status = match outcome.status {
                        PipelineStatus::Ok => TrialStatus::Ok,
                        PipelineStatus::Degraded => {
                            let notes: Vec<String> = outcome
                                .agent_errors
                                .iter()
                                .map(|(role, e)| format!("{role}: {e}"))
                                .collect();
                            error = Some(notes.join("; "));
                            TrialStatus::Degraded
                        }
                    };
                    (Some(outcome.brief), outcome.elapsed, status)
                }
                Err(e) => {
                    let elapsed = e.elapsed();
                    error = Some(e.to_string());
                    (None, elapsed, TrialStatus::Failed)
                }
            }
        }
    };

    let dq = match &brief {
        Some(b) => experiment.scorer.score_dq(b, &experiment.ground_truth),
        None => DqBreakdown::empty(weights),
    };
    let t2u = secs_to_duration(t2u.as_secs_f64());
    let finished_at =
        started_at + chrono::Duration::from_std(t2u).expect("trial durations fit in chrono range");
    TrialRecord {
        trial_id: trial_id(condition, index),
        condition,
        index,
        seed,
        started_at,
        finished_at,
        t2u_secs: t2u.as_secs_f64(),
        actionable: experiment.scorer.is_actionable(dq.dq),
        brief,
        dq,
        status,
        error,
        outlier: status == TrialStatus::Failed,
        config_fingerprint: experiment.fingerprint.clone(),
        backend_id: ctx.backend.id().to_string(),
        stopwords: experiment.scorer.stopwords().to_vec(),
        raw,
    }
}

/// Runs `trials_per_condition` trials in order, handing each record to
/// `sink` as soon as it is scored. A sink error aborts the run.
pub fn run_condition<F>(
    experiment: &Experiment,
    ctx: &CallContext<'_>,
    condition: Condition,
    mut sink: F,
) -> Result<Vec<TrialRecord>, RunnerError>
where
    F: FnMut(&TrialRecord) -> Result<(), StoreError>,
{
    let n = experiment.config.trials_per_condition;
    let mut records = Vec::with_capacity(n);
    for index in 0..n {
        let record = run_trial(experiment, ctx, condition, index);
        sink(&record)?;
        records.push(record);
    }
    Ok(records)
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

/// `0.6745·(x − median) / MAD` for every value, with the MAD floored at
/// [`MAD_FLOOR`]. Empty input yields an empty vector.
pub fn modified_z_scores(values: &[f64]) -> Vec<f64> {
    if values.is_empty() {
        return Vec::new();
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let med = median(&sorted);
    let mut deviations: Vec<f64> = values.iter().map(|v| (v - med).abs()).collect();
    deviations.sort_by(f64::total_cmp);
    let mad = median(&deviations).max(MAD_FLOOR);
    values
        .iter()
        .map(|v| MODIFIED_Z_SCALE * (v - med) / mad)
        .collect()
}

/// Flags outliers within each condition: non-failed records whose T2U
/// modified z-score exceeds `threshold` in absolute value, and every failed
/// record. Returns the flagged trial ids per condition. Nothing is changed
/// if any condition has fewer than [`MIN_OUTLIER_SAMPLE`] non-failed records.
pub fn flag_outliers(
    records: &mut [TrialRecord],
    threshold: f64,
) -> Result<BTreeMap<Condition, Vec<String>>, StatsError> {
    let mut by_condition: BTreeMap<Condition, Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        by_condition.entry(r.condition).or_default().push(i);
    }
    let mut plans = BTreeMap::new();
    for (&condition, idx) in &by_condition {
        let usable: Vec<usize> = idx
            .iter()
            .copied()
            .filter(|&i| !records[i].is_failed())
            .collect();
        if usable.len() < MIN_OUTLIER_SAMPLE {
            return Err(StatsError::InsufficientData {
                label: condition.to_string(),
                n: usable.len(),
                needed: MIN_OUTLIER_SAMPLE,
            });
        }
        let t2u: Vec<f64> = usable.iter().map(|&i| records[i].t2u_secs).collect();
        let z = modified_z_scores(&t2u);
        let mut flagged = Vec::new();
        for &i in idx {
            let outlier = match usable.iter().position(|&u| u == i) {
                Some(k) => z[k].abs() > threshold,
                None => true,
            };
            if outlier {
                flagged.push(i);
            }
        }
        plans.insert(condition, (idx.clone(), flagged));
    }
    let mut result = BTreeMap::new();
    for (condition, (idx, flagged)) in plans {
        for &i in &idx {
            records[i].outlier = flagged.contains(&i);
        }
        result.insert(
            condition,
            flagged
                .iter()
                .map(|&i| records[i].trial_id.clone())
                .collect(),
        );
    }
    Ok(result)
}

/// Counters reported after each condition.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionReport {
    pub condition: Condition,
    pub trials: usize,
    pub failed: usize,
    pub degraded: usize,
    pub flagged: Vec<String>,
    /// Set when outliers could not be flagged.
    pub notice: Option<String>,
}

/// Runs every configured condition against one backend and rate limiter,
/// appending records to `store` and an outlier annotation after each
/// condition.
pub fn run_experiment<P>(
    experiment: &Experiment,
    ctx: &CallContext<'_>,
    store: &mut StoreWriter,
    mut progress: P,
) -> Result<(Vec<TrialRecord>, Vec<ConditionReport>), RunnerError>
where
    P: FnMut(&ConditionReport),
{
    let mut all = Vec::new();
    let mut reports = Vec::new();
    for &condition in &experiment.config.conditions {
        let mut records = run_condition(experiment, ctx, condition, |r| store.append_record(r))?;
        let threshold = experiment.config.outlier_threshold;
        let (flagged, notice) = match flag_outliers(&mut records, threshold) {
            Ok(mut map) => (map.remove(&condition).unwrap_or_default(), None),
            Err(e) => {
                let failed = records
                    .iter()
                    .filter(|r| r.is_failed())
                    .map(|r| r.trial_id.clone())
                    .collect();
                (failed, Some(format!("T2U outlier screening skipped: {e}")))
            }
        };
        store.append_annotation(&OutlierAnnotation {
            condition,
            config_fingerprint: experiment.fingerprint.clone(),
            threshold,
            flagged: flagged.clone(),
            note: notice.clone(),
        })?;
        let report = ConditionReport {
            condition,
            trials: records.len(),
            failed: records.iter().filter(|r| r.is_failed()).count(),
            degraded: records
                .iter()
                .filter(|r| r.status == TrialStatus::Degraded)
                .count(),
            flagged,
            notice,
        };
        progress(&report);
        reports.push(report);
        all.extend(records);
    }
    Ok((all, reports))
}
