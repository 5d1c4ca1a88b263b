//! The `incident-eval` command line.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 configuration error, 3 data
//! error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::backend::BACKEND_URL_ENV;
use crate::pipelines::{CallContext, Condition};
use crate::report::{render_csv, render_markdown};
use crate::runner::{
    read_store, run_experiment, write_csv, BackendMode, ConfigError, Experiment, RunConfig,
    StoreContents, StoreError, StoreHeader, StoreWriter, TrialRecord,
};
use crate::stats::{analyze, AnalysisOptions, AnalysisReport, StatsError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "incident-eval",
    version,
    about = "Evaluate single- and multi-agent incident-response pipelines"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Execute seeded trials and write the trial store.
    Run(RunArgs),
    /// Re-score an existing store with the current scoring rules.
    Score(ScoreArgs),
    /// Summaries and hypothesis tests over a store.
    Analyze(AnalyzeArgs),
    /// Render an analysis document as Markdown or CSV.
    Report(ReportArgs),
    /// Load a config and every asset it names, then print its fingerprint.
    ValidateConfig(ConfigArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendArg {
    Live,
    Mock,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Markdown,
    Csv,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// TOML run configuration; bundled defaults when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub backend: Option<BackendArg>,
    #[arg(long)]
    pub backend_url: Option<String>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated subset of C1, C2, C3.
    #[arg(long, value_delimiter = ',')]
    pub conditions: Option<Vec<Condition>>,
    /// Score token overlap without removing stopwords.
    #[arg(long)]
    pub no_stopwords: bool,
    /// Keep raw request and response bodies in each record.
    #[arg(long)]
    pub log_raw: bool,
    /// Trial store path.
    #[arg(long)]
    pub store: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Append a new run segment instead of replacing the store.
    #[arg(long)]
    pub append: bool,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Destination store; defaults to rewriting the input.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long, default_value = "trials.jsonl")]
    pub store: PathBuf,
    /// Headline the outlier-included statistics.
    #[arg(long)]
    pub include_outliers: bool,
    /// Welch's t-test instead of Student's pooled test.
    #[arg(long)]
    pub welch: bool,
    /// Analysis document path; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also export one CSV row per trial.
    #[arg(long)]
    pub trials_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long, default_value = "analysis.json")]
    pub analysis: PathBuf,
    #[arg(long, value_enum, default_value = "markdown")]
    pub format: Format,
    /// Output path; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// A failure with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Failure {
            code,
            message: message.into(),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::new(EXIT_CONFIG, format!("configuration error: {e}"))
    }
}

impl From<StatsError> for Failure {
    fn from(e: StatsError) -> Self {
        Failure::new(EXIT_DATA, format!("data error: {e}"))
    }
}

fn store_failure(e: StoreError) -> Failure {
    match e {
        StoreError::Io { .. } => Failure::new(EXIT_RUNTIME, e.to_string()),
        _ => Failure::new(EXIT_DATA, format!("data error: {e}")),
    }
}

fn io_failure(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::new(EXIT_RUNTIME, format!("{}: {e}", path.display()))
}

/// Resolves defaults, environment, config file and flags, in increasing
/// precedence.
pub fn resolve_config(args: &ConfigArgs) -> Result<RunConfig, ConfigError> {
    let env_url = std::env::var(BACKEND_URL_ENV)
        .ok()
        .filter(|u| !u.trim().is_empty());
    let mut config = match &args.config {
        Some(path) => {
            let config = RunConfig::load(path)?;
            let text = std::fs::read_to_string(path).unwrap_or_default();
            let sets_url = text
                .parse::<toml::Table>()
                .map(|t| t.contains_key("backend_url"))
                .unwrap_or(false);
            let mut config = config;
            if let (false, Some(url)) = (sets_url, &env_url) {
                config.backend_url = url.clone();
            }
            config
        }
        None => {
            let mut config = RunConfig::default();
            if let Some(url) = &env_url {
                config.backend_url = url.clone();
            }
            config
        }
    };
    if let Some(b) = args.backend {
        config.backend = match b {
            BackendArg::Live => BackendMode::Live,
            BackendArg::Mock => BackendMode::Mock,
        };
    }
    if let Some(url) = &args.backend_url {
        config.backend_url = url.clone();
    }
    if let Some(n) = args.trials {
        config.trials_per_condition = n;
    }
    if let Some(s) = args.seed {
        config.seed = s;
    }
    if let Some(c) = &args.conditions {
        config.conditions = c.clone();
    }
    if args.no_stopwords {
        config.no_stopwords = true;
    }
    if args.log_raw {
        config.log_raw = true;
    }
    if let Some(s) = &args.store {
        config.store = s.clone();
    }
    config.validate()?;
    Ok(config)
}

fn cmd_run(args: &RunArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let config = resolve_config(&args.config)?;
    let experiment = Experiment::new(config)?;
    let backend = experiment.backend()?;
    let limiter = experiment.rate_limiter();
    let ctx = CallContext::new(backend.as_ref()).with_limiter(&limiter);
    let header = StoreHeader::new(&experiment.config, &experiment.fingerprint, backend.id());
    let path = &experiment.config.store;
    let mut store = if args.append {
        StoreWriter::append(path, &header)
    } else {
        StoreWriter::create(path, &header)
    }
    .map_err(store_failure)?;

    let mut aborted = Vec::new();
    let (records, _) = run_experiment(&experiment, &ctx, &mut store, |r| {
        let _ = writeln!(
            out,
            "{}: {} trials, {} failed, {} degraded, outliers [{}]",
            r.condition,
            r.trials,
            r.failed,
            r.degraded,
            r.flagged.join(", ")
        );
        if let Some(n) = &r.notice {
            let _ = writeln!(out, "{}: {n}", r.condition);
        }
        if r.failed == r.trials {
            aborted.push(r.condition);
        }
    })
    .map_err(|e| Failure::new(EXIT_RUNTIME, format!("run aborted: {e}")))?;

    let _ = writeln!(
        out,
        "wrote {} records to {} (fingerprint {})",
        records.len(),
        path.display(),
        &experiment.fingerprint[..12]
    );
    if !aborted.is_empty() {
        let list: Vec<String> = aborted.iter().map(Condition::to_string).collect();
        return Err(Failure::new(
            EXIT_RUNTIME,
            format!("every trial failed in {}", list.join(", ")),
        ));
    }
    Ok(())
}

/// Reads a store, accepting the valid prefix of a torn file with a warning.
fn load_store(path: &Path, err: &mut dyn Write) -> Result<StoreContents, Failure> {
    match read_store(path) {
        Ok(c) => Ok(c),
        Err(StoreError::PartialRead {
            contents,
            line,
            reason,
        }) => {
            let _ = writeln!(
                err,
                "warning: {}: line {line} is incomplete ({reason}); using {} earlier record(s)",
                path.display(),
                contents.records.len()
            );
            Ok(*contents)
        }
        Err(e) => Err(store_failure(e)),
    }
}

fn cmd_score(args: &ScoreArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), Failure> {
    let input = args
        .config
        .store
        .clone()
        .unwrap_or_else(|| PathBuf::from("trials.jsonl"));
    let contents = load_store(&input, err)?;
    if contents.headers.is_empty() {
        return Err(Failure::new(EXIT_DATA, "data error: store has no header"));
    }
    let dest = args.out.clone().unwrap_or_else(|| input.clone());
    let tmp = dest.with_extension("jsonl.tmp");
    let overrides = resolve_config(&args.config)?;
    let mut writer: Option<StoreWriter> = None;
    let mut rescored = 0;
    for header in &contents.headers {
        // Each segment keeps its run settings; scoring inputs come from the
        // command line and config file.
        let mut config = header.config.clone();
        config.scoring = overrides.scoring.clone();
        config.no_stopwords = overrides.no_stopwords;
        let experiment = Experiment::new(config)?;
        let mut new_header = header.clone();
        new_header.config = experiment.config.clone();
        new_header.config_fingerprint = experiment.fingerprint.clone();
        match writer.as_mut() {
            None => writer = Some(StoreWriter::create(&tmp, &new_header).map_err(store_failure)?),
            Some(w) => w.write_header(&new_header).map_err(store_failure)?,
        }
        let w = writer.as_mut().expect("writer opened above");
        for record in contents
            .records
            .iter()
            .filter(|r| r.config_fingerprint == header.config_fingerprint)
        {
            let r = rescore(record, &experiment);
            w.append_record(&r).map_err(store_failure)?;
            rescored += 1;
        }
        for a in contents
            .annotations
            .iter()
            .filter(|a| a.config_fingerprint == header.config_fingerprint)
        {
            let mut a = a.clone();
            a.config_fingerprint = experiment.fingerprint.clone();
            w.append_annotation(&a).map_err(store_failure)?;
        }
    }
    drop(writer);
    std::fs::rename(&tmp, &dest).map_err(|e| io_failure(&dest, e))?;
    let _ = writeln!(out, "re-scored {rescored} records into {}", dest.display());
    Ok(())
}

fn rescore(record: &TrialRecord, experiment: &Experiment) -> TrialRecord {
    let mut r = record.clone();
    if let Some(brief) = &r.brief {
        r.dq = experiment.scorer.score_dq(brief, &experiment.ground_truth);
    } else {
        r.dq = crate::scoring::DqBreakdown::empty(experiment.scorer.weights());
    }
    r.actionable = experiment.scorer.is_actionable(r.dq.dq);
    r.stopwords = experiment.scorer.stopwords().to_vec();
    r.config_fingerprint = experiment.fingerprint.clone();
    r
}

fn write_output(path: Option<&Path>, text: &str, out: &mut dyn Write) -> Result<(), Failure> {
    match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))?;
            }
            std::fs::write(p, text).map_err(|e| io_failure(p, e))
        }
        None => out
            .write_all(text.as_bytes())
            .map_err(|e| Failure::new(EXIT_RUNTIME, e.to_string())),
    }
}

fn cmd_analyze(
    args: &AnalyzeArgs,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<(), Failure> {
    let contents = load_store(&args.store, err)?;
    let options = AnalysisOptions {
        welch: args.welch,
        include_outliers: args.include_outliers,
        ..AnalysisOptions::default()
    };
    let report = analyze(&contents.records, &options)?;
    if let Some(path) = &args.trials_csv {
        let mut buf = Vec::new();
        write_csv(&contents.records, &mut buf).map_err(|e| io_failure(path, e))?;
        write_output(Some(path), &String::from_utf8_lossy(&buf), out)?;
    }
    let json = serde_json::to_string_pretty(&report).expect("analysis serializes");
    write_output(args.out.as_deref(), &(json + "\n"), out)?;
    for n in &report.notices {
        let _ = writeln!(err, "notice: {n}");
    }
    if let Some(path) = &args.out {
        let significant = report
            .primary
            .dq
            .pairwise
            .iter()
            .filter(|t| t.significant)
            .count();
        let _ = writeln!(
            out,
            "analyzed {} records; {}/{} pairwise DQ tests significant at α = {:.4}; wrote {}",
            contents.records.len(),
            significant,
            report.primary.dq.pairwise.len(),
            report.pairwise_alpha,
            path.display()
        );
    }
    Ok(())
}

fn cmd_report(args: &ReportArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let text =
        std::fs::read_to_string(&args.analysis).map_err(|e| io_failure(&args.analysis, e))?;
    let report: AnalysisReport = serde_json::from_str(&text).map_err(|e| {
        Failure::new(
            EXIT_DATA,
            format!("data error: {}: {e}", args.analysis.display()),
        )
    })?;
    let rendered = match args.format {
        Format::Markdown => render_markdown(&report),
        Format::Csv => {
            render_csv(&report).map_err(|e| Failure::new(EXIT_RUNTIME, e.to_string()))?
        }
    };
    write_output(args.out.as_deref(), &rendered, out)
}

fn cmd_validate(args: &ConfigArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let config = resolve_config(args)?;
    let experiment = Experiment::new(config)?;
    let c = &experiment.config;
    let conditions: Vec<String> = c.conditions.iter().map(Condition::to_string).collect();
    let _ = writeln!(
        out,
        "ok: scenario `{}`, {} trials x [{}], backend {:?}, seed {}, fingerprint {}",
        experiment.scenario.id,
        c.trials_per_condition,
        conditions.join(", "),
        c.backend,
        c.seed,
        experiment.fingerprint
    );
    Ok(())
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = if e.use_stderr() {
                write!(err, "{e}")
            } else {
                write!(out, "{e}")
            };
            return code;
        }
    };
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a, out),
        Command::Score(a) => cmd_score(a, out, err),
        Command::Analyze(a) => cmd_analyze(a, out, err),
        Command::Report(a) => cmd_report(a, out),
        Command::ValidateConfig(a) => cmd_validate(a, out),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

/// Entry point for the binary.
pub fn main() -> i32 {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock())
}
