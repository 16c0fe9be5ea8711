//! Batch runner for the ablation configurations: scenario loading,
//! concurrent conversation execution, log persistence and reports.

mod logio;
mod report;
mod scenarios;

pub use logio::{log_path, parse_jsonl, read_log, read_logs, to_jsonl, write_log, LogLine};
pub use report::{
    aggregate_report, AblationReport, CostRow, MetricsRow, PairwiseReport, SignificanceRow,
};
pub use scenarios::{
    load_scenarios, Scenarios, MATCHING_FILE, MENU_FILE, PERSONAS_FILE, TEST_CASES_FILE,
};

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::{info, warn};

use crate::agents::{
    run_conversation, AttributePolicy, Backends, GuestResponder, Limits, LlmAttributePolicy,
    LlmGuestResponder, LlmStateExtractor, PromptSet, ScriptedAttributePolicy, ScriptedGuest,
    ScriptedStateExtractor, SimulationSettings, StateExtractor,
};
use crate::counterpart::{
    Counterpart, CounterpartConfig, CounterpartMode, LlmCounterpart, ScriptedCounterpart,
};
use crate::domain::{ConfigId, ConversationLog, DomainError, Menu, Outcome, TaskState, TestCase};
use crate::gateway::{
    aggregate_telemetry, ChatBackend, GatewayError, RemoteBackend, RemoteSettings, TelemetrySummary,
};
use crate::metrics::{
    compare_groups, MetricComparison, MetricsError, MetricsReport, Scorer, SignificanceTest,
};

pub const METRICS_FILE: &str = "metrics.json";
pub const RUN_FILE: &str = "run.json";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_MD: &str = "report.md";

/// Remote runs are capped to stay inside provider rate limits.
pub const REMOTE_PARALLELISM_CAP: usize = 8;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("missing file {}", .0.display())]
    MissingFile(PathBuf),
    #[error("{}: schema violation at `{field}`: {message}", file.display())]
    Schema {
        file: PathBuf,
        field: String,
        message: String,
    },
    #[error("{}: {source}", file.display())]
    Invalid { file: PathBuf, source: DomainError },
    #[error("{}:{line}: {message}", file.display())]
    Log {
        file: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("invalid run configuration: {0}")]
    InvalidRun(String),
    #[error("configuration {config}: none of {attempted} conversations succeeded")]
    NoSuccessfulConversations { config: ConfigId, attempted: usize },
}

impl HarnessError {
    /// Schema and validation problems in input files, as opposed to
    /// runtime failures.
    pub fn is_schema_error(&self) -> bool {
        matches!(
            self,
            Self::Schema { .. } | Self::Invalid { .. } | Self::Log { .. }
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendMode {
    Remote,
    Scripted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunConfig {
    pub config_id: ConfigId,
    pub backend_mode: BackendMode,
    pub limits: Limits,
    pub parallelism: usize,
    pub strict_state_bounds: bool,
    pub seed: u64,
}

pub fn default_parallelism(mode: BackendMode) -> usize {
    let units = std::thread::available_parallelism().map_or(1, |n| n.get());
    match mode {
        BackendMode::Remote => units.min(REMOTE_PARALLELISM_CAP),
        BackendMode::Scripted => units,
    }
}

impl RunConfig {
    pub fn scripted(config_id: ConfigId, seed: u64) -> Self {
        Self {
            config_id,
            backend_mode: BackendMode::Scripted,
            limits: Limits::default(),
            parallelism: default_parallelism(BackendMode::Scripted),
            strict_state_bounds: false,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.parallelism == 0 {
            return Err(HarnessError::InvalidRun(
                "parallelism must be at least 1".into(),
            ));
        }
        if self.limits.max_turns == 0 {
            return Err(HarnessError::InvalidRun(
                "max_turns must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// The agent components a run drives. Any of them may be swapped out.
pub struct AgentSuite {
    pub counterpart: Box<dyn Counterpart>,
    pub guest: Box<dyn GuestResponder>,
    pub extractor: Box<dyn StateExtractor>,
    pub attributes: Box<dyn AttributePolicy>,
    pub auditor: Box<dyn StateExtractor>,
    pub deterministic: bool,
}

impl AgentSuite {
    /// Rule-based guest, sub-agents and ordering system, all seeded.
    pub fn scripted(scenarios: &Scenarios, seed: u64) -> Self {
        let prompts = Arc::new(PromptSet::default());
        let rules = scenarios.rules.clone();
        Self {
            counterpart: Box::new(ScriptedCounterpart::new(
                CounterpartConfig::default(),
                rules.normalizer.clone(),
            )),
            guest: Box::new(ScriptedGuest::new(
                seed,
                &scenarios.menu,
                rules.clone(),
                prompts.clone(),
            )),
            extractor: Box::new(ScriptedStateExtractor::new(prompts.clone())),
            attributes: Box::new(ScriptedAttributePolicy::new(seed, rules, prompts.clone())),
            auditor: Box::new(ScriptedStateExtractor::new(prompts)),
            deterministic: true,
        }
    }

    /// Every agent, the ordering system included, backed by `backend`.
    pub fn remote(backend: Arc<dyn ChatBackend>, prompts: Arc<PromptSet>) -> Self {
        let cfg = CounterpartConfig {
            mode: CounterpartMode::Remote,
            ..CounterpartConfig::default()
        };
        Self {
            counterpart: Box::new(LlmCounterpart::new(backend.clone(), prompts.clone(), cfg)),
            guest: Box::new(LlmGuestResponder::new(backend.clone(), prompts.clone())),
            extractor: Box::new(LlmStateExtractor::new(backend.clone(), prompts.clone())),
            attributes: Box::new(LlmAttributePolicy::new(backend.clone(), prompts.clone())),
            auditor: Box::new(LlmStateExtractor::new(backend, prompts)),
            deterministic: false,
        }
    }

    /// Remote suite configured from `SIM_API_KEY`, `SIM_BASE_URL` and
    /// `SIM_MODEL`.
    pub fn remote_from_env(prompts: Arc<PromptSet>) -> Result<Self, HarnessError> {
        let backend = RemoteBackend::new(RemoteSettings::from_env()?)?;
        Ok(Self::remote(Arc::new(backend), prompts))
    }

    pub fn for_run(run: &RunConfig, scenarios: &Scenarios) -> Result<Self, HarnessError> {
        match run.backend_mode {
            BackendMode::Scripted => Ok(Self::scripted(scenarios, run.seed)),
            BackendMode::Remote => Self::remote_from_env(Arc::new(PromptSet::default())),
        }
    }

    pub fn backends<'a>(&'a self, menu: &'a Menu) -> Backends<'a> {
        Backends {
            counterpart: self.counterpart.as_ref(),
            guest: self.guest.as_ref(),
            extractor: self.extractor.as_ref(),
            attributes: self.attributes.as_ref(),
            auditor: self.auditor.as_ref(),
            menu,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub config_id: ConfigId,
    pub deterministic: bool,
    pub logs: Vec<ConversationLog>,
    pub report: MetricsReport,
    pub telemetry_summary: TelemetrySummary,
}

fn panic_log(
    tc: &TestCase,
    config_id: ConfigId,
    payload: &(dyn std::any::Any + Send),
) -> ConversationLog {
    let msg = payload
        .downcast_ref::<&str>()
        .map(|s| (*s).to_owned())
        .or_else(|| payload.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "unknown panic".into());
    ConversationLog {
        test_case_id: tc.id.clone(),
        persona_id: tc.persona_id.clone(),
        config_id,
        turns: Vec::new(),
        final_state: TaskState::new(tc.target.clone()),
        outcome: Outcome::Error,
        notes: vec![format!("conversation panicked: {msg}")],
    }
}

/// Runs every test case under `run.config_id` on up to `run.parallelism`
/// workers. Logs come back in test-case order whatever the scheduling.
pub fn simulate(
    run: &RunConfig,
    scenarios: &Scenarios,
    suite: &AgentSuite,
) -> Result<Vec<ConversationLog>, HarnessError> {
    run.validate()?;
    let settings = SimulationSettings {
        limits: run.limits,
        strict_state_bounds: run.strict_state_bounds,
        rules: scenarios.rules.clone(),
    };
    let backends = suite.backends(&scenarios.menu);
    let cases = &scenarios.test_cases;
    let next = AtomicUsize::new(0);
    let collected: Mutex<Vec<Option<ConversationLog>>> = Mutex::new(vec![None; cases.len()]);
    let workers = run.parallelism.min(cases.len()).max(1);

    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(tc) = cases.get(i) else { break };
                let persona = scenarios
                    .persona(&tc.persona_id)
                    .expect("validated persona reference");
                let log = catch_unwind(AssertUnwindSafe(|| {
                    run_conversation(tc, persona, run.config_id, &backends, &settings)
                }))
                .unwrap_or_else(|p| panic_log(tc, run.config_id, p.as_ref()));
                collected.lock().unwrap_or_else(|e| e.into_inner())[i] = Some(log);
            });
        }
    });

    Ok(collected
        .into_inner()
        .unwrap_or_else(|e| e.into_inner())
        .into_iter()
        .map(|l| l.expect("every test case is attempted"))
        .collect())
}

/// Scores logs of a single configuration.
pub fn evaluate(
    config_id: ConfigId,
    logs: Vec<ConversationLog>,
    scenarios: &Scenarios,
    deterministic: bool,
) -> RunResult {
    let scorer = Scorer::new(&scenarios.menu, scenarios.rules.clone());
    let report = scorer.report(&logs, &scenarios.personas);
    let telemetry_summary = aggregate_telemetry(&logs).unwrap_or(TelemetrySummary {
        avg_tokens_per_response: 0.0,
        avg_latency_seconds: 0.0,
        responses: 0,
    });
    RunResult {
        config_id,
        deterministic,
        logs,
        report,
        telemetry_summary,
    }
}

/// Simulates, persists under `out` when given, and scores one
/// configuration. Fails only when no conversation succeeded.
pub fn run_ablation(
    run: &RunConfig,
    scenarios: &Scenarios,
    suite: &AgentSuite,
    out: Option<&Path>,
) -> Result<RunResult, HarnessError> {
    let logs = simulate(run, scenarios, suite)?;
    let failed = logs.iter().filter(|l| l.outcome == Outcome::Error).count();
    if failed > 0 {
        warn!(config = %run.config_id, failed, "conversations ended in error");
    }
    let result = evaluate(run.config_id, logs, scenarios, suite.deterministic);
    if let Some(out) = out {
        persist(out, run, &result)?;
    }
    info!(config = %run.config_id, conversations = result.logs.len(), failed, "configuration finished");
    if failed == result.logs.len() {
        return Err(HarnessError::NoSuccessfulConversations {
            config: run.config_id,
            attempted: failed,
        });
    }
    Ok(result)
}

fn write_file(path: &Path, contents: &str) -> Result<(), HarnessError> {
    let io = |source| HarnessError::Io {
        path: path.to_owned(),
        source,
    };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io)?;
    }
    fs::write(path, contents).map_err(io)
}

fn pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}

/// Writes logs, `metrics.json` and `run.json` under `<out>/<config>/`.
pub fn persist(out: &Path, run: &RunConfig, result: &RunResult) -> Result<(), HarnessError> {
    for log in &result.logs {
        write_log(out, log)?;
    }
    let dir = out.join(result.config_id.dir_name());
    write_file(&dir.join(METRICS_FILE), &pretty(&result.report))?;
    write_file(&dir.join(RUN_FILE), &pretty(run))
}

/// Writes `report` as JSON to `path` and as markdown next to it.
pub fn write_report(path: &Path, report: &AblationReport) -> Result<PathBuf, HarnessError> {
    write_file(path, &pretty(report))?;
    let md = path.with_extension("md");
    write_file(&md, &report.to_markdown())?;
    Ok(md)
}

/// Reads the `run.json` written next to a configuration's logs.
pub fn read_run_config(dir: &Path) -> Option<RunConfig> {
    let text = fs::read_to_string(dir.join(RUN_FILE)).ok()?;
    serde_json::from_str(&text).ok()
}

/// Rescores a directory of logs, one result per configuration found.
/// Logs are put back in bundle order; unknown test cases sort last.
pub fn evaluate_dir(
    logs_dir: &Path,
    scenarios: &Scenarios,
) -> Result<Vec<RunResult>, HarnessError> {
    let mut logs = read_logs(logs_dir)?;
    let rank = |id: &str| {
        scenarios
            .test_cases
            .iter()
            .position(|tc| tc.id == id)
            .unwrap_or(usize::MAX)
    };
    logs.sort_by_cached_key(|l| (l.config_id, rank(&l.test_case_id), l.test_case_id.clone()));
    let mut results = Vec::new();
    for config in ConfigId::ALL {
        let group: Vec<_> = logs
            .iter()
            .filter(|l| l.config_id == config)
            .cloned()
            .collect();
        if group.is_empty() {
            continue;
        }
        let deterministic = read_run_config(&logs_dir.join(config.dir_name()))
            .is_some_and(|r| r.backend_mode == BackendMode::Scripted);
        results.push(evaluate(config, group, scenarios, deterministic));
    }
    Ok(results)
}

/// Per-conversation metrics stored under `dir`, from `dir/metrics.json` or
/// from the `metrics.json` of each configuration subdirectory.
pub fn read_metrics(dir: &Path) -> Result<Vec<MetricsReport>, HarnessError> {
    let mut files = Vec::new();
    if dir.join(METRICS_FILE).is_file() {
        files.push(dir.join(METRICS_FILE));
    }
    for config in ConfigId::ALL {
        let f = dir.join(config.dir_name()).join(METRICS_FILE);
        if f.is_file() {
            files.push(f);
        }
    }
    if files.is_empty() {
        return Err(HarnessError::MissingFile(dir.join(METRICS_FILE)));
    }
    files
        .into_iter()
        .map(|f| {
            let text = fs::read_to_string(&f).map_err(|source| HarnessError::Io {
                path: f.clone(),
                source,
            })?;
            let de = &mut serde_json::Deserializer::from_str(&text);
            serde_path_to_error::deserialize(de).map_err(|e| HarnessError::Schema {
                file: f.clone(),
                field: e.path().to_string(),
                message: e.inner().to_string(),
            })
        })
        .collect()
}

/// Compares the stored per-conversation metrics of two run directories.
pub fn compare_dirs(baseline: &Path, candidate: &Path) -> Result<PairwiseReport, HarnessError> {
    let base = read_metrics(baseline)?;
    let cand = read_metrics(candidate)?;
    let a: Vec<_> = base.iter().flat_map(|r| &r.per_conversation).collect();
    let b: Vec<_> = cand.iter().flat_map(|r| &r.per_conversation).collect();
    let comparisons: Vec<MetricComparison> = compare_groups(&a, &b, SignificanceTest::Welch)?;
    Ok(PairwiseReport {
        baseline: baseline.display().to_string(),
        candidate: candidate.display().to_string(),
        test: SignificanceTest::Welch,
        comparisons,
    })
}

/// Writes a pairwise comparison as JSON to `path` and markdown next to it.
pub fn write_pairwise(path: &Path, report: &PairwiseReport) -> Result<PathBuf, HarnessError> {
    write_file(path, &pretty(report))?;
    let md = path.with_extension("md");
    write_file(&md, &report.to_markdown())?;
    Ok(md)
}
