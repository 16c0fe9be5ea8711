use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use tracing::{error, info};
use tracing_subscriber::EnvFilter;

use usersim::agents::{Limits, PromptSet};
use usersim::harness::{
    aggregate_report, compare_dirs, default_parallelism, evaluate_dir, load_scenarios,
    run_ablation, write_pairwise, write_report, AgentSuite, BackendMode, HarnessError, RunConfig,
    REPORT_JSON,
};
use usersim::ConfigId;

#[derive(Parser)]
#[command(
    name = "usersim",
    version,
    about = "Simulate restaurant guests against an ordering system and score the conversations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Backend {
    Remote,
    Scripted,
}

#[derive(Subcommand)]
enum Command {
    /// Run one or all configurations over a scenario bundle.
    Simulate {
        /// Configuration number 1-5, or `all`.
        #[arg(long, default_value = "all")]
        config: String,
        #[arg(long)]
        scenarios: PathBuf,
        #[arg(long, value_enum, default_value = "scripted")]
        backend: Backend,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = Limits::default().max_turns)]
        max_turns: u32,
        #[arg(long)]
        parallelism: Option<usize>,
        /// Reject state operations that leave the target bounds.
        #[arg(long)]
        strict_bounds: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Directory with prompt templates overriding the bundled ones.
        #[arg(long, env = "SIM_PROMPTS")]
        prompts: Option<PathBuf>,
    },
    /// Score existing logs.
    Evaluate {
        #[arg(long)]
        logs: PathBuf,
        #[arg(long)]
        scenarios: PathBuf,
        #[arg(long)]
        report: PathBuf,
    },
    /// Significance of candidate over baseline metrics.
    Compare {
        #[arg(long)]
        baseline: PathBuf,
        #[arg(long)]
        candidate: PathBuf,
        #[arg(long)]
        report: PathBuf,
    },
}

#[derive(Debug)]
enum Failure {
    Harness(HarnessError),
    Usage(String),
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        Failure::Harness(e)
    }
}

fn parse_configs(raw: &str) -> Result<Vec<ConfigId>, Failure> {
    if raw.eq_ignore_ascii_case("all") {
        return Ok(ConfigId::ALL.to_vec());
    }
    raw.split(',')
        .map(|p| {
            p.trim()
                .parse::<u8>()
                .ok()
                .and_then(|n| ConfigId::try_from(n).ok())
                .ok_or_else(|| {
                    Failure::Usage(format!("invalid --config `{p}`, expected 1..5 or all"))
                })
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn simulate(
    config: &str,
    scenarios: &Path,
    backend: Backend,
    out: &Path,
    max_turns: u32,
    parallelism: Option<usize>,
    strict_bounds: bool,
    seed: u64,
    prompts: Option<&Path>,
) -> Result<(), Failure> {
    let configs = parse_configs(config)?;
    let bundle = load_scenarios(scenarios)?;
    let mode = match backend {
        Backend::Remote => BackendMode::Remote,
        Backend::Scripted => BackendMode::Scripted,
    };
    let suite = match mode {
        BackendMode::Scripted => AgentSuite::scripted(&bundle, seed),
        BackendMode::Remote => {
            let set = match prompts {
                Some(dir) => PromptSet::load(dir).map_err(|source| HarnessError::Io {
                    path: dir.to_owned(),
                    source,
                })?,
                None => PromptSet::default(),
            };
            AgentSuite::remote_from_env(Arc::new(set))?
        }
    };
    let mut results = Vec::new();
    for config_id in configs {
        let run = RunConfig {
            config_id,
            backend_mode: mode,
            limits: Limits {
                max_turns,
                ..Limits::default()
            },
            parallelism: parallelism.unwrap_or_else(|| default_parallelism(mode)),
            strict_state_bounds: strict_bounds,
            seed,
        };
        results.push(run_ablation(&run, &bundle, &suite, Some(out))?);
    }
    let md = write_report(&out.join(REPORT_JSON), &aggregate_report(&results))?;
    info!("report written to {}", md.display());
    emit(&std::fs::read_to_string(&md).unwrap_or_default());
    Ok(())
}

fn evaluate(logs: &Path, scenarios: &Path, report: &Path) -> Result<(), Failure> {
    let bundle = load_scenarios(scenarios)?;
    let results = evaluate_dir(logs, &bundle)?;
    if results.is_empty() {
        return Err(Failure::Usage(format!(
            "no conversation logs under {}",
            logs.display()
        )));
    }
    let doc = aggregate_report(&results);
    let md = write_report(report, &doc)?;
    emit(&doc.to_markdown());
    info!(
        "report written to {} and {}",
        report.display(),
        md.display()
    );
    Ok(())
}

fn compare(baseline: &Path, candidate: &Path, report: &Path) -> Result<(), Failure> {
    let doc = compare_dirs(baseline, candidate)?;
    write_pairwise(report, &doc)?;
    emit(&doc.to_markdown());
    Ok(())
}

/// Stdout may be a closed pipe; the report files are the real output.
fn emit(text: &str) {
    use std::io::Write;
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Simulate {
            config,
            scenarios,
            backend,
            out,
            max_turns,
            parallelism,
            strict_bounds,
            seed,
            prompts,
        } => simulate(
            config,
            scenarios,
            *backend,
            out,
            *max_turns,
            *parallelism,
            *strict_bounds,
            *seed,
            prompts.as_deref(),
        ),
        Command::Evaluate {
            logs,
            scenarios,
            report,
        } => evaluate(logs, scenarios, report),
        Command::Compare {
            baseline,
            candidate,
            report,
        } => compare(baseline, candidate, report),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Harness(e)) => {
            error!("{e}");
            eprintln!("error: {e}");
            ExitCode::from(if e.is_schema_error() { 2 } else { 1 })
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
