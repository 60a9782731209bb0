use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use masim_cases::cbf::{self, CbfError};
use masim_cases::mpc::{self, MpcError};
use masim_cases::tasking::{self, TaskRow, TaskingError};
use masim_cases::Issue;
use masim_core::agent::{Agent, AsyncConfig, AsyncCoordinator, RunSummary, TraceLog, TraceMeta, TRACE_VERSION};
use masim_core::env::World2D;
use serde::Serialize;
use serde_json::{json, Map, Value};
use tracing::info;

use crate::scenario::{Case, Mode, ScenarioFile};
use crate::CliError;

#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Overrides the seed in the file.
    pub seed: Option<u64>,
    pub mode: Option<Mode>,
    pub out_dir: PathBuf,
    /// Wall-clock length of an async run.
    pub wall_secs: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub artifacts: Vec<PathBuf>,
    pub metrics: Value,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    scenario_path: String,
    name: &'a str,
    case: &'static str,
    seed: u64,
    mode: Mode,
    out_dir: String,
    config_hash: &'a str,
    versions: BTreeMap<&'static str, String>,
    config: &'a ScenarioFile,
}

fn config_error(path: &str, message: String) -> CliError {
    CliError::Config(vec![Issue::new(path, message)])
}

impl From<MpcError> for CliError {
    fn from(e: MpcError) -> Self {
        match e {
            MpcError::Config(m) => config_error("encounter", m),
            MpcError::ClosedLoop { step, message } => CliError::StepFailed { step, message },
            MpcError::Coordinator(c) => CliError::from_coordinator(c),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<CbfError> for CliError {
    fn from(e: CbfError) -> Self {
        match e {
            CbfError::Config(m) => config_error("formation", m),
            CbfError::Coordinator(c) => CliError::from_coordinator(c),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<TaskingError> for CliError {
    fn from(e: TaskingError) -> Self {
        match e {
            TaskingError::Config(m) => config_error("warehouse", m),
            TaskingError::Coordinator(c) => CliError::from_coordinator(c),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::Io { path: path.to_path_buf(), source: e })
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Io { path: path.to_path_buf(), source: e }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::Runtime(e.to_string()))?;
    writeln!(w).and_then(|_| w.flush()).map_err(io_err(path))
}

fn summary_json(s: &RunSummary) -> Value {
    json!({
        "steps": s.steps,
        "stopped_by_hook": s.stopped_by_hook,
        "invocations": s.invocations,
        "component_failures": s.component_failures,
        "boundary_violations": s.boundary_violations.len(),
        "collisions": s.collisions.len(),
        "clamped_inputs": s.clamped_inputs,
    })
}

/// Merges the fields of `report` into `metrics`.
fn merge(metrics: &mut Map<String, Value>, report: &impl Serialize) {
    if let Value::Object(fields) = serde_json::to_value(report).expect("report serializes") {
        metrics.extend(fields);
    }
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Task report CSV: a comment line with seed and config hash, then one row
/// per issued task.
pub fn write_task_report<W: Write>(rows: &[TaskRow], meta: &TraceMeta, out: W) -> Result<(), csv::Error> {
    let mut out = out;
    writeln!(out, "# masim-task-report seed={} config={} scenario={}", meta.seed, meta.config_hash, meta.scenario)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "task_id",
        "kind",
        "origin",
        "destination",
        "issue_step",
        "deadline",
        "assignee",
        "assign_step",
        "risk",
        "completion_step",
        "deadline_met",
        "flagged_rounds",
    ])?;
    for r in rows {
        w.write_record([
            r.id.to_string(),
            r.kind.clone(),
            r.origin.clone(),
            r.destination.clone(),
            r.issue_step.to_string(),
            r.deadline.to_string(),
            opt(r.assignee),
            opt(r.assign_step),
            opt(r.risk),
            opt(r.completion_step),
            r.deadline_met.to_string(),
            r.flagged_rounds.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn async_parts(case: Case<'_>, seed: u64) -> Result<(World2D, Vec<Agent>), CliError> {
    Ok(match case {
        Case::Encounter(c) => mpc::build_agents(c, seed)?,
        Case::Formation(c) => {
            let parts = cbf::build_agents(c, seed)?;
            (parts.world, parts.agents)
        }
        Case::Warehouse(c) => tasking::build_agents(c, seed)?,
    })
}

/// Validates and runs a scenario, writing `trace.csv`, `metrics.json`,
/// `manifest.json` and, for the warehouse, `task_report.csv` to the output
/// directory.
pub fn run_scenario(path: &Path, file: &ScenarioFile, opts: &RunOptions) -> Result<RunOutcome, CliError> {
    let issues = file.validate();
    if !issues.is_empty() {
        return Err(CliError::Config(issues));
    }
    let case = file.case().map_err(|i| CliError::Config(vec![i]))?;
    let seed = opts.seed.unwrap_or(file.seed);
    let mode = opts.mode.unwrap_or(file.mode);
    let hash = file.config_hash();
    let meta = TraceMeta { seed, config_hash: hash.clone(), scenario: file.name.clone() };
    std::fs::create_dir_all(&opts.out_dir).map_err(io_err(&opts.out_dir))?;
    info!(scenario = %file.name, case = case.label(), seed, %mode, "run started");

    let mut metrics = Map::new();
    metrics.insert("scenario".into(), json!(file.name));
    metrics.insert("case".into(), json!(case.label()));
    metrics.insert("seed".into(), json!(seed));
    metrics.insert("mode".into(), json!(mode));
    metrics.insert("config_hash".into(), json!(hash));
    let mut artifacts = Vec::new();
    let trace: TraceLog = match mode {
        Mode::Sync => match case {
            Case::Encounter(c) => {
                let run = mpc::closed_loop(c, seed)?;
                merge(&mut metrics, &run.report);
                metrics.insert("summary".into(), summary_json(&run.summary));
                run.trace
            }
            Case::Formation(c) => {
                let run = cbf::run_formation(c, seed)?;
                let mut report = run.report;
                let positions = std::mem::take(&mut report.positions);
                merge(&mut metrics, &report);
                metrics.insert("samples".into(), json!(positions.len()));
                metrics.insert("summary".into(), summary_json(&run.summary));
                run.trace
            }
            Case::Warehouse(c) => {
                let run = tasking::run_warehouse(c, seed)?;
                let mut report = run.report;
                report.positions.clear();
                let report_path = opts.out_dir.join("task_report.csv");
                write_task_report(&report.tasks, &meta, create(&report_path)?)
                    .map_err(|e| CliError::Runtime(format!("{}: {e}", report_path.display())))?;
                artifacts.push(report_path);
                merge(&mut metrics, &report);
                metrics.remove("positions");
                metrics.insert("all_deadlines_met".into(), json!(report.all_met()));
                metrics.insert("summary".into(), summary_json(&run.summary));
                run.trace
            }
        },
        Mode::Async => {
            let (world, agents) = async_parts(case, seed)?;
            let mut coordinator = AsyncCoordinator::new(world, seed);
            for a in agents {
                coordinator.add_agent(a).map_err(CliError::from_coordinator)?;
            }
            let config = AsyncConfig {
                wall_duration: Duration::from_secs_f64(opts.wall_secs.max(0.0)),
                default_period: 0.01,
                world_period: Some(0.01),
                worker_threads: 4,
            };
            let report = coordinator.run(config).map_err(CliError::from_coordinator)?;
            let iterations: BTreeMap<String, u64> =
                report.iterations.iter().map(|((agent, name), n)| (format!("{agent}/{name}"), *n)).collect();
            metrics.insert("world_steps".into(), json!(report.world_steps));
            metrics.insert("iterations".into(), json!(iterations));
            report.trace
        }
    };

    let trace_path = opts.out_dir.join("trace.csv");
    trace.write_csv(&meta, create(&trace_path)?)?;
    artifacts.push(trace_path);
    let metrics = Value::Object(metrics);
    let metrics_path = opts.out_dir.join("metrics.json");
    write_json(&metrics_path, &metrics)?;
    artifacts.push(metrics_path);
    let manifest = Manifest {
        scenario_path: path.display().to_string(),
        name: &file.name,
        case: case.label(),
        seed,
        mode,
        out_dir: opts.out_dir.display().to_string(),
        config_hash: &hash,
        versions: BTreeMap::from([
            ("masim", env!("CARGO_PKG_VERSION").to_string()),
            ("trace", format!("v{TRACE_VERSION}")),
        ]),
        config: file,
    };
    let manifest_path = opts.out_dir.join("manifest.json");
    write_json(&manifest_path, &manifest)?;
    artifacts.push(manifest_path);
    info!(out = %opts.out_dir.display(), "run finished");
    Ok(RunOutcome { artifacts, metrics })
}
