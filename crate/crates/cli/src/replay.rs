use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::Path;

use masim_cases::cbf::{local_robustness, replay_barriers};
use masim_cases::mpc::{separation, INTRUDER, OWNSHIP};
use masim_core::agent::{TraceLog, TraceMeta};
use tracing::warn;

use crate::scenario::{Case, ScenarioFile};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Metric {
    /// Ownship-intruder separation per step.
    Separation,
    /// Robustness of each agent's local task over the whole run.
    Robustness,
    /// Every live barrier value per sample.
    Barrier,
}

impl Metric {
    fn name(self) -> &'static str {
        match self {
            Metric::Separation => "separation",
            Metric::Robustness => "robustness",
            Metric::Barrier => "barrier",
        }
    }
}

/// Environment states per step: `step -> (time, entity -> state)`.
type Samples = BTreeMap<u64, (f64, BTreeMap<u32, Vec<f64>>)>;

fn samples(log: &TraceLog) -> Samples {
    let mut out = Samples::new();
    for r in log.rows().iter().filter(|r| r.component == "environment") {
        out.entry(r.step).or_insert_with(|| (r.time, BTreeMap::new())).1.insert(r.agent_id, r.belief.clone());
    }
    out
}

/// Planar positions per sample, entities in `ids` order. Samples missing
/// an entity are skipped.
fn history(samples: &Samples, ids: &[u32]) -> Vec<Vec<[f64; 2]>> {
    samples
        .values()
        .filter_map(|(_, states)| {
            ids.iter()
                .map(|id| states.get(id).and_then(|s| s.get(..2)).map(|s| [s[0], s[1]]))
                .collect::<Option<Vec<_>>>()
        })
        .collect()
}

pub fn read_trace(path: &Path) -> Result<(TraceMeta, TraceLog), CliError> {
    let f = File::open(path).map_err(|e| CliError::Io { path: path.to_path_buf(), source: e })?;
    Ok(TraceLog::read_csv(BufReader::new(f))?)
}

fn io(e: std::io::Error) -> CliError {
    CliError::Output(e)
}

/// Recomputes `metric` from the trace alone and writes it as CSV. The
/// config supplies formulas and weights; its hash must match the trace
/// unless `force` is set.
pub fn replay<W: Write>(
    trace_path: &Path,
    metric: Metric,
    config: &ScenarioFile,
    force: bool,
    mut out: W,
) -> Result<(), CliError> {
    let (meta, log) = read_trace(trace_path)?;
    let hash = config.config_hash();
    if meta.config_hash != hash {
        if !force {
            return Err(CliError::HashMismatch { trace: meta.config_hash, config: hash });
        }
        warn!(trace = %meta.config_hash, config = %hash, "config hash mismatch ignored");
    }
    let case = config.case().map_err(|i| CliError::Config(vec![i]))?;
    let unsupported = || CliError::UnsupportedMetric { metric: metric.name().into(), case: case.label().into() };
    let samples = samples(&log);
    match (metric, case) {
        (Metric::Separation, Case::Encounter(c)) => {
            writeln!(out, "step,time,separation").map_err(io)?;
            for (step, (time, states)) in &samples {
                let (Some(own), Some(intr)) = (states.get(&OWNSHIP), states.get(&INTRUDER)) else { continue };
                let (Some(a), Some(b)) = (pose(own), pose(intr)) else { continue };
                writeln!(out, "{step},{time},{}", separation(a, b, c.mpc.r)).map_err(io)?;
            }
        }
        (Metric::Robustness, Case::Formation(c)) => {
            let mut ids: Vec<u32> = c.agents.iter().map(|a| a.id).collect();
            ids.sort_unstable();
            let robustness = local_robustness(c, &history(&samples, &ids)).map_err(|e| CliError::Runtime(e.to_string()))?;
            writeln!(out, "agent,robustness").map_err(io)?;
            for (agent, r) in robustness {
                writeln!(out, "{agent},{r}").map_err(io)?;
            }
        }
        (Metric::Barrier, Case::Formation(c)) => {
            let mut ids: Vec<u32> = c.agents.iter().map(|a| a.id).collect();
            ids.sort_unstable();
            let records = replay_barriers(c, &history(&samples, &ids)).map_err(|e| CliError::Runtime(e.to_string()))?;
            writeln!(out, "step,time,owner,task,value").map_err(io)?;
            for r in records {
                writeln!(out, "{},{},{},{},{}", r.step, r.time, r.owner, r.task, r.value).map_err(io)?;
            }
        }
        _ => return Err(unsupported()),
    }
    out.flush().map_err(io)
}

fn pose(s: &[f64]) -> Option<[f64; 3]> {
    match s {
        [x, y, h, ..] => Some([*x, *y, *h]),
        _ => None,
    }
}
