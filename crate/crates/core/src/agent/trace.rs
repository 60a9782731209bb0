//! Run trace: CSV with a versioned comment header.
//!
//! ```text
//! # masim-trace v1 seed=<u64> config=<hash> scenario=<name>
//! step,time,agent_id,component,phase,belief,risk
//! ```
//!
//! `belief` joins the state components with `;`. Floats use the shortest
//! representation that parses back to the same value.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const TRACE_VERSION: u32 = 1;
pub const TRACE_COLUMNS: [&str; 7] = ["step", "time", "agent_id", "component", "phase", "belief", "risk"];
const MAGIC: &str = "# masim-trace";

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("trace csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing '{MAGIC} v<major>' header line")]
    MissingHeader,
    #[error("unsupported trace version {found} (this build reads v{TRACE_VERSION})")]
    UnsupportedVersion { found: String },
    #[error("trace schema error at line {line}: {message}")]
    Schema { line: u64, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub seed: u64,
    pub config_hash: String,
    pub scenario: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: u64,
    pub time: f64,
    pub agent_id: u32,
    pub component: String,
    pub phase: String,
    pub belief: Vec<f64>,
    pub risk: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TraceLog {
    rows: Vec<TraceRow>,
}

impl TraceLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, row: TraceRow) {
        self.rows.push(row);
    }

    pub fn rows(&self) -> &[TraceRow] {
        &self.rows
    }

    pub fn into_rows(self) -> Vec<TraceRow> {
        self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn write_csv<W: Write>(&self, meta: &TraceMeta, mut out: W) -> Result<(), TraceError> {
        writeln!(
            out,
            "{MAGIC} v{TRACE_VERSION} seed={} config={} scenario={}",
            meta.seed, meta.config_hash, meta.scenario
        )?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(TRACE_COLUMNS)?;
        for r in &self.rows {
            let belief = r.belief.iter().map(f64::to_string).collect::<Vec<_>>().join(";");
            w.write_record([
                r.step.to_string(),
                r.time.to_string(),
                r.agent_id.to_string(),
                r.component.clone(),
                r.phase.clone(),
                belief,
                r.risk.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: BufRead>(mut input: R) -> Result<(TraceMeta, TraceLog), TraceError> {
        let mut header = String::new();
        input.read_line(&mut header)?;
        let meta = parse_header(header.trim_end())?;
        let mut reader = csv::Reader::from_reader(input);
        let cols: Vec<String> = reader.headers()?.iter().map(String::from).collect();
        if cols != TRACE_COLUMNS {
            return Err(TraceError::Schema { line: 2, message: format!("columns {cols:?}, expected {TRACE_COLUMNS:?}") });
        }
        let mut log = TraceLog::new();
        for (i, rec) in reader.records().enumerate() {
            let line = i as u64 + 3;
            let rec = rec.map_err(|e| TraceError::Schema { line, message: e.to_string() })?;
            if rec.len() != TRACE_COLUMNS.len() {
                return Err(TraceError::Schema { line, message: format!("{} fields", rec.len()) });
            }
            let bad = |what: &str| TraceError::Schema { line, message: format!("bad {what}") };
            let belief = if rec[5].is_empty() {
                Vec::new()
            } else {
                rec[5].split(';').map(|s| s.parse::<f64>()).collect::<Result<_, _>>().map_err(|_| bad("belief"))?
            };
            log.push(TraceRow {
                step: rec[0].parse().map_err(|_| bad("step"))?,
                time: rec[1].parse().map_err(|_| bad("time"))?,
                agent_id: rec[2].parse().map_err(|_| bad("agent_id"))?,
                component: rec[3].to_string(),
                phase: rec[4].to_string(),
                belief,
                risk: rec[6].parse().map_err(|_| bad("risk"))?,
            });
        }
        Ok((meta, log))
    }
}

fn parse_header(line: &str) -> Result<TraceMeta, TraceError> {
    let rest = line.strip_prefix(MAGIC).ok_or(TraceError::MissingHeader)?;
    let mut parts = rest.split_whitespace();
    let version = parts.next().ok_or(TraceError::MissingHeader)?;
    let major = version.strip_prefix('v').ok_or(TraceError::MissingHeader)?;
    if major.split('.').next() != Some(&TRACE_VERSION.to_string()) {
        return Err(TraceError::UnsupportedVersion { found: version.to_string() });
    }
    let mut meta = TraceMeta { seed: 0, config_hash: String::new(), scenario: String::new() };
    for kv in parts {
        match kv.split_once('=') {
            Some(("seed", v)) => {
                meta.seed = v.parse().map_err(|_| TraceError::Schema { line: 1, message: format!("seed '{v}'") })?
            }
            Some(("config", v)) => meta.config_hash = v.to_string(),
            Some(("scenario", v)) => meta.scenario = v.to_string(),
            _ => {}
        }
    }
    Ok(meta)
}
