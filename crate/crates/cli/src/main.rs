use std::io::stdout;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use masim_cli::{replay, run_scenario, CliError, Metric, Mode, RunOptions, ScenarioFile, EXIT_CONFIG};
use tracing_subscriber::EnvFilter;

/// Run, validate and replay multi-agent scenarios.
#[derive(Debug, Parser)]
#[command(name = "masim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a scenario file; exits 0 only when it is clean.
    Validate { config: PathBuf },
    /// Run a scenario and write trace, metrics and manifest.
    Run {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        /// Output directory [default: $MASIM_OUT_DIR, else out/<name>].
        #[arg(long)]
        out: Option<PathBuf>,
        /// Wall-clock seconds of an async run.
        #[arg(long, default_value_t = 2.0)]
        wall_secs: f64,
    },
    /// Recompute a metric from a trace and print it as CSV.
    Replay {
        trace: PathBuf,
        #[arg(long, value_enum)]
        metric: Metric,
        /// Scenario file the trace was produced from.
        #[arg(long)]
        config: PathBuf,
        /// Accept a config whose hash differs from the trace's.
        #[arg(long)]
        force: bool,
    },
}

fn load(path: &Path) -> Result<ScenarioFile, ExitCode> {
    ScenarioFile::load(path).map_err(|e| {
        report(&e);
        ExitCode::from(EXIT_CONFIG as u8)
    })
}

fn report(e: &CliError) {
    match e {
        CliError::Config(issues) => {
            for i in issues {
                eprintln!("error: {i}");
            }
        }
        other => eprintln!("error: {other}"),
    }
}

fn exit(result: Result<(), CliError>) -> ExitCode {
    match result {
        Ok(()) => ExitCode::SUCCESS,
        // A closed pipe (e.g. `| head`) is not a failure.
        Err(CliError::Output(e)) if e.kind() == std::io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(e) => {
            report(&e);
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match cli.command {
        Command::Validate { config } => {
            let file = match load(&config) {
                Ok(f) => f,
                Err(code) => return code,
            };
            let issues = file.validate();
            if issues.is_empty() {
                let case = file.case().map(|c| c.label()).unwrap_or("?");
                println!("ok: {} ({case})", file.name);
                ExitCode::SUCCESS
            } else {
                exit(Err(CliError::Config(issues)))
            }
        }
        Command::Run { config, seed, mode, out, wall_secs } => {
            let file = match load(&config) {
                Ok(f) => f,
                Err(code) => return code,
            };
            let out_dir = out
                .or_else(|| std::env::var_os("MASIM_OUT_DIR").map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from("out").join(&file.name));
            let opts = RunOptions { seed, mode, out_dir, wall_secs };
            exit(run_scenario(&config, &file, &opts).map(|outcome| {
                for a in outcome.artifacts {
                    println!("{}", a.display());
                }
            }))
        }
        Command::Replay { trace, metric, config, force } => {
            let file = match load(&config) {
                Ok(f) => f,
                Err(code) => return code,
            };
            exit(replay(&trace, metric, &file, force, stdout().lock()))
        }
    }
}
