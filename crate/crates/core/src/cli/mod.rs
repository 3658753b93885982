//! Command-line front end and on-disk artifacts.

pub mod config;
pub mod report;

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use thiserror::Error;

use crate::controller::{deserialize, Interpreter};
use crate::orchestrator::{
    run_session, score_fixed, DesignSession, OrchestratorError, ProposerMode, SCHEMA_VERSION,
};
use crate::plant::fmt_sig9;

pub use config::RunConfig;
pub use report::{convergence_csv, parse_convergence_csv, render_report};

pub const EXIT_SPECS_MET: i32 = 0;
pub const EXIT_SPECS_UNMET: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("session log error: {0}")]
    Log(String),
    #[error("cannot write {path}: {message}")]
    Io { path: String, message: String },
}

impl From<OrchestratorError> for CliError {
    fn from(e: OrchestratorError) -> Self {
        CliError::Config(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "ctrlsynth",
    version,
    about = "Bi-level controller synthesis for a boost converter"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a design session.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        mode: Option<ProposerMode>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate one controller with fixed parameters.
    Simulate {
        #[arg(long)]
        structure: PathBuf,
        /// Comma-separated parameter values.
        #[arg(long, allow_hyphen_values = true)]
        theta: String,
        /// Config file supplying `[plant]`, `[scenario]` and optionally `[sim]` and `[spec]`.
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Regenerate the report from a session log.
    Replay {
        #[arg(long)]
        log: PathBuf,
        /// Also write `report.md` and `convergence.csv` here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                EXIT_CONFIG
            } else {
                EXIT_SPECS_MET
            };
        }
    };
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_CONFIG
        }
    }
}

pub fn execute(command: Command) -> Result<i32, CliError> {
    match command {
        Command::Run {
            config,
            seed,
            mode,
            out,
        } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.session.seed = s;
            }
            if let Some(m) = mode {
                cfg.session.mode = m;
            }
            if let Some(o) = out {
                cfg.output.dir = o;
            }
            cmd_run(&cfg)
        }
        Command::Simulate {
            structure,
            theta,
            scenario,
            out,
        } => cmd_simulate(&structure, &theta, &scenario, &out),
        Command::Replay { log, out } => {
            let session = load_session(&log)?;
            let report = render_report(&session);
            if let Some(dir) = out {
                write_file(&dir.join("report.md"), &report)?;
                write_file(&dir.join("convergence.csv"), &convergence_csv(&session))?;
            }
            print!("{report}");
            Ok(EXIT_SPECS_MET)
        }
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io)?;
    }
    fs::write(path, contents).map_err(io)
}

/// Runs a session and writes its artifacts under `cfg.output.dir`.
pub fn cmd_run(cfg: &RunConfig) -> Result<i32, CliError> {
    let problem = cfg.problem();
    problem.validate()?;
    let outcome = run_session(&problem, cfg.output.save_trajectories)?;
    let session = &outcome.session;
    let dir = &cfg.output.dir;

    write_file(&dir.join("session.json"), &session.to_json())?;
    write_file(&dir.join("report.md"), &render_report(session))?;
    write_file(&dir.join("convergence.csv"), &convergence_csv(session))?;
    let mut timings = String::from("k,propose_s,optimize_s\n");
    for t in &outcome.timings {
        timings.push_str(&format!(
            "{},{},{}\n",
            t.k,
            fmt_sig9(t.propose_s),
            fmt_sig9(t.optimize_s)
        ));
    }
    write_file(&dir.join("timings.csv"), &timings)?;
    if let Some(traj) = &outcome.best_trajectory {
        write_file(&dir.join("final_trajectory.csv"), &traj.to_csv())?;
    }
    for (k, traj) in &outcome.trajectories {
        if let Some(traj) = traj {
            write_file(
                &dir.join(format!("trajectories/iter_{k:02}.csv")),
                &traj.to_csv(),
            )?;
        }
    }

    if cfg.output.verbose {
        for it in &session.iterations {
            eprintln!(
                "k={} {} {} J={} flags={:?}",
                it.k,
                it.action.kind,
                it.structure.name,
                fmt_sig9(it.feedback.index_j),
                it.feedback.spec_flags
            );
        }
    }
    let best = session.best_record();
    println!(
        "{}: {} after {} iteration(s), best J = {} ({})",
        session.termination_reason.as_str(),
        if session.specs_met() {
            "specs met"
        } else {
            "specs not met"
        },
        session.iterations.len(),
        fmt_sig9(session.best.index_j),
        best.structure.name
    );
    println!("artifacts written to {}", dir.display());
    Ok(if session.specs_met() {
        EXIT_SPECS_MET
    } else {
        EXIT_SPECS_UNMET
    })
}

pub fn parse_theta(text: &str) -> Result<Vec<f64>, CliError> {
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    text.split(',')
        .enumerate()
        .map(|(n, s)| {
            s.trim()
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| {
                    CliError::Input(format!("theta[{n}]: not a finite number: '{}'", s.trim()))
                })
        })
        .collect()
}

/// One closed-loop run; writes `trajectory.csv` and `metrics.json` to `out`.
pub fn cmd_simulate(
    structure: &Path,
    theta: &str,
    scenario: &Path,
    out: &Path,
) -> Result<i32, CliError> {
    let text = fs::read_to_string(structure)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", structure.display())))?;
    let s =
        deserialize(&text).map_err(|e| CliError::Input(format!("{}: {e}", structure.display())))?;
    let theta = parse_theta(theta)?;
    let dim = Interpreter::new(&s)
        .map_err(|e| CliError::Input(e.to_string()))?
        .param_dimension();
    if theta.len() != dim {
        return Err(CliError::Input(format!(
            "expected d_θ={dim}, got {}",
            theta.len()
        )));
    }
    let cfg = RunConfig::load(scenario)?;
    let (fb, traj) = score_fixed(&s, &theta, &cfg.problem())?;
    match &traj {
        Some(traj) => write_file(&out.join("trajectory.csv"), &traj.to_csv())?,
        None => eprintln!("closed loop diverged; no trajectory written"),
    }
    write_file(&out.join("metrics.json"), &fb.to_document())?;
    println!(
        "overshoot {} %, e_ss {} V, duty TV {}, J = {}",
        fmt_sig9(fb.metrics.overshoot_pct),
        fmt_sig9(fb.metrics.sse_volts),
        fmt_sig9(fb.metrics.chattering_tv),
        fmt_sig9(fb.index_j)
    );
    Ok(if fb.metrics.diverged {
        EXIT_SPECS_UNMET
    } else {
        EXIT_SPECS_MET
    })
}

/// Reads a session log, rejecting unsupported schema versions.
pub fn load_session(path: &Path) -> Result<DesignSession, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Log(format!("cannot read {}: {e}", path.display())))?;
    parse_session(&text)
}

pub fn parse_session(text: &str) -> Result<DesignSession, CliError> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| CliError::Log(format!("not a session log: {e}")))?;
    match value.get("schema_version").and_then(|v| v.as_u64()) {
        Some(v) if v == u64::from(SCHEMA_VERSION) => {}
        Some(v) => {
            return Err(CliError::Log(format!(
                "unsupported schema_version {v} (expected {SCHEMA_VERSION})"
            )))
        }
        None => return Err(CliError::Log("missing schema_version".into())),
    }
    let session: DesignSession = serde_json::from_value(value)
        .map_err(|e| CliError::Log(format!("schema mismatch: {e}")))?;
    if session.iterations.is_empty() || session.best.k >= session.iterations.len() {
        return Err(CliError::Log(
            "schema mismatch: best design refers to a missing iteration".into(),
        ));
    }
    Ok(session)
}
