//! Command line front end: scenario files in, CSV tables and a JSON summary
//! out.
//!
//! Every experiment is a pure function of the scenario and the seed. Trials
//! run on a rayon pool but each trial draws from its own RNG streams and the
//! results are reduced in trial order, so the CSV output does not depend on
//! the thread count.

pub mod experiments;
pub mod scenario;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use icvec_core::model::rng::{stream, SimRng, Stream};
use rayon::prelude::*;
use serde::Serialize;

pub use scenario::{Experiment, ScenarioFile};

/// Environment variable that overrides the scenario seed.
pub const SEED_ENV: &str = "ICVEC_SEED";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid scenario: {0}")]
    Scenario(String),
    #[error(transparent)]
    Core(#[from] icvec_core::Error),
    #[error("cannot write {path}: {source}")]
    Output { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    /// 2 for scenario validation failures, 3 for everything that fails while
    /// running.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Scenario(_) => 2,
            _ => 3,
        }
    }
}

/// Thread pool plus the per-trial RNG convention.
pub struct Runner {
    pool: rayon::ThreadPool,
    seed: u64,
}

impl Runner {
    pub fn new(threads: Option<usize>, seed: u64) -> Result<Self, CliError> {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(n) = threads {
            builder = builder.num_threads(n.max(1));
        }
        let pool = builder.build().map_err(|e| CliError::Runtime(format!("thread pool: {e}")))?;
        Ok(Self { pool, seed })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// `f(0..n)` in parallel, returned in index order.
    pub fn map<T, F>(&self, n: usize, f: F) -> Result<Vec<T>, CliError>
    where
        T: Send,
        F: Fn(usize) -> Result<T, CliError> + Sync + Send,
    {
        self.pool.install(|| (0..n).into_par_iter().map(f).collect())
    }

    /// Stream for `purpose` in trial `trial` of sweep point `point`.
    pub fn rng(&self, purpose: Stream, point: usize, trial: usize) -> SimRng {
        stream(self.seed, purpose, ((point as u64) << 32) | trial as u64)
    }
}

/// One CSV file of a report.
#[derive(Clone, Debug)]
pub struct Table {
    pub file: String,
    pub body: Vec<u8>,
    pub rows: usize,
}

impl Table {
    pub fn from_rows<T: Serialize>(file: &str, rows: &[T]) -> Result<Self, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in rows {
            w.serialize(row).map_err(|e| CliError::Runtime(format!("csv: {e}")))?;
        }
        let body = w.into_inner().map_err(|e| CliError::Runtime(format!("csv: {e}")))?;
        Ok(Self { file: file.to_string(), body, rows: rows.len() })
    }

    /// Parse the body back into records (header excluded).
    pub fn records(&self) -> Result<Vec<csv::StringRecord>, CliError> {
        csv::Reader::from_reader(self.body.as_slice())
            .records()
            .collect::<Result<_, _>>()
            .map_err(|e| CliError::Runtime(format!("csv: {e}")))
    }

    pub fn headers(&self) -> Result<csv::StringRecord, CliError> {
        csv::Reader::from_reader(self.body.as_slice())
            .headers()
            .cloned()
            .map_err(|e| CliError::Runtime(format!("csv: {e}")))
    }
}

/// Output of one experiment.
#[derive(Clone, Debug)]
pub struct Report {
    pub tables: Vec<Table>,
    /// Deterministic key results, copied into `summary.json`.
    pub summary: serde_json::Value,
}

impl Report {
    pub fn table(&self, file: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.file == file)
    }
}

/// Run the experiment selected by the scenario.
pub fn run_scenario(scenario: &ScenarioFile, runner: &Runner) -> Result<Report, CliError> {
    match scenario.experiment {
        Experiment::Chanest => experiments::chanest::run(scenario, runner),
        Experiment::Mud => experiments::mud::run(scenario, runner),
        Experiment::Throughput => experiments::throughput::run(scenario, runner),
        Experiment::Convergence => experiments::convergence::run(scenario, runner),
    }
}

/// Write every table plus `summary.json` into `dir`.
pub fn write_report(dir: &Path, scenario: &ScenarioFile, seed: u64, report: &Report) -> Result<(), CliError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| CliError::Output { path, source }
    };
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    for t in &report.tables {
        let path = dir.join(&t.file);
        std::fs::write(&path, &t.body).map_err(io(&path))?;
    }
    let generated = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let summary = serde_json::json!({
        "name": scenario.display_name(),
        "experiment": scenario.experiment.name(),
        "seed": seed,
        "generated_unix": generated,
        "tool_version": env!("CARGO_PKG_VERSION"),
        "files": report.tables.iter().map(|t| serde_json::json!({"file": t.file, "rows": t.rows})).collect::<Vec<_>>(),
        "results": report.summary,
    });
    let path = dir.join("summary.json");
    let text = serde_json::to_string_pretty(&summary).map_err(|e| CliError::Runtime(e.to_string()))?;
    std::fs::write(&path, text + "\n").map_err(io(&path))?;
    Ok(())
}

#[derive(Debug, Parser)]
#[command(name = "icvec", version, about = "Interference-cooperation vectoring simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Channel estimation MSE per iteration (IC, DC, centralized) with CRB.
    Chanest(RunArgs),
    /// SNR at the decision variable per iteration for the detection schemes.
    Mud(RunArgs),
    /// Per-tone bit loading and band throughput per cooperation scheme.
    Throughput(RunArgs),
    /// Spectral radii of the Jacobi splits and the explicit-recursion check.
    Convergence(RunArgs),
}

#[derive(Debug, clap::Args)]
pub struct RunArgs {
    /// Scenario TOML file.
    #[arg(long)]
    pub scenario: PathBuf,
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: PathBuf,
    /// Worker threads for trial-level parallelism (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Seed overriding the scenario file.
    #[arg(long, env = SEED_ENV)]
    pub seed: Option<u64>,
}

impl Command {
    fn parts(&self) -> (Experiment, &RunArgs) {
        match self {
            Command::Chanest(a) => (Experiment::Chanest, a),
            Command::Mud(a) => (Experiment::Mud, a),
            Command::Throughput(a) => (Experiment::Throughput, a),
            Command::Convergence(a) => (Experiment::Convergence, a),
        }
    }
}

/// Execute a parsed command line. Returns the seed that was used.
pub fn execute(cli: &Cli) -> Result<u64, CliError> {
    let (experiment, args) = cli.command.parts();
    let mut scenario = ScenarioFile::load(&args.scenario)?;
    if scenario.experiment != experiment {
        return Err(CliError::Scenario(format!(
            "scenario is a {} experiment but the {} command was used",
            scenario.experiment.name(),
            experiment.name()
        )));
    }
    if let Some(seed) = args.seed {
        scenario.seed = seed;
    }
    let runner = Runner::new(args.threads, scenario.seed)?;
    let report = run_scenario(&scenario, &runner)?;
    write_report(&args.out, &scenario, scenario.seed, &report)?;
    Ok(scenario.seed)
}

pub fn main_with(cli: Cli) -> ExitCode {
    match execute(&cli) {
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("icvec: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

/// Scenario presets shipped with the repository, by name.
pub const PRESETS: &[(&str, &str)] = &[
    ("fig5-k2", include_str!("../../../scenarios/fig5-k2.toml")),
    ("fig6", include_str!("../../../scenarios/fig6.toml")),
    ("fig7", include_str!("../../../scenarios/fig7.toml")),
    ("table1", include_str!("../../../scenarios/table1.toml")),
    ("convergence", include_str!("../../../scenarios/convergence.toml")),
];

pub fn preset(name: &str) -> Option<ScenarioFile> {
    PRESETS.iter().find(|(n, _)| *n == name).and_then(|(_, text)| ScenarioFile::parse(text).ok())
}
