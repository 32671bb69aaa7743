//! Batch driver: configuration, verification campaigns, spectra extraction
//! and machine-readable reports.
//!
//! ```text
//! qop <verify-algebra|verify-lattice|verify-qop|spectra> --config <path> [--seed <int>] [--out <path>]
//! qop report --config <merge.json> [--out <path>]
//! qop report <report.json>... [--out <path>]
//! ```
//!
//! Exit codes: 0 all checks pass, 1 some residual fails, 2 configuration or
//! numerical error.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use qop_core::QopError;

pub mod config;
pub mod report;
pub mod suites;

pub use config::{MergeConfig, RunConfig, Tolerances};
pub use report::{merge, Record, Report};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration field `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("numerical error: {0}")]
    Numerical(#[from] QopError),

    #[error("QOP_WORKERS: {0}")]
    Workers(String),
}

pub const EXIT_PASS: i32 = 0;
pub const EXIT_RESIDUAL: i32 = 1;
pub const EXIT_ERROR: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "qop",
    version,
    about = "Q-operators for higher-spin eight-vertex chains: residual checks and Bethe roots"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// JSON run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the configuration seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// JSON report path (defaults to `report_path`, else stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MergeArgs {
    /// Merge configuration: `{"inputs": [...], "report_path": ...}`.
    #[arg(long, required_unless_present = "inputs")]
    pub config: Option<PathBuf>,
    /// Reports to merge, in order (after any listed in the configuration).
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Theta functions, representation and Sklyanin form.
    VerifyAlgebra(RunArgs),
    /// RLL, transfer matrices, gauge transformations and pseudo-vacua.
    VerifyLattice(RunArgs),
    /// Q_R, Q_L and Q.
    VerifyQop(RunArgs),
    /// Sectors, eigenvectors and Bethe roots; also writes `<out_stem>_roots.csv`.
    Spectra(RunArgs),
    /// Merge JSON reports: union of records in stable order.
    Report(MergeArgs),
}

/// The suites behind a run subcommand.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    Algebra,
    Lattice,
    Qop,
    Spectra,
}

impl Suite {
    pub fn name(self) -> &'static str {
        match self {
            Suite::Algebra => "verify-algebra",
            Suite::Lattice => "verify-lattice",
            Suite::Qop => "verify-qop",
            Suite::Spectra => "spectra",
        }
    }
}

/// Builds the model and runs one suite. Errors are configuration or
/// model-construction failures; residual failures live in the report.
pub fn run_suite(suite: Suite, config: &RunConfig) -> Result<Report, CliError> {
    let model = suites::Model::build(config)?;
    let mut report = Report::new(suite.name());
    match suite {
        Suite::Algebra => suites::algebra(&model, &mut report),
        Suite::Lattice => suites::lattice(&model, &mut report),
        Suite::Qop => suites::qop(&model, &mut report),
        Suite::Spectra => suites::spectra(&model, &mut report),
    }
    Ok(report)
}

/// Worker count from `QOP_WORKERS` (unset: rayon's default).
pub fn workers_from_env() -> Result<Option<usize>, CliError> {
    match std::env::var("QOP_WORKERS") {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(CliError::Workers(format!(
                "expected a positive integer, got `{v}`"
            ))),
        },
    }
}

fn execute(command: Command) -> Result<Report, CliError> {
    let (suite, args) = match command {
        Command::VerifyAlgebra(a) => (Suite::Algebra, a),
        Command::VerifyLattice(a) => (Suite::Lattice, a),
        Command::VerifyQop(a) => (Suite::Qop, a),
        Command::Spectra(a) => (Suite::Spectra, a),
        Command::Report(m) => {
            let (mut inputs, mut out) = (Vec::new(), m.out.clone());
            if let Some(path) = &m.config {
                let cfg = MergeConfig::load(path)?;
                inputs = cfg.inputs;
                out = out.or(cfg.report_path);
            }
            inputs.extend(m.inputs.iter().cloned());
            let reports = inputs
                .iter()
                .map(|p| Report::read_json(p))
                .collect::<Result<Vec<_>, _>>()?;
            let merged = merge(&reports);
            emit(&merged, out.as_deref(), false)?;
            return Ok(merged);
        }
    };
    let mut config = RunConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let out = args.out.clone().or_else(|| config.report_path.clone());
    let report = run_suite(suite, &config)?;
    emit(&report, out.as_deref(), suite == Suite::Spectra)?;
    Ok(report)
}

fn emit(report: &Report, out: Option<&std::path::Path>, roots_csv: bool) -> Result<(), CliError> {
    match out {
        Some(path) => {
            report.write_json(path)?;
            if roots_csv {
                report.write_roots_csv(&report::roots_csv_path(path))?;
            }
        }
        None => {
            print!("{}", report.to_json());
            if roots_csv {
                report.write_roots_csv(std::path::Path::new("spectra_roots.csv"))?;
            }
        }
    }
    Ok(())
}

/// Runs one parsed command and returns the process exit code. Diagnostics
/// and timing go to stderr.
pub fn run(cli: Cli) -> i32 {
    let workers = match workers_from_env() {
        Ok(w) => w,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_ERROR;
        }
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        builder = builder.num_threads(n);
    }
    let pool = match builder.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: worker pool: {e}");
            return EXIT_ERROR;
        }
    };
    let start = std::time::Instant::now();
    let result = pool.install(|| execute(cli.command));
    eprintln!("[timing] total: {:.3}s", start.elapsed().as_secs_f64());
    match result {
        Ok(report) => {
            for r in report.records.iter().filter(|r| !r.pass) {
                eprintln!(
                    "FAIL {} residual={} bound={:e}{}",
                    r.check_id,
                    r.residual.map_or("n/a".to_string(), |x| format!("{x:e}")),
                    r.bound,
                    r.note.as_ref().map_or(String::new(), |n| format!(" ({n})"))
                );
            }
            let s = &report.summary;
            eprintln!(
                "{}: {}/{} checks pass",
                report.subcommand, s.passed, s.total
            );
            if s.all_pass {
                EXIT_PASS
            } else {
                EXIT_RESIDUAL
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}
