//! Command-line front end: config ingestion, the five experiment commands and
//! report emission.

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::Parser;
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::Error;
pub use config::{Command, ExperimentConfig};

/// Exit status on success.
pub const EXIT_OK: i32 = 0;
/// Output files could not be written.
pub const EXIT_IO: i32 = 1;
/// Bad arguments, config or model input, or a slice outside a command's scope.
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NO_CONVERGENCE: i32 = 3;
/// A certificate, oracle or non-discrimination check failed.
pub const EXIT_VERIFICATION: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "fairprice", version, about = "Optimal non-discriminatory personalized pricing")]
pub struct Args {
    pub command: Command,
    /// Experiment config (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; overrides the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Atoms per group for the assignment oracle.
    #[arg(long)]
    pub oracle_n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Settings after merging the config with command-line overrides.
#[derive(Debug, Clone)]
pub struct RunSettings {
    pub out: PathBuf,
    pub oracle_n: usize,
    pub seed: u64,
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    /// Slices outside the parameter range a command supports.
    Region { slices: Vec<usize>, detail: String },
    Model { slice: Option<usize>, source: Error },
    Verification { slice: usize, check: String, detail: String, witness: Value },
    Io(String),
}

impl CliError {
    pub fn model(slice: usize) -> impl FnOnce(Error) -> CliError {
        move |source| CliError::Model { slice: Some(slice), source }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Region { .. } => EXIT_VALIDATION,
            CliError::Io(_) => EXIT_IO,
            CliError::Verification { .. } => EXIT_VERIFICATION,
            CliError::Model { source, .. } => match source {
                Error::NoConvergence { .. } => EXIT_NO_CONVERGENCE,
                Error::InfeasibleCertificate { .. } | Error::SlacknessViolation { .. } | Error::NonMonotoneSegment { .. } => {
                    EXIT_VERIFICATION
                }
                _ => EXIT_VALIDATION,
            },
        }
    }

    pub fn to_json(&self) -> Value {
        let code = self.exit_code();
        match self {
            CliError::Config(m) => json!({"exit_code": code, "kind": "ConfigError", "message": m}),
            CliError::Io(m) => json!({"exit_code": code, "kind": "IoError", "message": m}),
            CliError::Region { slices, detail } => {
                json!({"exit_code": code, "kind": "RegionViolation", "message": detail, "slices": slices})
            }
            CliError::Verification { slice, check, detail, witness } => json!({
                "exit_code": code, "kind": "VerificationFailure", "check": check,
                "message": detail, "slice": slice, "witness": witness,
            }),
            CliError::Model { slice, source } => {
                let witness = match source {
                    Error::SlacknessViolation { v_l, v_h, gap } => json!({"v_l": v_l, "v_h": v_h, "gap": gap}),
                    Error::InfeasibleCertificate { v_l, v_h, slack } => json!({"v_l": v_l, "v_h": v_h, "slack": slack}),
                    _ => Value::Null,
                };
                json!({"exit_code": code, "kind": error_kind(source), "message": source.to_string(),
                       "slice": slice, "witness": witness})
            }
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) | CliError::Io(m) => f.write_str(m),
            CliError::Region { slices, detail } => write!(f, "slices {slices:?} out of scope: {detail}"),
            CliError::Model { slice: Some(i), source } => write!(f, "slice {i}: {source}"),
            CliError::Model { slice: None, source } => write!(f, "{source}"),
            CliError::Verification { slice, check, detail, .. } => write!(f, "slice {slice}: {check} failed: {detail}"),
        }
    }
}

pub fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::InvalidDistribution(_) => "InvalidDistribution",
        Error::InvalidSlice(_) => "InvalidSlice",
        Error::DegenerateSlice { .. } => "DegenerateSlice",
        Error::OutOfRange(_) => "OutOfRange",
        Error::WrongRegion { .. } => "WrongRegion",
        Error::NoConvergence { .. } => "NoConvergence",
        Error::UnsupportedConfiguration(_) => "UnsupportedConfiguration",
        Error::NonMonotoneSegment { .. } => "NonMonotoneSegment",
        Error::InfeasibleCertificate { .. } => "InfeasibleCertificate",
        Error::SlacknessViolation { .. } => "SlacknessViolation",
        Error::ZeroGains => "ZeroGains",
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(args) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
        }
    };
    let fallback_out = args.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    let (settings, result) = match prepare(&args) {
        Ok((cfg, settings)) => {
            let result = with_pool(|| commands::execute(args.command, &cfg, &settings));
            (settings, result)
        }
        Err(e) => (RunSettings { out: fallback_out, oracle_n: 0, seed: 0 }, Err(e)),
    };
    let error_path = settings.out.join("error.json");
    match result {
        Ok(()) => {
            let _ = std::fs::remove_file(&error_path);
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            if std::fs::create_dir_all(&settings.out).is_ok() {
                let _ = write_json(&error_path, &e.to_json());
            }
            e.exit_code()
        }
    }
}

fn prepare(args: &Args) -> Result<(ExperimentConfig, RunSettings), CliError> {
    let cfg = ExperimentConfig::load(&args.config).map_err(CliError::Config)?;
    if let Some(c) = cfg.command {
        if c != args.command {
            return Err(CliError::Config(format!(
                "config is for `{}` but `{}` was requested",
                c.as_str(),
                args.command.as_str()
            )));
        }
    }
    let oracle_n = args.oracle_n.or(cfg.oracle_n).unwrap_or(config::DEFAULT_ORACLE_N);
    if !(crate::oracle::MIN_N..=crate::oracle::MAX_N).contains(&oracle_n) {
        return Err(CliError::Config(format!("oracle n must lie in [10, 5000], got {oracle_n}")));
    }
    let out = args.out.clone().or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("out"));
    let seed = args.seed.or(cfg.seed).unwrap_or(0);
    Ok((cfg, RunSettings { out, oracle_n, seed }))
}

/// Runs `f` in a rayon pool capped by `FAIRPRICE_THREADS` when it is set.
fn with_pool<F>(f: F) -> Result<(), CliError>
where
    F: FnOnce() -> Result<(), CliError> + Send,
{
    let Ok(raw) = std::env::var("FAIRPRICE_THREADS") else {
        return f();
    };
    let n: usize = match raw.trim().parse() {
        Ok(n) if n > 0 => n,
        _ => return Err(CliError::Config(format!("FAIRPRICE_THREADS must be a positive integer, got {raw:?}"))),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    pool.install(f)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// A CSV table with a fixed header, written with LF line endings.
#[derive(Debug, Clone)]
pub struct Table {
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&'static str]) -> Self {
        Self { header: header.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let io = |e: csv::Error| CliError::Io(format!("{}: {e}", path.display()));
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(path).map_err(io)?;
        w.write_record(&self.header).map_err(io)?;
        for r in &self.rows {
            w.write_record(r).map_err(io)?;
        }
        w.flush().map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
    }
}

/// Shortest round-trip decimal form.
pub fn num(x: f64) -> String {
    format!("{x}")
}
