//! Config-driven command-line driver. `run` parses arguments, executes one
//! subcommand and writes its artifacts plus a run manifest.

// `!(v > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod output;

use std::ffi::OsString;
use std::path::PathBuf;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};

use config::{ConfigError, Format, RunConfig};
use output::{manifest, sha256_hex, write_all, Artifact, ManifestInfo};

pub const EXIT_OK: u8 = 0;
pub const EXIT_CONFIG: u8 = 1;
pub const EXIT_NUMERICAL: u8 = 2;
pub const EXIT_REGIME: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "slowfast", version, about = "Slow-fast SDE averaging experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Worker threads (0 = one per core).
    #[arg(long, global = true, env = "SLOWFAST_WORKERS", default_value_t = 0)]
    pub workers: usize,

    /// Output directory; overrides `output.directory`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Output format; repeatable, overrides `output.formats`.
    #[arg(long = "format", global = true, value_parser = ["csv", "json", "svg-plotdata"])]
    pub formats: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// One coupled trajectory with its decoupled fast copy.
    Simulate,
    /// Tabulate the averaged drift.
    Average,
    /// Evaluate the explicit constants and bounds.
    Constants,
    /// Strong-error sweep over epsilon with a log-log fit.
    Converge,
    /// TAMD averaged drift, sample file and stopped sweep.
    Tamd,
    /// Girsanov weight, exponential moment and law-equivalence checks.
    DecoupleCheck,
    /// Entropy decay curve of the fast ensemble.
    Entropy,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Self::Simulate => "simulate",
            Self::Average => "average",
            Self::Constants => "constants",
            Self::Converge => "converge",
            Self::Tamd => "tamd",
            Self::DecoupleCheck => "decouple-check",
            Self::Entropy => "entropy",
        }
    }
}

#[derive(Debug)]
pub enum CliError {
    Config(Vec<ConfigError>),
    Io(String),
    Core(slowfast::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        use slowfast::Error as E;
        match self {
            Self::Config(_) | Self::Io(_) => EXIT_CONFIG,
            Self::Core(e) if commands::is_regime(e) => EXIT_REGIME,
            Self::Core(E::InvalidParameter { .. } | E::Parse { .. } | E::DimensionTooHigh { .. } | E::NotAffine { .. }) => {
                EXIT_CONFIG
            }
            Self::Core(_) => EXIT_NUMERICAL,
        }
    }

    fn report(&self) {
        match self {
            Self::Config(errors) => {
                for e in errors {
                    eprintln!("config error: {e}");
                }
            }
            Self::Io(msg) => eprintln!("error: {msg}"),
            Self::Core(e) if commands::is_regime(e) => eprintln!("assumption violated: {e}"),
            Self::Core(e) => eprintln!("error: {e}"),
        }
    }
}

impl From<slowfast::Error> for CliError {
    fn from(e: slowfast::Error) -> Self {
        Self::Core(e)
    }
}

/// Loads and validates a configuration file, applying command-line
/// overrides.
pub fn load_config(cli: &Cli) -> Result<(RunConfig, Vec<u8>, PathBuf), CliError> {
    let path = cli.config.clone().ok_or_else(|| {
        CliError::Config(vec![ConfigError { path: "--config".into(), reason: "a configuration file is required".into() }])
    })?;
    let bytes = std::fs::read(&path).map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
    let text = String::from_utf8(bytes.clone())
        .map_err(|_| CliError::Config(vec![ConfigError { path: "<document>".into(), reason: "not valid UTF-8".into() }]))?;
    let base = path.parent().map(|p| p.to_path_buf()).unwrap_or_default();
    let mut cfg = config::parse_config(&text, &base).map_err(CliError::Config)?;
    if let Some(out) = &cli.out {
        cfg.output.directory = out.clone();
    }
    if !cli.formats.is_empty() {
        let mut f: Vec<Format> = cli.formats.iter().filter_map(|s| Format::parse(s)).collect();
        f.sort();
        f.dedup();
        cfg.output.formats = f;
    }
    Ok((cfg, bytes, path))
}

/// Runs one subcommand and returns its artifacts, manifest excluded.
pub fn execute(command: Command, cfg: &RunConfig) -> Result<Vec<Artifact>, CliError> {
    let out = match command {
        Command::Simulate => commands::simulate(cfg),
        Command::Average => commands::average(cfg),
        Command::Constants => commands::constants(cfg),
        Command::Converge => commands::converge(cfg),
        Command::Tamd => commands::tamd(cfg),
        Command::DecoupleCheck => commands::decouple_check(cfg),
        Command::Entropy => commands::entropy(cfg),
    }?;
    Ok(out)
}

fn run_parsed(cli: &Cli) -> Result<Vec<PathBuf>, CliError> {
    let started = Instant::now();
    let started_unix = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let (cfg, config_bytes, config_path) = load_config(cli)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.workers)
        .build()
        .map_err(|e| CliError::Io(format!("cannot start worker pool: {e}")))?;
    let workers = pool.current_num_threads();
    let artifacts = pool.install(|| execute(cli.command, &cfg))?;

    let info = ManifestInfo {
        subcommand: cli.command.name().to_string(),
        config_path,
        config_sha256: sha256_hex(&config_bytes),
        seed: cfg.sim.seed,
        workers,
        wall_time_seconds: started.elapsed().as_secs_f64(),
        started_unix,
    };
    let mut all = artifacts;
    let m = manifest(&info, &all);
    all.push(m);
    write_all(&cfg.output.directory, &all)
        .map_err(|e| CliError::Io(format!("cannot write to {}: {e}", cfg.output.directory.display())))
}

/// Entry point shared by the binary and the tests; returns the exit code.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match run_parsed(&cli) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            EXIT_OK
        }
        Err(e) => {
            e.report();
            e.exit_code()
        }
    }
}
