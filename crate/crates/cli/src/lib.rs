//! Batch front end: parse a config, run one study, write JSON and CSV
//! artifacts into an output directory.
//!
//! Failures print one line `error: <code>: <message>` and remove whatever
//! the run had written. Exit status is 1 for bad input and 2 when a
//! numerical invariant breaks.

pub mod commands;
pub mod config;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "contracts", version, about = "Optimal lump-sum contract schedules")]
pub struct Cli {
    #[command(subcommand)]
    pub command: CommandArgs,
}

#[derive(Debug, Subcommand)]
pub enum CommandArgs {
    /// Solve the value surfaces and payment maps.
    Solve(CommonArgs),
    /// Monte Carlo check of the principal's value (and agent deviations).
    Simulate(CommonArgs),
    /// Search the barrier parameters and check the value sandwich.
    VerifyBounds(CommonArgs),
    /// Principal value across payment counts on a fixed horizon.
    SweepFrequency(CommonArgs),
    /// Principal value across first-payment dates with two payments.
    SweepDistribution(CommonArgs),
    /// Principal value and employment sets across discount rates.
    SweepDiscount(CommonArgs),
    /// Initial negotiation against per-period renegotiation.
    CompareNegotiation(CommonArgs),
    /// Finite-difference solve against the lattice dynamic program.
    OracleCheck(CommonArgs),
}

#[derive(Debug, Clone, clap::Args)]
pub struct CommonArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Override a config key, e.g. `k_a=0.2` or `run.n_y=200`. Repeatable;
    /// later values win and all of them beat the config file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub paths: Option<usize>,
    #[arg(long)]
    pub ny: Option<usize>,
    #[arg(long)]
    pub ymax: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Solve,
    Simulate,
    VerifyBounds,
    SweepFrequency,
    SweepDistribution,
    SweepDiscount,
    CompareNegotiation,
    OracleCheck,
}

impl Command {
    pub const ALL: [Command; 8] = [
        Command::Solve,
        Command::Simulate,
        Command::VerifyBounds,
        Command::SweepFrequency,
        Command::SweepDistribution,
        Command::SweepDiscount,
        Command::CompareNegotiation,
        Command::OracleCheck,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Simulate => "simulate",
            Command::VerifyBounds => "verify-bounds",
            Command::SweepFrequency => "sweep-frequency",
            Command::SweepDistribution => "sweep-distribution",
            Command::SweepDiscount => "sweep-discount",
            Command::CompareNegotiation => "compare-negotiation",
            Command::OracleCheck => "oracle-check",
        }
    }
}

/// One fully resolved invocation.
#[derive(Debug, Clone)]
pub struct RunManifest {
    pub command: Command,
    pub config: PathBuf,
    pub out: PathBuf,
    /// Applied in order after the config file is read.
    pub overrides: Vec<(String, String)>,
}

impl RunManifest {
    pub fn new(command: Command, config: impl Into<PathBuf>, out: impl Into<PathBuf>) -> Self {
        Self {
            command,
            config: config.into(),
            out: out.into(),
            overrides: Vec::new(),
        }
    }

    pub fn with(mut self, key: &str, value: &str) -> Self {
        self.overrides.push((key.to_string(), value.to_string()));
        self
    }

    /// `--seed`, `--paths`, `--ny` and `--ymax` are shorthands for `run.*`
    /// keys and are applied after every `--set`.
    pub fn from_args(cli: Cli) -> Result<Self, CliError> {
        let (command, a) = match cli.command {
            CommandArgs::Solve(a) => (Command::Solve, a),
            CommandArgs::Simulate(a) => (Command::Simulate, a),
            CommandArgs::VerifyBounds(a) => (Command::VerifyBounds, a),
            CommandArgs::SweepFrequency(a) => (Command::SweepFrequency, a),
            CommandArgs::SweepDistribution(a) => (Command::SweepDistribution, a),
            CommandArgs::SweepDiscount(a) => (Command::SweepDiscount, a),
            CommandArgs::CompareNegotiation(a) => (Command::CompareNegotiation, a),
            CommandArgs::OracleCheck(a) => (Command::OracleCheck, a),
        };
        let mut overrides = a
            .set
            .iter()
            .map(|s| config::parse_override(s))
            .collect::<Result<Vec<_>, _>>()?;
        let flags = [
            ("run.seed", a.seed.map(|v| v.to_string())),
            ("run.paths", a.paths.map(|v| v.to_string())),
            ("run.n_y", a.ny.map(|v| v.to_string())),
            ("run.y_max", a.ymax.map(|v| v.to_string())),
        ];
        overrides.extend(flags.into_iter().filter_map(|(k, v)| Some((k.to_string(), v?))));
        Ok(Self {
            command,
            config: a.config,
            out: a.out,
            overrides,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub code: String,
    pub message: String,
    /// Process exit status, 1 or 2.
    pub status: u8,
}

impl CliError {
    pub fn user(code: &str, message: impl Into<String>) -> Self {
        Self {
            code: code.to_string(),
            message: message.into(),
            status: 1,
        }
    }

    pub fn internal(code: &str, message: impl Into<String>) -> Self {
        Self {
            status: 2,
            ..Self::user(code, message)
        }
    }

    /// The single stderr line.
    pub fn line(&self) -> String {
        let msg: String = self.message.split_whitespace().collect::<Vec<_>>().join(" ");
        format!("error: {}: {msg}", self.code)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.line())
    }
}

impl std::error::Error for CliError {}

impl From<contract_core::Error> for CliError {
    fn from(e: contract_core::Error) -> Self {
        let status = if e.is_internal() { 2 } else { 1 };
        Self {
            code: e.code().to_string(),
            message: e.to_string(),
            status,
        }
    }
}

/// Files written by one run, removed again if the run fails.
pub struct Artifacts {
    dir: PathBuf,
    created_dir: bool,
    files: Vec<PathBuf>,
}

impl Artifacts {
    pub fn open(dir: &Path) -> Result<Self, CliError> {
        let created_dir = !dir.exists();
        fs::create_dir_all(dir)
            .map_err(|e| CliError::user("io", format!("{}: {e}", dir.display())))?;
        let probe = dir.join(".write-probe");
        fs::write(&probe, b"")
            .and_then(|_| fs::remove_file(&probe))
            .map_err(|e| CliError::user("io", format!("{} is not writable: {e}", dir.display())))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            created_dir,
            files: Vec::new(),
        })
    }

    /// Registers `name` for cleanup and returns its full path.
    pub fn path(&mut self, name: &str) -> PathBuf {
        let p = self.dir.join(name);
        self.files.push(p.clone());
        p
    }

    fn discard(self) {
        for f in &self.files {
            let _ = fs::remove_file(f);
        }
        if self.created_dir {
            let _ = fs::remove_dir(&self.dir);
        }
    }
}

/// Runs one manifest. On error every artifact of this run is removed.
pub fn run(manifest: &RunManifest) -> Result<(), CliError> {
    let cfg = config::load(&manifest.config, &manifest.overrides)?;
    let mut out = Artifacts::open(&manifest.out)?;
    match commands::dispatch(manifest.command, &cfg, &mut out) {
        Ok(()) => Ok(()),
        Err(e) => {
            out.discard();
            Err(e)
        }
    }
}

/// Parses `args` (program name first) and runs; returns the exit status.
pub fn main_with_args<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let first = e.to_string();
            let first = first.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("{}", CliError::user("usage", first).line());
            return 1;
        }
    };
    match RunManifest::from_args(cli).and_then(|m| run(&m)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.line());
            e.status
        }
    }
}
