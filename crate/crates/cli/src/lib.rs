//! Argument handling and subcommands of the `flhhe` binary.

pub mod commands;

use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use flhhe_core::mlp::mnist::default_data_dir;
use flhhe_core::proto::{Clock, ExperimentConfig, Mode};
use flhhe_core::ring::RingParams;
use flhhe_core::Error;

pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_CRYPTO: u8 = 3;
pub const EXIT_IO: u8 = 4;

/// A failure with the process exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError { code: EXIT_CONFIG, message: msg.into() }
    }

    pub fn io(msg: impl Into<String>) -> Self {
        CliError { code: EXIT_IO, message: msg.into() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Io(_) | Error::Format(_) | Error::Length { .. } => EXIT_IO,
            Error::Config(_) | Error::Params(_) | Error::OverflowBudget { .. } | Error::BatchOverflow { .. } | Error::EmptyPartition => {
                EXIT_CONFIG
            }
            Error::DecryptionFailure(_)
            | Error::ParamsMismatch
            | Error::LaneMismatch { .. }
            | Error::NonceReuse { .. }
            | Error::ModulusMismatch { .. }
            | Error::DomainMismatch => EXIT_CRYPTO,
        };
        CliError { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::io(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "flhhe", version, about = "Federated averaging with hybrid homomorphic encryption")]
pub struct Cli {
    /// Print machine-readable JSON instead of tables.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate and store all keys; prints their sizes.
    Keygen(RunArgs),
    /// Run the experiment and write ledger, summary, plot data and models.
    Run(RunArgs),
    /// Time each pipeline stage.
    Bench(BenchArgs),
    /// Print comparison tables and the scaling series from a finished run.
    Report(ReportArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// N = 256, for quick runs.
    Toy,
    /// N = 2048.
    Default,
}

impl Preset {
    pub fn params(self) -> RingParams {
        match self {
            Preset::Toy => RingParams::toy(),
            Preset::Default => RingParams::default(),
        }
    }
}

/// Parsed `--mode` value.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Modes(pub Vec<Mode>);

fn parse_modes(s: &str) -> Result<Modes, String> {
    if s == "all" {
        return Ok(Modes(Mode::ALL.to_vec()));
    }
    s.split(',').map(|m| m.trim().parse::<Mode>().map_err(|e| e.to_string())).collect::<Result<_, _>>().map(Modes)
}

#[derive(Args, Debug, Default, Clone)]
pub struct RunArgs {
    /// TOML or JSON file supplying any option not given on the command line.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Comma-separated modes (plain, he, hhe) or `all`.
    #[arg(long, value_parser = parse_modes)]
    pub mode: Option<Modes>,
    #[arg(long)]
    pub clients: Option<usize>,
    #[arg(long)]
    pub rounds: Option<usize>,
    /// Local epochs per round.
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
    /// Quantization scale.
    #[arg(long)]
    pub delta: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Directory with the four MNIST IDX files.
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    /// Output directory (reports for `run`, key files for `keygen`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// Training samples per client.
    #[arg(long)]
    pub sample_cap: Option<usize>,
    /// Samples per test set.
    #[arg(long)]
    pub test_cap: Option<usize>,
    /// Key directory written by `keygen`; without it keys are derived from the seed.
    #[arg(long)]
    pub keys: Option<PathBuf>,
    /// Run clients one after another.
    #[arg(long)]
    pub serial: bool,
    /// Report zero durations so ledgers are byte-reproducible.
    #[arg(long)]
    pub frozen_clock: bool,
}

#[derive(Args, Debug, Clone)]
pub struct BenchArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Repetitions per stage.
    #[arg(long, default_value_t = 1)]
    pub iters: usize,
}

#[derive(Args, Debug, Clone)]
pub struct ReportArgs {
    /// A summary-<hash>.json file, or a directory holding exactly one.
    pub path: PathBuf,
    /// Also write plot-ready CSV files here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Deserialize, Debug)]
#[serde(untagged)]
enum ModeList {
    One(String),
    Many(Vec<String>),
}

/// Keys of a config file; the same names as the flags, in snake_case.
#[derive(Deserialize, Debug, Default)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    mode: Option<ModeList>,
    clients: Option<usize>,
    rounds: Option<usize>,
    epochs: Option<usize>,
    lr: Option<f64>,
    batch: Option<usize>,
    delta: Option<u64>,
    seed: Option<u64>,
    data_dir: Option<PathBuf>,
    out: Option<PathBuf>,
    preset: Option<Preset>,
    sample_cap: Option<usize>,
    test_cap: Option<usize>,
    keys: Option<PathBuf>,
    serial: Option<bool>,
    frozen_clock: Option<bool>,
}

fn read_file_config(path: &Path) -> CliResult<FileConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
    let parsed = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| e.to_string())
    } else {
        toml::from_str(&text).map_err(|e| e.to_string())
    };
    parsed.map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

/// Fully resolved options of one invocation.
#[derive(Clone, Debug)]
pub struct Resolved {
    pub experiment: ExperimentConfig,
    pub data_dir: PathBuf,
    pub out: Option<PathBuf>,
    pub keys: Option<PathBuf>,
}

impl RunArgs {
    /// Command-line flags win, then the config file, then built-in defaults.
    pub fn resolve(&self) -> CliResult<Resolved> {
        let file = match &self.config {
            Some(p) => read_file_config(p)?,
            None => FileConfig::default(),
        };
        let file_modes = match file.mode {
            None => None,
            Some(ModeList::One(s)) => Some(parse_modes(&s).map_err(CliError::config)?.0),
            Some(ModeList::Many(v)) => {
                Some(v.iter().map(|m| m.parse::<Mode>()).collect::<Result<Vec<_>, _>>().map_err(|e| CliError::config(e.to_string()))?)
            }
        };
        let mut params = self.preset.or(file.preset).unwrap_or(Preset::Default).params();
        if let Some(d) = self.delta.or(file.delta) {
            params.delta = d;
            params.max_clients = RingParams::k_max(params.t, d.max(1));
        }
        let mut cfg = ExperimentConfig { params, ..ExperimentConfig::default() };
        cfg.modes = self.mode.clone().map(|m| m.0).or(file_modes).unwrap_or(cfg.modes);
        cfg.clients = self.clients.or(file.clients).unwrap_or(cfg.clients);
        cfg.rounds = self.rounds.or(file.rounds).unwrap_or(cfg.rounds);
        cfg.train.epochs = self.epochs.or(file.epochs).unwrap_or(cfg.train.epochs);
        cfg.train.lr = self.lr.or(file.lr).unwrap_or(cfg.train.lr);
        cfg.train.batch = self.batch.or(file.batch).unwrap_or(cfg.train.batch);
        cfg.seed = self.seed.or(file.seed).unwrap_or(cfg.seed);
        cfg.sample_cap = self.sample_cap.or(file.sample_cap);
        cfg.test_cap = self.test_cap.or(file.test_cap);
        cfg.parallel = !(self.serial || file.serial.unwrap_or(false));
        if self.frozen_clock || file.frozen_clock.unwrap_or(false) {
            cfg.clock = Clock::Frozen;
        }
        cfg.validate()?;
        Ok(Resolved {
            experiment: cfg,
            data_dir: self.data_dir.clone().or(file.data_dir).unwrap_or_else(default_data_dir),
            out: self.out.clone().or(file.out),
            keys: self.keys.clone().or(file.keys),
        })
    }
}

pub fn run_cli(cli: Cli) -> CliResult<()> {
    match &cli.command {
        Command::Keygen(a) => commands::keygen(&a.resolve()?, cli.json),
        Command::Run(a) => commands::run(&a.resolve()?, cli.json),
        Command::Bench(a) => commands::bench(&a.run.resolve()?, a.iters, cli.json),
        Command::Report(a) => commands::report(&a.path, a.out.as_deref(), cli.json),
    }
}
