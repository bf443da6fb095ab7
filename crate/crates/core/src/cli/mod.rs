//! The `svcrank` command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 internal invariant
//! violation. Standard output is only written on success.

mod eval;

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::dataio::{self, format_decimal, generate_synthetic, DataError, Dataset, SyntheticParams};
use crate::ranking::{predict, ConsumerId, RankError, RankingContext, ServiceId};
use crate::sim::{self, observations_from_trace, EventKind, SimConfig, SimError};

pub use eval::{evaluate, EvalError, EvalReport};

#[derive(Debug, Parser)]
#[command(name = "svcrank", version, about = "Cloud service rank prediction and checkpointing load-balancing simulation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Predict a consumer's service ranking from a dataset
    Rank(RankArgs),
    /// Run a checkpointing load-balancing simulation
    Simulate(SimulateArgs),
    /// Measure prediction quality on a dataset
    Eval(EvalArgs),
    /// Generate a synthetic dataset with a known ground truth
    Gen(GenArgs),
}

#[derive(Debug, Args)]
pub struct RankArgs {
    /// Observation CSV
    #[arg(long)]
    pub input: PathBuf,
    /// Consumer to rank services for
    #[arg(long)]
    pub consumer: String,
    /// Services the consumer already uses (comma separated)
    #[arg(long, value_delimiter = ',')]
    pub implicit: Vec<String>,
    /// Ranking JSON to write
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Simulation config JSON
    #[arg(long)]
    pub config: PathBuf,
    /// Trace JSON to write
    #[arg(long)]
    pub trace: PathBuf,
    /// Observation CSV to write
    #[arg(long)]
    pub observations: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Observation CSV (a `.truth.json` sidecar is picked up when present)
    #[arg(long)]
    pub input: PathBuf,
    /// Fraction of each consumer's own samples hidden from the predictor
    #[arg(long, default_value_t = 0.0)]
    pub holdout: f64,
    /// Seed choosing which samples are hidden
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub seed: u64,
    /// Number of services (>= 2)
    #[arg(long)]
    pub services: usize,
    /// Number of consumers (>= 1)
    #[arg(long)]
    pub consumers: usize,
    /// Adjacent-pair inversion probability, in [0, 0.5)
    #[arg(long)]
    pub noise: f64,
    /// Probability that a consumer observes a given service
    #[arg(long, default_value_t = 0.8)]
    pub observe: f64,
    /// Observation CSV to write; the ground truth goes to `<stem>.truth.json`
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Internal(_) => 3,
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::InvalidParameter(_) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<RankError> for CliError {
    fn from(e: RankError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::InvariantViolation(_) => CliError::Internal(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::InvalidHoldout(_) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

/// Parses `args` (including the program name), runs the subcommand and
/// returns the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{e}");
                    0
                }
                _ => {
                    let _ = write!(stderr, "{e}");
                    1
                }
            };
        }
    };
    match execute(&cli.command) {
        Ok(out) => {
            let _ = stdout.write_all(out.as_bytes());
            0
        }
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

/// Runs a parsed subcommand, returning what it would print on success.
pub fn execute(command: &Command) -> Result<String, CliError> {
    match command {
        Command::Rank(a) => cmd_rank(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Gen(a) => cmd_gen(a),
    }
}

pub fn cmd_rank(args: &RankArgs) -> Result<String, CliError> {
    let dataset = dataio::load_observations(&args.input)?;
    let consumer_id = ConsumerId::new(args.consumer.as_str()).map_err(|e| CliError::Usage(e.to_string()))?;
    let active = dataset
        .consumer(&consumer_id)
        .ok_or_else(|| CliError::Data(format!("unknown consumer {consumer_id}")))?
        .clone();
    let implicit = args
        .implicit
        .iter()
        .map(|s| ServiceId::new(s.as_str()))
        .collect::<Result<BTreeSet<_>, _>>()?;
    let history = dataset.consumers().iter().filter(|c| c.consumer() != &consumer_id).cloned().collect();
    let ctx = RankingContext::new(active, history, implicit)?;
    let prediction = predict(&ctx, dataset.services())?;
    dataio::save_ranking(&prediction.ranking, &prediction.priorities, &args.output)?;

    let mut out = String::new();
    for s in &prediction.ranking {
        let pv = prediction.priorities.get(s).map_or_else(|| "-".to_string(), format_decimal);
        let _ = writeln!(out, "{s}\t{pv}");
    }
    Ok(out)
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<String, CliError> {
    let raw = std::fs::read_to_string(&args.config)
        .map_err(|e| CliError::Data(format!("{}: {e}", args.config.display())))?;
    let config: SimConfig =
        serde_json::from_str(&raw).map_err(|e| CliError::Data(format!("{}: {e}", args.config.display())))?;
    let trace = sim::run(&config)?;
    let observations = Dataset::from_observations(observations_from_trace(&trace))?;
    dataio::save_trace(&trace, &args.trace)?;
    dataio::save_dataset(&observations, &args.observations)?;

    let count = |k: EventKind| trace.events.iter().filter(|e| e.kind == k).count();
    let last = trace.events.last().map_or(0, |e| e.t);
    Ok(format!(
        "jobs completed: {}\ncheckpoints: {}\nrollbacks: {}\nmigrations: {}\nfinished at: {} ms\n",
        trace.observations.len(),
        count(EventKind::Checkpoint),
        count(EventKind::Rollback),
        count(EventKind::Migrate),
        last
    ))
}

pub fn cmd_eval(args: &EvalArgs) -> Result<String, CliError> {
    let dataset = dataio::load_dataset(&args.input)?;
    let report = evaluate(&dataset, args.holdout, args.seed)?;
    let mut out = String::new();
    for (c, cv) in &report.per_consumer {
        let _ = writeln!(out, "{c}\t{}", format_decimal(*cv));
    }
    let _ = writeln!(out, "mean_cv\t{}", format_decimal(report.mean_cv));
    Ok(out)
}

pub fn cmd_gen(args: &GenArgs) -> Result<String, CliError> {
    let params = SyntheticParams::new(args.seed, args.services, args.consumers, args.noise).with_observe_prob(args.observe);
    let dataset = generate_synthetic(&params)?;
    dataio::save_dataset(&dataset, &args.output)?;
    Ok(format!(
        "wrote {} ({} consumers, {} services) and {}\n",
        args.output.display(),
        dataset.consumers().len(),
        dataset.services().len(),
        dataio::truth_path(&args.output).display()
    ))
}
