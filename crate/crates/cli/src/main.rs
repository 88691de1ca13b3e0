//! `generalist`: train, batch, evaluate and compare generalist controllers.
//!
//! Exit codes: 0 success, 2 configuration error, 3 missing artifact,
//! 4 runtime failure. Progress goes to standard error.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use generalist::config::KEY_DOCS;
use generalist::evalstats::Metric;
use generalist::morphospace::SetKind;
use generalist::Error;

#[derive(Parser, Debug)]
#[command(name = "generalist", version, about = "Evolve generalist controllers over morphology spaces")]
pub struct Cli {
    /// Print the built-in environments and exit.
    #[arg(long)]
    list_envs: bool,
    /// Print the training schedules and exit.
    #[arg(long)]
    list_schedules: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run one training run and save its record.
    Train(TrainArgs),
    /// Run independent training runs into run_000, run_001, ...
    Batch(BatchArgs),
    /// Score each run's final generalist on a grid.
    Evaluate(EvaluateArgs),
    /// Mann-Whitney comparison of every pair of batches.
    Compare(CompareArgs),
    /// Heatmaps, per-batch quartiles and pairwise comparisons.
    Report(ReportArgs),
    /// Print the built-in environments.
    ListEnvs,
    /// Print the training schedules.
    ListSchedules,
}

#[derive(Args, Debug)]
pub struct ConfigArgs {
    /// TOML run configuration.
    #[arg(long, short)]
    pub config: PathBuf,
    /// Dotted `key=value` override, repeatable.
    #[arg(long = "override", short = 'o', value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Output directory (default: `output_dir` from the config, else derived
    /// from env, schedule and seed).
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Replace existing output.
    #[arg(long)]
    pub force: bool,
    /// Suppress per-generation progress lines.
    #[arg(long, short)]
    pub quiet: bool,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: ConfigArgs,
}

#[derive(Args, Debug)]
pub struct BatchArgs {
    #[command(flatten)]
    pub common: ConfigArgs,
    /// Number of runs.
    #[arg(long, short = 'n', default_value_t = 30)]
    pub runs: usize,
    /// Worker threads (default: available cores). Results do not depend on it.
    #[arg(long, short = 'j')]
    pub parallelism: Option<usize>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum SetArg {
    Train,
    Test,
    All,
}

impl From<SetArg> for SetKind {
    fn from(s: SetArg) -> Self {
        match s {
            SetArg::Train => SetKind::Train,
            SetArg::Test => SetKind::Test,
            SetArg::All => SetKind::All,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum MetricArg {
    #[value(alias = "train")]
    TrainMean,
    #[value(alias = "test")]
    TestMean,
    #[value(alias = "all")]
    AllMean,
}

impl From<MetricArg> for Metric {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::TrainMean => Metric::TrainMean,
            MetricArg::TestMean => Metric::TestMean,
            MetricArg::AllMean => Metric::AllMean,
        }
    }
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    /// Batch directory (or a single run directory).
    pub batch: PathBuf,
    #[arg(long, value_enum, default_value = "all")]
    pub set: SetArg,
    /// Base of the per-cell evaluation seeds.
    #[arg(long, default_value_t = generalist::evalstats::DEFAULT_EVAL_SEED)]
    pub seed: u64,
    /// Directory for the CSVs (default: the batch directory).
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
}

#[derive(Args, Debug)]
pub struct CompareArgs {
    /// Two or more batch directories.
    #[arg(required = true, num_args = 2..)]
    pub batches: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "test-mean")]
    pub metric: MetricArg,
    #[arg(long, default_value_t = generalist::evalstats::DEFAULT_EVAL_SEED)]
    pub seed: u64,
    /// Output file.
    #[arg(long, default_value = "report.csv")]
    pub output: PathBuf,
    #[arg(long)]
    pub force: bool,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// One or more batch directories.
    #[arg(required = true)]
    pub batches: Vec<PathBuf>,
    #[arg(long, default_value_t = generalist::evalstats::DEFAULT_EVAL_SEED)]
    pub seed: u64,
    /// Output directory.
    #[arg(long, default_value = "report")]
    pub output: PathBuf,
    #[arg(long)]
    pub force: bool,
}

fn key_help() -> String {
    let width = KEY_DOCS.iter().map(|(k, _, _)| k.len()).max().unwrap_or(0);
    let mut s = String::from("Configuration keys (TOML; any key may be set with --override key=value):\n");
    for (key, default, doc) in KEY_DOCS {
        s.push_str(&format!("  {key:<width$}  [default: {default}]  {doc}\n"));
    }
    s.push_str("\nExit codes: 0 success, 2 configuration error, 3 missing artifact, 4 runtime failure.");
    s
}

pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config { .. } => 2,
        Error::MissingArtifact { .. } => 3,
        _ => 4,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let matches = Cli::command().after_help(key_help()).get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    let command = if cli.list_envs {
        Command::ListEnvs
    } else if cli.list_schedules {
        Command::ListSchedules
    } else if let Some(c) = cli.command {
        c
    } else {
        let _ = Cli::command().after_help(key_help()).print_help();
        return ExitCode::from(2);
    };
    let result = match command {
        Command::Train(a) => commands::train(&a),
        Command::Batch(a) => commands::batch(&a),
        Command::Evaluate(a) => commands::evaluate(&a),
        Command::Compare(a) => commands::compare(&a),
        Command::Report(a) => commands::report(&a),
        Command::ListEnvs => commands::list_envs(),
        Command::ListSchedules => commands::list_schedules(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
