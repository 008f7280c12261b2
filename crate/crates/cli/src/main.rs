//! `hdgc`: Granger causality between selected channels of a large network,
//! after removing the rest of the network with spectral dynamic PCA.
//!
//! ```bash
//! hdgc simulate --scheme causative --n 20 --n-external 80 --seed 7 -o sim
//! hdgc analyze sim/series.csv --coi X1,X2,Y1,Y2 -o out
//! hdgc evaluate out/report.json --truth sim/truth.json
//! hdgc benchmark --config sweep.json -o bench
//! hdgc augment eeg.csv --spec montage.json -o aug
//! ```

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Args, Parser, Subcommand};

use commands::{AnalyzeArgs, AugmentArgs, BenchmarkArgs, EvaluateArgs, SimulateArgs};

#[derive(Parser, Debug)]
#[command(
    name = "hdgc",
    version,
    about = "Granger causality in high-dimensional networks"
)]
struct Cli {
    #[command(flatten)]
    common: Common,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Seed for every random draw; overrides the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Directory for output files.
    #[arg(short = 'o', long, global = true, default_value = ".")]
    pub output_dir: PathBuf,

    /// More log output (-v info, -vv debug, -vvv trace).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a network and write series.csv and truth.json.
    Simulate(SimulateArgs),
    /// Run the connectivity pipeline on a series CSV.
    Analyze(AnalyzeArgs),
    /// Run a simulate-analyze-evaluate sweep and write a metrics CSV.
    Benchmark(BenchmarkArgs),
    /// Score reports against a ground truth and build consensus graphs.
    Evaluate(EvaluateArgs),
    /// Append derived channels to a series CSV.
    Augment(AugmentArgs),
}

/// Errors caused by how the program was invoked rather than by the data.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_IO: u8 = 3;

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return EXIT_USAGE;
        }
        if let Some(e) = cause.downcast_ref::<hdgc::Error>() {
            return if e.is_io() { EXIT_IO } else { EXIT_DATA };
        }
        if cause.is::<std::io::Error>() {
            return EXIT_IO;
        }
    }
    EXIT_DATA
}

/// Joins the cause chain, skipping causes already spelled out by their parent.
fn describe(err: &anyhow::Error) -> String {
    let mut msg = String::new();
    for cause in err.chain() {
        let s = cause.to_string();
        if !msg.contains(&s) {
            if !msg.is_empty() {
                msg.push_str(": ");
            }
            msg.push_str(&s);
        }
    }
    msg
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        2 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.common.threads {
        if n == 0 {
            return Err(UsageError("--threads must be at least 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()?;
    }
    match cli.command {
        Command::Simulate(a) => commands::simulate(&cli.common, a),
        Command::Analyze(a) => commands::analyze(&cli.common, a),
        Command::Benchmark(a) => commands::benchmark(&cli.common, a),
        Command::Evaluate(a) => commands::evaluate(&cli.common, a),
        Command::Augment(a) => commands::augment(&cli.common, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    init_logging(cli.common.verbose);
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}
