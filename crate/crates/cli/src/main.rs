use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod error;
mod manifest;
mod table;

use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "dirac-tomo", version, about = "Dirac distribution tomography by simulated weak measurement")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct Global {
    /// Seed for every random draw; overrides a config file's seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Directory receiving all outputs and the run manifest.
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    /// Tolerance for `compare` and for invariant checks on input files.
    #[arg(long, global = true, default_value_t = 1e-10)]
    pub tolerance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Kind {
    Density,
    Pure,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProtocolArg {
    Scan,
    JointWeak,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OrderingArg {
    #[value(name = "A_then_B")]
    AThenB,
    #[value(name = "B_then_A")]
    BThenA,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a seeded random state file.
    GenState {
        #[arg(long)]
        dim: usize,
        #[arg(long, default_value_t = 1)]
        rank: usize,
        #[arg(long, value_enum, default_value = "density")]
        kind: Kind,
        #[arg(long, default_value = "state.json")]
        output: String,
    },
    /// State file to Dirac file, or back with `--invert`.
    Dirac {
        input: PathBuf,
        #[arg(long)]
        invert: bool,
        #[arg(long, value_enum, default_value = "A_then_B")]
        ordering: OrderingArg,
        #[arg(long)]
        output: Option<String>,
    },
    /// Monte Carlo run of a protocol described by a config file.
    Simulate {
        config: PathBuf,
        #[arg(long, value_enum)]
        protocol: Option<ProtocolArg>,
        /// Also write every trial record.
        #[arg(long)]
        records: bool,
    },
    /// Standard-error and SNR scaling study over both protocols.
    Snr {
        config: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_values_t = [1_000usize, 10_000, 100_000, 1_000_000])]
        trials: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_values_t = [0.04, 0.02, 0.01, 0.005])]
        g: Vec<f64>,
    },
    /// Compare two state or Dirac files.
    Compare { left: PathBuf, right: PathBuf },
    /// Linear-inversion tomography in random bases, for comparison.
    TomographyBaseline {
        state: PathBuf,
        /// Total shots; exact probabilities when omitted.
        #[arg(long)]
        trials: Option<u64>,
        #[arg(long)]
        bases: Option<usize>,
        /// Also run the scan protocol at this coupling with the same shots.
        #[arg(long)]
        direct_g: Option<f64>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.global.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    }
    let g = &cli.global;
    match cli.command {
        Command::GenState { dim, rank, kind, output } => commands::gen_state(g, dim, rank, kind, &output),
        Command::Dirac {
            input,
            invert,
            ordering,
            output,
        } => commands::dirac(g, &input, invert, ordering, output.as_deref()),
        Command::Simulate {
            config,
            protocol,
            records,
        } => commands::simulate(g, &config, protocol, records),
        Command::Snr { config, trials, g: gs } => commands::snr(g, config.as_deref(), &trials, &gs),
        Command::Compare { left, right } => commands::compare(g, &left, &right),
        Command::TomographyBaseline {
            state,
            trials,
            bases,
            direct_g,
        } => commands::tomography_baseline(g, &state, trials, bases, direct_g),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
