use clap::{Args, Parser, Subcommand};
use memsim_cli::{
    cmd_compare, cmd_gen_trace, cmd_run, cmd_sweep, CliError, GenTraceArgs, RunArgs, SweepArgs,
};
use std::path::PathBuf;

/// Deterministic multicore memory-system simulator.
#[derive(Parser)]
#[command(name = "memsim", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonRunFlags {
    /// JSON simulation config.
    #[arg(long)]
    config: PathBuf,
    /// Directory for artifacts (summary.json and the CSV reports).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the config's random seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Also run each app alone and report actual slowdowns and errors.
    #[arg(long)]
    oracle: bool,
    /// Parallel worker limit for oracle/sweep runs.
    #[arg(long)]
    jobs: Option<usize>,
    /// Dotted-path config override, e.g. --set model.mise.epoch_cycles=10000.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

impl From<CommonRunFlags> for RunArgs {
    fn from(f: CommonRunFlags) -> Self {
        RunArgs {
            config_path: f.config,
            out_dir: f.out,
            seed: f.seed,
            oracle: f.oracle,
            jobs: f.jobs,
            sets: f.sets,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and emit its artifacts.
    Run {
        #[command(flatten)]
        flags: CommonRunFlags,
    },
    /// Run the Cartesian product of axis values and aggregate sweep.csv.
    Sweep {
        #[command(flatten)]
        flags: CommonRunFlags,
        /// Sweep axis, e.g. --axis model.mise.interval_cycles=1000000,5000000
        /// (repeatable; the last axis varies fastest; none means a single
        /// point).
        #[arg(long = "axis", value_name = "PATH=V1,V2,...")]
        axes: Vec<String>,
    },
    /// Compare two or more summary.json files against the first.
    Compare {
        /// summary.json files (at least two).
        #[arg(required = true)]
        summaries: Vec<PathBuf>,
        /// Also write the comparison CSV here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic trace file.
    GenTrace {
        /// Total bytes the walk covers before wrapping.
        #[arg(long)]
        footprint: u64,
        /// Bytes between consecutive accesses.
        #[arg(long, default_value_t = 64)]
        stride: u64,
        /// Compute instructions between accesses.
        #[arg(long, default_value_t = 0)]
        gap: u32,
        /// Number of memory accesses to emit.
        #[arg(long)]
        records: u64,
        /// Fraction of accesses redirected to the hot region (0.0 to 1.0).
        #[arg(long, default_value_t = 0.0)]
        reuse: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Hot-region size in bytes (default footprint/16).
        #[arg(long)]
        hot: Option<u64>,
        /// Output file (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn dispatch(cli: Cli) -> Result<String, CliError> {
    match cli.command {
        Command::Run { flags } => cmd_run(&RunArgs::from(flags)),
        Command::Sweep { flags, axes } => {
            cmd_sweep(&SweepArgs { base: RunArgs::from(flags), axes })
        }
        Command::Compare { summaries, out } => cmd_compare(&summaries, out.as_deref()),
        Command::GenTrace { footprint, stride, gap, records, reuse, seed, hot, out } => {
            cmd_gen_trace(&GenTraceArgs { footprint, stride, gap, records, reuse, seed, hot, out })
        }
    }
}

fn main() {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(stdout) => print!("{stdout}"),
        Err(e) => {
            eprint!("{}", e.to_stderr_json());
            std::process::exit(2);
        }
    }
}
