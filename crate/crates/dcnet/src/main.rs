use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use dcnet::commands::{self, AblateArgs, EvalArgs, RunArgs, Scope, SummaryArgs, SweepArgs, SynthArgs, TrainArgs};

/// Dilated-convolution EEG motor-imagery classifier.
#[derive(Parser)]
#[command(name = "dcnet", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunOpts {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// `key=value` override, applied after the configuration file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Seed for initialization, shuffling and dropout; overrides the file and DCNET_SEED.
    #[arg(long)]
    seed: Option<u64>,
}

impl From<RunOpts> for RunArgs {
    fn from(o: RunOpts) -> Self {
        RunArgs { config: o.config, set: o.set, seed: o.seed }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ScopeArg {
    Op,
    Model,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write checkpoint, history, config and report into a directory.
    Train {
        /// Trial file, or a directory of CSV trials.
        #[arg(long)]
        data: PathBuf,
        /// Validation trials; defaults to the tail of the training data.
        #[arg(long)]
        val: Option<PathBuf>,
        #[command(flatten)]
        run: RunOpts,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint on a trial set.
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Also write the report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train once per window count and tabulate the results.
    SweepWindows {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        val: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        n_from: usize,
        #[arg(long, default_value_t = 8)]
        n_to: usize,
        #[command(flatten)]
        run: RunOpts,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train with each block combination and tabulate the results.
    Ablate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        val: Option<PathBuf>,
        #[command(flatten)]
        run: RunOpts,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare analytic and finite-difference gradients.
    Gradcheck {
        #[arg(long, value_enum, default_value = "op")]
        scope: ScopeArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Per-layer shapes, parameters and FLOPs.
    Summary {
        #[command(flatten)]
        run: RunOpts,
        /// Report the EEGNet baseline instead.
        #[arg(long)]
        eegnet: bool,
        /// Print `key=value` records instead of a table.
        #[arg(long)]
        records: bool,
    },
    /// Generate a labelled synthetic trial set.
    Synth {
        /// TOML generator spec; flags override its entries.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        channels: Option<usize>,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        classes: Option<usize>,
        #[arg(long)]
        snr: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        sample_rate: Option<f64>,
        /// Write a CSV directory instead of a binary trial file.
        #[arg(long)]
        csv: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Convert a directory of CSV trials into a binary trial file.
    Convert {
        #[arg(long)]
        csv_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Class count when the highest class has no trials.
        #[arg(long)]
        classes: Option<usize>,
    },
}

fn run(command: Command) -> dcnet::Result<String> {
    match command {
        Command::Train { data, val, run, out } => commands::cmd_train(&TrainArgs { data, val, run: run.into(), out }),
        Command::Eval { data, checkpoint, out } => commands::cmd_eval(&EvalArgs { data, checkpoint, out }),
        Command::SweepWindows { data, val, n_from, n_to, run, out } => {
            commands::cmd_sweep_windows(&SweepArgs { data, val, n_from, n_to, run: run.into(), out })
        }
        Command::Ablate { data, val, run, out } => commands::cmd_ablate(&AblateArgs { data, val, run: run.into(), out }),
        Command::Gradcheck { scope, seed } => {
            let scope = match scope {
                ScopeArg::Op => Scope::Op,
                ScopeArg::Model => Scope::Model,
            };
            commands::cmd_gradcheck(scope, seed)
        }
        Command::Summary { run, eegnet, records } => commands::cmd_summary(&SummaryArgs { run: run.into(), eegnet, records }),
        Command::Synth { spec, trials, channels, samples, classes, snr, seed, sample_rate, csv, out } => {
            commands::cmd_synth(&SynthArgs { spec, trials, channels, samples, classes, snr, seed, sample_rate, out, csv })
        }
        Command::Convert { csv_dir, out, classes } => commands::cmd_convert(&csv_dir, &out, classes),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
