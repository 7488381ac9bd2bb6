//! File formats, configuration and the command line around
//! [`timekan_core`].
//!
//! [`run`] is the whole binary. Its return value is the process exit
//! status: 0 on success, 1 for user or configuration errors, 2 for
//! numerical failures.

pub mod analysis;
pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod csv_io;
mod error;
pub mod synth;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use timekan_core::data::Part;
use timekan_core::gradcheck::GradcheckOptions;

pub use error::{CliError, CliResult};

use config::{Overrides, RunConfig, SyntheticKind};

#[derive(Debug, Parser)]
#[command(name = "timekan", version, about = "Frequency-decomposition KAN forecaster")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args, Clone)]
struct Common {
    /// JSON file of flat dotted keys, e.g. {"model.k": 3}.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (config key `out`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Sets both model.seed and train.seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override one key, e.g. --set model.k=3. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Suppress per-epoch progress.
    #[arg(long, short)]
    quiet: bool,
}

impl Common {
    fn resolve(&self) -> CliResult<RunConfig> {
        RunConfig::resolve(&Overrides {
            config: self.config.clone(),
            sets: self.sets.clone(),
            seed: self.seed,
            out: self.out.clone(),
        })
    }

    /// Like [`resolve`](Self::resolve), but falls back to the
    /// `resolved_config.json` stored beside a checkpoint.
    fn resolve_for_checkpoint(&self, checkpoint: &std::path::Path) -> CliResult<RunConfig> {
        let stored = checkpoint.join(commands::RESOLVED_FILE);
        if self.config.is_none() && stored.exists() {
            let mut c = self.clone();
            c.config = Some(stored);
            if c.out.is_none() {
                c.out = Some(checkpoint.to_path_buf());
            }
            return c.resolve();
        }
        self.resolve()
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Val,
    Test,
}

impl From<SplitArg> for Part {
    fn from(s: SplitArg) -> Part {
        match s {
            SplitArg::Train => Part::Train,
            SplitArg::Val => Part::Val,
            SplitArg::Test => Part::Test,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SynthArg {
    TwoTone,
    EttLike,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a model; writes metrics.json, model.ckpt, model.manifest.json and resolved_config.json.
    Train(Common),
    /// Evaluate a checkpoint on one split; writes eval.json.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Checkpoint directory (defaults to the output directory).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
    },
    /// Forecast past the end of a CSV; writes predictions.csv in raw units.
    Predict {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        input: PathBuf,
    },
    /// Compare every backward pass with finite differences.
    Gradcheck {
        #[command(flatten)]
        common: Common,
        /// Number of random seeds per operation.
        #[arg(long, default_value_t = 5)]
        seeds: u64,
        /// Scale the analytic gradient of one operation by 1.01.
        #[arg(long, hide = true)]
        corrupt: Option<String>,
    },
    /// Parameter count, MAC estimate, KAN orders and optional spectrum statistics.
    Inspect {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Raw CSV for the effective-frequency study.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "96,512")]
        windows: Vec<usize>,
    },
    /// Train the order-policy and upsampler variants; writes ablation.json.
    Ablate(Common),
    /// Write a synthetic dataset to CSV.
    Synth {
        #[arg(long, value_enum)]
        kind: SynthArg,
        #[arg(long, default_value_t = 4000)]
        rows: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        output: PathBuf,
    },
}

fn execute(cmd: Command) -> CliResult<()> {
    match cmd {
        Command::Train(common) => {
            commands::train(&common.resolve()?, common.quiet)?;
        }
        Command::Eval { common, checkpoint, split } => {
            let cfg = match &checkpoint {
                Some(dir) => common.resolve_for_checkpoint(dir)?,
                None => common.resolve()?,
            };
            let dir = checkpoint.unwrap_or_else(|| cfg.out_dir());
            let r = commands::eval(&cfg, &dir, split.into())?;
            println!(
                "{:?} mse {:.6}  mae {:.6}  windows {} ({})",
                r.split, r.mse, r.mae, r.windows, r.metric_units
            );
        }
        Command::Predict { common, checkpoint, input } => {
            let cfg = match &checkpoint {
                Some(dir) => common.resolve_for_checkpoint(dir)?,
                None => common.resolve()?,
            };
            let dir = checkpoint.unwrap_or_else(|| cfg.out_dir());
            commands::predict(&cfg, &dir, &input)?;
            println!("wrote {}", cfg.out_dir().join(commands::PREDICTIONS_FILE).display());
        }
        Command::Gradcheck { common, seeds, corrupt } => {
            let out = common.out.clone();
            let opts = GradcheckOptions {
                seeds: (0..seeds.max(1)).map(|s| s + common.seed.unwrap_or(0)).collect(),
                corrupt,
            };
            commands::gradcheck(out.as_deref(), &opts)?;
        }
        Command::Inspect { common, checkpoint, csv, windows } => {
            let cfg = common.resolve()?;
            commands::inspect(&cfg, checkpoint.as_deref(), csv.as_deref(), &windows)?;
        }
        Command::Ablate(common) => {
            commands::ablate(&common.resolve()?, common.quiet)?;
        }
        Command::Synth { kind, rows, seed, output } => {
            let kind = match kind {
                SynthArg::TwoTone => SyntheticKind::TwoTone,
                SynthArg::EttLike => SyntheticKind::EttLike,
            };
            let p = commands::synth(kind, rows, seed, &output)?;
            println!("wrote {}", p.display());
        }
    }
    Ok(())
}

/// Parses `args` (including the program name) and runs one command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
