//! Binary entry point: argument parsing and exit-code mapping only; the
//! command logic lives in the library's `cli` module.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use periodcast::cli::{self, RunConfig};
use periodcast::Error;

#[derive(Parser)]
#[command(name = "periodcast", about = "Long-horizon forecasting with period-windowed attention")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write checkpoint, metrics journal, and summary
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Forecast the horizon following the last window of an input CSV
    Forecast {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "forecast_out")]
        out: PathBuf,
        #[arg(long, default_value = "date")]
        date_column: String,
    },
    /// Search hyperparameters with the asynchronous Bayesian engine
    Hpo {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        workers: Option<usize>,
        /// JSON search-space file (defaults to the built-in space)
        #[arg(long)]
        space: Option<PathBuf>,
    },
    /// Score how repeatable the dataset's history is
    Predictability {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        folds: Option<usize>,
    },
    /// Benchmark the attention kernels across sequence lengths
    Bench {
        /// Comma-separated ascending lengths
        #[arg(long, value_delimiter = ',', default_value = "256,512,1024")]
        lengths: Vec<usize>,
        #[arg(long, default_value_t = 64)]
        d_model: usize,
        /// Number of period windows held fixed across lengths
        #[arg(long, default_value_t = 4)]
        np: usize,
        #[arg(long, default_value_t = 9)]
        reps: usize,
        #[arg(long, default_value = "bench.csv")]
        out: PathBuf,
    },
}

fn load_config(path: Option<PathBuf>, data: Option<PathBuf>, out: Option<PathBuf>) -> Result<RunConfig, Error> {
    let mut cfg = match path {
        Some(p) => RunConfig::from_file(&p)?,
        None => RunConfig::default(),
    };
    if let Some(d) = data {
        cfg.data = Some(d);
    }
    if let Some(o) = out {
        cfg.out = o;
    }
    Ok(cfg)
}

fn run() -> Result<(), Error> {
    match Cli::parse().command {
        Command::Train { config, data, out, seed } => {
            cli::cmd_train(load_config(config, data, out)?, seed)
        }
        Command::Forecast { checkpoint, input, out, date_column } => {
            cli::cmd_forecast(&checkpoint, &input, &out, &date_column)
        }
        Command::Hpo { config, data, out, seed, trials, workers, space } => {
            cli::cmd_hpo(load_config(config, data, out)?, seed, space.as_deref(), trials, workers)
        }
        Command::Predictability { config, data, out, seed, k, folds } => {
            let mut cfg = load_config(config, data, out)?;
            if let Some(k) = k {
                cfg.k = k;
            }
            if let Some(f) = folds {
                cfg.folds = f;
            }
            cli::cmd_predictability(cfg, seed)
        }
        Command::Bench { lengths, d_model, np, reps, out } => {
            cli::cmd_bench(&lengths, d_model, np, reps, &out)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
