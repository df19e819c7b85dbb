//! `codedopt` command-line front end.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod error;
mod experiment;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use codedopt::encoding::Scheme;

use error::CliError;

#[derive(Parser)]
#[command(name = "codedopt", version, about = "Straggler-resilient distributed least squares via data encoding")]
struct Cli {
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Dump normalized subset-Gram spectra as CSV.
    Spectrum {
        #[arg(long)]
        scheme: Scheme,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 2.0)]
        beta: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        m: usize,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long, default_value_t = 1)]
        trial_seed: u64,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run a simulated solve and write its trace.
    Solve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run the convergence and lemma checks for a configuration.
    Verify {
        #[arg(long)]
        config: PathBuf,
    },
    /// Generate a synthetic least-squares problem.
    Gendata {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        p: usize,
        #[arg(long, default_value_t = 0.0)]
        lambda: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Output prefix for `<out>.X.cmx`, `<out>.y.cmx` and `<out>.meta`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Encode a stored problem.
    Encode {
        /// Prefix of the problem written by `gendata`.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        scheme: Scheme,
        #[arg(long, default_value_t = 2.0)]
        beta: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Worker count; only replication depends on it.
        #[arg(long, default_value_t = 2)]
        m: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve one master connection.
    Worker {
        #[arg(long)]
        listen: String,
    },
    /// Run a solve against remote workers.
    Master {
        #[arg(long, value_delimiter = ',', required = true)]
        workers: Vec<String>,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Spectrum {
            scheme,
            n,
            beta,
            seed,
            m,
            k,
            trials,
            trial_seed,
            output,
        } => commands::spectrum(&commands::SpectrumArgs {
            scheme,
            n,
            beta,
            seed,
            m,
            k,
            trials,
            trial_seed,
            output,
        }),
        Command::Solve { config, output } => commands::solve(&config, output),
        Command::Verify { config } => commands::verify(&config),
        Command::Gendata { n, p, lambda, seed, out } => commands::gendata(n, p, lambda, seed, &out),
        Command::Encode {
            data,
            scheme,
            beta,
            seed,
            m,
            out,
        } => commands::encode(&commands::EncodeArgs {
            data,
            scheme,
            beta,
            seed,
            m,
            out,
        }),
        Command::Worker { listen } => commands::worker(&listen),
        Command::Master { workers, config, output } => commands::master(&workers, &config, output),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
