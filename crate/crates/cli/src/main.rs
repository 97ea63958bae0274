//! `transfer`: command-line driver for human-to-robot manipulation transfers.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dextransfer::adapt::WORKERS_ENV;
use dextransfer::pipeline::{
    corpus_report, evaluate_bundle, run_transfer, RunOptions, Stage, TransferConfig,
};

#[derive(Parser)]
#[command(name = "transfer", version, about, after_help = format!(
    "Rollout and corpus workers default to the available cores; set {WORKERS_ENV} to override."
))]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full transfer for one config and write its bundle.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Replay the retargeted controls without a residual policy.
        #[arg(long)]
        no_rl: bool,
        /// Recompute from this stage on, reusing the earlier bundle outputs.
        #[arg(long, value_name = "STAGE", value_parser = parse_stage)]
        resume_from: Option<Stage>,
    },
    /// Recompute the metrics of a bundle from its stored trajectories.
    Eval {
        #[arg(long)]
        bundle: PathBuf,
    },
    /// Summarize every bundle under a directory.
    Report {
        #[arg(long)]
        corpus: PathBuf,
        /// Print JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
}

fn parse_stage(s: &str) -> Result<Stage, String> {
    s.parse()
}

fn run(cli: Cli) -> Result<(), Box<dyn std::error::Error>> {
    match cli.command {
        Command::Run {
            config,
            seed,
            no_rl,
            resume_from,
        } => {
            let mut cfg = TransferConfig::load(&config)?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            let out = run_transfer(&cfg, &RunOptions { no_rl, resume_from })?;
            println!("{}", serde_json::to_string_pretty(&out.report)?);
            eprintln!("bundle written to {}", out.dir.display());
        }
        Command::Eval { bundle } => {
            let report = evaluate_bundle(&bundle)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Report { corpus, json } => {
            let report = corpus_report(&corpus)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                print!("{}", report.to_table());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
