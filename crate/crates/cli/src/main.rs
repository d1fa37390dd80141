// SPDX-License-Identifier: Apache-2.0

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

/// Evaluator-guided RTL search with an evolving skill library.
#[derive(Debug, Parser)]
#[command(name = "rtlevolve", version)]
pub struct Cli {
    /// Run manifest (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the manifest's search seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Tasks searched concurrently.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    /// Print the plan and touch nothing.
    #[arg(long, global = true)]
    pub dry_run: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Immediate,
    Validated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Search every task of the manifest.
    Run {
        /// Run id; defaults to the manifest's or a time-based id.
        #[arg(long)]
        run_id: Option<String>,
    },
    /// Distill finished runs into skill updates.
    Evolve {
        /// Evolver state directory.
        #[arg(long)]
        store: PathBuf,
        /// Run or task directories to ingest.
        #[arg(long = "runs", required = true, num_args = 1..)]
        runs: Vec<PathBuf>,
        /// Skill library; defaults to the manifest's.
        #[arg(long)]
        skills_dir: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Mode::Immediate)]
        mode: Mode,
        /// Validation queue, required in validated mode.
        #[arg(long)]
        queue_dir: Option<PathBuf>,
    },
    /// Replay queued skill candidates.
    Worker {
        #[arg(long)]
        queue_dir: PathBuf,
        #[arg(long)]
        worker_id: String,
        #[arg(long, default_value_t = 1)]
        max_jobs: usize,
    },
    /// Apply the publication thresholds to pending jobs.
    Publish {
        #[arg(long)]
        queue_dir: PathBuf,
        #[arg(long)]
        skills_dir: PathBuf,
    },
    /// Aggregate metrics over run directories.
    Report {
        paths: Vec<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
        /// Also write the JSON document here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Install the shipped skills.
    InitSkills {
        #[arg(long)]
        skills_dir: PathBuf,
    },
    /// Write the GEMM task documents and testbenches.
    EmitGemmTasks {
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match commands::dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = e.downcast_ref::<commands::Coded>().map_or(1, |c| c.code);
            eprintln!("error: {e:#}");
            ExitCode::from(code)
        }
    }
}
