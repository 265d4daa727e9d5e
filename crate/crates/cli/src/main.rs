//! `expsearch`: search, routing, experiments and memory inspection.
//!
//! Exit codes: 0 ok, 1 domain refusal, 2 input error, 3 no routable experience.

mod commands;
mod config;
mod plot;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use expsearch_core::Error as CoreError;

use commands::{MemoryView, Sinks};
use config::{CliConfig, STORE_ENV};

/// A request the tool declines on domain grounds (exit 1).
#[derive(Debug)]
pub struct Refusal(pub String);

impl std::fmt::Display for Refusal {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Refusal {}

#[derive(Parser)]
#[command(name = "expsearch", version, about = "Experience-guided search, routing and experiments")]
struct Cli {
    /// JSON config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides every seed in the config or experiment file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Primary output file (forest, decision, CSV or JSON report).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// SVG plot destination (regret, amortize).
    #[arg(long, global = true)]
    plot: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Budgeted search on a synthetic task; prints `best <node_id> <val_score>`.
    Search {
        #[arg(long)]
        task: PathBuf,
    },
    /// Zero-budget routing; prints the routing decision as JSON.
    Route {
        #[arg(long)]
        task: PathBuf,
    },
    /// Bandit regret experiment; CSV `t,regret_mean,regret_std,bound`.
    Regret {
        #[arg(long)]
        experiment: PathBuf,
    },
    /// Pool to held-out amortization experiment; JSON summary.
    Amortize {
        #[arg(long)]
        experiment: PathBuf,
    },
    /// Leaderboard aggregation of a `method,task,mean,std,direction` CSV.
    Report {
        csv: PathBuf,
        /// Print JSON instead of the text table.
        #[arg(long)]
        json: bool,
    },
    /// Inspect the memory store.
    Memory {
        #[command(subcommand)]
        view: MemoryCommand,
    },
}

#[derive(Subcommand, Clone, Copy)]
enum MemoryCommand {
    /// Record counts per stream and per task.
    Stats,
    /// Verified failure-signature fixes.
    Fixes,
    /// Mean runtime and memory per family.
    Profiles,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<Refusal>().is_some() {
            return 1;
        }
        match cause.downcast_ref::<CoreError>() {
            Some(CoreError::Budget(..)) => return 1,
            Some(CoreError::NoRoutableExperience(_)) => return 3,
            _ => {}
        }
    }
    2
}

fn run(cli: Cli) -> Result<String> {
    let sinks = Sinks {
        out: cli.out,
        plot: cli.plot,
    };
    let cfg = || CliConfig::resolve(cli.config.as_deref(), cli.seed, std::env::var_os(STORE_ENV).map(PathBuf::from));
    match cli.command {
        Command::Search { task } => commands::search(&cfg()?, &task, &sinks),
        Command::Route { task } => commands::route_cmd(&cfg()?, &task, &sinks),
        Command::Regret { experiment } => commands::regret(cli.seed, &experiment, &sinks),
        Command::Amortize { experiment } => commands::amortize(cli.seed, &experiment, &sinks),
        Command::Report { csv, json } => commands::report(&csv, json, &sinks),
        Command::Memory { view } => commands::memory(
            &cfg()?,
            match view {
                MemoryCommand::Stats => MemoryView::Stats,
                MemoryCommand::Fixes => MemoryView::Fixes,
                MemoryCommand::Profiles => MemoryView::Profiles,
            },
        ),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(text) => {
            let mut stdout = std::io::stdout().lock();
            let _ = stdout.write_all(text.as_bytes());
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
