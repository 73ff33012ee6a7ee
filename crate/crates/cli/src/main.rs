//! `d2d-sched`: scenario generation, simulation runs, policy comparisons and
//! collision analytics.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use d2d_sched::config::CONFIG_KEYS;
use d2d_sched::ConfigError;

#[derive(Debug, Parser)]
#[command(name = "d2d-sched", version, about = "Energy-aware D2D scheduling simulator")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Scenario file of `key = value` lines.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory, created if absent.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Base seed; overrides the `seed` config key.
    #[arg(long, global = true, env = "D2D_SCHED_SEED")]
    pub seed: Option<u64>,
    /// Worker threads for realizations. Results do not depend on it.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    /// Config override `key=value`, applied after the file. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Drop pairs and write pairs.csv.
    GenScenario,
    /// Simulate one policy and write runs.csv.
    Run(RunArgs),
    /// Compare policies over a threshold sweep; writes runs.csv and summary.csv.
    Compare(CompareArgs),
    /// Overall-collision probability: analysis against simulation, one CSV row.
    Collision(CollisionArgs),
    /// Weight V for a target collision probability.
    TuneV(TuneArgs),
}

#[derive(Debug, Args)]
pub struct SimArgs {
    /// Slots per realization.
    #[arg(long, default_value_t = 20_000)]
    pub slots: u64,
    #[arg(long, default_value_t = 10)]
    pub realizations: usize,
    /// Also write a per-slot trace.csv.
    #[arg(long)]
    pub trace: bool,
    /// Draw fading independently per policy.
    #[arg(long)]
    pub unpaired: bool,
    /// Share of leading slots left out of the averages.
    #[arg(long, default_value_t = 0.2)]
    pub warmup: f64,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// ideal, centralized, distributed or round-robin.
    #[arg(long, default_value = "distributed")]
    pub policy: String,
    #[command(flatten)]
    pub sim: SimArgs,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Policies to include (repeatable); all four by default.
    #[arg(long)]
    pub policy: Vec<String>,
    /// Threshold sweep `A:B:STEP` in dB; defaults to `gamma_th_db`.
    #[arg(long, value_name = "A:B:STEP")]
    pub gamma_sweep: Option<String>,
    #[command(flatten)]
    pub sim: SimArgs,
}

#[derive(Debug, Args)]
pub struct CollisionArgs {
    /// Target collision probability for the V column; `epsilon_collision` by default.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Monte-Carlo frames.
    #[arg(long, default_value_t = 1_000_000)]
    pub draws: u64,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    /// Target collision probability; `epsilon_collision` by default.
    #[arg(long)]
    pub epsilon: Option<f64>,
}

fn config_help() -> String {
    let width = CONFIG_KEYS.iter().map(|(k, _, _)| k.len()).max().unwrap_or(0);
    let mut s = String::from("Config keys (file or --set):\n");
    for (key, unit, desc) in CONFIG_KEYS {
        s.push_str(&format!("  {key:<width$}  [{unit}]  {desc}\n"));
    }
    s
}

/// 2 for configuration problems, 1 for everything else (regime and I/O errors).
fn exit_code(err: &anyhow::Error) -> u8 {
    if err.chain().any(|e| e.downcast_ref::<ConfigError>().is_some()) {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    let matches = Cli::command().after_help(config_help()).get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    match commands::dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
