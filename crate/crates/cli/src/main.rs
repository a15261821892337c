//! `platoon`: analytical curves, capacity tables, Monte Carlo checks and
//! scenario simulation.

mod commands;
mod error;
mod sweep;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use platoon_core::qos::LatencyVariant;

use crate::error::CliError;

#[derive(Parser)]
#[command(
    name = "platoon",
    version,
    about = "Platoon sizing and split/merge simulation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Reservation latency and slotted-ALOHA collision curves over n.
    Analyze(AnalyzeArgs),
    /// Road capacity over platoon size.
    Capacity(CapacityArgs),
    /// Monte Carlo estimates next to the closed forms.
    Mc(McArgs),
    /// Run one scenario and write its event log, metrics and summary.
    Simulate(SimulateArgs),
    /// Run a scenario once per value of one field.
    Sweep(SweepArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    AsPrinted,
    Calibrated,
}

impl From<VariantArg> for LatencyVariant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::AsPrinted => LatencyVariant::AsPrinted,
            VariantArg::Calibrated => LatencyVariant::Calibrated,
        }
    }
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Analysis parameter file (JSON).
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Inclusive platoon-size range, `lo:hi`.
    #[arg(long, default_value = "1:500", value_parser = commands::parse_range)]
    n_range: (u64, u64),
    #[arg(long, value_enum, default_value = "calibrated")]
    variant: VariantArg,
}

#[derive(Args)]
struct CapacityArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "1:100", value_parser = commands::parse_range)]
    n_range: (u64, u64),
}

#[derive(Args)]
struct McArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "1:20", value_parser = commands::parse_range)]
    n_range: (u64, u64),
    #[arg(long, default_value_t = 100_000)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario file (JSON).
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// `field=v1,v2,...`; nested fields use dots, e.g. `radio.subchannel_count=1,2,4`.
    #[arg(long)]
    sweep: String,
    #[arg(long)]
    seed: Option<u64>,
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Analyze(a) => commands::analyze(&a.config, &a.out, a.n_range, a.variant.into()),
        Command::Capacity(a) => commands::capacity(&a.config, &a.out, a.n_range),
        Command::Mc(a) => commands::monte_carlo(&a.config, &a.out, a.n_range, a.trials, a.seed),
        Command::Simulate(a) => commands::simulate(&a.config, &a.out, a.seed),
        Command::Sweep(a) => sweep::sweep(&a.config, &a.out, &a.sweep, a.seed),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {:#}", e.source);
            ExitCode::from(e.code)
        }
    }
}
