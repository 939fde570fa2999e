//! Command-line front end for the ecmkit battery toolkit.
//!
//! One subcommand per pipeline stage — profile generation, circuit
//! simulation, OCV extraction and fitting, component-table identification,
//! and electro-thermal co-simulation. A TOML config file describes the run;
//! individual flags override file values. Every run is deterministic given
//! the config and `--seed`, and every text output records the tool version
//! and the exact resolved configuration.
//!
//! Exit codes: 0 success, 1 numerical/convergence failure, 2 usage or
//! configuration error.

mod commands;
mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ecmkit::hppc::PulsePhase;

#[derive(Parser)]
#[command(name = "ecmkit", version, about = "Battery equivalent-circuit modelling pipeline")]
pub struct Cli {
    /// TOML run configuration; command flags override file values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Output directory, created if missing (default: config `out_dir`, then
    /// the working directory).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Seed for randomized additions such as synthetic measurement noise.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Suppress console notes; files are still written.
    #[arg(long, global = true)]
    pub quiet: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Generate a square-wave pulse-train excitation CSV.
    HppcGen(HppcGenArgs),
    /// Run the circuit model over an excitation and write the voltage trace.
    Simulate(SimulateArgs),
    /// Extract relaxed OCV points from a pulse trace and fit the polynomial.
    FitOcv(FitOcvArgs),
    /// Identify the SOC-dependent component table from a voltage trace.
    FitParams(FitParamsArgs),
    /// Co-simulate the electrical and thermal response on the cell grid.
    Thermal(ThermalArgs),
}

/// Clap-friendly mirror of [`PulsePhase`].
#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PhaseArg {
    PulseFirst,
    RestFirst,
}

impl From<PhaseArg> for PulsePhase {
    fn from(arg: PhaseArg) -> Self {
        match arg {
            PhaseArg::PulseFirst => PulsePhase::PulseFirst,
            PhaseArg::RestFirst => PulsePhase::RestFirst,
        }
    }
}

#[derive(Args)]
pub struct HppcGenArgs {
    /// Pulse amplitude, A.
    #[arg(long)]
    pub amps: Option<f64>,
    /// Pulse repetition frequency, Hz.
    #[arg(long)]
    pub freq: Option<f64>,
    /// Fraction of each period spent pulsing (0, 1).
    #[arg(long)]
    pub duty: Option<f64>,
    /// Total profile length, s.
    #[arg(long)]
    pub duration: Option<f64>,
    /// Sample interval, s.
    #[arg(long)]
    pub dt: Option<f64>,
    /// Whether each period opens with the pulse or the rest.
    #[arg(long, value_enum)]
    pub phase: Option<PhaseArg>,
}

#[derive(Args)]
pub struct SimulateArgs {
    /// Excitation CSV (`time_s,current_A[,voltage_V]`); falls back to the
    /// config `[profile]` section.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Component-table CSV (overrides `[inputs] params_csv`).
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// Starting state of charge.
    #[arg(long)]
    pub initial_soc: Option<f64>,
    /// Gaussian measurement noise added to the written voltages, mV.
    #[arg(long)]
    pub noise_mv: Option<f64>,
    /// Also write a gnuplot script for the trace.
    #[arg(long)]
    pub plot_script: bool,
}

#[derive(Args)]
pub struct FitOcvArgs {
    /// Measured trace CSV with a voltage column (overrides `[inputs] trace_csv`).
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Polynomial degree (default 5).
    #[arg(long)]
    pub degree: Option<usize>,
    /// State of charge at the first sample.
    #[arg(long)]
    pub initial_soc: Option<f64>,
    /// Pulse-detection current threshold, A (default: half the trace maximum).
    #[arg(long)]
    pub threshold: Option<f64>,
}

#[derive(Args)]
pub struct FitParamsArgs {
    /// Measured trace CSV with a voltage column (overrides `[inputs] trace_csv`).
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Number of evenly spaced SOC breakpoints.
    #[arg(long)]
    pub breakpoints: Option<usize>,
    /// Iteration budget for the optimizer.
    #[arg(long)]
    pub max_iterations: Option<usize>,
    /// Warm-start table CSV on the same breakpoint grid.
    #[arg(long)]
    pub initial_table: Option<PathBuf>,
}

#[derive(Args)]
pub struct ThermalArgs {
    /// Excitation CSV; falls back to the config `[profile]` section.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Component-table CSV (overrides `[inputs] params_csv`).
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// Radial cell count.
    #[arg(long)]
    pub n_r: Option<usize>,
    /// Axial cell count.
    #[arg(long)]
    pub n_z: Option<usize>,
    /// Thermal window length, s.
    #[arg(long)]
    pub dt: Option<f64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(if err.is_usage() { 2 } else { 1 })
        }
    }
}

fn run(cli: &Cli) -> ecmkit::Result<()> {
    let cfg = config::RunConfig::load(cli.config.as_deref())?;
    match &cli.command {
        Command::HppcGen(args) => commands::hppc_gen(cli, &cfg, args),
        Command::Simulate(args) => commands::simulate(cli, &cfg, args),
        Command::FitOcv(args) => commands::fit_ocv(cli, &cfg, args),
        Command::FitParams(args) => commands::fit_params(cli, &cfg, args),
        Command::Thermal(args) => commands::thermal(cli, &cfg, args),
    }
}
