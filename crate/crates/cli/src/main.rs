use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use stochmech::scenario::ScenarioId;
use stochmech::trotter::{FreeKernel, PotentialOrder, TrotterKind, TrotterOptions};

mod commands;
mod config;
mod error;

use config::{Flags, Resolved};
use error::CliResult;

/// Stochastic-mechanics laboratory: solvers, samplers and verification suites.
#[derive(Debug, Parser)]
#[command(name = "stochmech", version)]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (default `out`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Master seed. Required here or in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// free_packet, harmonic_ground, harmonic_coherent, ou_feynman_kac or custom.
    #[arg(long, global = true, value_parser = parse_scenario)]
    scenario: Option<ScenarioId>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve the scenario and write `evolution.csv`.
    Evolve {
        /// Keep every n-th record time.
        #[arg(long, default_value_t = 100)]
        every: usize,
    },
    /// Nelson drifts at one time, written to `fields.csv`.
    Fields {
        /// Time (defaults to the end of the run, or its midpoint for heat scenarios).
        #[arg(long)]
        t: Option<f64>,
    },
    /// Sample the Nelson diffusion; binned summary and Born check.
    Sample {
        /// Also dump every trajectory to `paths.bin`.
        #[arg(long)]
        write_paths: bool,
    },
    /// Monte Carlo Feynman–Kac estimate against the heat solver.
    FeynmanKac {
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        x: f64,
    },
    /// Trotter convergence scan.
    Trotter {
        #[arg(long, value_enum, default_value_t = KindArg::Quantum)]
        kind: KindArg,
        /// Slice counts, comma separated.
        #[arg(long, value_delimiter = ',', default_values_t = [8, 16, 32, 64])]
        l: Vec<usize>,
        #[arg(long, value_enum, default_value_t = KernelArg::Projected)]
        kernel: KernelArg,
        #[arg(long, value_enum, default_value_t = OrderArg::PostStep)]
        order: OrderArg,
    },
    /// Run a verification suite, or `all`.
    Verify { suite: String },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum KindArg {
    Quantum,
    Heat,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum KernelArg {
    Projected,
    Trapezoid,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum OrderArg {
    PostStep,
    PreStep,
}

fn parse_scenario(s: &str) -> Result<ScenarioId, String> {
    s.parse().map_err(|e: stochmech::Error| e.to_string())
}

fn run(cli: Cli) -> CliResult<bool> {
    let flags = Flags { config: cli.config, out: cli.out, seed: cli.seed, scenario: cli.scenario };
    let r = Resolved::from_flags(&flags)?;
    match cli.command {
        Command::Evolve { every } => commands::evolve(&r, every),
        Command::Fields { t } => commands::fields(&r, t),
        Command::Sample { write_paths } => commands::sample(&r, write_paths),
        Command::FeynmanKac { x } => commands::feynman_kac(&r, x),
        Command::Trotter { kind, l, kernel, order } => {
            let kind = match kind {
                KindArg::Quantum => TrotterKind::Quantum,
                KindArg::Heat => TrotterKind::Heat,
            };
            let opts = TrotterOptions {
                kernel: match kernel {
                    KernelArg::Projected => FreeKernel::Projected,
                    KernelArg::Trapezoid => FreeKernel::Trapezoid,
                },
                order: match order {
                    OrderArg::PostStep => PotentialOrder::PostStep,
                    OrderArg::PreStep => PotentialOrder::PreStep,
                },
            };
            commands::trotter(&r, kind, &l, opts)
        }
        Command::Verify { suite } => commands::verify(&r, &suite),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
