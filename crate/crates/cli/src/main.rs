//! `overbarrier`: above-barrier reflection and localization from the command line.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

const EXIT_DOMAIN: u8 = 1;
const EXIT_NUMERIC: u8 = 2;
const EXIT_USAGE: u8 = 64;

#[derive(Parser, Debug)]
#[command(name = "overbarrier", version, about, args_override_self = true)]
#[command(after_help = "Exit codes: 0 success, 1 invalid physical input, 2 numerical failure, 64 usage error.")]
pub struct Cli {
    /// Worker threads (0 = one per core)
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    /// TOML file whose keys mirror the long flags; a table named after the
    /// subcommand applies to that subcommand only
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// More progress output on stderr
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Reflection coefficient of one potential
    Reflect(ReflectArgs),
    /// Complex turning points and their actions
    TurningPoints(TurningArgs),
    /// Born/WKB applicability map over a (delta, eps) grid
    #[command(after_help = "cells.csv columns: delta, eps, R_exact, R_born, R_wkb, S, regime\n\
line.csv columns: ln_inv_eps, ln_inv_delta")]
    Sweep(SweepArgs),
    /// Localization length of a Gaussian-correlated random potential
    #[command(after_help = "samples CSV columns: index, lnT (empty when the realization failed)")]
    Localize(LocalizeArgs),
    /// Regression of the solvers against the closed forms
    Validate(ValidateArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum FamilyArg {
    Fermi,
    Sech2,
    Gauss,
    Fourier,
    Tabulated,
}

#[derive(Args, Debug, Clone)]
pub struct PotentialArgs {
    #[arg(long, value_enum)]
    pub family: FamilyArg,
    /// V0 / E
    #[arg(long)]
    pub delta: Option<f64>,
    /// 1 / (sqrt(E) L)
    #[arg(long)]
    pub eps: Option<f64>,
    /// Use U(-eps z)
    #[arg(long)]
    pub mirrored: bool,
    /// Two-column (z, U) text file for the tabulated family
    #[arg(long, value_name = "PATH")]
    pub table: Option<PathBuf>,
    /// JSON series document for the fourier family
    #[arg(long, value_name = "PATH")]
    pub series: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum MethodArg {
    Exact,
    ClosedForm,
    Born,
    Wkb,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum BackendArg {
    Tm,
    Ie,
    Layered,
}

#[derive(Args, Debug)]
pub struct ReflectArgs {
    #[command(flatten)]
    pub potential: PotentialArgs,
    #[arg(long, value_enum, default_value = "exact")]
    pub method: MethodArg,
    #[arg(long, value_enum, default_value = "ie")]
    pub backend: BackendArg,
    /// Relative tolerance of the ODE integration
    #[arg(long, default_value_t = 1e-12)]
    pub rtol: f64,
    /// Cell width of the layered backend
    #[arg(long, default_value_t = 0.05)]
    pub layer_width: f64,
    /// Write the potential profile as CSV (columns: z, eps_z, U, k2)
    #[arg(long, value_name = "PATH")]
    pub dump_shape: Option<PathBuf>,
    /// JSON output path instead of stdout
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TurningArgs {
    #[command(flatten)]
    pub potential: PotentialArgs,
    /// Upper limit of the Im z search strip
    #[arg(long)]
    pub im_max: Option<f64>,
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepFamily {
    Fermi,
    Sech2,
    Gauss,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[arg(long, value_enum)]
    pub family: SweepFamily,
    #[arg(long, default_value_t = 1e-4)]
    pub delta_min: f64,
    #[arg(long, default_value_t = 0.9)]
    pub delta_max: f64,
    #[arg(long, default_value_t = 32)]
    pub n_delta: usize,
    #[arg(long, default_value_t = 0.05)]
    pub eps_min: f64,
    #[arg(long, default_value_t = 2.0)]
    pub eps_max: f64,
    #[arg(long, default_value_t = 24)]
    pub n_eps: usize,
    /// Smoothness score at or below which Born is trusted
    #[arg(long, default_value_t = 1.0 / 3.0)]
    pub s_lo: f64,
    /// Smoothness score at or above which WKB is trusted
    #[arg(long, default_value_t = 3.0)]
    pub s_hi: f64,
    /// Skip the ODE solver where no closed form exists
    #[arg(long)]
    pub no_exact: bool,
    /// Per-cell CSV
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Crossover-line CSV
    #[arg(long, value_name = "PATH")]
    pub line: Option<PathBuf>,
    /// Summary JSON path instead of stdout
    #[arg(long, value_name = "PATH")]
    pub summary: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum CorrelationArg {
    Gaussian,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum LocalizeMethod {
    Ensemble,
    Born,
    WkbHist,
}

#[derive(Args, Debug)]
pub struct LocalizeArgs {
    #[arg(long, value_enum, default_value = "gaussian")]
    pub correlation: CorrelationArg,
    #[arg(long)]
    pub eps: f64,
    #[arg(long)]
    pub delta: f64,
    /// Sample length, tapers included
    #[arg(long = "L0", value_name = "L0")]
    pub l0: f64,
    /// Number of realizations
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Ramp width at each end (default 5/eps)
    #[arg(long)]
    pub taper: Option<f64>,
    #[arg(long, default_value_t = 0.05)]
    pub layer_width: f64,
    #[arg(long, value_enum, default_value = "ensemble")]
    pub method: LocalizeMethod,
    /// Histogram bins for wkb-hist
    #[arg(long, default_value_t = 40)]
    pub bins: usize,
    /// Per-realization ln T as CSV
    #[arg(long, value_name = "PATH")]
    pub samples: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum ValidateFamily {
    Fermi,
    Sech2,
    Gauss,
    All,
}

#[derive(Args, Debug)]
pub struct ValidateArgs {
    #[arg(long, value_enum, default_value = "all")]
    pub family: ValidateFamily,
    /// JSON report path
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if let Some(e) = err.downcast_ref::<overbarrier::Error>() {
        return if e.is_numeric() { EXIT_NUMERIC } else { EXIT_DOMAIN };
    }
    if err.downcast_ref::<commands::NumericFailure>().is_some() {
        return EXIT_NUMERIC;
    }
    if err.downcast_ref::<config::ConfigError>().is_some() {
        return EXIT_USAGE;
    }
    EXIT_DOMAIN
}

fn main() -> ExitCode {
    let argv = match config::expand(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    }
    match commands::run(&cli.command, cli.verbose) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
