use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;

/// Simulate, sweep and calibrate piezoelectric cantilever power supplies.
#[derive(Parser, Debug)]
#[command(name = "piezo-supply", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// System configuration file; the S128-H5FR-1107YB preset when omitted.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output file; standard output when omitted.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Output format; inferred from the --out extension when omitted.
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Svg,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Voltage (open circuit) or power (resistive load) over the frequency grid.
    SweepFreq(Common),
    /// Mean power over the load-resistance grid at the drive frequency.
    SweepLoad(Common),
    /// Resonant frequency and peak open-circuit voltage per tip mass.
    MassStudy(Common),
    /// Time-domain run of the configured chain; writes the full trace as CSV.
    Transient(Common),
    /// Calibrate model parameters against measured sweeps.
    Fit(FitArgs),
    /// Summary of the configured system.
    Report(Common),
}

#[derive(Args, Debug)]
pub struct FitArgs {
    #[command(flatten)]
    pub common: Common,
    /// Measured sweep CSV; may be repeated.
    #[arg(long = "data", value_name = "PATH", required = true)]
    pub data: Vec<PathBuf>,
    /// Comma-separated free parameters (m_eff, k_eff, zeta, theta, c_p, accel_amplitude).
    #[arg(long, value_name = "LIST", value_delimiter = ',', required = true)]
    pub free: Vec<String>,
    /// Objective evaluation budget.
    #[arg(long, value_name = "N", default_value_t = 2000)]
    pub max_evaluations: usize,
}

/// Failure with its exit code.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(String),
    Numeric(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Data(_) => 3,
            Failure::Numeric(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Data(m) | Failure::Numeric(m) => m,
        }
    }
}

impl From<piezo_supply::Error> for Failure {
    fn from(e: piezo_supply::Error) -> Self {
        use piezo_supply::Error::*;
        match e {
            Numeric(_) | Degenerate(_) | Infeasible(_) => Failure::Numeric(e.to_string()),
            _ => Failure::Data(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let text = e.to_string();
            eprintln!("{}", text.lines().next().unwrap_or("error: usage"));
            return ExitCode::from(2);
        }
    };
    let result = match cli.command {
        Command::SweepFreq(c) => commands::sweep_freq(&c),
        Command::SweepLoad(c) => commands::sweep_load(&c),
        Command::MassStudy(c) => commands::mass_study(&c),
        Command::Transient(c) => commands::transient(&c),
        Command::Fit(a) => commands::fit(&a),
        Command::Report(c) => commands::report(&c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
