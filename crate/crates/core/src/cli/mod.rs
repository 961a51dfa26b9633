//! Command-line front end: scenario files, figure tables and checks.

mod figures;
pub mod scenario;
mod validate;

use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::montecarlo::SimError;
use crate::multicell::MultiCellError;
use crate::numerics::NumericsError;
use crate::singlecell::SingleCellError;

pub use figures::{cmd_fig, FigOptions};
pub use scenario::{Scenario, ScenarioFile};
pub use validate::{cmd_validate, Check};

/// Nats to bits.
pub const BITS_PER_NAT: f64 = std::f64::consts::LOG2_E;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Input(_) => 1,
            Self::Numerical(_) => 2,
        }
    }
}

impl From<NumericsError> for CliError {
    fn from(e: NumericsError) -> Self {
        Self::Numerical(e.to_string())
    }
}

impl From<SingleCellError> for CliError {
    fn from(e: SingleCellError) -> Self {
        match e {
            SingleCellError::Numerics(n) => n.into(),
            SingleCellError::Simulation(s) => s.into(),
            other => Self::Input(other.to_string()),
        }
    }
}

impl From<MultiCellError> for CliError {
    fn from(e: MultiCellError) -> Self {
        match e {
            MultiCellError::Numerics(n) => n.into(),
            MultiCellError::SingleCell(s) => s.into(),
            MultiCellError::Channel(_)
            | MultiCellError::InvalidArgument(_)
            | MultiCellError::UnsupportedFading
            | MultiCellError::UnsupportedScheduler(_) => Self::Input(e.to_string()),
            other => Self::Numerical(other.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        Self::Input(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Self::Input(format!("writing CSV: {e}"))
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Input(format!("i/o: {e}"))
    }
}

/// `lo:hi:n` with `n >= 2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sweep {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl Sweep {
    pub fn points(&self) -> Vec<f64> {
        crate::numerics::linspace(self.lo, self.hi, self.n)
    }
}

impl FromStr for Sweep {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        let [lo, hi, n] = parts.as_slice() else {
            return Err(format!("expected lo:hi:n, got {s:?}"));
        };
        let lo: f64 = lo.parse().map_err(|_| format!("bad lower bound {lo:?}"))?;
        let hi: f64 = hi.parse().map_err(|_| format!("bad upper bound {hi:?}"))?;
        let n: usize = n.parse().map_err(|_| format!("bad count {n:?}"))?;
        if !(lo > 0.0 && hi > lo && hi.is_finite() && n >= 2) {
            return Err(format!("need 0 < lo < hi and n >= 2, got {s:?}"));
        }
        Ok(Self { lo, hi, n })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolicyArg {
    Fixed,
    EdgeScaled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SchedulerArg {
    Rr,
    Greedy,
    Pf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PlacementArg {
    Iid,
    Rings,
}

#[derive(Debug, Parser)]
#[command(
    name = "cellrate",
    version,
    about = "Downlink rate distributions with scheduling and intercell interference"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the data behind figure 1-6 as CSV.
    Fig {
        #[arg(value_parser = clap::value_parser!(u8).range(1..=6))]
        id: u8,
        scenario: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        drops: Option<usize>,
        /// Drop receiver noise from multi-cell averages.
        #[arg(long)]
        interference_limited: bool,
        /// σ values in meters for figure 4.
        #[arg(long, default_value = "20:1000:40")]
        sigma_sweep: Sweep,
        /// Cell radii in meters for figures 5 and 6.
        #[arg(long, default_value = "250:4000:16")]
        radii: Sweep,
        /// BS power versus radius (default: fixed for fig 5, edge-scaled for fig 6).
        #[arg(long, value_enum)]
        policy: Option<PolicyArg>,
        /// Power in W at the reference radius (default: scenario power).
        #[arg(long)]
        ref_power: Option<f64>,
        /// Reference radius in meters for edge-scaled power.
        #[arg(long, default_value_t = 4000.0)]
        ref_radius: f64,
    },
    /// Run quick consistency checks on a scenario.
    Validate { scenario: PathBuf },
    /// Dump Monte-Carlo samples as CSV.
    Simulate {
        scenario: PathBuf,
        #[arg(long, value_enum, default_value = "rr")]
        scheduler: SchedulerArg,
        /// Single-cell greedy population model.
        #[arg(long, value_enum, default_value = "iid")]
        placement: PlacementArg,
        /// Fixed user position `u,v` in meters; switches to the multi-cell system.
        #[arg(long, value_parser = parse_location, allow_hyphen_values = true)]
        location: Option<(f64, f64)>,
        #[arg(long)]
        interference_limited: bool,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        drops: Option<usize>,
        /// Output file (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_location(s: &str) -> Result<(f64, f64), String> {
    let (u, v) = s.split_once(',').ok_or("expected u,v")?;
    let u = u.trim().parse().map_err(|_| format!("bad u {u:?}"))?;
    let v = v.trim().parse().map_err(|_| format!("bad v {v:?}"))?;
    Ok((u, v))
}

fn init_threads() -> Result<(), CliError> {
    if let Ok(v) = std::env::var("CELLRATE_THREADS") {
        let n: usize = v.parse().ok().filter(|&n| n > 0).ok_or_else(|| {
            CliError::Input(format!(
                "CELLRATE_THREADS must be a positive integer, got {v:?}"
            ))
        })?;
        // Fails only if a pool already exists, in which case it is kept.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    Ok(())
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    init_threads()?;
    match cli.command {
        Command::Fig {
            id,
            scenario,
            out,
            seed,
            drops,
            interference_limited,
            sigma_sweep,
            radii,
            policy,
            ref_power,
            ref_radius,
        } => {
            let opts = FigOptions {
                seed,
                drops,
                interference_limited,
                sigma_sweep,
                radii,
                policy,
                ref_power,
                ref_radius,
            };
            let written = cmd_fig(id, &scenario, &out, &opts)?;
            for path in written {
                println!("{}", path.display());
            }
            Ok(())
        }
        Command::Validate { scenario } => {
            let checks = cmd_validate(&scenario)?;
            let mut failed = 0;
            for c in &checks {
                println!("{c}");
                failed += usize::from(!c.passed);
            }
            if failed > 0 {
                return Err(CliError::Numerical(format!(
                    "{failed} of {} checks failed",
                    checks.len()
                )));
            }
            Ok(())
        }
        Command::Simulate {
            scenario,
            scheduler,
            placement,
            location,
            interference_limited,
            seed,
            drops,
            out,
        } => figures::cmd_simulate(
            &scenario,
            figures::SimulateOptions {
                scheduler,
                placement,
                location,
                interference_limited,
                seed,
                drops,
            },
            out.as_deref(),
        ),
    }
}

/// Parses `std::env::args`, runs, prints a one-line diagnostic on failure.
pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
