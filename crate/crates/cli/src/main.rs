//! `khsurf`: dressed operators, spectra and dynamics on curved surfaces.
//!
//! Every run is a TOML configuration plus a subcommand that says which part
//! of the pipeline to execute:
//!
//! ```text
//! khsurf geometry  --config run.toml            metric and curvature tables
//! khsurf dress     --config run.toml            phase-averaged potential/operator
//! khsurf spectrum  --config run.toml            bound states (bare or swept)
//! khsurf propagate --config run.toml            time evolution (+ crosscheck)
//! khsurf check     --config run.toml            built-in verification battery
//! ```
//!
//! Outputs are deterministic CSV files; a rerun of the same configuration
//! is byte-identical. Exit codes: 0 success, 1 failed verification checks,
//! 2 configuration problems, 3 model-assumption violations (the drive is
//! not separable, a flow leaves the chart), 4 numerical failures.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{CmdError, Ctx};
use config::{ConfigError, Quantity, RunConfig};

#[derive(Parser)]
#[command(name = "khsurf", version, about = "Dressed operators and dynamics on curved surfaces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Path to the TOML run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory (overrides the [output] section).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Grid override in the form N1xN2.
    #[arg(long, global = true, value_name = "N1xN2")]
    grid: Option<String>,
    /// Harmonic cutoff override for the dressing.
    #[arg(long, global = true, value_name = "N")]
    nmax: Option<usize>,
    /// Phase-sample override for the dressing.
    #[arg(long, global = true, value_name = "N")]
    ntheta: Option<usize>,
    /// Amplitude sweep override, comma separated, in bohr.
    #[arg(long, global = true, value_name = "LIST", value_delimiter = ',')]
    alpha0: Option<Vec<f64>>,
    /// Suppress progress lines (files are still written).
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Tabulate the metric, curvatures and the geometric potential.
    Geometry,
    /// Phase-average the potential and the kinetic operator over the drive.
    Dress,
    /// Solve for low-lying bound states (bare, or swept over amplitudes).
    Spectrum,
    /// Propagate an initial state in time.
    Propagate,
    /// Run the verification battery and write a report.
    Check,
}

fn parse_grid_override(s: &str) -> Result<(usize, usize), ConfigError> {
    let parts: Vec<&str> = s.split('x').collect();
    let parsed = if parts.len() == 2 {
        match (parts[0].parse::<usize>(), parts[1].parse::<usize>()) {
            (Ok(a), Ok(b)) => Some((a, b)),
            _ => None,
        }
    } else {
        None
    };
    parsed.ok_or_else(|| ConfigError(format!("--grid must look like 65x33, got {s:?}")))
}

/// Fold the command-line overrides into the parsed configuration. Overrides
/// that target a missing section are errors rather than silent no-ops.
fn apply_overrides(cfg: &mut RunConfig, cli: &Cli) -> Result<(), ConfigError> {
    if let Some(spec) = &cli.grid {
        let (n1, n2) = parse_grid_override(spec)?;
        let surface = cfg
            .surface
            .as_mut()
            .ok_or_else(|| ConfigError("--grid override needs a [surface] section".into()))?;
        surface.grid.n1 = n1;
        surface.grid.n2 = n2;
    }
    if cli.nmax.is_some() || cli.ntheta.is_some() || cli.alpha0.is_some() {
        let dressing = cfg
            .dressing
            .as_mut()
            .ok_or_else(|| ConfigError("dressing overrides need a [dressing] section".into()))?;
        if let Some(n) = cli.nmax {
            dressing.n_max = n;
        }
        if let Some(n) = cli.ntheta {
            dressing.n_theta = n;
        }
        if let Some(list) = &cli.alpha0 {
            dressing.alpha0 = Some(list.iter().map(|&a| Quantity(a)).collect());
        }
    }
    if let Some(dir) = &cli.out {
        cfg.output.directory = Some(dir.display().to_string());
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<(), CmdError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| ConfigError("--config PATH is required".into()))?;
    let mut cfg = RunConfig::load(path)?;
    apply_overrides(&mut cfg, cli)?;
    let out = PathBuf::from(cfg.output.directory());
    let ctx = Ctx { cfg, out, quiet: cli.quiet };
    match cli.command {
        Command::Geometry => commands::cmd_geometry(&ctx),
        Command::Dress => commands::cmd_dress(&ctx),
        Command::Spectrum => commands::cmd_spectrum(&ctx),
        Command::Propagate => commands::cmd_propagate(&ctx),
        Command::Check => commands::cmd_check(&ctx),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
