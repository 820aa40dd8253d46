//! Command-line front end.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::Value;

use thz_alloc::absorption::SlopeDirection;
use thz_alloc::cli::config::Strategy;
use thz_alloc::cli::{self, emit, sweep, EXIT_OK};
use thz_alloc::Result;

#[derive(Parser)]
#[command(name = "thz-alloc", version, about = "Multi-band THz spectrum allocation")]
struct Cli {
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct SolveArgs {
    /// Experiment config (TOML); defaults apply when omitted.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Scenario seed; the first configured seed when omitted.
    #[arg(long)]
    seed: Option<u64>,
    /// Write the JSON report here instead of stdout.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Direction {
    Increasing,
    Decreasing,
}

#[derive(Subcommand)]
enum Command {
    /// Equal-width solve of one scenario.
    SolveEsb(SolveArgs),
    /// Adaptive-width solve of one scenario.
    SolveAsb(SolveArgs),
    /// Runs every seed and strategy over the configured sweep (or once
    /// without one) and writes `results.csv` and `runs.json`.
    Sweep {
        #[arg(short, long)]
        config: PathBuf,
    },
    /// Compares simulated and analytic non-blockage of one link.
    ValidateBlockage {
        #[arg(short, long)]
        config: Option<PathBuf>,
        /// Horizontal link length, m.
        #[arg(short, default_value_t = 5.0)]
        r: f64,
        #[arg(long, default_value_t = 0.01)]
        max_half_width: f64,
    },
    /// Fits the exponential absorption surrogate over a band.
    FitAbsorption {
        /// Two-column CSV (Hz, 1/m); the bundled table when omitted.
        #[arg(long)]
        table: Option<PathBuf>,
        #[arg(long, default_value_t = 1.025e12)]
        f_lo: f64,
        #[arg(long, default_value_t = 1.075e12)]
        f_hi: f64,
        #[arg(long, value_enum, default_value_t = Direction::Increasing)]
        direction: Direction,
    },
    /// Exhaustive search on a small scenario.
    Oracle {
        #[arg(short, long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Search widths too, in the adaptive mode of the fit.
        #[arg(long)]
        adaptive: bool,
    },
}

fn print(v: &Value, out: Option<&PathBuf>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(v)?;
    text.push('\n');
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn run(cmd: Command) -> Result<i32> {
    match cmd {
        Command::SolveEsb(a) => solve(a, Strategy::Esb),
        Command::SolveAsb(a) => solve(a, Strategy::Asb),
        Command::Sweep { config } => {
            let cfg = cli::load_config(Some(&config))?;
            let rows = if cfg.sweep.is_some() {
                sweep::run_sweep(&cfg)?
            } else {
                sweep::run_plain(&cfg)?
            };
            let dir = cfg.output_dir();
            let (csv, _) = emit::write_outputs(&rows, &dir)?;
            log::info!("wrote {} rows to {}", rows.len(), csv.display());
            Ok(sweep::batch_exit_code(&rows))
        }
        Command::ValidateBlockage { config, r, max_half_width } => {
            let cfg = cli::load_config(config.as_deref())?;
            let (v, code) = cli::blockage_command(&cfg, r, max_half_width)?;
            print(&v, None)?;
            Ok(code)
        }
        Command::FitAbsorption { table, f_lo, f_hi, direction } => {
            let dir = match direction {
                Direction::Increasing => SlopeDirection::Increasing,
                Direction::Decreasing => SlopeDirection::Decreasing,
            };
            print(&cli::fit_command(table.as_deref(), (f_lo, f_hi), dir)?, None)?;
            Ok(EXIT_OK)
        }
        Command::Oracle { config, seed, adaptive } => {
            let cfg = cli::load_config(config.as_deref())?;
            let seed = seed.unwrap_or(cfg.seeds[0]);
            print(&cli::oracle_command(&cfg, seed, adaptive)?, None)?;
            Ok(EXIT_OK)
        }
    }
}

fn solve(a: SolveArgs, strategy: Strategy) -> Result<i32> {
    let cfg = cli::load_config(a.config.as_deref())?;
    let seed = a.seed.unwrap_or(cfg.seeds[0]);
    let (v, code) = cli::solve_command(&cfg, seed, strategy)?;
    print(&v, a.out.as_ref())?;
    Ok(code)
}

fn main() -> ExitCode {
    let args = Cli::parse();
    let level = match args.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let code = match run(args.command) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            cli::exit_code_for(&e)
        }
    };
    ExitCode::from(code as u8)
}
