//! `fasloc` — Monte-Carlo sweep runner for surface-assisted fluid-antenna
//! localization.

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use fas_aris_loc::harness::config::{parse_config, ScenarioConfig};
use fas_aris_loc::harness::output::emit_outputs;
use fas_aris_loc::harness::sweep::{run_sweep, SweepAxis};

#[derive(Parser)]
#[command(
    name = "fasloc",
    version,
    about = "Monte-Carlo localization sweeps for a fluid-antenna BS assisted by an active surface"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one sweep and write CSV/metadata artifacts.
    Simulate {
        /// Scenario file (key = value lines); defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Axis to sweep: power, epsilon, fas-steps, scatterers, or
        /// passive-compare.
        #[arg(long)]
        sweep: String,
        /// Override the configured Monte-Carlo trials per point.
        #[arg(long)]
        trials: Option<usize>,
        /// Master RNG seed; a repeated run is bit-identical.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory (created if missing).
        #[arg(long)]
        out: PathBuf,
        /// Also write per-trial error logs (trials_<table>.csv).
        #[arg(long)]
        log_trials: bool,
    },
}

fn simulate(
    config: Option<PathBuf>,
    sweep: String,
    trials: Option<usize>,
    seed: u64,
    out: PathBuf,
    log_trials: bool,
) -> Result<(), String> {
    let axis: SweepAxis = sweep.parse()?;
    let mut cfg = match &config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
            parse_config(&text).map_err(|e| format!("{}: {e}", path.display()))?
        }
        None => ScenarioConfig::default(),
    };
    if let Some(t) = trials {
        cfg.trials = t;
    }
    let sweeps = run_sweep(&cfg, axis, seed, log_trials).map_err(|e| e.to_string())?;
    let written =
        emit_outputs(&out, &cfg, axis, seed, &sweeps).map_err(|e| format!("write failed: {e}"))?;
    for sweep in &sweeps {
        println!(
            "{}: {} points, {} trials/point",
            sweep.name,
            sweep.points.len(),
            cfg.trials
        );
        for p in &sweep.points {
            println!(
                "  sweep_value {:>10}: rmse_pu {:.4} m (peb {:.4}), failures {}/{}",
                p.sweep_value, p.rmse_pu, p.peb, p.failures, p.trials
            );
        }
    }
    for path in written {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate {
            config,
            sweep,
            trials,
            seed,
            out,
            log_trials,
        } => simulate(config, sweep, trials, seed, out, log_trials),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
