//! `superfid`: command-line front end for channel superfidelity experiments.
//!
//! Exit codes: 0 success, 1 domain failure (not CPTP, dimension mismatch,
//! numerical check failed), 2 input error (unreadable or invalid files and
//! configs), 3 optimizer missed its target.

mod commands;
mod failure;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::Serialize;

use failure::{code, Failure};

#[derive(Debug, Parser)]
#[command(name = "superfid", version, about = "Channel superfidelity toolkit")]
struct Cli {
    /// JSON configuration for the chosen command.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed overriding the one in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory receiving data files and the run manifest.
    #[arg(long, global = true, default_value = "superfid-out")]
    out: PathBuf,
    /// Cross-check against a purification on a `d_Z`-dimensional environment.
    #[arg(long = "oracle", value_name = "D_Z", global = true)]
    oracle: Option<usize>,
    /// Numerical tolerance for pass/fail decisions.
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check that a channel file describes a CPTP map.
    Validate { channel: PathBuf },
    /// Channel superfidelity of two channel files on a state file.
    Gch {
        channel_a: PathBuf,
        channel_b: PathBuf,
        state: PathBuf,
    },
    /// Compare the relaxation-channel pipeline against its closed form.
    SingleQubitSweep,
    /// Spin-chain control experiment.
    Control {
        #[command(subcommand)]
        action: ControlAction,
    },
}

#[derive(Debug, Subcommand)]
enum ControlAction {
    /// Optimize pulses for the target gate without dephasing.
    Optimize,
    /// Monte Carlo sweep over Gaussian control noise.
    Sweep {
        /// Pulse schedule to perturb; defaults to `<out>/pulses.json`.
        #[arg(long)]
        pulses: Option<PathBuf>,
    },
    /// Fit `1 − c s²` to the sweep means.
    Fit {
        /// Summary CSV; defaults to `<out>/sweep_summary.csv`.
        #[arg(long)]
        summary: Option<PathBuf>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Validate { .. } => "validate",
            Command::Gch { .. } => "gch",
            Command::SingleQubitSweep => "single-qubit-sweep",
            Command::Control { action } => match action {
                ControlAction::Optimize => "control optimize",
                ControlAction::Sweep { .. } => "control sweep",
                ControlAction::Fit { .. } => "control fit",
            },
        }
    }
}

#[derive(Debug, Serialize)]
struct RunManifest<'a> {
    command: &'a str,
    config: Option<String>,
    seed: Option<u64>,
    out_dir: String,
    version: &'static str,
    duration_secs: f64,
    exit_code: u8,
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var("SUPERFID_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| Failure::input(format!("SUPERFID_THREADS must be a nonnegative integer, got {raw:?}")))?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::input(e.to_string()))?;
    }
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<u8, Failure> {
    configure_threads()?;
    std::fs::create_dir_all(&cli.out)
        .map_err(|e| Failure::input(format!("cannot create {}: {e}", cli.out.display())))?;
    let ctx = commands::Context {
        config: cli.config.as_deref(),
        seed: cli.seed,
        out: &cli.out,
        oracle: cli.oracle,
        tol: cli.tol,
    };
    match &cli.command {
        Command::Validate { channel } => commands::validate(&ctx, channel),
        Command::Gch {
            channel_a,
            channel_b,
            state,
        } => commands::gch(&ctx, channel_a, channel_b, state),
        Command::SingleQubitSweep => commands::single_qubit_sweep(&ctx),
        Command::Control { action } => match action {
            ControlAction::Optimize => commands::control_optimize(&ctx),
            ControlAction::Sweep { pulses } => commands::control_sweep(&ctx, pulses.as_deref()),
            ControlAction::Fit { summary } => commands::control_fit(&ctx, summary.as_deref()),
        },
    }
}

fn write_manifest(cli: &Cli, started: Instant, exit_code: u8) {
    let manifest = RunManifest {
        command: cli.command.name(),
        config: cli.config.as_ref().map(|p| p.display().to_string()),
        seed: cli.seed,
        out_dir: cli.out.display().to_string(),
        version: env!("CARGO_PKG_VERSION"),
        duration_secs: started.elapsed().as_secs_f64(),
        exit_code,
    };
    let path: &Path = &cli.out;
    let written = std::fs::create_dir_all(path).and_then(|_| {
        let text = serde_json::to_string_pretty(&manifest).expect("manifest encodes");
        std::fs::write(path.join("manifest.json"), text + "\n")
    });
    if let Err(e) = written {
        eprintln!("warning: could not write manifest: {e}");
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let started = Instant::now();
    let exit_code = match dispatch(&cli) {
        Ok(c) => c,
        Err(f) => {
            eprintln!("error: {f}");
            f.code
        }
    };
    write_manifest(&cli, started, exit_code);
    debug_assert!(exit_code <= code::TARGET_MISS);
    ExitCode::from(exit_code)
}
