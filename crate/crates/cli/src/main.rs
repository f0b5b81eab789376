use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lamb_lab_cli::{emit, execute, exit, parse_config, CliError};
use log::{error, info};

/// Half-plane vortex-particle scenarios with bootstrap monitoring.
///
/// Exit status: 0 healthy run, 2 monitor violation, 1 error.
/// LAMBLAB_THREADS sets the worker thread count.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file.
    Run {
        config: PathBuf,
        /// Output directory (overrides the config).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Integrator steps between diagnostic samples.
        #[arg(long)]
        cadence: Option<usize>,
        /// Use the treecode instead of direct summation.
        #[arg(long)]
        treecode: bool,
        /// Particle spacing.
        #[arg(long)]
        h: Option<f64>,
        /// Time step.
        #[arg(long)]
        dt: Option<f64>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Some(n) = std::env::var("LAMBLAB_THREADS").ok().and_then(|s| s.parse().ok()) {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            error!("thread pool: {e}");
        }
    }
    let Command::Run { config, out, cadence, treecode, h, dt } = Cli::parse().command;
    match go(config, out, cadence, treecode, h, dt) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            error!("{e}");
            ExitCode::from(exit::ERROR as u8)
        }
    }
}

fn go(
    config: PathBuf,
    out: Option<PathBuf>,
    cadence: Option<usize>,
    treecode: bool,
    h: Option<f64>,
    dt: Option<f64>,
) -> Result<i32, CliError> {
    let mut cfg = parse_config(&config)?;
    if let Some(c) = cadence {
        cfg.monitor.cadence = c;
    }
    cfg.integrator.treecode |= treecode;
    if let Some(h) = h {
        cfg.h = h;
    }
    if let Some(dt) = dt {
        cfg.integrator.dt = dt;
    }
    let dir = out.unwrap_or_else(|| cfg.output.dir.clone());
    std::fs::create_dir_all(&dir).map_err(|e| CliError::Io(dir.clone(), e))?;
    let outcome = execute(&cfg, Some(&dir))?;
    for p in emit(&outcome, &dir)? {
        info!("wrote {}", p.display());
    }
    if outcome.report.healthy {
        Ok(exit::OK)
    } else {
        info!("monitor violation");
        Ok(exit::VIOLATION)
    }
}
