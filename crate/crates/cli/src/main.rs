use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use flowreg_cli::presets;
use flowreg_cli::runner::{self, RunError, Status};
use flowreg_cli::scenario::Prepared;

/// Distributed output regulation of flow networks.
#[derive(Parser)]
#[command(name = "flowreg", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario and write trajectory.csv, allocation.txt and verification.txt.
    Run {
        /// Scenario file or preset name.
        scenario: String,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Step size in the scenario's time unit.
        #[arg(long)]
        dt: Option<f64>,
        /// Horizon in the scenario's time unit.
        #[arg(long)]
        horizon: Option<f64>,
    },
    /// Check a scenario against every modelling assumption.
    Validate { scenario: String },
    /// Print the optimal steady state for every constant reference.
    Allocate { scenario: String },
    /// Offline checks: equilibrium residuals, storage identities, zero forcing, sparsity.
    Analyze {
        scenario: String,
        /// Also write a TOML summary here.
        #[arg(long)]
        toml: Option<PathBuf>,
    },
    /// List the built-in scenarios, or write them as files into DIR.
    Presets {
        #[arg(long)]
        write: Option<PathBuf>,
    },
    /// Run every scenario file matching a glob pattern in parallel.
    Sweep {
        pattern: String,
        #[arg(long, default_value = "sweep-out")]
        out: PathBuf,
    },
}

fn prepare(arg: &str) -> Result<Prepared, RunError> {
    let p = runner::load(arg)?.prepare()?;
    for w in &p.warnings {
        log::warn!("{w}");
    }
    Ok(p)
}

fn execute(cmd: Command) -> Result<Status, RunError> {
    match cmd {
        Command::Run { scenario, out, dt, horizon } => {
            let mut p = prepare(&scenario)?;
            runner::override_settings(&mut p, dt, horizon)?;
            let o = runner::run(&p, &out)?;
            for m in &o.monitors {
                println!("{} {}: {}", if m.passed { "PASS" } else { "FAIL" }, m.name, m.detail);
            }
            println!("wrote {}", out.display());
            Ok(o.status())
        }
        Command::Validate { scenario } => {
            let p = prepare(&scenario)?;
            for w in &p.warnings {
                println!("warning: {w}");
            }
            println!("{}: valid", p.scenario.name);
            Ok(Status::Pass)
        }
        Command::Allocate { scenario } => {
            let p = prepare(&scenario)?;
            let a = runner::allocation_report(&p);
            print!("{}", a.text());
            Ok(if a.feasible() { Status::Pass } else { Status::MonitorFailure })
        }
        Command::Analyze { scenario, toml } => {
            let p = prepare(&scenario)?;
            let a = runner::analysis_report(&p)?;
            print!("{}", a.text());
            if let Some(path) = toml {
                std::fs::write(&path, a.to_toml()).map_err(|source| RunError::Io { path, source })?;
            }
            Ok(if a.passed() { Status::Pass } else { Status::MonitorFailure })
        }
        Command::Presets { write } => {
            for name in presets::NAMES {
                println!("{name}");
            }
            if let Some(dir) = write {
                std::fs::create_dir_all(&dir).map_err(|source| RunError::Io { path: dir.clone(), source })?;
                for s in presets::all() {
                    let path = dir.join(format!("{}.toml", s.name));
                    s.save(&path).map_err(|source| RunError::Io { path, source })?;
                }
            }
            Ok(Status::Pass)
        }
        Command::Sweep { pattern, out } => {
            let entries = runner::sweep(&pattern, &out)?;
            let mut worst = Status::Pass;
            for e in &entries {
                println!("[{}] {}: {}", e.status.code(), e.path.display(), e.message);
                worst = worst.max(e.status);
            }
            Ok(worst)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let status = match execute(cli.command) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            e.status()
        }
    };
    ExitCode::from(status.code() as u8)
}
