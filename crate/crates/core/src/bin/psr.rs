use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use psr::run::{self, Command, RunRequest};

/// Static soliton profiles of paired super-radiance in two-level targets.
#[derive(Debug, Parser)]
#[command(name = "psr", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Scale units and dimensionless parameters of a target.
    Units {
        #[command(flatten)]
        common: Common,
        /// Medium preset (an alias for --scenario).
        #[arg(long)]
        preset: Option<String>,
        /// Number density in cm^-3.
        #[arg(long)]
        n: Option<f64>,
    },
    /// Steady-state Bloch vector over a grid of field intensities.
    BlochScan(Common),
    /// Integrate a static profile and segment it into solitons.
    Profile(Common),
    /// Bound states of the finite-target well.
    Eigen(Common),
    /// Run a scenario over its sweep axes.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Worker cap; defaults to PSR_THREADS or the number of cores.
        #[arg(long)]
        threads: Option<usize>,
    },
}

#[derive(Debug, Args)]
struct Common {
    /// Configuration file with [scenario.NAME] tables.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Scenario name; built-in presets are always available.
    #[arg(long)]
    scenario: Option<String>,
    /// KEY=VALUE setting applied after the scenario; repeatable, last wins.
    #[arg(long = "override", value_name = "K=V")]
    overrides: Vec<String>,
    /// Output directory.
    #[arg(long, default_value = "psr-out")]
    out: PathBuf,
}

fn request(command: Command, c: Common) -> RunRequest {
    RunRequest { command, config: c.config, scenario: c.scenario, overrides: c.overrides, out: c.out, threads: None }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let req = match cli.command {
        Cmd::Units { common, preset, n } => {
            let mut r = request(Command::Units, common);
            if preset.is_some() {
                if r.scenario.is_some() {
                    eprintln!("error: --preset and --scenario are mutually exclusive");
                    return ExitCode::from(1);
                }
                r.scenario = preset;
            }
            if let Some(n) = n {
                r.overrides.push(format!("medium.n={n:e}"));
            }
            r
        }
        Cmd::BlochScan(c) => request(Command::BlochScan, c),
        Cmd::Profile(c) => request(Command::Profile, c),
        Cmd::Eigen(c) => request(Command::Eigen, c),
        Cmd::Sweep { common, threads } => {
            let mut r = request(Command::Sweep, common);
            r.threads = threads;
            r
        }
    };
    match run::run(&req) {
        Ok(outcome) => {
            print!("{}", outcome.report);
            for f in &outcome.manifest.flags {
                eprintln!("warning: {f}");
            }
            if let Some(e) = &outcome.manifest.error {
                eprintln!("error: {e}");
            }
            println!("manifest: {}", outcome.out_dir.join("manifest.json").display());
            ExitCode::from(outcome.exit_code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
