use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use feller_cli::{run_file, Overrides, Selection};
use feller_core::parallel::with_workers;

/// Strong-Feller diagnostics for Lévy-type processes.
#[derive(Parser)]
#[command(name = "feller", version)]
struct Cli {
    /// Root seed, replacing the one in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Paths per simulation, for every diagnostic.
    #[arg(long, global = true)]
    paths: Option<usize>,
    /// Time step, for every diagnostic.
    #[arg(long, global = true)]
    dt: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArg {
    /// Configuration file (TOML).
    config: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Run every diagnostic in the configuration.
    Run(ConfigArg),
    /// Only the `simulate` entries.
    Simulate(ConfigArg),
    /// Only the `exit-bounds` entries.
    ExitBounds {
        #[command(flatten)]
        cfg: ConfigArg,
        /// Also simulate exits and check them against the bounds.
        #[arg(long)]
        verify: bool,
    },
    /// Only the `tv-profile` entries.
    TvProfile(ConfigArg),
    /// Only the `ac-modulus` entries.
    AcModulus(ConfigArg),
    /// Only the `ultra` entries.
    Ultra(ConfigArg),
    /// Only the `harmonic` entries.
    Harmonic(ConfigArg),
    /// Only the `decay` entries.
    Decay(ConfigArg),
    /// Only the `resolvent` entries.
    Resolvent(ConfigArg),
    /// Only the `orlicz` entries.
    Orlicz(ConfigArg),
    /// Only the `symbol` entries.
    Symbol(ConfigArg),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let overrides = Overrides { seed: cli.seed, out: cli.out, paths: cli.paths, dt: cli.dt };
    let (path, selection) = match &cli.command {
        Command::Run(c) => (&c.config, Selection::default()),
        Command::ExitBounds { cfg, verify } => {
            (&cfg.config, Selection { kind: Some("exit-bounds"), force_verify: *verify })
        }
        Command::Simulate(c) => (&c.config, only("simulate")),
        Command::TvProfile(c) => (&c.config, only("tv-profile")),
        Command::AcModulus(c) => (&c.config, only("ac-modulus")),
        Command::Ultra(c) => (&c.config, only("ultra")),
        Command::Harmonic(c) => (&c.config, only("harmonic")),
        Command::Decay(c) => (&c.config, only("decay")),
        Command::Resolvent(c) => (&c.config, only("resolvent")),
        Command::Orlicz(c) => (&c.config, only("orlicz")),
        Command::Symbol(c) => (&c.config, only("symbol")),
    };
    let workers = match std::env::var("FELLER_WORKERS") {
        Ok(v) => match v.parse::<usize>() {
            Ok(n) if n > 0 => Some(n),
            _ => {
                eprintln!("error: FELLER_WORKERS must be a positive integer, got {v:?}");
                return ExitCode::from(2);
            }
        },
        Err(_) => None,
    };
    let go = || run_file(path, overrides, selection);
    let result = match workers {
        Some(n) => with_workers(n, go),
        None => go(),
    };
    match result {
        Ok(summary) => {
            for o in &summary.outcomes {
                let failed = o.checks.iter().filter(|c| !c.pass).count();
                println!("{:<28} {:<12} checks {}/{} passed", o.name, o.kind, o.checks.len() - failed, o.checks.len());
            }
            for f in &summary.failed_checks {
                eprintln!("check failed: {f}");
            }
            println!("artifacts in {}", summary.out_dir.display());
            ExitCode::from(summary.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn only(kind: &str) -> Selection<'_> {
    Selection { kind: Some(kind), force_verify: false }
}
