use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use wkb_cli::{describe, load, prepare, run, Failure};

/// Thread-count override for the parallel sweeps.
const THREADS_VAR: &str = "WKB_THREADS";

#[derive(Parser)]
#[command(name = "wkblab", version, about = "Semiclassical NLS experiments from TOML configs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run { config: PathBuf },
    /// Check a config file without computing anything.
    Validate { config: PathBuf },
    /// Print the version.
    Version,
}

fn init_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| Failure::Config(anyhow::anyhow!("{THREADS_VAR} must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Runtime(e.into()))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Version => {
            println!("wkblab {}", env!("CARGO_PKG_VERSION"));
            Ok(())
        }
        Command::Validate { config } => {
            init_threads().and_then(|_| load(&config)).and_then(|cfg| {
                let plan = prepare(&cfg)?;
                print!("{}", describe(&cfg, &plan));
                Ok(())
            })
        }
        Command::Run { config } => init_threads().and_then(|_| load(&config)).and_then(|cfg| {
            run(&cfg)?;
            println!("wrote {}", cfg.output.dir.display());
            Ok(())
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("wkblab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
