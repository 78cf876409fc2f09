use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use causal_roundtrip::experiments::{preset, run_experiment, ExperimentConfig, PRESET_NAMES};
use causal_roundtrip::Error;

const EXIT_VALIDATION: u8 = 1;
const EXIT_RUNTIME: u8 = 2;

#[derive(Parser)]
#[command(
    name = "causal-roundtrip",
    version,
    about = "Run seeded causal inference experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config.
    Run {
        config: PathBuf,
        /// Output directory; overrides the config's `output_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma-separated seeds; overrides the config's `seeds`.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
    },
    /// Print a named preset config as JSON.
    Preset {
        #[arg(value_parser = clap::builder::PossibleValuesParser::new(PRESET_NAMES))]
        name: String,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => EXIT_VALIDATION,
        _ => EXIT_RUNTIME,
    }
}

fn run(config: PathBuf, out: Option<PathBuf>, seeds: Option<Vec<u64>>) -> Result<(), Error> {
    let mut cfg = ExperimentConfig::load(&config)?;
    if let Some(s) = seeds {
        cfg.seeds = s;
    }
    if let Some(o) = out {
        cfg.output_dir = o;
    }
    cfg.validate()?;
    let report = run_experiment(&cfg)?;
    let files = report.write(&cfg.output_dir)?;
    for c in &report.checks {
        println!(
            "[{}] {}: {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        );
    }
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_VALIDATION)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Run { config, out, seeds } => run(config, out, seeds),
        Command::Preset { name } => preset(&name).and_then(|c| c.to_json()).map(|j| {
            // A closed pipe (e.g. `| head`) is not an error.
            let _ = writeln!(std::io::stdout(), "{j}");
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
