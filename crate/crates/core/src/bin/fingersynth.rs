use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use fingersynth::config::{RunConfig, Task};
use fingersynth::run::{run, Overrides};
use fingersynth::Error;

/// Fingerprint patch synthesis, translation and evaluation.
#[derive(Debug, Parser)]
#[command(name = "fingersynth", version)]
struct Cli {
    /// Task to run.
    #[arg(value_enum)]
    task: Task,
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides FINGERSYNTH_OUT and the config.
    #[arg(long, env = "FINGERSYNTH_OUT")]
    out: Option<PathBuf>,
}

const EXIT_CONFIG: u8 = 1;
const EXIT_RUNTIME: u8 = 2;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprint!("{e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let cfg = match RunConfig::load(&cli.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let over = Overrides { seed: cli.seed, out_dir: cli.out };
    match run(cli.task, &cfg, &over) {
        Ok(dir) => {
            println!("{}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e @ Error::Config(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}
