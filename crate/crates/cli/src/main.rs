use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ifenn::config::Mode;
use ifenn::Error;

mod commands;
mod compare;

#[derive(Parser)]
#[command(name = "ifenn", version, about = "Coupled thermoelastic FEM and network-driven displacement solves")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monolithic coupled solve.
    Fem(RunArgs),
    /// Coupled solve followed by surrogate training.
    Train(RunArgs),
    /// Displacement-only solve driven by a trained surrogate.
    Ifenn(RunArgs),
    /// Loss surface around a trained surrogate.
    Landscape(RunArgs),
    /// Error report between two run directories.
    Compare(CompareArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides `output_dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Replaces every seed in the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct CompareArgs {
    /// Directory holding the fields under test.
    run_a: PathBuf,
    /// Directory holding the reference fields.
    run_b: PathBuf,
    #[arg(long, default_value = "compare")]
    out: PathBuf,
}

fn threads() -> Result<(), Error> {
    let Ok(v) = std::env::var("IFENN_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Config(format!("IFENN_THREADS must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(e.to_string()))
}

fn run(cli: Cli) -> Result<(), Error> {
    threads()?;
    match cli.command {
        Command::Fem(a) => commands::run(Mode::Fem, &a.config, a.out, a.seed),
        Command::Train(a) => commands::run(Mode::Train, &a.config, a.out, a.seed),
        Command::Ifenn(a) => commands::run(Mode::Ifenn, &a.config, a.out, a.seed),
        Command::Landscape(a) => commands::run(Mode::Landscape, &a.config, a.out, a.seed),
        Command::Compare(a) => compare::run(&a.run_a, &a.run_b, &a.out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let report = serde_json::json!({"error": {"kind": e.kind(), "message": e.to_string()}});
            eprintln!("{report}");
            ExitCode::FAILURE
        }
    }
}
