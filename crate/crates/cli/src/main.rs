use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use mmwave_noma_cli::{load_config, run_named, Command, RunOptions, ScenarioConfig};

/// Beam-domain NOMA experiments; every command writes CSV files.
#[derive(Parser, Debug)]
#[command(name = "mmnoma", version)]
struct Args {
    /// sweep-snr | sweep-beta | sweep-gain | pairing-demo | hybrid-demo | design-beam
    command: Command,

    /// JSON scenario; a built-in scenario for the command when omitted.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Output directory, created if missing.
    #[arg(long, default_value = ".")]
    out: PathBuf,

    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,

    /// Drop inter-chain interference in hybrid mode 1.
    #[arg(long)]
    ignore_mui: bool,

    /// Points in the emitted beam pattern.
    #[arg(long)]
    grid: Option<usize>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let cfg = match &args.config {
        Some(path) => load_config(path),
        None => Ok(ScenarioConfig::preset(args.command)),
    };
    let opts = RunOptions { seed: args.seed, ignore_mui: args.ignore_mui, grid: args.grid };
    match cfg.and_then(|cfg| run_named(args.command, &cfg, &args.out, &opts)) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("mmnoma: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
