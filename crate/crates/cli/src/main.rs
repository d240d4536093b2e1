//! `mdd`: runs decoupling, sensing and robustness experiments and writes
//! CSV data, SVG plots and a reproducibility manifest per run.

mod config;
mod error;
mod manifest;
mod run;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Args, Parser, Subcommand};

use config::{
    load, DephasingConfig, HeatmapConfig, Mode, Protocol, SensingConfig, StorageConfig,
    TrajectoryConfig, ValidateNoiseConfig,
};
use error::{config_err, CliResult};
use run::Sink;

#[derive(Args)]
struct IoArgs {
    /// JSON config (or a manifest from an earlier run); flags override its keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out", global = true)]
    out: PathBuf,
    /// Write SVG plots next to the data.
    #[arg(long, action = ArgAction::Set, default_value_t = true, global = true)]
    svg: bool,
    /// Worker threads for ensemble runs (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Free evolution under magnetic noise; reports T2*.
    Dephasing(DephasingConfig),
    /// Storage fidelity of cdd, ccdd, ccdd-ideal2 or mdd; reports T2.
    Storage(StorageConfig),
    /// AC-field sensing, pulsed or continuous; fits the population oscillation.
    Sensing(SensingConfig),
    /// Static-error fidelity map of cp4, ur4, cp10 or ur10.
    Heatmap(HeatmapConfig),
    /// Bloch-vector paths of CP and UR4 pulse trains with static errors.
    Trajectory(TrajectoryConfig),
    /// Checks variance and correlation of the generated noise processes.
    ValidateNoise(ValidateNoiseConfig),
}

#[derive(Parser)]
#[command(name = "mdd", version, about = "Mixed dynamical decoupling experiments")]
struct Cli {
    #[command(flatten)]
    io: IoArgs,
    #[command(subcommand)]
    command: Command,
}

fn execute(cli: Cli) -> CliResult<()> {
    let sink = Sink {
        dir: &cli.io.out,
        svg: cli.io.svg,
        threads: cli.io.threads,
    };
    if sink.threads == Some(0) {
        return Err(config_err("--threads must be >= 1"));
    }
    let file = cli.io.config.as_deref();
    match cli.command {
        Command::Dephasing(flags) => {
            let cfg = flags.or(load(file)?).or(DephasingConfig::defaults());
            run::dephasing(cfg, &sink)
        }
        Command::Storage(flags) => {
            let from_file: StorageConfig = load(file)?;
            let protocol = flags.protocol.or(from_file.protocol).unwrap_or(Protocol::Ccdd);
            let cfg = flags.or(from_file).or(StorageConfig::defaults(protocol));
            run::storage(cfg, &sink)
        }
        Command::Sensing(flags) => {
            let from_file: SensingConfig = load(file)?;
            let mode = flags.mode.or(from_file.mode).unwrap_or(Mode::Pulsed);
            let cfg = flags.or(from_file).or(SensingConfig::defaults(mode));
            run::sensing(cfg, &sink)
        }
        Command::Heatmap(flags) => {
            let cfg = flags.or(load(file)?).or(HeatmapConfig::defaults());
            run::heatmap_cmd(cfg, &sink)
        }
        Command::Trajectory(flags) => {
            let cfg = flags.or(load(file)?).or(TrajectoryConfig::defaults());
            run::trajectory(cfg, &sink)
        }
        Command::ValidateNoise(flags) => {
            let cfg = flags.or(load(file)?).or(ValidateNoiseConfig::defaults());
            run::validate_noise(cfg, &sink)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
