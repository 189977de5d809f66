use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use deepo_cli::config::ExperimentConfig;
use deepo_cli::{acceptance, experiment, report, CliError};

#[derive(Parser)]
#[command(
    name = "deepo",
    version,
    about = "Data-driven tracking control experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment file (TOML); built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for CSV artifacts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Monte Carlo runs.
    #[arg(long, global = true)]
    runs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Offline policy optimization on pre-collected data.
    Offline,
    /// Online adaptation on the closed loop.
    Online,
    /// Print the Riccati gains of the configured systems.
    Oracle,
    /// Run the acceptance suite.
    Check,
}

fn load(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::parse("")?,
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(runs) = cli.runs {
        cfg.runs = runs;
    }
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<bool, CliError> {
    let cfg = load(cli)?;
    match cli.command {
        Command::Offline | Command::Online => {
            let art = if matches!(cli.command, Command::Offline) {
                experiment::run_offline_experiment(&cfg, &cfg.out)?
            } else {
                experiment::run_online_experiment(&cfg, &cfg.out)?
            };
            print!("{}", report::write_summary(&art)?);
            Ok(art.passed())
        }
        Command::Oracle => {
            print!("{}", experiment::oracle_report(&cfg)?);
            Ok(true)
        }
        Command::Check => {
            let outcomes = acceptance::run_suite(cfg.seed, cfg.runs, &mut |o| {
                println!("{}", o.render_line());
            });
            Ok(acceptance::gate_passed(&outcomes))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
