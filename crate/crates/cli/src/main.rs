//! `drddp` command-line driver.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use drddp::Controller;

use crate::commands::Run;
use crate::config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("solver did not converge")]
    NotConverged,
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::NotConverged => 3,
            CliError::Numerical(_) => 4,
            CliError::Io(_) => 1,
        }
    }
}

impl From<drddp::Error> for CliError {
    fn from(e: drddp::Error) -> Self {
        use drddp::Error as E;
        match e {
            E::Config(_) | E::Dimension { .. } | E::Dataset(_) => CliError::Config(e.to_string()),
            E::Io(_) | E::Csv(_) => CliError::Io(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "drddp", version, about = "Distributionally robust DDP trajectory optimizer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long, short)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, short, default_value = "out")]
    out: PathBuf,
    /// Overrides the root seed of the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the controller of the config.
    #[arg(long)]
    controller: Option<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve once and write the trajectory and iteration log.
    Solve(Common),
    /// Pick the penalty weight minimizing the guaranteed-cost bound.
    Tune {
        #[command(flatten)]
        common: Common,
        /// Comma-separated penalty weights, overriding `tune.grid`.
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<f64>>,
    },
    /// Out-of-sample evaluation of one or several controllers.
    Eval(Common),
    /// Per-iteration timing over problem sizes.
    Bench {
        #[command(flatten)]
        common: Common,
        /// Comma-separated ascending sizes, overriding `bench.sizes`.
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<usize>>,
    },
}

fn prepare(common: &Common) -> Result<Run, CliError> {
    let (cfg, _) = RunConfig::load(&common.config)?;
    let seed = common.seed.unwrap_or(cfg.seed);
    let name = common.controller.clone().unwrap_or_else(|| cfg.controller.clone());
    let controller = cfg.controller_for(&name)?;
    let cfg = RunConfig { seed, controller: name, ..cfg };
    if cfg.threads > 0 {
        // Only fails when a global pool already exists, which is harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cfg.threads).build_global();
    }
    Ok(Run { cfg, out: common.out.clone(), seed, controller })
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Solve(c) => commands::solve(&prepare(&c)?),
        Command::Tune { common, grid } => commands::tune(&prepare(&common)?, grid),
        Command::Eval(c) => {
            let run = prepare(&c)?;
            let controllers: Vec<Controller> = match &c.controller {
                Some(_) => vec![run.controller],
                None => run.cfg.eval.controllers.iter().map(|n| run.cfg.controller_for(n)).collect::<Result<_, _>>()?,
            };
            commands::eval(&run, controllers)
        }
        Command::Bench { common, sizes } => commands::bench(&prepare(&common)?, sizes),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("DRDDP_LOG", "warn")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
