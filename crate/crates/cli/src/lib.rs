//! Command-line front end: loads a run configuration, runs simulations and
//! sweeps, and writes CSV files for plotting.

pub mod config;
pub mod output;

use std::ffi::OsString;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use vcrw_core::analysis::{slope_sweep, stick_diagram};
use vcrw_core::{default_initial_state, simulate, Outcome, Trajectory, VcrwError};

use crate::config::{ConfigError, RunConfig};

pub const EXIT_OK: u8 = 0;
pub const EXIT_CONFIG: u8 = 1;
pub const EXIT_FAILURE: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "vcrw", version, about = "Simulate viscoelastically-combined rimless wheels")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Override a config value, e.g. `--set phi=0.12` or `--set model.variant=VCRW2`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Output directory (overrides `output.dir`).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one simulation and write the time series and event log.
    Simulate(Common),
    /// Run the slope × offset grid and write `sweep.csv`.
    Sweep(Common),
    /// Run one simulation and write stick-figure frames to `stick.csv`.
    Stick {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0.0)]
        t0: f64,
        /// Defaults to the end of the run.
        #[arg(long)]
        t1: Option<f64>,
        /// Keep every n-th recorded sample.
        #[arg(long, default_value_t = 50)]
        stride: usize,
    },
}

#[derive(Debug)]
enum CliError {
    Config(ConfigError),
    Io(String),
    Failure(String),
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

fn config_error(e: VcrwError) -> CliError {
    CliError::Config(ConfigError {
        line: None,
        message: e.to_string(),
    })
}

struct Loaded {
    config: RunConfig,
    dir: PathBuf,
}

fn load(common: &Common) -> Result<Loaded, CliError> {
    let config = RunConfig::load(&common.config, &common.overrides)?;
    let dir = common.out.clone().unwrap_or_else(|| config.output.dir.clone());
    Ok(Loaded { config, dir })
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let path = dir.join(name);
    File::create(&path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn run_simulation(config: &RunConfig) -> Result<Trajectory, CliError> {
    let params = config.params()?;
    let sim = config.sim_config()?;
    let (state, mode) = default_initial_state(&params, &config.initial_conditions()).map_err(config_error)?;
    simulate(&params, &state, mode, &sim).map_err(|e| CliError::Failure(e.to_string()))
}

fn check_outcome(traj: &Trajectory) -> Result<(), CliError> {
    match &traj.outcome {
        Outcome::Completed => Ok(()),
        Outcome::Failed { reason, time } => Err(CliError::Failure(format!("walker failed at t = {time:.6} s: {reason}"))),
    }
}

fn cmd_simulate(common: &Common) -> Result<(), CliError> {
    let Loaded { config, dir } = load(common)?;
    let params = config.params()?;
    let traj = run_simulation(&config)?;
    let prefix = &config.output.prefix;
    output::write_timeseries(create(&dir, &format!("{prefix}_timeseries.csv"))?, &traj, &params)?;
    output::write_events(create(&dir, &format!("{prefix}_events.csv"))?, &traj)?;
    check_outcome(&traj)
}

fn cmd_sweep(common: &Common) -> Result<(), CliError> {
    let Loaded { config, dir } = load(common)?;
    let template = config.params()?;
    let sweep = config.sweep_config()?;
    let table = slope_sweep(&template, &config.sweep.phis(), &config.sweep.b_list, &sweep)
        .map_err(|e| CliError::Failure(e.to_string()))?;
    output::write_sweep(create(&dir, "sweep.csv")?, &table)?;
    Ok(())
}

fn cmd_stick(common: &Common, t0: f64, t1: Option<f64>, stride: usize) -> Result<(), CliError> {
    let Loaded { config, dir } = load(common)?;
    let params = config.params()?;
    let t1 = t1.unwrap_or(config.sim.duration);
    if !(t0 <= t1) || stride == 0 {
        return Err(CliError::Config(ConfigError {
            line: None,
            message: format!("bad frame range [{t0}, {t1}] with stride {stride}"),
        }));
    }
    let traj = run_simulation(&config)?;
    let frames = stick_diagram(&traj, &params, t0, t1, stride).map_err(config_error)?;
    output::write_stick(create(&dir, "stick.csv")?, &frames)?;
    check_outcome(&traj)
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let result = match &cli.command {
        Command::Simulate(c) => cmd_simulate(c),
        Command::Sweep(c) => cmd_sweep(c),
        Command::Stick { common, t0, t1, stride } => cmd_stick(common, *t0, *t1, *stride),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(CliError::Config(e)) => {
            eprintln!("config error: {e}");
            EXIT_CONFIG
        }
        Err(CliError::Io(e)) => {
            eprintln!("output error: {e}");
            EXIT_CONFIG
        }
        Err(CliError::Failure(e)) => {
            eprintln!("simulation failure: {e}");
            EXIT_FAILURE
        }
    }
}
