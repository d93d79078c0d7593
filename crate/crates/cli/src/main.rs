//! `nvccd`: runs NV-centre CCD simulations from figure presets, JSON configs
//! or a previous run's manifest.

mod config;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use nvccd::{Backend, DriveOrder, Figure, Mode};

use crate::config::{resolve, Destinations, FileConfig, Overrides};
use crate::run::{run_and_write, Manifest};

#[derive(Debug, Parser)]
#[command(name = "nvccd", version, about = "Three-level NV spin under concatenated continuous decoupling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Closed-system populations from the ground state.
    Evolve(RunArgs),
    /// Open-system purity and entropy.
    Lindblad(RunArgs),
    /// Noise-averaged purity and entropy with standard errors.
    Ensemble(RunArgs),
    /// Two-level protection checks; exits with status 2 if either fails.
    #[command(name = "oracle-2lvl")]
    Oracle(RunArgs),
    /// Mode taken from the config file or the figure preset.
    Run(RunArgs),
    /// Re-runs the configuration stored in a manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    /// JSON configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Start from a figure's parameter set (fig2..fig8).
    #[arg(long, value_parser = parse_with::<Figure>)]
    figure: Option<Figure>,
    /// Drive order(s): none, constant, 1, 2, 3. Replaces the preset sweep.
    #[arg(long, value_delimiter = ',', value_parser = parse_with::<DriveOrder>)]
    order: Vec<DriveOrder>,
    /// Relaxation rate(s). Several values give a sweep.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    gamma: Vec<f64>,
    /// Detuning of both excited levels.
    #[arg(long, allow_negative_numbers = true)]
    delta_plus: Option<f64>,
    /// Closed-system integrator.
    #[arg(long, value_parser = parse_with::<Backend>)]
    backend: Option<Backend>,
    /// Average density matrices before computing purity and entropy.
    #[arg(long)]
    average_rho_first: bool,
    /// Noise realizations per curve.
    #[arg(long)]
    realizations: Option<usize>,
    /// Master seed for all noise streams.
    #[arg(long)]
    seed: Option<u64>,
    /// Final time, in units of 1/omega_0.
    #[arg(long, allow_negative_numbers = true)]
    t_max: Option<f64>,
    /// Integrator step.
    #[arg(long, allow_negative_numbers = true)]
    dt: Option<f64>,
    /// Write every n-th step.
    #[arg(long)]
    sample_every: Option<usize>,
    #[command(flatten)]
    dest: DestArgs,
}

#[derive(Debug, Args)]
struct DestArgs {
    /// CSV destination (stdout if omitted). The manifest goes next to it.
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Per-realization noise samples as CSV.
    #[arg(long)]
    noise_traces: Option<PathBuf>,
    /// Worker threads for ensembles.
    #[arg(long, env = "NVCCD_WORKERS")]
    workers: Option<usize>,
}

#[derive(Debug, Args)]
struct ReplayArgs {
    manifest: PathBuf,
    #[command(flatten)]
    dest: DestArgs,
}

fn parse_with<T>(s: &str) -> Result<T, String>
where
    T: std::str::FromStr,
    T::Err: std::fmt::Display,
{
    s.parse().map_err(|e: T::Err| e.to_string())
}

impl RunArgs {
    fn overrides(self, mode: Option<Mode>) -> (Option<PathBuf>, Overrides) {
        let o = Overrides {
            mode,
            figure: self.figure,
            orders: self.order,
            gammas: self.gamma,
            delta_plus: self.delta_plus,
            backend: self.backend,
            average_rho_first: self.average_rho_first,
            realizations: self.realizations,
            master_seed: self.seed,
            t_max: self.t_max,
            dt: self.dt,
            sample_every: self.sample_every,
            output: self.dest.output,
            noise_traces: self.dest.noise_traces,
            workers: self.dest.workers,
        };
        (self.config, o)
    }
}

fn simulate(args: RunArgs, mode: Option<Mode>) -> anyhow::Result<bool> {
    let (path, flags) = args.overrides(mode);
    let file = match path {
        Some(p) => FileConfig::load(&p)?,
        None => FileConfig::default(),
    };
    let (cfg, dest) = resolve(file, flags)?;
    run_and_write(&cfg, &dest)
}

fn replay(args: ReplayArgs) -> anyhow::Result<bool> {
    let manifest = Manifest::load(&args.manifest)?;
    let dest =
        Destinations { output: args.dest.output, noise_traces: args.dest.noise_traces, workers: args.dest.workers };
    run_and_write(&manifest.config, &dest).with_context(|| format!("replaying {}", args.manifest.display()))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Evolve(a) => simulate(a, Some(Mode::Evolve)),
        Command::Lindblad(a) => simulate(a, Some(Mode::Lindblad)),
        Command::Ensemble(a) => simulate(a, Some(Mode::Ensemble)),
        Command::Oracle(a) => simulate(a, Some(Mode::TwoLevelOracle)),
        Command::Run(a) => simulate(a, None),
        Command::Replay(a) => replay(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
