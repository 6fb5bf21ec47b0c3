//! `pnp-sgs`: degrade images, run split Gibbs chains, evaluate and inspect
//! diffusion schedules.

mod commands;
mod config;
mod files;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pnp_sgs::{Schedule, ScheduleKind};
use thiserror::Error;

use crate::config::RunConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("I/O error: {0}")]
    Io(String),
    #[error("sampler error: {0}")]
    Sampler(String),
    #[error("protocol error: {0}")]
    Protocol(String),
}

impl CliError {
    pub fn from_core(e: pnp_sgs::Error) -> Self {
        if e.is_protocol() {
            return CliError::Protocol(e.to_string());
        }
        match e.root() {
            pnp_sgs::Error::Io(_) | pnp_sgs::Error::Npy(_) => CliError::Io(e.to_string()),
            _ => CliError::Sampler(e.to_string()),
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Sampler(_) => 4,
            CliError::Protocol(_) => 5,
        }
    }
}

#[derive(Parser)]
#[command(name = "pnp-sgs", version, about = "Plug-and-play split Gibbs sampling for imaging inverse problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a measurement from the clean input image.
    Degrade(Common),
    /// Sample the posterior and write the chain and its summaries.
    Run {
        #[command(flatten)]
        common: Common,
        /// Independent chains, seeded `seed, seed + 1, ...`.
        #[arg(long, default_value_t = 1)]
        chains: usize,
    },
    /// Score estimates against references with PSNR and SSIM.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        reference: Vec<PathBuf>,
        #[arg(long)]
        estimate: Vec<PathBuf>,
    },
    /// Print a diffusion schedule table or invert a noise variance.
    Schedule(ScheduleArgs),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Overrides `sampler.seed`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Linear,
    Cosine,
}

#[derive(Args)]
struct ScheduleArgs {
    /// Take the schedule block from a run config instead of the flags below.
    #[arg(long, conflicts_with_all = ["kind", "steps", "beta_start", "beta_end", "offset"])]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    kind: Option<Kind>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    beta_start: Option<f64>,
    #[arg(long)]
    beta_end: Option<f64>,
    #[arg(long)]
    offset: Option<f64>,
    /// Write the table here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print the step whose noise variance is closest to this value.
    #[arg(long)]
    invert: Option<f64>,
}

fn schedule_cmd(args: ScheduleArgs) -> Result<(), CliError> {
    let kind = match &args.config {
        Some(path) => RunConfig::load(path, None)?.0.schedule,
        None => {
            let steps = args.steps.unwrap_or(1000);
            match args.kind.unwrap_or(Kind::Linear) {
                Kind::Linear => ScheduleKind::Linear {
                    steps,
                    beta_start: args.beta_start.unwrap_or(1e-4),
                    beta_end: args.beta_end.unwrap_or(2e-2),
                },
                Kind::Cosine => ScheduleKind::Cosine {
                    steps,
                    offset: args.offset.unwrap_or(0.008),
                },
            }
        }
    };
    let schedule: Schedule = kind.build().map_err(|e| CliError::Config(e.to_string()))?;
    if let Some(sigma2) = args.invert {
        if !(sigma2 >= 0.0 && sigma2.is_finite()) {
            return Err(CliError::Config(format!("--invert needs a non-negative variance, got {sigma2}")));
        }
        println!("{}", schedule.invert_noise_variance(sigma2));
        return Ok(());
    }
    let table = commands::schedule_table(&schedule);
    match args.out {
        Some(path) => fs::write(&path, table).map_err(|e| CliError::Io(format!("{}: {e}", path.display()))),
        None => {
            print!("{table}");
            Ok(())
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Degrade(c) => {
            let (cfg, _) = RunConfig::load(&c.config, c.seed)?;
            commands::degrade_cmd(&cfg)
        }
        Command::Run { common, chains } => {
            let (cfg, value) = RunConfig::load(&common.config, common.seed)?;
            commands::run_cmd(&cfg, &value, chains)
        }
        Command::Eval {
            common,
            reference,
            estimate,
        } => {
            let (cfg, value) = RunConfig::load(&common.config, common.seed)?;
            commands::eval_cmd(&cfg, &value, reference, estimate)
        }
        Command::Schedule(args) => schedule_cmd(args),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("PNP_SGS_LOG", "warn")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("pnp-sgs: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
