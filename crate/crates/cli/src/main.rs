//! `uwblab`: command-line front end for the IR-UWB link toolkit.
//!
//! Exit codes: 0 success, 1 runtime or convergence failure, 2 usage or validation error.

mod commands;
mod config;
mod manifest;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use uwblab::pulse::Band;

use crate::config::Experiment;
use crate::manifest::Manifest;

/// A usage or validation problem (exit code 2).
#[derive(Debug)]
pub struct Usage(String);

impl Usage {
    pub fn new(msg: impl Into<String>) -> Self {
        Usage(msg.into())
    }
}

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

#[derive(Parser, Debug)]
#[command(name = "uwblab", version, about = "IR-UWB channel, pulse, interference budget and link simulation")]
struct Cli {
    /// Experiment file (TOML), or a manifest.json to replay.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Built-in recipe: table1, table2, table3 or fig3.
    #[arg(long, global = true, value_name = "NAME")]
    preset: Option<String>,
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Worker thread cap for the simulator.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    /// E_p/N₀ grid in dB, `lo:step:hi`.
    #[arg(long, global = true, value_name = "LO:STEP:HI", allow_hyphen_values = true)]
    snr: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw channel realizations and write them with a summary.
    GenerateChannel {
        /// Number of realizations (overrides run.realizations).
        #[arg(long)]
        count: Option<usize>,
    },
    /// Synthesize a mask-compliant pulse and report its spectrum.
    DesignPulse {
        #[arg(long, value_enum)]
        band: Option<BandArg>,
    },
    /// Closed-form interference budget and BER.
    Analyze,
    /// Monte Carlo BER (requires a seed).
    Simulate,
    /// Print the resolved configuration as TOML.
    Defaults,
}

#[derive(clap::ValueEnum, Clone, Copy, Debug)]
enum BandArg {
    Lower,
    Upper,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::GenerateChannel { .. } => "generate-channel",
            Command::DesignPulse { .. } => "design-pulse",
            Command::Analyze => "analyze",
            Command::Simulate => "simulate",
            Command::Defaults => "defaults",
        }
    }
}

fn resolve(cli: &Cli) -> Result<Experiment> {
    let mut e = match &cli.preset {
        Some(name) => config::preset(name)?,
        None => Experiment::default(),
    };
    if let Some(path) = &cli.config {
        e = config::load(&e, path)?;
    }
    if let Some(seed) = cli.seed {
        e.run.seed = Some(seed);
    }
    if let Some(snr) = &cli.snr {
        e.run.snr = snr.clone();
    }
    match &cli.command {
        Command::GenerateChannel { count: Some(n) } => e.run.realizations = *n,
        Command::DesignPulse { band: Some(b) } => {
            e.pulse.design.band = match b {
                BandArg::Lower => Band::Lower,
                BandArg::Upper => Band::Upper,
            }
        }
        _ => {}
    }
    config::parse_snr_grid(&e.run.snr)?;
    e.channel.validate()?;
    e.system.validate()?;
    Ok(e)
}

fn run(cli: Cli) -> Result<()> {
    let e = resolve(&cli)?;
    if let Command::Defaults = cli.command {
        print!("{}", toml::to_string(&e).context("serializing configuration")?);
        return Ok(());
    }
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Usage::new("--threads must be >= 1").into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring thread pool")?;
    }
    std::fs::create_dir_all(&cli.out).with_context(|| format!("creating {}", cli.out.display()))?;
    let started_unix = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let start = Instant::now();
    let files = match &cli.command {
        Command::GenerateChannel { .. } => commands::generate_channel(&e, &cli.out)?,
        Command::DesignPulse { .. } => commands::design_pulse(&e, &cli.out)?,
        Command::Analyze => commands::analyze(&e, &cli.out)?,
        Command::Simulate => commands::simulate(&e, &cli.out)?,
        Command::Defaults => unreachable!(),
    };
    let m = Manifest {
        tool: "uwblab".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: cli.command.name().into(),
        preset: cli.preset.clone(),
        seed: e.run.seed,
        threads: cli.threads,
        started_unix,
        wall_seconds: start.elapsed().as_secs_f64(),
        outputs: manifest::digests(&cli.out, &files)?,
        config: e,
    };
    let path = m.write(&cli.out)?;
    println!("manifest: {}", path.display());
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<Usage>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<uwblab::Error>() {
            return match e {
                uwblab::Error::InvalidParam { .. } | uwblab::Error::Parse { .. } => 2,
                _ => 1,
            };
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).format_timestamp(None).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
