//! Experiment files, presets and SNR grids.
//!
//! An experiment is a TOML document with four sections:
//!
//! ```toml
//! [channel]   # channel model parameters
//! [system]    # link parameters
//! [pulse]     # `file = "pulse.csv"` or a `[pulse.design]` table
//! [run]       # mode, SNR grid, seed, sweeps and stop rule
//! ```
//!
//! Every field is optional; missing fields keep their defaults. Precedence, lowest
//! first: built-in defaults, preset, config file, command-line flags.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use uwblab::analytic::SystemConfig;
use uwblab::channel::ChannelParams;
use uwblab::montecarlo::{SimOptions, StopRule};
use uwblab::pulse::PulseDesign;

use crate::manifest::Manifest;
use crate::Usage;

/// What `analyze` and `simulate` produce.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Closed-form BER curves.
    Analytic,
    /// Monte Carlo BER only.
    Montecarlo,
    /// Monte Carlo with the analytic curve alongside.
    Both,
    /// Interference table over rates and user counts.
    Table,
}

/// Where the pulse comes from.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PulseSource {
    /// `t_ns,amplitude` CSV; overrides `design` when set.
    pub file: Option<PathBuf>,
    pub design: PulseDesign,
}

/// Run-level settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    /// E_p/N₀ grid in dB as `lo:step:hi`.
    pub snr: String,
    /// Mandatory for Monte Carlo runs.
    pub seed: Option<u64>,
    /// Data rates to sweep (Mbps); empty means `system.data_rate_mbps`.
    pub rates: Vec<f64>,
    /// User counts to sweep; empty means `system.users`.
    pub users: Vec<usize>,
    /// Realizations written by `generate-channel`.
    pub realizations: usize,
    pub min_errors: u64,
    pub max_bits: u64,
    pub block_bits: u64,
    pub batch_blocks: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let so = SimOptions::default();
        RunConfig {
            mode: Mode::Analytic,
            snr: "0:2:30".into(),
            seed: None,
            rates: Vec::new(),
            users: Vec::new(),
            realizations: 1,
            min_errors: so.stop.min_errors,
            max_bits: so.stop.max_bits,
            block_bits: so.block_bits,
            batch_blocks: so.batch_blocks,
        }
    }
}

impl RunConfig {
    pub fn sim_options(&self) -> SimOptions {
        SimOptions {
            stop: StopRule { min_errors: self.min_errors, max_bits: self.max_bits },
            block_bits: self.block_bits,
            batch_blocks: self.batch_blocks,
        }
    }
}

/// A complete, resolved experiment.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Experiment {
    pub channel: ChannelParams,
    pub system: SystemConfig,
    pub pulse: PulseSource,
    pub run: RunConfig,
}

/// Names accepted by `--preset`.
pub const PRESETS: [&str; 4] = ["table1", "table2", "table3", "fig3"];

/// Built-in recipes: interference tables at three rates and a BER sweep at two rates.
pub fn preset(name: &str) -> Result<Experiment> {
    let table = |rate: f64| {
        let mut e = Experiment::default();
        e.system.data_rate_mbps = rate;
        e.run.mode = Mode::Table;
        e.run.rates = vec![rate];
        e.run.users = vec![1, 8, 16];
        e
    };
    Ok(match name {
        "table1" => table(27.24),
        "table2" => table(6.81),
        "table3" => table(0.11),
        "fig3" => {
            let mut e = Experiment::default();
            e.system.data_rate_mbps = 6.81;
            e.run.mode = Mode::Both;
            e.run.rates = vec![6.81, 0.11];
            e.run.users = vec![1];
            e.run.snr = "0:2:20".into();
            // Fixed bit budget per point: the error target is never the binding limit.
            e.run.min_errors = 1_000_000_000;
            e.run.max_bits = 1_000_000;
            e
        }
        other => return Err(Usage::new(format!("unknown preset `{other}`; expected one of {}", PRESETS.join(", "))).into()),
    })
}

/// Apply the fields set in a TOML document on top of `base`.
///
/// Each section is overlaid field by field, so a file that sets only `run.seed` keeps
/// everything else from the preset.
pub fn overlay(base: &Experiment, text: &str) -> Result<Experiment> {
    let mut doc = toml::Table::try_from(base).context("serializing base experiment")?;
    let patch: toml::Table = text.parse().map_err(|e| Usage::new(format!("config: {e}")))?;
    merge(&mut doc, patch);
    let e: Experiment = toml::Value::Table(doc).try_into().map_err(|e| Usage::new(format!("config: {e}")))?;
    Ok(e)
}

fn merge(into: &mut toml::Table, patch: toml::Table) {
    for (k, v) in patch {
        match (into.get_mut(&k), v) {
            (Some(toml::Value::Table(a)), toml::Value::Table(b)) => merge(a, b),
            (_, v) => {
                into.insert(k, v);
            }
        }
    }
}

/// Read `path` on top of `base`. A `.json` file is taken to be a run manifest and its
/// configuration snapshot replaces `base` entirely.
pub fn load(base: &Experiment, path: &Path) -> Result<Experiment> {
    let text = std::fs::read_to_string(path).map_err(|e| Usage::new(format!("cannot read {}: {e}", path.display())))?;
    if path.extension().is_some_and(|x| x == "json") {
        let m: Manifest = serde_json::from_str(&text).map_err(|e| Usage::new(format!("manifest {}: {e}", path.display())))?;
        return Ok(m.config);
    }
    overlay(base, &text)
}

/// Parse `lo:step:hi` (dB) into an inclusive grid.
pub fn parse_snr_grid(s: &str) -> Result<Vec<f64>> {
    let bad = || Usage::new(format!("snr grid `{s}`: expected lo:step:hi with step > 0 and hi >= lo"));
    let parts: Vec<f64> = s.split(':').map(|p| p.trim().parse::<f64>()).collect::<Result<_, _>>().map_err(|_| bad())?;
    let [lo, step, hi] = parts[..] else { return Err(bad().into()) };
    if !(lo.is_finite() && hi.is_finite() && step > 0.0 && hi >= lo) {
        return Err(bad().into());
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    if n > 10_000 {
        return Err(Usage::new(format!("snr grid `{s}` has {n} points")).into());
    }
    Ok((0..n).map(|i| lo + i as f64 * step).collect())
}

/// The (rate, users) pairs a run sweeps over.
pub fn sweep(e: &Experiment) -> Vec<SystemConfig> {
    let rates = if e.run.rates.is_empty() { vec![e.system.data_rate_mbps] } else { e.run.rates.clone() };
    let users = if e.run.users.is_empty() { vec![e.system.users] } else { e.run.users.clone() };
    rates.iter().flat_map(|&r| users.iter().map(move |&u| SystemConfig { data_rate_mbps: r, users: u, ..e.system.clone() })).collect()
}
