//! The five subcommands. Each writes its files under the output directory and returns
//! their paths relative to it.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use log::info;
use serde::Serialize;
use uwblab::analytic::{self, AnalyticOptions};
use uwblab::channel::{generate_realization, write_realization};
use uwblab::montecarlo::estimate_ber;
use uwblab::pulse::{self, autocorrelation, Pulse};

use crate::config::{parse_snr_grid, sweep, Experiment, Mode};
use crate::Usage;

/// PSD range written and checked (MHz).
const FMAX_MHZ: f64 = 25_000.0;
const RESOLUTION_MHZ: f64 = 10.0;

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    Ok(BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?))
}

fn e6(x: f64) -> String {
    format!("{x:.6e}")
}

/// The pulse a run uses: read from `pulse.file` or synthesized from `pulse.design`.
pub fn load_pulse(e: &Experiment) -> Result<Pulse> {
    match &e.pulse.file {
        Some(path) => {
            let f = File::open(path).map_err(|err| Usage::new(format!("cannot open pulse file {}: {err}", path.display())))?;
            Ok(pulse::read_pulse(BufReader::new(f))?.normalized())
        }
        None => {
            info!("synthesizing {:?}-band pulse", e.pulse.design.band);
            Ok(e.pulse.design.synthesize()?.pulse)
        }
    }
}

/// Write `run.realizations` channel files plus a per-realization summary.
pub fn generate_channel(e: &Experiment, out: &Path) -> Result<Vec<PathBuf>> {
    let seed = e.run.seed.unwrap_or(0);
    let n = e.run.realizations;
    if n == 0 {
        return Err(Usage::new("run.realizations must be >= 1").into());
    }
    let mut files = Vec::with_capacity(n + 1);
    let mut summary = create(out, "channels.csv")?;
    writeln!(summary, "index,seed,clusters,taps,total_energy,rms_delay_spread_ns,max_delay_ns")?;
    let (mut taps, mut rms, mut energy) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let s = seed.wrapping_add(i as u64);
        let r = generate_realization(&e.channel, s)?;
        let name = format!("channels/channel_{i:05}.csv");
        let mut w = create(out, &name)?;
        write_realization(&mut w, &r)?;
        w.flush()?;
        files.push(PathBuf::from(name));
        let max_delay = r.paths().last().map_or(0.0, |p| p.0);
        writeln!(
            summary,
            "{i},{s},{},{},{},{},{}",
            r.clusters.len(),
            r.taps.len(),
            e6(r.total_energy()),
            e6(r.rms_delay_spread()),
            e6(max_delay)
        )?;
        taps += r.taps.len() as f64;
        rms += r.rms_delay_spread();
        energy += r.total_energy();
    }
    summary.flush()?;
    files.push(PathBuf::from("channels.csv"));
    let k = n as f64;
    println!("realizations: {n}");
    println!("mean taps: {:.2}", taps / k);
    println!("mean rms delay spread: {:.6} ns", rms / k);
    println!("mean total energy: {:.6e}", energy / k);
    Ok(files)
}

#[derive(Serialize)]
struct MaskSummary {
    band: pulse::Band,
    passband_mhz: (f64, f64),
    compliant: bool,
    worst_margin_db: f64,
    worst_freq_mhz: f64,
    points: usize,
    in_band_fraction: f64,
    iterations: usize,
    rms_width_ns: f64,
}

/// Synthesize the pulse and write samples, PSD, autocorrelation and a compliance report.
pub fn design_pulse(e: &Experiment, out: &Path) -> Result<Vec<PathBuf>> {
    let d = &e.pulse.design;
    let s = d.synthesize()?;
    let p = &s.pulse;
    let r = autocorrelation(p);
    let spec = pulse::psd(p, pulse::nfft_for_resolution(p, RESOLUTION_MHZ))?;
    let report = pulse::check_mask(p, &d.mask(), FMAX_MHZ, RESOLUTION_MHZ)?;

    let mut w = create(out, "pulse.csv")?;
    pulse::write_pulse(&mut w, p)?;
    w.flush()?;
    let mut w = create(out, "psd.csv")?;
    pulse::write_psd(&mut w, &spec, FMAX_MHZ)?;
    w.flush()?;
    let mut w = create(out, "autocorrelation.csv")?;
    pulse::write_autocorrelation(&mut w, &r)?;
    w.flush()?;

    let m = MaskSummary {
        band: d.band,
        passband_mhz: d.band.edges(),
        compliant: report.compliant,
        worst_margin_db: report.worst_violation_db,
        worst_freq_mhz: report.worst_freq_mhz,
        points: report.points,
        in_band_fraction: s.in_band_fraction,
        iterations: s.iterations,
        rms_width_ns: r.rms_width(),
    };
    std::fs::write(out.join("mask_report.json"), serde_json::to_string_pretty(&m)? + "\n")?;

    let (lo, hi) = m.passband_mhz;
    println!("band: {}", serde_json::to_value(d.band)?.as_str().unwrap_or("?"));
    println!("passband: [{lo}, {hi}] MHz");
    println!("compliant: {}", m.compliant);
    println!("worst margin: {:.3} dB at {:.0} MHz", m.worst_margin_db, m.worst_freq_mhz);
    println!("in-band energy fraction: {:.4}", m.in_band_fraction);
    Ok(["pulse.csv", "psd.csv", "autocorrelation.csv", "mask_report.json"].map(PathBuf::from).to_vec())
}

/// Interference table (mode `table`) or closed-form BER curves (any other mode).
pub fn analyze(e: &Experiment, out: &Path) -> Result<Vec<PathBuf>> {
    let p = load_pulse(e)?;
    let r = autocorrelation(&p);
    let opts = AnalyticOptions::default();
    if e.run.mode == Mode::Table {
        let rates = if e.run.rates.is_empty() { vec![e.system.data_rate_mbps] } else { e.run.rates.clone() };
        let users = if e.run.users.is_empty() { vec![e.system.users] } else { e.run.users.clone() };
        let cells = analytic::interference_table(&e.system, &e.channel, &r, &rates, &users, &opts)?;
        let mut w = create(out, "table.csv")?;
        analytic::write_table_csv(&mut w, &cells)?;
        w.flush()?;
        println!("{:>14} {:>6} {:>12} {:>12} {:>12}", "rate_mbps", "users", "iasi", "isi", "mui");
        for c in &cells {
            println!("{:>14} {:>6} {:>12.4e} {:>12.4e} {:>12.4e}", c.data_rate_mbps, c.users, c.iasi, c.isi, c.mui);
        }
        return Ok(vec![PathBuf::from("table.csv")]);
    }

    let snr = parse_snr_grid(&e.run.snr)?;
    let mut curve = create(out, "analytic_ber.csv")?;
    writeln!(curve, "data_rate_mbps,users,snr_db,sinr,ber")?;
    let mut budget = create(out, "budget.csv")?;
    writeln!(budget, "data_rate_mbps,users,signal,iasi,isi,mui,floor_ber")?;
    for c in sweep(e) {
        let (t, pts) = analytic::ber_curve(&c, &e.channel, &r, &snr, &opts)?;
        for pt in &pts {
            writeln!(curve, "{},{},{},{},{}", c.data_rate_mbps, c.users, pt.snr_db, e6(pt.sinr), e6(pt.ber))?;
        }
        writeln!(
            budget,
            "{},{},{},{},{},{},{}",
            c.data_rate_mbps,
            c.users,
            e6(t.signal),
            e6(t.iasi.value),
            e6(t.isi.value),
            e6(t.mui.value),
            e6(t.floor_ber())
        )?;
        println!("rate {} Mbps, {} users: floor BER {:.4e}", c.data_rate_mbps, c.users, t.floor_ber());
    }
    curve.flush()?;
    budget.flush()?;
    Ok(vec![PathBuf::from("analytic_ber.csv"), PathBuf::from("budget.csv")])
}

/// Monte Carlo BER; with mode `both` the analytic curve is written alongside.
pub fn simulate(e: &Experiment, out: &Path) -> Result<Vec<PathBuf>> {
    let seed = e.run.seed.ok_or_else(|| Usage::new("simulate needs a seed: pass --seed or set run.seed"))?;
    let snr = parse_snr_grid(&e.run.snr)?;
    let so = e.run.sim_options();
    let p = load_pulse(e)?;
    let joint = e.run.mode == Mode::Both;
    let r = autocorrelation(&p);

    let mut ber = create(out, "mc_ber.csv")?;
    writeln!(ber, "data_rate_mbps,users,snr_db,ber,ci_lo,ci_hi,errors,bits")?;
    let mut comp = create(out, "mc_components.csv")?;
    writeln!(comp, "data_rate_mbps,users,snr_db,bits,energy_desired,var_noise,var_iasi,var_isi,var_mui")?;
    let mut jw = if joint {
        let mut w = create(out, "joint.csv")?;
        writeln!(w, "data_rate_mbps,users,snr_db,ber_mc,ci_lo,ci_hi,errors,ber_analytic,log10_ratio")?;
        Some(w)
    } else {
        None
    };

    for c in sweep(e) {
        info!("simulating {} Mbps, {} users over {} SNR points", c.data_rate_mbps, c.users, snr.len());
        let est = estimate_ber(&c, &e.channel, &p, &snr, &so, seed)?;
        for x in &est {
            info!("  {} dB: {} errors in {} bits ({:.1} s)", x.snr_db, x.errors, x.bits, x.seconds);
            writeln!(
                ber,
                "{},{},{},{},{},{},{},{}",
                c.data_rate_mbps,
                c.users,
                x.snr_db,
                e6(x.ber),
                e6(x.ci_lo),
                e6(x.ci_hi),
                x.errors,
                x.bits
            )?;
            let m2 = x.trials.second_moment();
            let v = x.trials.variance();
            writeln!(
                comp,
                "{},{},{},{},{},{},{},{},{}",
                c.data_rate_mbps,
                c.users,
                x.snr_db,
                x.bits,
                e6(m2[0]),
                e6(v[1]),
                e6(v[2]),
                e6(v[3]),
                e6(v[4])
            )?;
        }
        if let Some(w) = jw.as_mut() {
            let (_, ana) = analytic::ber_curve(&c, &e.channel, &r, &snr, &AnalyticOptions::default())?;
            for (x, a) in est.iter().zip(&ana) {
                let ratio = if x.ber > 0.0 && a.ber > 0.0 { e6((x.ber / a.ber).log10()) } else { "nan".into() };
                writeln!(
                    w,
                    "{},{},{},{},{},{},{},{},{}",
                    c.data_rate_mbps,
                    c.users,
                    x.snr_db,
                    e6(x.ber),
                    e6(x.ci_lo),
                    e6(x.ci_hi),
                    x.errors,
                    e6(a.ber),
                    ratio
                )?;
            }
        }
        let errors: u64 = est.iter().map(|x| x.errors).sum();
        let bits: u64 = est.iter().map(|x| x.bits).sum();
        println!("rate {} Mbps, {} users: {errors} errors in {bits} bits", c.data_rate_mbps, c.users);
    }
    ber.flush()?;
    comp.flush()?;
    let mut files = vec![PathBuf::from("mc_ber.csv"), PathBuf::from("mc_components.csv")];
    if let Some(mut w) = jw {
        w.flush()?;
        files.push(PathBuf::from("joint.csv"));
    }
    Ok(files)
}
