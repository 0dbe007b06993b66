//! Time-hopping BPSK link simulation with a correlation receiver.
//!
//! Two equivalent receivers are provided. The waveform path ([`received_signal`],
//! [`receiver_template`], [`correlate_decide`]) builds sampled signals and correlates
//! them; it is the reference. The correlation engine ([`CorrelationEngine`]) evaluates
//! the same discrete inner products through the pulse autocorrelation table, placing
//! every pulse copy on the nearest sample exactly as the waveform path does, and draws
//! the noise term directly with its exact variance. [`estimate_ber`] uses the engine.
//!
//! User 0 is the desired user: zero delay, receiver locked to its first ray. Noise is
//! referred to the same F(ω₀) scale as the taps, so the simulator adds noise of density
//! F(ω₀)N₀/2.

use std::collections::VecDeque;
use std::io::Write;
use std::time::Instant;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{Beta, ContinuousCDF};

use crate::analytic::SystemConfig;
use crate::channel::{generate_realization, ChannelParams, ChannelRealization};
use crate::error::{invalid, Result};
use crate::pulse::{autocorrelation, Autocorrelation, Pulse};
use crate::rng::{self, Rng};

/// Per-frame hop indices of one user; reused for every bit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ThCode {
    pub user: usize,
    /// C_j for j = 0..N_s, in chips.
    pub hops: Vec<usize>,
}

impl ThCode {
    /// Explicit code. Index 0 (no offset) is accepted for test fixtures.
    pub fn new(user: usize, hops: Vec<usize>, config: &SystemConfig) -> Result<ThCode> {
        if hops.len() != config.pulses_per_bit {
            return Err(invalid("hops", format!("need {} hop indices, got {}", config.pulses_per_bit, hops.len())));
        }
        if let Some(&h) = hops.iter().find(|&&h| h > config.hop_cardinality) {
            return Err(invalid("hops", format!("hop index {h} exceeds N_h = {}", config.hop_cardinality)));
        }
        Ok(ThCode { user, hops })
    }

    /// Offset C_j T_c of frame `j` (ns).
    pub fn offset(&self, j: usize, chip_time: f64) -> f64 {
        self.hops[j] as f64 * chip_time
    }
}

/// I.i.d. uniform hop indices in 1..=N_h; needs N_h T_c <= T_s <= T_f.
pub fn generate_th_code<R: rand::Rng + ?Sized>(config: &SystemConfig, user: usize, rng: &mut R) -> Result<ThCode> {
    config.validate_hopping()?;
    let hops = (0..config.pulses_per_bit).map(|_| rng.random_range(1..=config.hop_cardinality)).collect();
    Ok(ThCode { user, hops })
}

/// Everything needed to reproduce one user's contribution.
#[derive(Debug, Clone, PartialEq)]
pub struct UserLink {
    pub code: ThCode,
    /// Reference delay τ⁽ⁿ⁾ (ns); zero for the desired user.
    pub delay: f64,
    pub channel: ChannelRealization,
    /// Bits in time order; the last one is the bit under decision.
    pub bits: Vec<i8>,
}

/// The five additive parts of the decision statistic.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct ZComponents {
    pub desired: f64,
    pub noise: f64,
    pub iasi: f64,
    pub isi: f64,
    pub mui: f64,
}

impl ZComponents {
    pub fn total(&self) -> f64 {
        self.desired + self.noise + self.iasi + self.isi + self.mui
    }

    fn as_array(&self) -> [f64; 5] {
        [self.desired, self.noise, self.iasi, self.isi, self.mui]
    }
}

/// A sampled signal on the grid `t0 + n·dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub dt: f64,
    pub t0: f64,
    pub samples: Vec<f64>,
}

fn add_copy(buf: &mut [f64], dt: f64, at: f64, scale: f64, pulse: &Pulse) {
    let i0 = (at / dt).round() as i64;
    for (k, p) in pulse.samples.iter().enumerate() {
        let i = i0 + k as i64;
        if i >= 0 && (i as usize) < buf.len() {
            buf[i as usize] += scale * p;
        }
    }
}

fn check_grid(pulse: &Pulse, config: &SystemConfig) -> Result<()> {
    config.validate()?;
    if pulse.span() > config.chip_time {
        log::warn!("pulse support {:.3} ns exceeds chip time {:.3} ns; hops overlap", pulse.span(), config.chip_time);
    }
    Ok(())
}

/// One symbol of user `code` with polarity `bit`: N_s pulses of energy E_p at
/// j T_f + C_j T_c.
pub fn transmit_waveform(code: &ThCode, bit: i8, pulse: &Pulse, config: &SystemConfig) -> Result<Waveform> {
    check_grid(pulse, config)?;
    let dt = pulse.dt;
    let n = ((config.symbol_time() + pulse.span()) / dt).ceil() as usize + 1;
    let mut s = vec![0.0; n];
    let amp = bit as f64 * config.pulse_energy.sqrt();
    for j in 0..config.pulses_per_bit {
        add_copy(&mut s, dt, j as f64 * config.frame_time() + code.offset(j, config.chip_time), amp, pulse);
    }
    Ok(Waveform { dt, t0: 0.0, samples: s })
}

fn window_len(config: &SystemConfig, dt: f64) -> usize {
    (config.symbol_time() / dt).round() as usize
}

/// Correlation template of the desired user over the symbol window [0, N_s T_f).
pub fn receiver_template(config: &SystemConfig, code: &ThCode, pulse: &Pulse) -> Result<Waveform> {
    check_grid(pulse, config)?;
    let dt = pulse.dt;
    let mut v = vec![0.0; window_len(config, dt)];
    for j in 0..config.pulses_per_bit {
        add_copy(&mut v, dt, j as f64 * config.frame_time() + code.offset(j, config.chip_time), 1.0, pulse);
    }
    Ok(Waveform { dt, t0: 0.0, samples: v })
}

/// Received signal over the symbol window of the last bit, split by origin.
#[derive(Debug, Clone, PartialEq)]
pub struct Received {
    pub dt: f64,
    pub total: Vec<f64>,
    pub desired: Vec<f64>,
    pub noise: Vec<f64>,
    pub iasi: Vec<f64>,
    pub isi: Vec<f64>,
    pub mui: Vec<f64>,
}

/// Superpose every user's transmission through its channel, plus AWGN of two-sided
/// density `n0/2` (per-sample variance `n0/(2dt)`).
///
/// `links[0]` is the desired user. Every link carries `history + 1` bits; bit `m` of a
/// link starts at `(m - history)·N_s T_f + delay`. The history must span τ_max.
pub fn received_signal<R: rand::Rng + ?Sized>(
    links: &[UserLink],
    pulse: &Pulse,
    config: &SystemConfig,
    max_excess_delay: f64,
    n0: f64,
    history: usize,
    rng: &mut R,
) -> Result<Received> {
    check_grid(pulse, config)?;
    if links.is_empty() {
        return Err(invalid("links", "need at least the desired user"));
    }
    if (history as f64) * config.symbol_time() < max_excess_delay {
        return Err(invalid("history", "observation window shorter than the maximum excess delay"));
    }
    if links.iter().any(|l| l.bits.len() != history + 1) {
        return Err(invalid("bits", "every link needs history + 1 bits"));
    }
    let dt = pulse.dt;
    let w = window_len(config, dt);
    let mut parts = [vec![0.0; w], vec![0.0; w], vec![0.0; w], vec![0.0; w]];
    let amp = config.pulse_energy.sqrt();
    for (u, link) in links.iter().enumerate() {
        let paths = link.channel.paths();
        for (m, &b) in link.bits.iter().enumerate() {
            let start = (m as f64 - history as f64) * config.symbol_time() + link.delay;
            for j in 0..config.pulses_per_bit {
                let base = start + j as f64 * config.frame_time() + link.code.offset(j, config.chip_time);
                for (i, &(d, a)) in paths.iter().enumerate() {
                    let part = match (u, m == history, i == 0) {
                        (0, true, true) => 0,
                        (0, true, false) => 1,
                        (0, false, _) => 2,
                        _ => 3,
                    };
                    add_copy(&mut parts[part], dt, base + d, b as f64 * amp * a, pulse);
                }
            }
        }
    }
    let sd = (n0 / (2.0 * dt)).sqrt();
    let noise: Vec<f64> = (0..w)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            sd * z
        })
        .collect();
    let [desired, iasi, isi, mui] = parts;
    let total = (0..w).map(|i| desired[i] + iasi[i] + isi[i] + mui[i] + noise[i]).collect();
    Ok(Received { dt, total, desired, noise, iasi, isi, mui })
}

/// Result of one correlation decision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision {
    pub bit: i8,
    pub z: f64,
    pub components: ZComponents,
    pub correct: bool,
}

fn dot(a: &[f64], b: &[f64], dt: f64) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() * dt
}

/// Z = ∫ r v dt and its per-origin parts; Z >= 0 decides +1 (ties go to +1).
pub fn correlate_decide(received: &Received, template: &Waveform, truth: i8) -> Result<Decision> {
    if received.total.len() != template.samples.len() || received.dt != template.dt {
        return Err(invalid("template", "received signal and template grids differ"));
    }
    let dt = received.dt;
    let v = &template.samples;
    let components = ZComponents {
        desired: dot(&received.desired, v, dt),
        noise: dot(&received.noise, v, dt),
        iasi: dot(&received.iasi, v, dt),
        isi: dot(&received.isi, v, dt),
        mui: dot(&received.mui, v, dt),
    };
    let z = dot(&received.total, v, dt);
    let bit = if z >= 0.0 { 1 } else { -1 };
    Ok(Decision { bit, z, components, correct: bit == truth })
}

/// Borrowed view of one user for the correlation engine.
#[derive(Debug, Clone, Copy)]
pub struct LinkView<'a> {
    pub code: &'a ThCode,
    pub delay: f64,
    /// `(absolute delay, amplitude)` sorted by delay; the desired ray first for user 0.
    pub paths: &'a [(f64, f64)],
    /// `history + 1` bits, the last under decision.
    pub bits: &'a [i8],
}

/// Correlation-domain receiver for a fixed template.
#[derive(Debug, Clone)]
pub struct CorrelationEngine {
    r: Autocorrelation,
    dt: f64,
    template_idx: Vec<i64>,
    support: f64,
    frame: f64,
    symbol: f64,
    chip: f64,
    amp: f64,
    template_energy: f64,
    ns: usize,
}

impl CorrelationEngine {
    pub fn new(pulse: &Pulse, config: &SystemConfig, template_code: &ThCode) -> Result<Self> {
        check_grid(pulse, config)?;
        let dt = pulse.dt;
        let r = autocorrelation(pulse);
        let template_idx: Vec<i64> = (0..config.pulses_per_bit)
            .map(|j| ((j as f64 * config.frame_time() + template_code.offset(j, config.chip_time)) / dt).round() as i64)
            .collect();
        let w = window_len(config, dt) as i64;
        let n = pulse.samples.len() as i64;
        if template_idx.iter().any(|&i| i < 0 || i + n > w) {
            return Err(invalid("hop_span", "template pulses must lie inside the symbol window"));
        }
        let mut template_energy = 0.0;
        for &a in &template_idx {
            for &b in &template_idx {
                template_energy += r.at_lag(a - b);
            }
        }
        Ok(CorrelationEngine {
            support: pulse.span(),
            r,
            dt,
            template_idx,
            frame: config.frame_time(),
            symbol: config.symbol_time(),
            chip: config.chip_time,
            amp: config.pulse_energy.sqrt(),
            template_energy,
            ns: config.pulses_per_bit,
        })
    }

    /// ∫v² dt of the template.
    pub fn template_energy(&self) -> f64 {
        self.template_energy
    }

    /// Discrete correlation of a unit pulse copy placed at `at` ns with the template.
    pub fn copy_correlation(&self, at: f64) -> f64 {
        let i = (at / self.dt).round() as i64;
        self.template_idx.iter().map(|&t| self.r.at_lag(i - t)).sum()
    }

    /// Noise-free decision-statistic components; `links[0]` is the desired user.
    pub fn components(&self, links: &[LinkView]) -> ZComponents {
        let mut z = ZComponents::default();
        let lo_edge = self.template_idx[0] as f64 * self.dt - self.support;
        let hi_edge = *self.template_idx.last().unwrap() as f64 * self.dt + self.support;
        for (u, link) in links.iter().enumerate() {
            let history = link.bits.len() - 1;
            for (m, &b) in link.bits.iter().enumerate() {
                let start = (m as f64 - history as f64) * self.symbol + link.delay;
                for j in 0..self.ns {
                    let base = start + j as f64 * self.frame + link.code.offset(j, self.chip);
                    // Only copies landing within a pulse width of the template can correlate.
                    let from = link.paths.partition_point(|p| base + p.0 < lo_edge - self.dt);
                    let scale = b as f64 * self.amp;
                    for (i, &(d, a)) in link.paths.iter().enumerate().skip(from) {
                        if base + d > hi_edge + self.dt {
                            break;
                        }
                        let c = scale * a * self.copy_correlation(base + d);
                        match (u, m == history, i == 0) {
                            (0, true, true) => z.desired += c,
                            (0, true, false) => z.iasi += c,
                            (0, false, _) => z.isi += c,
                            _ => z.mui += c,
                        }
                    }
                }
            }
        }
        z
    }
}

/// Stop rule per SNR point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StopRule {
    pub min_errors: u64,
    pub max_bits: u64,
}

impl Default for StopRule {
    fn default() -> Self {
        StopRule { min_errors: 100, max_bits: 10_000_000 }
    }
}

/// Simulation settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimOptions {
    pub stop: StopRule,
    /// Bits per channel realization.
    pub block_bits: u64,
    /// Blocks scheduled together; results do not depend on the thread count.
    pub batch_blocks: u64,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions { stop: StopRule::default(), block_bits: 100, batch_blocks: 64 }
    }
}

/// Counts and component moments accumulated over bits.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct TrialResult {
    pub bits: u64,
    pub errors: u64,
    /// Σ of desired, noise, IASI, ISI, MUI components.
    pub sum: [f64; 5],
    pub sum_sq: [f64; 5],
}

impl TrialResult {
    fn add(&mut self, z: &ZComponents, error: bool) {
        self.bits += 1;
        self.errors += error as u64;
        for (i, v) in z.as_array().iter().enumerate() {
            self.sum[i] += v;
            self.sum_sq[i] += v * v;
        }
    }

    fn merge(&mut self, o: &TrialResult) {
        self.bits += o.bits;
        self.errors += o.errors;
        for i in 0..5 {
            self.sum[i] += o.sum[i];
            self.sum_sq[i] += o.sum_sq[i];
        }
    }

    pub fn mean(&self) -> [f64; 5] {
        self.sum.map(|s| s / self.bits as f64)
    }

    pub fn second_moment(&self) -> [f64; 5] {
        self.sum_sq.map(|s| s / self.bits as f64)
    }

    /// Population variances of the five components.
    pub fn variance(&self) -> [f64; 5] {
        let m = self.mean();
        let s = self.second_moment();
        [0, 1, 2, 3, 4].map(|i| (s[i] - m[i] * m[i]).max(0.0))
    }
}

/// BER estimate at one SNR point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BerEstimate {
    pub snr_db: f64,
    pub ber: f64,
    /// Clopper-Pearson 95% interval.
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub errors: u64,
    pub bits: u64,
    pub seconds: f64,
    #[serde(skip)]
    pub trials: TrialResult,
}

/// Exact binomial 95% interval.
pub fn clopper_pearson(errors: u64, bits: u64) -> (f64, f64) {
    if bits == 0 {
        return (0.0, 1.0);
    }
    let (k, n) = (errors as f64, bits as f64);
    let lo = if errors == 0 { 0.0 } else { Beta::new(k, n - k + 1.0).unwrap().inverse_cdf(0.025) };
    let hi = if errors == bits { 1.0 } else { Beta::new(k + 1.0, n - k).unwrap().inverse_cdf(0.975) };
    (lo, hi)
}

struct Block<'a> {
    config: &'a SystemConfig,
    params: &'a ChannelParams,
    engine_pulse: &'a Pulse,
    n0_eff: f64,
}

impl Block<'_> {
    fn run(&self, rng: &mut Rng, bits_in_block: u64) -> Result<TrialResult> {
        let c = self.config;
        let users = c.users;
        let mut codes = Vec::with_capacity(users);
        let mut chans = Vec::with_capacity(users);
        let mut delays = Vec::with_capacity(users);
        for u in 0..users {
            codes.push(generate_th_code(c, u, rng)?);
            chans.push(generate_realization(self.params, rng.random())?.paths());
            delays.push(if u == 0 { 0.0 } else { rng.random::<f64>() * c.symbol_time() });
        }
        let engine = CorrelationEngine::new(self.engine_pulse, c, &codes[0])?;
        // Receiver polarity is locked to the desired ray.
        let lock = chans[0][0].1.signum();
        let noise_sd = (self.n0_eff / 2.0 * engine.template_energy()).sqrt();
        let history = ((self.params.max_excess_delay + self.engine_pulse.span()) / c.symbol_time()).ceil() as usize + 1;
        let mut bits: Vec<VecDeque<i8>> =
            (0..users).map(|_| (0..=history).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect()).collect();
        let mut out = TrialResult::default();
        let mut buf: Vec<Vec<i8>> = vec![Vec::with_capacity(history + 1); users];
        for _ in 0..bits_in_block {
            for (u, q) in bits.iter_mut().enumerate() {
                q.pop_front();
                q.push_back(if rng.random::<bool>() { 1 } else { -1 });
                buf[u].clear();
                buf[u].extend(q.iter());
            }
            let views: Vec<LinkView> =
                (0..users).map(|u| LinkView { code: &codes[u], delay: delays[u], paths: &chans[u], bits: &buf[u] }).collect();
            let mut z = engine.components(&views);
            let g: f64 = StandardNormal.sample(rng);
            z.noise = noise_sd * g;
            for v in [&mut z.desired, &mut z.noise, &mut z.iasi, &mut z.isi, &mut z.mui] {
                *v *= lock;
            }
            let truth = buf[0][history];
            let decided = if z.total() >= 0.0 { 1 } else { -1 };
            out.add(&z, decided != truth);
        }
        Ok(out)
    }
}

/// Simulate one SNR point; `point` selects the random substream family.
pub fn simulate_point(
    config: &SystemConfig,
    params: &ChannelParams,
    pulse: &Pulse,
    snr_db: f64,
    opts: &SimOptions,
    seed: u64,
    point: u32,
) -> Result<BerEstimate> {
    config.validate_hopping()?;
    params.validate()?;
    if opts.block_bits == 0 || opts.batch_blocks == 0 {
        return Err(invalid("block_bits", "block and batch sizes must be positive"));
    }
    let start = Instant::now();
    let c = config.at_snr_db(snr_db);
    let blk = Block { config: &c, params, engine_pulse: pulse, n0_eff: params.reference_gain() * c.noise_psd };
    let mut total = TrialResult::default();
    let mut next_block: u64 = 0;
    while total.errors < opts.stop.min_errors && total.bits < opts.stop.max_bits {
        let remaining = opts.stop.max_bits - total.bits;
        let blocks = opts.batch_blocks.min(remaining.div_ceil(opts.block_bits));
        let results: Vec<TrialResult> = (next_block..next_block + blocks)
            .into_par_iter()
            .map(|b| {
                let mut r = rng::substream(seed, point, b as u32);
                let n = opts.block_bits.min(opts.stop.max_bits - total.bits - (b - next_block) * opts.block_bits);
                blk.run(&mut r, n)
            })
            .collect::<Result<_>>()?;
        for r in &results {
            total.merge(r);
        }
        next_block += blocks;
    }
    let (lo, hi) = clopper_pearson(total.errors, total.bits);
    Ok(BerEstimate {
        snr_db,
        ber: total.errors as f64 / total.bits as f64,
        ci_lo: lo,
        ci_hi: hi,
        errors: total.errors,
        bits: total.bits,
        seconds: start.elapsed().as_secs_f64(),
        trials: total,
    })
}

/// BER over an SNR grid (E_p/N₀ in dB); deterministic given `seed`.
pub fn estimate_ber(
    config: &SystemConfig,
    params: &ChannelParams,
    pulse: &Pulse,
    snr_db: &[f64],
    opts: &SimOptions,
    seed: u64,
) -> Result<Vec<BerEstimate>> {
    snr_db.iter().enumerate().map(|(i, &s)| simulate_point(config, params, pulse, s, opts, seed, i as u32)).collect()
}

/// CSV `snr_db,ber,ci_lo,ci_hi,errors,bits,seconds`.
pub fn write_ber_csv<W: Write>(mut w: W, pts: &[BerEstimate]) -> Result<()> {
    writeln!(w, "snr_db,ber,ci_lo,ci_hi,errors,bits,seconds")?;
    for p in pts {
        writeln!(w, "{:.5e},{:.5e},{:.5e},{:.5e},{},{},{:.3}", p.snr_db, p.ber, p.ci_lo, p.ci_hi, p.errors, p.bits, p.seconds)?;
    }
    Ok(())
}

/// CSV of component means and variances per SNR point.
pub fn write_components_csv<W: Write>(mut w: W, pts: &[BerEstimate]) -> Result<()> {
    writeln!(w, "snr_db,bits,mean_desired,var_noise,var_iasi,var_isi,var_mui,mean_iasi,mean_isi,mean_mui")?;
    for p in pts {
        let m = p.trials.mean();
        let v = p.trials.variance();
        writeln!(
            w,
            "{:.5e},{},{:.5e},{:.5e},{:.5e},{:.5e},{:.5e},{:.5e},{:.5e},{:.5e}",
            p.snr_db, p.bits, m[0], v[1], v[2], v[3], v[4], m[2], m[3], m[4]
        )?;
    }
    Ok(())
}
