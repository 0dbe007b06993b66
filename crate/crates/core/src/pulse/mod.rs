//! Transmit pulses: Gaussian kernel banks, mask-constrained synthesis, PSD and
//! autocorrelation.
//!
//! Time is in ns, so FFT bins come out in GHz; reports and exports convert to MHz.

mod mask;
mod synth;

pub use mask::{Band, MaskLevels, MaskSegment, SpectralMask, LOWER_BAND, UPPER_BAND};
pub use synth::{synthesize_pulse, Synthesis, SynthesisOptions};

use std::io::Write;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Kernel tails are cut at this many standard deviations.
pub const TAIL_SIGMAS: f64 = 5.0;

/// Uniformly sampled real pulse. Sample `n` sits at time `t0 + n·dt` (ns).
#[derive(Debug, Clone, PartialEq)]
pub struct Pulse {
    pub samples: Vec<f64>,
    /// Sample interval (ns).
    pub dt: f64,
    /// Time of the first sample (ns).
    pub t0: f64,
}

impl Pulse {
    pub fn new(samples: Vec<f64>, dt: f64, t0: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(invalid("dt", format!("sample interval must be > 0, got {dt}")));
        }
        if samples.is_empty() {
            return Err(invalid("samples", "pulse has no samples"));
        }
        Ok(Pulse { samples, dt, t0 })
    }

    /// ∫p² dt as a Riemann sum.
    pub fn energy(&self) -> f64 {
        self.dt * self.samples.iter().map(|x| x * x).sum::<f64>()
    }

    /// Copy scaled to unit energy.
    pub fn normalized(&self) -> Pulse {
        let e = self.energy();
        let k = if e > 0.0 { 1.0 / e.sqrt() } else { 1.0 };
        Pulse { samples: self.samples.iter().map(|x| x * k).collect(), ..*self }
    }

    /// Time from first to last sample (ns).
    pub fn span(&self) -> f64 {
        (self.samples.len() - 1) as f64 * self.dt
    }

    /// Same samples, moved by `delta` ns.
    pub fn shifted(&self, delta: f64) -> Pulse {
        Pulse { t0: self.t0 + delta, ..self.clone() }
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.samples.len()).map(move |i| self.t0 + i as f64 * self.dt)
    }
}

/// Bank of identical Gaussian kernels `exp(-t²/2σ²)` with equally spaced centres.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelBank {
    pub count: usize,
    /// Centre spacing (ns).
    pub spacing: f64,
    /// Kernel standard deviation (ns).
    pub sigma: f64,
    /// Native sample interval (ns); divides `spacing`.
    pub dt: f64,
    /// Centre of the first kernel (ns).
    pub origin: f64,
}

/// Build a bank; `dt` must divide `spacing` to within 1e-12 ns.
pub fn build_kernel_bank(count: usize, spacing: f64, sigma: f64, dt: f64) -> Result<KernelBank> {
    if count < 1 {
        return Err(invalid("count", "need at least one kernel"));
    }
    if !(spacing > 0.0 && spacing.is_finite()) {
        return Err(invalid("spacing", format!("must be > 0, got {spacing}")));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(invalid("sigma", format!("must be > 0, got {sigma}")));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(invalid("dt", format!("must be > 0, got {dt}")));
    }
    let steps = (spacing / dt).round();
    if steps < 1.0 || (steps * dt - spacing).abs() > 1e-12 {
        return Err(invalid("dt", format!("sample interval {dt} ns does not divide kernel spacing {spacing} ns")));
    }
    Ok(KernelBank { count, spacing, sigma, dt, origin: 0.0 })
}

impl KernelBank {
    /// Centre of kernel `k` (ns).
    pub fn center(&self, k: usize) -> f64 {
        self.origin + k as f64 * self.spacing
    }

    /// Copy with every centre moved by `delta` ns.
    pub fn shifted(&self, delta: f64) -> KernelBank {
        KernelBank { origin: self.origin + delta, ..self.clone() }
    }

    /// Continuous waveform Σ c_k g(t - centre_k).
    pub fn evaluate(&self, coeffs: &[f64], t: f64) -> f64 {
        let s2 = 2.0 * self.sigma * self.sigma;
        coeffs
            .iter()
            .enumerate()
            .map(|(k, c)| {
                let x = t - self.center(k);
                c * (-x * x / s2).exp()
            })
            .sum()
    }

    /// Sample Σ c_k g(t - centre_k) on the native grid, tails cut at [`TAIL_SIGMAS`].
    pub fn render(&self, coeffs: &[f64]) -> Result<Pulse> {
        self.render_at(coeffs, self.dt)
    }

    /// Sample the same waveform at an arbitrary interval (for sampling-rate studies).
    pub fn render_at(&self, coeffs: &[f64], dt: f64) -> Result<Pulse> {
        if coeffs.len() != self.count {
            return Err(invalid("coefficients", format!("expected {} coefficients, got {}", self.count, coeffs.len())));
        }
        if !(dt > 0.0) {
            return Err(invalid("dt", "must be > 0"));
        }
        let tail = (TAIL_SIGMAS * self.sigma / dt).ceil() * dt;
        let start = self.origin - tail;
        let length = (self.count - 1) as f64 * self.spacing + 2.0 * tail;
        let n = (length / dt).round() as usize + 1;
        let samples = (0..n).map(|i| self.evaluate(coeffs, start + i as f64 * dt)).collect();
        Pulse::new(samples, dt, start)
    }

    /// Duration spanned by the kernel centres (ns).
    pub fn center_span(&self) -> f64 {
        (self.count - 1) as f64 * self.spacing
    }
}

/// Kernel-bank pulse design: band, bank geometry and mask levels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PulseDesign {
    pub band: Band,
    pub kernels: usize,
    /// Kernel centre spacing (ns).
    pub spacing: f64,
    /// Kernel standard deviation (ns).
    pub sigma: f64,
    /// Sample interval (ns).
    pub dt: f64,
    pub levels: MaskLevels,
}

impl Default for PulseDesign {
    fn default() -> Self {
        PulseDesign { band: Band::Lower, kernels: 19, spacing: 0.04, sigma: 0.05, dt: 0.005, levels: MaskLevels::default() }
    }
}

impl PulseDesign {
    pub fn for_band(band: Band) -> Self {
        PulseDesign { band, ..Default::default() }
    }

    pub fn bank(&self) -> Result<KernelBank> {
        build_kernel_bank(self.kernels, self.spacing, self.sigma, self.dt)
    }

    pub fn mask(&self) -> SpectralMask {
        SpectralMask::for_band(self.band, self.levels)
    }

    /// Synthesize with default solver options.
    pub fn synthesize(&self) -> Result<Synthesis> {
        synthesize_pulse(&self.bank()?, &self.mask(), &SynthesisOptions::default())
    }
}

/// One-sided energy spectrum of a sampled pulse.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    /// Bin frequencies (MHz), `0 ..= fs/2`.
    pub freq_mhz: Vec<f64>,
    /// |P(f)|² with P(f) = dt Σ p_n e^{-j2πfn·dt} (ns²).
    pub energy_density: Vec<f64>,
    /// 10 log10 of `energy_density` relative to its maximum.
    pub db: Vec<f64>,
    /// Bin spacing (MHz).
    pub df_mhz: f64,
    pub nfft: usize,
}

impl Spectrum {
    /// Σ |P|² df over the full two-sided spectrum; equals ∫p² dt by Parseval.
    pub fn parseval_energy(&self) -> f64 {
        let n = self.nfft;
        let mut s = 0.0;
        for (k, e) in self.energy_density.iter().enumerate() {
            let mirrored = k != 0 && !(n.is_multiple_of(2) && k == n / 2);
            s += if mirrored { 2.0 * e } else { *e };
        }
        s * self.df_mhz * 1e-3
    }
}

/// Energy spectrum with `nfft >= samples` points (zero padded).
pub fn psd(pulse: &Pulse, nfft: usize) -> Result<Spectrum> {
    if nfft < pulse.samples.len() {
        return Err(invalid("nfft", format!("nfft {nfft} shorter than pulse ({})", pulse.samples.len())));
    }
    let mut buf: Vec<Complex64> = pulse.samples.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    buf.resize(nfft, Complex64::new(0.0, 0.0));
    FftPlanner::new().plan_fft_forward(nfft).process(&mut buf);
    let half = nfft / 2;
    let dt2 = pulse.dt * pulse.dt;
    let energy_density: Vec<f64> = buf[..=half].iter().map(|c| c.norm_sqr() * dt2).collect();
    let peak = energy_density.iter().copied().fold(0.0, f64::max);
    let db = energy_density.iter().map(|&e| if peak > 0.0 { 10.0 * (e / peak).log10() } else { f64::NEG_INFINITY }).collect();
    let df_mhz = 1e3 / (nfft as f64 * pulse.dt);
    let freq_mhz = (0..=half).map(|k| k as f64 * df_mhz).collect();
    Ok(Spectrum { freq_mhz, energy_density, db, df_mhz, nfft })
}

/// FFT length giving bins no wider than `resolution_mhz` for this pulse.
pub fn nfft_for_resolution(pulse: &Pulse, resolution_mhz: f64) -> usize {
    let n = (1e3 / (pulse.dt * resolution_mhz)).ceil() as usize;
    n.max(pulse.samples.len())
}

/// Outcome of an exhaustive grid check of the PSD against a mask.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskReport {
    pub compliant: bool,
    /// max over the grid of (PSD dB - ceiling dB); <= 0 when compliant.
    pub worst_violation_db: f64,
    /// Frequency of the worst margin (MHz).
    pub worst_freq_mhz: f64,
    /// Bins checked.
    pub points: usize,
}

/// Check every FFT bin up to `fmax_mhz` (bin width <= `resolution_mhz`).
pub fn check_mask(pulse: &Pulse, mask: &SpectralMask, fmax_mhz: f64, resolution_mhz: f64) -> Result<MaskReport> {
    let spec = psd(pulse, nfft_for_resolution(pulse, resolution_mhz))?;
    let mut worst = f64::NEG_INFINITY;
    let mut worst_f = 0.0;
    let mut points = 0;
    for (f, db) in spec.freq_mhz.iter().zip(&spec.db) {
        if *f > fmax_mhz {
            break;
        }
        let Some(ceil) = mask.ceiling_db(*f) else { continue };
        points += 1;
        let margin = db - ceil;
        if margin > worst {
            worst = margin;
            worst_f = *f;
        }
    }
    Ok(MaskReport { compliant: worst <= 0.0, worst_violation_db: worst, worst_freq_mhz: worst_f, points })
}

/// In-band share of the one-sided spectrum up to `fmax_mhz`.
pub fn in_band_fraction(spec: &Spectrum, band: (f64, f64), fmax_mhz: f64) -> f64 {
    let (mut inb, mut tot) = (0.0, 0.0);
    for (f, e) in spec.freq_mhz.iter().zip(&spec.energy_density) {
        if *f > fmax_mhz {
            break;
        }
        tot += e;
        if *f >= band.0 && *f <= band.1 {
            inb += e;
        }
    }
    if tot > 0.0 {
        inb / tot
    } else {
        0.0
    }
}

/// Autocorrelation table R(m·dt) = dt Σ p_n p_{n+m}, m >= 0; R is even.
#[derive(Debug, Clone, PartialEq)]
pub struct Autocorrelation {
    pub dt: f64,
    /// R at lags 0, dt, 2dt, ...
    pub values: Vec<f64>,
}

/// R of the pulse via zero-padded FFT. For a unit-energy pulse R(0) = 1.
pub fn autocorrelation(pulse: &Pulse) -> Autocorrelation {
    let n = pulse.samples.len();
    let nfft = (2 * n).next_power_of_two();
    let mut buf: Vec<Complex64> = pulse.samples.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    buf.resize(nfft, Complex64::new(0.0, 0.0));
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(nfft).process(&mut buf);
    for c in buf.iter_mut() {
        *c = Complex64::new(c.norm_sqr(), 0.0);
    }
    planner.plan_fft_inverse(nfft).process(&mut buf);
    let scale = pulse.dt / nfft as f64;
    let values = buf[..n].iter().map(|c| c.re * scale).collect();
    Autocorrelation { dt: pulse.dt, values }
}

impl Autocorrelation {
    /// R(τ) with linear interpolation between table lags; zero beyond the support.
    pub fn eval(&self, tau: f64) -> f64 {
        let x = tau.abs() / self.dt;
        let i = x.floor() as usize;
        if i + 1 >= self.values.len() {
            return if i + 1 == self.values.len() && x == i as f64 { self.values[i] } else { 0.0 };
        }
        let w = x - i as f64;
        self.values[i] * (1.0 - w) + self.values[i + 1] * w
    }

    /// Table value at integer lag `m` (samples), zero outside.
    pub fn at_lag(&self, m: i64) -> f64 {
        self.values.get(m.unsigned_abs() as usize).copied().unwrap_or(0.0)
    }

    /// Largest lag with a tabulated value (ns).
    pub fn support(&self) -> f64 {
        (self.values.len() - 1) as f64 * self.dt
    }

    /// Non-negative table lags (ns); the kinks of the interpolant.
    pub fn nodes(&self) -> Vec<f64> {
        (0..self.values.len()).map(|i| i as f64 * self.dt).collect()
    }

    /// RMS width of R²: sqrt(Σ τ² R² / Σ R²) (ns).
    pub fn rms_width(&self) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for (i, r) in self.values.iter().enumerate() {
            let t = i as f64 * self.dt;
            num += t * t * r * r;
            den += r * r;
        }
        (num / den).sqrt()
    }
}

/// Write `t_ns,amplitude` rows.
pub fn write_pulse<W: Write>(mut w: W, pulse: &Pulse) -> Result<()> {
    writeln!(w, "t_ns,amplitude")?;
    for (t, x) in pulse.times().zip(&pulse.samples) {
        writeln!(w, "{t:.6},{x:.8e}")?;
    }
    Ok(())
}

/// Write `f_mhz,psd_db` rows up to `fmax_mhz`.
pub fn write_psd<W: Write>(mut w: W, spec: &Spectrum, fmax_mhz: f64) -> Result<()> {
    writeln!(w, "f_mhz,psd_db")?;
    for (f, db) in spec.freq_mhz.iter().zip(&spec.db) {
        if *f > fmax_mhz {
            break;
        }
        writeln!(w, "{f:.3},{db:.6}")?;
    }
    Ok(())
}

/// Write `lag_ns,r` rows for non-negative lags.
pub fn write_autocorrelation<W: Write>(mut w: W, r: &Autocorrelation) -> Result<()> {
    writeln!(w, "lag_ns,r")?;
    for (i, v) in r.values.iter().enumerate() {
        writeln!(w, "{:.6},{:.8e}", i as f64 * r.dt, v)?;
    }
    Ok(())
}

/// Read a `t_ns,amplitude` file. The sample interval is taken from the first two rows.
pub fn read_pulse<R: std::io::BufRead>(r: R) -> Result<Pulse> {
    let mut t = Vec::new();
    let mut x = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        if n == 0 || line.trim().is_empty() {
            continue;
        }
        let mut it = line.split(',');
        let parse = |s: Option<&str>| -> Result<f64> {
            s.and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| crate::Error::Parse { line: n + 1, reason: "expected `t,amplitude`".into() })
        };
        t.push(parse(it.next())?);
        x.push(parse(it.next())?);
    }
    if t.len() < 2 {
        return Err(invalid("pulse", "need at least two samples"));
    }
    let dt = (t[t.len() - 1] - t[0]) / (t.len() - 1) as f64;
    Pulse::new(x, dt, t[0])
}
