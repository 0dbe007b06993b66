//! Closed-form interference budget of a TH-BPSK correlation receiver.
//!
//! The decision variable splits into the desired term, AWGN, intra-symbol interference
//! (IASI, other rays of the same pulse), inter-symbol interference (ISI, echoes of
//! earlier pulses) and multiuser interference (MUI). Each variance is an integral of
//! R², the pulse autocorrelation, against the channel's delay densities; all integrals
//! are evaluated by adaptive quadrature, and the series over ray and cluster indices is
//! extended until its last term is negligible.
//!
//! Conventions:
//! * T_m, the upper integration limit, defaults to τ_max.
//! * γ₁ is the first cluster's decay, γ₀.
//! * The ray density f_p vanishes for negative delays.
//! * MUI scales with the number of interferers N_u − 1.
//! * Signal-derived terms scale with E_p; the noise term does not.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use statrs::function::gamma::ln_gamma;

use crate::channel::ChannelParams;
use crate::error::{invalid, Error, Result};
use crate::pulse::Autocorrelation;
use crate::quadrature::{integrate_vec, Estimate, QuadConfig, VecEstimate};

/// Link parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    /// Bit rate R_b (Mbps).
    pub data_rate_mbps: f64,
    /// Pulses per bit N_s.
    pub pulses_per_bit: usize,
    /// Active users N_u.
    pub users: usize,
    /// Chip duration T_c (ns).
    pub chip_time: f64,
    /// Maximum hopping offset T_s (ns).
    pub hop_span: f64,
    /// Hop alphabet size N_h.
    pub hop_cardinality: usize,
    /// Energy per transmitted pulse E_p.
    pub pulse_energy: f64,
    /// One-sided noise density N₀.
    pub noise_psd: f64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        SystemConfig {
            data_rate_mbps: 27.24,
            pulses_per_bit: 4,
            users: 1,
            chip_time: 2.0,
            hop_span: 4.0,
            hop_cardinality: 2,
            pulse_energy: 1.0,
            noise_psd: 1.0,
        }
    }
}

impl SystemConfig {
    /// Frame time T_f = 1/(R_b N_s) in ns.
    pub fn frame_time(&self) -> f64 {
        1e3 / (self.data_rate_mbps * self.pulses_per_bit as f64)
    }

    /// Bit rate in 1/ns.
    pub fn rate_per_ns(&self) -> f64 {
        self.data_rate_mbps * 1e-3
    }

    /// Symbol duration N_s T_f (ns).
    pub fn symbol_time(&self) -> f64 {
        self.pulses_per_bit as f64 * self.frame_time()
    }

    /// N_I = ⌈τ_max / T_f⌉, the number of earlier frames an echo can reach across.
    pub fn interfering_periods(&self, max_excess_delay: f64) -> usize {
        (max_excess_delay / self.frame_time()).ceil() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.data_rate_mbps > 0.0 && self.data_rate_mbps.is_finite()) {
            return Err(invalid("data_rate_mbps", "must be finite and > 0"));
        }
        if self.pulses_per_bit < 1 {
            return Err(invalid("pulses_per_bit", "must be >= 1"));
        }
        if self.users < 1 {
            return Err(invalid("users", "must be >= 1"));
        }
        if self.hop_cardinality < 1 {
            return Err(invalid("hop_cardinality", "must be >= 1"));
        }
        if !(self.chip_time > 0.0) {
            return Err(invalid("chip_time", "must be > 0"));
        }
        if !(self.hop_span > 0.0) {
            return Err(invalid("hop_span", "must be > 0"));
        }
        if self.hop_span > self.frame_time() {
            return Err(invalid("hop_span", format!("T_s = {} ns exceeds the frame time {:.4} ns", self.hop_span, self.frame_time())));
        }
        if !(self.pulse_energy > 0.0) {
            return Err(invalid("pulse_energy", "must be > 0"));
        }
        if !(self.noise_psd >= 0.0) {
            return Err(invalid("noise_psd", "must be >= 0"));
        }
        Ok(())
    }

    /// Extra requirement of time hopping: N_h T_c <= T_s.
    pub fn validate_hopping(&self) -> Result<()> {
        self.validate()?;
        if self.hop_cardinality as f64 * self.chip_time > self.hop_span + 1e-12 {
            return Err(invalid("hop_cardinality", "N_h * T_c must not exceed T_s"));
        }
        Ok(())
    }

    /// Copy with N₀ set from an E_p/N₀ ratio in dB.
    pub fn at_snr_db(&self, snr_db: f64) -> SystemConfig {
        SystemConfig { noise_psd: self.pulse_energy / 10f64.powf(snr_db / 10.0), ..self.clone() }
    }
}

/// How many terms of an index series to keep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Truncation {
    /// Extend until a term falls below `term_tol` of the running sum; error past `cap`.
    Adaptive { cap: usize },
    /// Sum up to and including this index (K_max or L_max).
    Fixed(usize),
}

/// Numerical settings of the budget.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticOptions {
    pub quad: QuadConfig,
    /// Inner integrals use `quad.rel_tol / inner_factor`.
    pub inner_factor: f64,
    /// Ray series k = 2..K.
    pub rays: Truncation,
    /// Cluster series l = 1..L-1.
    pub clusters: Truncation,
    pub term_tol: f64,
    /// Upper integration limit T_m (ns); τ_max when `None`.
    pub t_m: Option<f64>,
}

impl Default for AnalyticOptions {
    fn default() -> Self {
        AnalyticOptions {
            quad: QuadConfig::default(),
            inner_factor: 10.0,
            rays: Truncation::Adaptive { cap: 1024 },
            clusters: Truncation::Adaptive { cap: 1024 },
            term_tol: 1e-6,
            t_m: None,
        }
    }
}

impl AnalyticOptions {
    fn t_m(&self, params: &ChannelParams) -> f64 {
        self.t_m.unwrap_or(params.max_excess_delay)
    }
}

/// Erlang(n, rate) density, evaluated in log space.
fn erlang_pdf(n: usize, rate: f64, x: f64) -> f64 {
    if x < 0.0 {
        return 0.0;
    }
    if x == 0.0 {
        return if n == 1 { rate } else { 0.0 };
    }
    let nf = n as f64;
    (rate.ln() + (nf - 1.0) * (rate * x).ln() - rate * x - ln_gamma(nf)).exp()
}

/// Density of the l-th cluster arrival, Erlang(l-1, Λ); needs l >= 2 and x >= 0.
pub fn pdf_cluster_delay(l: usize, x: f64, cluster_rate: f64) -> Result<f64> {
    if l < 2 {
        return Err(invalid("l", "cluster index must be >= 2"));
    }
    if x < 0.0 {
        return Err(invalid("x", "delay must be >= 0"));
    }
    Ok(erlang_pdf(l - 1, cluster_rate, x))
}

/// Density of the k-th ray delay, Erlang(k-1, λ₂); needs k >= 2 and x >= 0.
pub fn pdf_ray_delay(k: usize, x: f64, ray_rate: f64) -> Result<f64> {
    if k < 2 {
        return Err(invalid("k", "ray index must be >= 2"));
    }
    if x < 0.0 {
        return Err(invalid("x", "delay must be >= 0"));
    }
    Ok(erlang_pdf(k - 1, ray_rate, x))
}

/// Uniform code-offset density on [-T_s, T_s].
pub fn pdf_code_offset(x: f64, hop_span: f64) -> f64 {
    if x.abs() <= hop_span {
        0.5 / hop_span
    } else {
        0.0
    }
}

/// Fill `out[i] = e^{-y/γ} f(i+2, y)` for the Erlang family of rate `rate` using the
/// recurrence f(k+1) = f(k)·rate·y/(k-1). Zero for y < 0. When the head term underflows
/// every term is below e^{-y/γ}·rate, which is negligible at such delays.
fn erlang_series(rate: f64, decay: f64, y: f64, out: &mut [f64]) {
    if y < 0.0 {
        out.iter_mut().for_each(|v| *v = 0.0);
        return;
    }
    let head = rate * (-(rate + 1.0 / decay) * y).exp();
    if head < 1e-300 {
        out.iter_mut().for_each(|v| *v = 0.0);
        return;
    }
    let ry = rate * y;
    let mut t = head;
    for (i, v) in out.iter_mut().enumerate() {
        if i > 0 {
            t *= ry / i as f64;
        }
        *v = t;
    }
}

/// Sum a term series per `trunc`. `compute(n)` returns the first `n` term integrals.
fn series<F>(name: &'static str, trunc: Truncation, first_index: usize, term_tol: f64, hint: usize, mut compute: F) -> Result<Estimate>
where
    F: FnMut(usize) -> Result<VecEstimate>,
{
    match trunc {
        Truncation::Fixed(last) => {
            let n = (last + 1).saturating_sub(first_index);
            if n == 0 {
                return Ok(Estimate { value: 0.0, error: 0.0, evals: 0 });
            }
            let r = compute(n)?;
            Ok(Estimate { value: r.values.iter().sum(), error: r.error, evals: r.evals })
        }
        Truncation::Adaptive { cap } => {
            let mut n = hint.clamp(1, cap);
            let mut evals = 0;
            loop {
                let r = compute(n)?;
                evals += r.evals;
                let mut running = 0.0;
                let mut err = 0.0;
                for i in 0..n {
                    running += r.values[i];
                    err += r.errors[i];
                    if r.values[i].abs() <= term_tol * running.abs() {
                        return Ok(Estimate { value: running, error: err, evals });
                    }
                }
                if n >= cap {
                    return Err(Error::TruncationCap { series: name, cap });
                }
                n = (2 * n).min(cap);
            }
        }
    }
}

/// Starting length for the ray series over delays in [0, y_max]: the smaller of a
/// Poisson-window bound and the geometric decay of e^{-y/γ}-weighted terms.
fn ray_terms_hint(params: &ChannelParams, y_max: f64, term_tol: f64) -> usize {
    let lam = params.ray_rate_2;
    let gamma = params.intra_cluster_decay_base * params.decay_multiplier;
    let window = lam * y_max + 10.0 * (lam * y_max).sqrt() + 10.0;
    let q = lam / (lam + 1.0 / gamma);
    let geometric = (term_tol * (1.0 - q)).ln() / q.ln() + 10.0;
    window.min(geometric).ceil() as usize
}

/// Ω₀ = 1/(γ₀[(1-β)λ₁ + βλ₂ + 1]), mean power of the desired ray.
pub fn omega0(params: &ChannelParams) -> f64 {
    1.0 / (params.intra_cluster_decay_base * params.power_normalizer())
}

/// Ω_Σ, the mean energy captured from earlier pulses.
///
/// Ω_Σ = Ω₀/(2T_s) Σ_l Σ_{s=1}^{N_I N_s - 1} ∫dτ_code ∫_0^x dT_l ∫_x^{τ_max} dT_{l+1}
/// e^{-T_l/Γ} e^{-(x-T_l)/γ} f_c(T_l) f_c(T_{l+1}), with x = sT_f + τ_code.
/// Cluster 1 arrives at T₁ = 0, so its T_l integral collapses to e^{-x/γ}. Terms with
/// x >= τ_max vanish.
pub fn omega_sigma(params: &ChannelParams, config: &SystemConfig, opts: &AnalyticOptions) -> Result<Estimate> {
    params.validate()?;
    config.validate()?;
    let tau_max = params.max_excess_delay;
    let tf = config.frame_time();
    let ts = config.hop_span;
    let lam = params.cluster_rate;
    let big_gamma = params.inter_cluster_decay;
    let gamma = params.intra_cluster_decay_base * params.decay_multiplier;
    let s_max = (config.interfering_periods(tau_max) * config.pulses_per_bit).saturating_sub(1);
    let inner = opts.quad.tightened(opts.inner_factor);
    let om0 = omega0(params);

    let active: Vec<usize> = (1..=s_max).filter(|&s| s as f64 * tf - ts < tau_max).collect();
    let breaks: Vec<f64> = active.iter().map(|&s| tau_max - s as f64 * tf).collect();

    // Term l pairs cluster l with cluster l+1, so L clusters give L-1 terms.
    let hint = (lam * tau_max + 10.0 * (lam * tau_max).sqrt() + 10.0).ceil() as usize;
    let est = series("cluster", opts.clusters, 2, opts.term_tol, hint, |n| {
        let mut failure: Option<Error> = None;
        let r = integrate_vec(
            |tc, out: &mut [f64]| {
                out.iter_mut().for_each(|v| *v = 0.0);
                for &s in &active {
                    let x = s as f64 * tf + tc;
                    if x >= tau_max || failure.is_some() {
                        continue;
                    }
                    // Head integrals A_l(x) for l = 2..=n (cluster 1 handled in closed form).
                    let a = if n > 1 {
                        integrate_vec(
                            |t, o: &mut [f64]| {
                                let w = (-t / big_gamma - (x - t) / gamma).exp();
                                erlang_series(lam, f64::INFINITY, t, o);
                                o.iter_mut().for_each(|v| *v *= w);
                            },
                            n - 1,
                            0.0,
                            x,
                            &[],
                            &inner,
                        )
                    } else {
                        Ok(VecEstimate { values: vec![], errors: vec![], error: 0.0, evals: 0 })
                    };
                    // Tail integrals B_l(x) = P(x < T_{l+1} < τ_max) for l = 1..=n.
                    let b = integrate_vec(|t, o: &mut [f64]| erlang_series(lam, f64::INFINITY, t, o), n, x, tau_max, &[], &inner);
                    match (a, b) {
                        (Ok(a), Ok(b)) => {
                            out[0] += (-x / gamma).exp() * b.values[0];
                            for l in 1..n {
                                out[l] += a.values[l - 1] * b.values[l];
                            }
                        }
                        (Err(e), _) | (_, Err(e)) => failure = Some(e),
                    }
                }
                out.iter_mut().for_each(|v| *v *= om0 * pdf_code_offset(tc, ts));
            },
            n,
            -ts,
            ts,
            &breaks,
            &opts.quad,
        );
        match failure {
            Some(e) => Err(e),
            None => r,
        }
    })?;
    // The outer estimate does not see inner errors; add their tolerance bound.
    Ok(Estimate { error: est.error + inner.rel_tol * est.value.abs(), ..est })
}

/// E_b = E_p F(ω₀) Ω₀ N_s².
pub fn signal_energy(config: &SystemConfig, params: &ChannelParams) -> f64 {
    let ns = config.pulses_per_bit as f64;
    config.pulse_energy * params.reference_gain() * omega0(params) * ns * ns
}

/// σ_n² = F(ω₀) N_s N₀ / 2.
pub fn noise_var(config: &SystemConfig, params: &ChannelParams) -> f64 {
    params.reference_gain() * config.pulses_per_bit as f64 * config.noise_psd / 2.0
}

fn prefactor(config: &SystemConfig, params: &ChannelParams) -> f64 {
    let ns = config.pulses_per_bit as f64;
    config.pulse_energy * params.reference_gain() * ns * ns
}

/// Σ_k ∫_lo^hi e^{-y/γ₁} f_p(k, y) R²(y) dy.
fn ray_integral(params: &ChannelParams, r: &Autocorrelation, lo: f64, hi: f64, opts: &AnalyticOptions) -> Result<Estimate> {
    let gamma = params.intra_cluster_decay_base * params.decay_multiplier;
    let lam = params.ray_rate_2;
    let mut breaks = r.nodes();
    breaks.extend(r.nodes().iter().map(|x| -x));
    let hint = ray_terms_hint(params, hi.abs().max(lo.abs()), opts.term_tol);
    series("ray", opts.rays, 2, opts.term_tol, hint, |n| {
        integrate_vec(
            |y, o: &mut [f64]| {
                erlang_series(lam, gamma, y, o);
                let r2 = r.eval(y).powi(2);
                o.iter_mut().for_each(|v| *v *= r2);
            },
            n,
            lo,
            hi,
            &breaks,
            &opts.quad,
        )
    })
}

/// σ²_IASI = F N_s² Σ_{k>=2} ∫_0^{T_m} Ω₀ e^{-y/γ₁} f_p(y) R²(y) dy (times E_p).
pub fn iasi_var(config: &SystemConfig, params: &ChannelParams, r: &Autocorrelation, opts: &AnalyticOptions) -> Result<Estimate> {
    params.validate()?;
    config.validate()?;
    let hi = opts.t_m(params).min(r.support());
    let s = ray_integral(params, r, 0.0, hi, opts)?;
    let k = prefactor(config, params) * omega0(params);
    Ok(Estimate { value: k * s.value, error: k * s.error, evals: s.evals })
}

/// σ²_ISI = F N_s² Σ_{k>=2} ∫_{-T_m}^{T_m} Ω_Σ e^{-y/γ₁} f_p(y) R²(y) dy (times E_p).
pub fn isi_var(
    config: &SystemConfig,
    params: &ChannelParams,
    r: &Autocorrelation,
    omega_sigma: f64,
    opts: &AnalyticOptions,
) -> Result<Estimate> {
    params.validate()?;
    config.validate()?;
    if omega_sigma == 0.0 {
        return Ok(Estimate { value: 0.0, error: 0.0, evals: 0 });
    }
    let hi = opts.t_m(params).min(r.support());
    let s = ray_integral(params, r, -hi, hi, opts)?;
    let k = prefactor(config, params) * omega_sigma;
    Ok(Estimate { value: k * s.value, error: k * s.error, evals: s.evals })
}

/// σ²_MUI = F R_b N_s² (N_u − 1) (Ω₀ + Ω_Σ) Σ_k ∫_{-T_f/2}^{T_f/2} ∫_{-z}^{T_m-z}
/// e^{-y/γ₁} f_p(y) R²(y+z) dy dz (times E_p).
///
/// The double integral is taken over the same region in the order u = y + z outer,
/// y inner: ∫_0^{T_m} R²(u) ∫_{u-T_f/2}^{u+T_f/2} e^{-y/γ₁} f_p(y) dy du. The outer
/// integrand then carries every kink of the interpolated R² and the inner one is smooth.
pub fn mui_var(
    config: &SystemConfig,
    params: &ChannelParams,
    r: &Autocorrelation,
    omega_sigma: f64,
    opts: &AnalyticOptions,
) -> Result<Estimate> {
    params.validate()?;
    config.validate()?;
    if config.users <= 1 {
        return Ok(Estimate { value: 0.0, error: 0.0, evals: 0 });
    }
    let u_hi = opts.t_m(params).min(r.support());
    let half = 0.5 * config.frame_time();
    let gamma = params.intra_cluster_decay_base * params.decay_multiplier;
    let lam = params.ray_rate_2;
    let inner = opts.quad.tightened(opts.inner_factor);
    let mut breaks = r.nodes();
    breaks.push(half);
    let hint = ray_terms_hint(params, u_hi + half, opts.term_tol);
    let s = series("ray", opts.rays, 2, opts.term_tol, hint, |n| {
        let mut failure: Option<Error> = None;
        let res = integrate_vec(
            |u, out: &mut [f64]| {
                let r2 = r.eval(u).powi(2);
                if r2 == 0.0 || failure.is_some() {
                    out.iter_mut().for_each(|v| *v = 0.0);
                    return;
                }
                let v = integrate_vec(|y, o: &mut [f64]| erlang_series(lam, gamma, y, o), n, (u - half).max(0.0), u + half, &[], &inner);
                match v {
                    Ok(v) => {
                        for (o, x) in out.iter_mut().zip(&v.values) {
                            *o = r2 * x;
                        }
                    }
                    Err(e) => {
                        failure = Some(e);
                        out.iter_mut().for_each(|v| *v = 0.0);
                    }
                }
            },
            n,
            0.0,
            u_hi,
            &breaks,
            &opts.quad,
        );
        match failure {
            Some(e) => Err(e),
            None => res,
        }
    })?;
    let k = prefactor(config, params) * config.rate_per_ns() * (config.users - 1) as f64 * (omega0(params) + omega_sigma);
    let error = s.error + inner.rel_tol * s.value.abs();
    Ok(Estimate { value: k * s.value, error: k * error, evals: s.evals })
}

/// SINR = E_b / (σ_n² + σ²_IASI + σ²_ISI + σ²_MUI).
pub fn sinr(signal: f64, noise: f64, iasi: f64, isi: f64, mui: f64) -> Result<f64> {
    let den = noise + iasi + isi + mui;
    if !(den > 0.0) {
        return Err(invalid("denominator", "noise and interference are all zero"));
    }
    Ok(signal / den)
}

/// BER = ½ erfc(√(SINR/2)).
pub fn ber_from_sinr(sinr: f64) -> f64 {
    0.5 * erfc((sinr.max(0.0) / 2.0).sqrt())
}

/// The SNR-independent part of the budget.
#[derive(Debug, Clone, PartialEq)]
pub struct InterferenceTerms {
    pub omega0: f64,
    pub omega_sigma: Estimate,
    pub signal: f64,
    pub iasi: Estimate,
    pub isi: Estimate,
    pub mui: Estimate,
}

impl InterferenceTerms {
    /// Sum of the interference variances.
    pub fn interference(&self) -> f64 {
        self.iasi.value + self.isi.value + self.mui.value
    }

    /// High-SNR limit ½ erfc(√(E_b / 2Σσ²)).
    pub fn floor_ber(&self) -> f64 {
        let i = self.interference();
        if i > 0.0 {
            ber_from_sinr(self.signal / i)
        } else {
            0.0
        }
    }
}

/// Compute every SNR-independent term.
pub fn interference_terms(
    config: &SystemConfig,
    params: &ChannelParams,
    r: &Autocorrelation,
    opts: &AnalyticOptions,
) -> Result<InterferenceTerms> {
    let os = omega_sigma(params, config, opts)?;
    Ok(InterferenceTerms {
        omega0: omega0(params),
        signal: signal_energy(config, params),
        iasi: iasi_var(config, params, r, opts)?,
        isi: isi_var(config, params, r, os.value, opts)?,
        mui: mui_var(config, params, r, os.value, opts)?,
        omega_sigma: os,
    })
}

/// The five energy terms at one operating point with SINR and BER.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InterferenceBudget {
    pub signal: f64,
    pub noise: f64,
    pub iasi: f64,
    pub isi: f64,
    pub mui: f64,
    pub sinr: f64,
    pub ber: f64,
}

impl InterferenceBudget {
    pub fn new(signal: f64, noise: f64, iasi: f64, isi: f64, mui: f64) -> Result<Self> {
        for (name, v) in [("noise", noise), ("iasi", iasi), ("isi", isi), ("mui", mui)] {
            if !(v >= 0.0) {
                return Err(invalid(name, "variance must be >= 0"));
            }
        }
        let s = sinr(signal, noise, iasi, isi, mui)?;
        Ok(InterferenceBudget { signal, noise, iasi, isi, mui, sinr: s, ber: ber_from_sinr(s) })
    }
}

/// Full budget for one configuration.
pub fn budget(config: &SystemConfig, params: &ChannelParams, r: &Autocorrelation, opts: &AnalyticOptions) -> Result<InterferenceBudget> {
    let t = interference_terms(config, params, r, opts)?;
    InterferenceBudget::new(t.signal, noise_var(config, params), t.iasi.value, t.isi.value, t.mui.value)
}

/// One point of a BER curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BerPoint {
    /// E_p/N₀ (dB).
    pub snr_db: f64,
    pub sinr: f64,
    pub ber: f64,
}

/// Sweep E_p/N₀ over `snr_db`; interference terms are computed once.
pub fn ber_curve(
    config: &SystemConfig,
    params: &ChannelParams,
    r: &Autocorrelation,
    snr_db: &[f64],
    opts: &AnalyticOptions,
) -> Result<(InterferenceTerms, Vec<BerPoint>)> {
    if snr_db.is_empty() {
        return Err(invalid("snr_grid", "empty SNR grid"));
    }
    let t = interference_terms(config, params, r, opts)?;
    let pts = curve_from_terms(&t, config, params, snr_db)?;
    Ok((t, pts))
}

/// BER curve from precomputed terms.
pub fn curve_from_terms(t: &InterferenceTerms, config: &SystemConfig, params: &ChannelParams, snr_db: &[f64]) -> Result<Vec<BerPoint>> {
    snr_db
        .iter()
        .map(|&s| {
            let c = config.at_snr_db(s);
            let b = InterferenceBudget::new(t.signal, noise_var(&c, params), t.iasi.value, t.isi.value, t.mui.value)?;
            Ok(BerPoint { snr_db: s, sinr: b.sinr, ber: b.ber })
        })
        .collect()
}

/// One cell of an interference table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TableCell {
    pub data_rate_mbps: f64,
    pub users: usize,
    pub iasi: f64,
    pub isi: f64,
    pub mui: f64,
}

/// IASI/ISI/MUI for every (rate, users) pair; cells are evaluated in parallel.
pub fn interference_table(
    base: &SystemConfig,
    params: &ChannelParams,
    r: &Autocorrelation,
    rates_mbps: &[f64],
    users: &[usize],
    opts: &AnalyticOptions,
) -> Result<Vec<TableCell>> {
    if users.contains(&0) {
        return Err(invalid("users", "must be >= 1"));
    }
    // MUI is linear in (N_u - 1): evaluate it once per rate at two users and scale.
    let need_mui = users.iter().any(|&u| u > 1);
    let per_rate: Vec<(f64, f64, f64)> = rates_mbps
        .par_iter()
        .map(|&rate| {
            let c = SystemConfig { data_rate_mbps: rate, ..base.clone() };
            let os = omega_sigma(params, &c, opts)?;
            let isi = isi_var(&c, params, r, os.value, opts)?;
            let unit = if need_mui { mui_var(&SystemConfig { users: 2, ..c.clone() }, params, r, os.value, opts)?.value } else { 0.0 };
            Ok((rate, isi.value, unit))
        })
        .collect::<Result<_>>()?;
    let iasi = iasi_var(base, params, r, opts)?.value;
    Ok(per_rate
        .iter()
        .flat_map(|&(rate, isi, unit)| {
            users.iter().map(move |&u| TableCell { data_rate_mbps: rate, users: u, iasi, isi, mui: unit * u.saturating_sub(1) as f64 })
        })
        .collect())
}

fn g6(x: f64) -> String {
    format!("{x:.5e}")
}

/// CSV `snr_db,sinr,ber`.
pub fn write_ber_csv<W: Write>(mut w: W, pts: &[BerPoint]) -> Result<()> {
    writeln!(w, "snr_db,sinr,ber")?;
    for p in pts {
        writeln!(w, "{},{},{}", g6(p.snr_db), g6(p.sinr), g6(p.ber))?;
    }
    Ok(())
}

/// CSV `data_rate_mbps,users,iasi,isi,mui`.
pub fn write_table_csv<W: Write>(mut w: W, cells: &[TableCell]) -> Result<()> {
    writeln!(w, "data_rate_mbps,users,iasi,isi,mui")?;
    for c in cells {
        writeln!(w, "{},{},{},{},{}", g6(c.data_rate_mbps), c.users, g6(c.iasi), g6(c.isi), g6(c.mui))?;
    }
    Ok(())
}
