//! Channel realizations and their frequency response.

use num_complex::Complex64;
use rand_distr::{Distribution, Normal};

use super::{
    cluster_energy, intra_cluster_decay, mean_tap_power, sample_cluster_arrivals, sample_nakagami_amplitude, sample_nakagami_m,
    sample_ray_arrivals, ChannelParams,
};
use crate::error::{invalid, Result};
use crate::rng;

/// One cluster of a realization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cluster {
    /// Arrival time T_l (ns).
    pub arrival: f64,
    /// Integrated cluster energy Ω_l (linear).
    pub energy: f64,
    /// Intra-cluster decay constant γ_l (ns).
    pub decay: f64,
}

/// One resolvable path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tap {
    /// Index into [`ChannelRealization::clusters`].
    pub cluster: usize,
    /// Delay relative to the cluster arrival τ_{k,l} (ns).
    pub delay: f64,
    /// Signed amplitude α_{k,l}, already scaled by √F(ω₀).
    pub amplitude: f64,
}

/// A seeded draw of the tapped delay line.
///
/// Taps are grouped by cluster and sorted by delay inside each cluster. The first tap of
/// cluster 0 sits at absolute delay 0 and is the desired ray.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub clusters: Vec<Cluster>,
    pub taps: Vec<Tap>,
    pub seed: u64,
    pub params_hash: String,
}

impl ChannelRealization {
    /// Absolute delay T_l + τ_{k,l} of a tap.
    pub fn absolute_delay(&self, tap: &Tap) -> f64 {
        self.clusters[tap.cluster].arrival + tap.delay
    }

    /// `(absolute delay, amplitude)` pairs sorted by delay.
    pub fn paths(&self) -> Vec<(f64, f64)> {
        let mut v: Vec<(f64, f64)> = self.taps.iter().map(|t| (self.absolute_delay(t), t.amplitude)).collect();
        v.sort_by(|a, b| a.0.total_cmp(&b.0));
        v
    }

    /// The desired ray (first ray of the first cluster).
    pub fn desired(&self) -> &Tap {
        &self.taps[0]
    }

    /// Σ α².
    pub fn total_energy(&self) -> f64 {
        self.taps.iter().map(|t| t.amplitude * t.amplitude).sum()
    }

    /// Power-weighted RMS delay spread (ns).
    pub fn rms_delay_spread(&self) -> f64 {
        let (mut e, mut m1, mut m2) = (0.0, 0.0, 0.0);
        for t in &self.taps {
            let p = t.amplitude * t.amplitude;
            let d = self.absolute_delay(t);
            e += p;
            m1 += p * d;
            m2 += p * d * d;
        }
        if e == 0.0 {
            return 0.0;
        }
        let mean = m1 / e;
        (m2 / e - mean * mean).max(0.0).sqrt()
    }

    /// Verify the structural invariants against a maximum excess delay.
    pub fn check_invariants(&self, max_excess_delay: f64) -> Result<()> {
        let first = self.clusters.first().ok_or_else(|| invalid("clusters", "empty realization"))?;
        if first.arrival != 0.0 {
            return Err(invalid("clusters", "first cluster must arrive at 0"));
        }
        for w in self.clusters.windows(2) {
            if !(w[1].arrival > w[0].arrival) {
                return Err(invalid("clusters", "arrival times must strictly increase"));
            }
        }
        let mut prev: Option<&Tap> = None;
        for t in &self.taps {
            if t.cluster >= self.clusters.len() {
                return Err(invalid("taps", "cluster index out of range"));
            }
            match prev {
                Some(p) if p.cluster == t.cluster => {
                    if !(t.delay > p.delay) {
                        return Err(invalid("taps", "ray delays must strictly increase within a cluster"));
                    }
                }
                Some(p) if t.cluster != p.cluster + 1 => {
                    return Err(invalid("taps", "taps must be grouped by consecutive cluster"));
                }
                _ => {
                    if t.delay != 0.0 {
                        return Err(invalid("taps", "first ray of a cluster must have zero delay"));
                    }
                }
            }
            if self.absolute_delay(t) > max_excess_delay {
                return Err(invalid("taps", "tap beyond the maximum excess delay"));
            }
            prev = Some(t);
        }
        if self.taps.last().map(|t| t.cluster + 1) != Some(self.clusters.len()) {
            return Err(invalid("clusters", "every cluster must hold at least one tap"));
        }
        Ok(())
    }
}

/// Draw a realization and drop taps below the truncation threshold.
///
/// The desired ray is never dropped. A cluster whose head ray is dropped is re-anchored
/// at its first surviving ray so that every cluster still starts at zero intra-cluster
/// delay; absolute delays are unchanged.
pub fn generate_realization(params: &ChannelParams, seed: u64) -> Result<ChannelRealization> {
    let raw = generate_untruncated(params, seed)?;
    Ok(truncate(raw, params.truncation_db))
}

/// Draw a realization without truncation.
pub fn generate_untruncated(params: &ChannelParams, seed: u64) -> Result<ChannelRealization> {
    params.validate()?;
    let mut rng = rng::from_seed(seed);
    let f0 = params.reference_gain();
    let shadow = Normal::new(0.0, params.cluster_shadowing_db).map_err(|e| invalid("cluster_shadowing_db", e.to_string()))?;
    let arrivals = sample_cluster_arrivals(params, &mut rng);
    let mut clusters = Vec::with_capacity(arrivals.len());
    let mut taps = Vec::new();
    for (l, &t_l) in arrivals.iter().enumerate() {
        // The reference cluster carries unit energy; later clusters are shadowed.
        let m_db = if l == 0 { 0.0 } else { shadow.sample(&mut rng) };
        let energy = cluster_energy(params, t_l, m_db);
        let decay = intra_cluster_decay(params, t_l);
        clusters.push(Cluster { arrival: t_l, energy, decay });
        let rays = sample_ray_arrivals(params, params.max_excess_delay - t_l, &mut rng);
        for (k, &tau) in rays.iter().enumerate() {
            let power = f0 * mean_tap_power(params, energy, decay, tau)?;
            let amplitude = if l == 0 && k == 0 {
                match params.first_path_m {
                    None => power.sqrt(),
                    Some(m) => sample_nakagami_amplitude(m, power, &mut rng)?,
                }
            } else {
                let m = sample_nakagami_m(params, &mut rng);
                sample_nakagami_amplitude(m, power, &mut rng)?
            };
            taps.push(Tap { cluster: l, delay: tau, amplitude });
        }
    }
    Ok(ChannelRealization { clusters, taps, seed, params_hash: params.hash() })
}

fn truncate(raw: ChannelRealization, threshold_db: f64) -> ChannelRealization {
    let peak = raw.taps.iter().map(|t| t.amplitude * t.amplitude).fold(0.0, f64::max);
    let floor = peak * 10f64.powf(threshold_db / 10.0);
    // (absolute arrival of rebased cluster, original cluster, taps with absolute delays)
    type Group = (f64, Cluster, Vec<(f64, f64)>);
    let mut groups: Vec<Group> = Vec::new();
    for (l, c) in raw.clusters.iter().enumerate() {
        let kept: Vec<(f64, f64)> = raw
            .taps
            .iter()
            .enumerate()
            .filter(|(i, t)| t.cluster == l && (*i == 0 || t.amplitude * t.amplitude >= floor))
            .map(|(_, t)| (c.arrival + t.delay, t.amplitude))
            .collect();
        if let Some(&(head, _)) = kept.first() {
            groups.push((head, *c, kept));
        }
    }
    groups.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut clusters = Vec::with_capacity(groups.len());
    let mut taps = Vec::new();
    for (l, (head, c, kept)) in groups.into_iter().enumerate() {
        clusters.push(Cluster { arrival: head, ..c });
        for (abs, a) in kept {
            taps.push(Tap { cluster: l, delay: abs - head, amplitude: a });
        }
    }
    ChannelRealization { clusters, taps, seed: raw.seed, params_hash: raw.params_hash }
}

/// How F(ω) enters the frequency response.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FreqMode {
    /// Exact power law C₀ (ω/ω₀)^-κ.
    Full,
    /// First-order expansion of F about `center` (rad/s).
    Taylor { center: f64 },
    /// F(ω) ≈ F(ω₀), the approximation baked into the tap amplitudes.
    Flat,
}

/// Complex channel response on an angular-frequency grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyResponse {
    /// Grid (rad/s), strictly increasing.
    pub frequencies: Vec<f64>,
    pub values: Vec<Complex64>,
}

/// Evaluate H(ω) = √(F(ω)/F(ω₀)) Σ α e^{-jω(T_l+τ)} on `grid` (rad/s).
///
/// Tap amplitudes already carry √F(ω₀), so `Flat` is the plain multipath sum and the
/// other modes apply the residual gain relative to ω₀. Delays are converted from ns.
pub fn frequency_response(real: &ChannelRealization, grid: &[f64], params: &ChannelParams, mode: FreqMode) -> Result<FrequencyResponse> {
    if grid.is_empty() {
        return Err(invalid("grid", "frequency grid is empty"));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(invalid("grid", "frequency grid must be strictly increasing"));
    }
    if mode == FreqMode::Full && params.freq_kappa != 0.0 && grid[0] <= 0.0 {
        return Err(invalid("grid", "non-positive frequency with kappa != 0"));
    }
    let f0 = params.reference_gain();
    let paths = real.paths();
    let values = grid
        .iter()
        .map(|&w| {
            let gain = match mode {
                FreqMode::Flat => 1.0,
                FreqMode::Full => (params.frequency_gain(w) / f0).sqrt(),
                FreqMode::Taylor { center } => {
                    let fc = params.frequency_gain(center);
                    let slope = -params.freq_kappa * fc / center;
                    ((fc + slope * (w - center)).max(0.0) / f0).sqrt()
                }
            };
            let h: Complex64 = paths.iter().map(|&(d, a)| Complex64::from_polar(a, -w * d * 1e-9)).sum();
            h * gain
        })
        .collect();
    Ok(FrequencyResponse { frequencies: grid.to_vec(), values })
}
