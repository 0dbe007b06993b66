//! IEEE 802.15.4a indoor-office LOS channel (Saleh-Valenzuela with Nakagami fading).
//!
//! Clusters arrive as a Poisson process of rate Λ starting at zero. Inside a cluster the
//! ray gaps follow a two-rate exponential mixture. Tap powers decay exponentially within
//! a cluster and across clusters, with log-normal cluster shadowing, and tap magnitudes
//! are Nakagami-m with a random polarity.
//!
//! Two conventions for the ray-mixture weight coexist on purpose. The sampler draws a
//! gap of rate λ₁ with probability β ([`ChannelParams::sampler_weights`]), while the
//! tap-power normaliser uses `(1-β)λ₁ + βλ₂ + 1` ([`ChannelParams::power_normalizer`]).

mod io;
mod realization;

pub use io::{read_realization, write_realization};
pub use realization::{
    frequency_response, generate_realization, generate_untruncated, ChannelRealization, Cluster, FreqMode, FrequencyResponse, Tap,
};

use rand_distr::{Distribution, Exp1, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{invalid, Result};

/// Constants of the stochastic channel model.
///
/// Defaults are the office-LOS set ([`ChannelParams::office_los`]). Every field can be
/// overridden from a configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelParams {
    /// Cluster arrival rate Λ (1/ns).
    pub cluster_rate: f64,
    /// Ray arrival rate λ₁ (1/ns).
    pub ray_rate_1: f64,
    /// Ray arrival rate λ₂ (1/ns).
    pub ray_rate_2: f64,
    /// Mixture probability β.
    pub mixture_prob: f64,
    /// Inter-cluster decay Γ (ns).
    pub inter_cluster_decay: f64,
    /// Intra-cluster decay at zero delay γ₀ (ns).
    pub intra_cluster_decay_base: f64,
    /// Slope k_r of the intra-cluster decay versus cluster arrival time.
    pub decay_slope: f64,
    /// Proportionality constant in γ_l = c·(k_r T_l + γ₀).
    pub decay_multiplier: f64,
    /// Cluster shadowing standard deviation M_cluster (dB).
    pub cluster_shadowing_db: f64,
    /// Mean of the log-normal Nakagami-m law, in dB (m = 10^(x/10), x ~ N(mean, std)).
    pub nakagami_m_mean: f64,
    /// Standard deviation of the log-normal Nakagami-m law (dB).
    pub nakagami_m_std: f64,
    /// Lower clamp on sampled m values (the Nakagami law needs m >= 0.5).
    pub nakagami_m_min: f64,
    /// Nakagami m of the desired (first) ray. `None` keeps it deterministic and positive.
    pub first_path_m: Option<f64>,
    /// Frequency-dependence constant C₀ of F(ω) = C₀ (ω/ω₀)^-κ (power gain).
    pub freq_c0: f64,
    /// Frequency-dependence exponent κ.
    pub freq_kappa: f64,
    /// Reference angular frequency ω₀ (rad/s).
    pub freq_omega0: f64,
    /// Maximum excess delay τ_max (ns).
    pub max_excess_delay: f64,
    /// Tap truncation threshold relative to the strongest tap (dB, negative).
    pub truncation_db: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self::office_los()
    }
}

impl ChannelParams {
    /// Indoor office, line of sight.
    pub fn office_los() -> Self {
        ChannelParams {
            cluster_rate: 0.016,
            ray_rate_1: 0.19,
            ray_rate_2: 2.97,
            mixture_prob: 0.0184,
            inter_cluster_decay: 14.6,
            intra_cluster_decay_base: 6.4,
            decay_slope: 0.0,
            decay_multiplier: 1.0,
            cluster_shadowing_db: 3.0,
            nakagami_m_mean: 0.42,
            nakagami_m_std: 0.31,
            nakagami_m_min: 0.5,
            first_path_m: None,
            freq_c0: 0.0625,
            freq_kappa: 0.03,
            freq_omega0: 2.0 * std::f64::consts::PI * 5.0e9,
            max_excess_delay: 250.0,
            truncation_db: -30.0,
        }
    }

    /// Check every field; the error names the first offending field.
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("cluster_rate", self.cluster_rate),
            ("ray_rate_1", self.ray_rate_1),
            ("ray_rate_2", self.ray_rate_2),
            ("inter_cluster_decay", self.inter_cluster_decay),
            ("intra_cluster_decay_base", self.intra_cluster_decay_base),
            ("decay_multiplier", self.decay_multiplier),
            ("freq_c0", self.freq_c0),
            ("freq_omega0", self.freq_omega0),
            ("max_excess_delay", self.max_excess_delay),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(name, format!("must be finite and > 0, got {v}")));
            }
        }
        let non_negative = [
            ("decay_slope", self.decay_slope),
            ("cluster_shadowing_db", self.cluster_shadowing_db),
            ("nakagami_m_std", self.nakagami_m_std),
        ];
        for (name, v) in non_negative {
            if !(v.is_finite() && v >= 0.0) {
                return Err(invalid(name, format!("must be finite and >= 0, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.mixture_prob) {
            return Err(invalid("mixture_prob", format!("must lie in [0, 1], got {}", self.mixture_prob)));
        }
        if !self.nakagami_m_mean.is_finite() {
            return Err(invalid("nakagami_m_mean", "must be finite"));
        }
        if !(self.nakagami_m_min >= 0.5) {
            return Err(invalid("nakagami_m_min", format!("must be >= 0.5, got {}", self.nakagami_m_min)));
        }
        if let Some(m) = self.first_path_m {
            if !(m >= 0.5) {
                return Err(invalid("first_path_m", format!("must be >= 0.5, got {m}")));
            }
        }
        if !self.freq_kappa.is_finite() {
            return Err(invalid("freq_kappa", "must be finite"));
        }
        if !(self.truncation_db < 0.0) {
            return Err(invalid("truncation_db", format!("must be < 0 dB, got {}", self.truncation_db)));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON encoding, hex encoded.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("params serialise");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    /// Weights `(on λ₁, on λ₂)` used by the ray-gap sampler: `(β, 1-β)`.
    pub fn sampler_weights(&self) -> (f64, f64) {
        (self.mixture_prob, 1.0 - self.mixture_prob)
    }

    /// Tap-power normaliser `(1-β)λ₁ + βλ₂ + 1` (1/ns, dimensionless once multiplied by γ).
    pub fn power_normalizer(&self) -> f64 {
        (1.0 - self.mixture_prob) * self.ray_rate_1 + self.mixture_prob * self.ray_rate_2 + 1.0
    }

    /// Power gain F(ω) = C₀ (ω/ω₀)^-κ at angular frequency `omega` (rad/s).
    pub fn frequency_gain(&self, omega: f64) -> f64 {
        self.freq_c0 * (omega / self.freq_omega0).powf(-self.freq_kappa)
    }

    /// F(ω₀) = C₀, the flat gain applied to every tap power.
    pub fn reference_gain(&self) -> f64 {
        self.freq_c0
    }
}

/// Cluster arrival times: `T₁ = 0`, then exponential gaps of rate Λ until τ_max is passed.
pub fn sample_cluster_arrivals<R: rand::Rng + ?Sized>(params: &ChannelParams, rng: &mut R) -> Vec<f64> {
    let mut out = vec![0.0];
    let mut t = 0.0;
    loop {
        let gap: f64 = Exp1.sample(rng);
        t += gap / params.cluster_rate;
        if t > params.max_excess_delay {
            return out;
        }
        out.push(t);
    }
}

/// Ray delays inside one cluster: first ray at 0, then gaps from the two-rate mixture
/// (rate λ₁ with probability β, λ₂ otherwise) until `cluster_span` is passed.
pub fn sample_ray_arrivals<R: rand::Rng + ?Sized>(params: &ChannelParams, cluster_span: f64, rng: &mut R) -> Vec<f64> {
    let (w1, _) = params.sampler_weights();
    let mut out = vec![0.0];
    let mut tau = 0.0;
    loop {
        let rate = if rng.random::<f64>() < w1 { params.ray_rate_1 } else { params.ray_rate_2 };
        let gap: f64 = Exp1.sample(rng);
        tau += gap / rate;
        if tau > cluster_span {
            return out;
        }
        out.push(tau);
    }
}

/// Mean power E[α²] of a ray at intra-cluster delay `tau` in a cluster of energy `omega_l`
/// and decay `gamma_l`.
pub fn mean_tap_power(params: &ChannelParams, omega_l: f64, gamma_l: f64, tau: f64) -> Result<f64> {
    if !(gamma_l > 0.0) {
        return Err(invalid("gamma_l", format!("decay constant must be > 0, got {gamma_l}")));
    }
    Ok(omega_l * (-tau / gamma_l).exp() / (gamma_l * params.power_normalizer()))
}

/// Cluster energy Ω_l from `10 log Ω_l = 10 log e^(-T_l/Γ) + M` with shadowing draw `M` in dB.
pub fn cluster_energy(params: &ChannelParams, t_l: f64, shadowing_db: f64) -> f64 {
    (-t_l / params.inter_cluster_decay).exp() * 10f64.powf(shadowing_db / 10.0)
}

/// Intra-cluster decay constant γ_l = c·(k_r T_l + γ₀).
pub fn intra_cluster_decay(params: &ChannelParams, t_l: f64) -> f64 {
    params.decay_multiplier * (params.decay_slope * t_l + params.intra_cluster_decay_base)
}

/// Signed Nakagami-(m, Ω) amplitude: `|α|² ~ Gamma(m, Ω/m)`, polarity ±1 equiprobable.
pub fn sample_nakagami_amplitude<R: rand::Rng + ?Sized>(m: f64, omega: f64, rng: &mut R) -> Result<f64> {
    if !(m >= 0.5) {
        return Err(invalid("m", format!("Nakagami shape must be >= 0.5, got {m}")));
    }
    if !(omega > 0.0) {
        return Err(invalid("omega", format!("mean-square must be > 0, got {omega}")));
    }
    let g = Gamma::new(m, omega / m).map_err(|e| invalid("m", e.to_string()))?;
    let mag = g.sample(rng).sqrt();
    Ok(if rng.random::<bool>() { mag } else { -mag })
}

/// Draw one Nakagami shape from the log-normal m-law, clamped below at `nakagami_m_min`.
pub fn sample_nakagami_m<R: rand::Rng + ?Sized>(params: &ChannelParams, rng: &mut R) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    let m_db = params.nakagami_m_mean + params.nakagami_m_std * z;
    10f64.powf(m_db / 10.0).max(params.nakagami_m_min)
}

/// Nakagami-(m, Ω) magnitude CDF, `P(m, m x²/Ω)` with `P` the regularised lower gamma.
pub fn nakagami_cdf(m: f64, omega: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    statrs::function::gamma::gamma_lr(m, m * x * x / omega)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn office_los_is_valid() {
        ChannelParams::office_los().validate().unwrap();
    }

    #[test]
    fn validation_names_field() {
        let p = ChannelParams { cluster_rate: -1.0, ..Default::default() };
        let e = p.validate().unwrap_err().to_string();
        assert!(e.contains("cluster_rate"), "{e}");
        let p = ChannelParams { mixture_prob: 1.5, ..Default::default() };
        assert!(p.validate().unwrap_err().to_string().contains("mixture_prob"));
        let p = ChannelParams { truncation_db: 0.0, ..Default::default() };
        assert!(p.validate().unwrap_err().to_string().contains("truncation_db"));
    }

    #[test]
    fn zero_delay_spread_gives_single_cluster() {
        let p = ChannelParams { max_excess_delay: 0.0, ..Default::default() };
        let mut r = rng::from_seed(3);
        assert_eq!(sample_cluster_arrivals(&p, &mut r), vec![0.0]);
    }

    #[test]
    fn mean_tap_power_at_zero_delay() {
        let p = ChannelParams::office_los();
        let g = 6.4;
        let v = mean_tap_power(&p, 2.0, g, 0.0).unwrap();
        assert!((v - 2.0 / (g * p.power_normalizer())).abs() < 1e-15);
        let half = mean_tap_power(&p, 2.0, g, g * std::f64::consts::LN_2).unwrap();
        assert!((half / v - 0.5).abs() < 1e-14);
        assert!(mean_tap_power(&p, 1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn cluster_energy_closed_forms() {
        let p = ChannelParams::office_los();
        assert_eq!(cluster_energy(&p, 0.0, 0.0), 1.0);
        let e = cluster_energy(&p, p.inter_cluster_decay, 0.0);
        assert!((e - (-1f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn decay_is_linear_in_arrival() {
        let p = ChannelParams { decay_slope: 0.5, ..Default::default() };
        assert_eq!(intra_cluster_decay(&p, 0.0), p.intra_cluster_decay_base);
        assert!(intra_cluster_decay(&p, 10.0) > intra_cluster_decay(&p, 5.0));
        let flat = ChannelParams::office_los();
        assert_eq!(intra_cluster_decay(&flat, 100.0), flat.intra_cluster_decay_base);
    }

    #[test]
    fn nakagami_rejects_small_m() {
        let mut r = rng::from_seed(1);
        assert!(sample_nakagami_amplitude(0.4, 1.0, &mut r).is_err());
    }

    #[test]
    fn frequency_gain_at_reference() {
        let p = ChannelParams::office_los();
        assert_eq!(p.frequency_gain(p.freq_omega0), p.freq_c0);
    }

    #[test]
    fn hash_tracks_content() {
        let a = ChannelParams::office_los();
        let b = ChannelParams { ray_rate_2: 3.0, ..a.clone() };
        assert_eq!(a.hash(), ChannelParams::office_los().hash());
        assert_ne!(a.hash(), b.hash());
    }
}
