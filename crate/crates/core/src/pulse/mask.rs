//! Piecewise-linear (in dB) spectral masks.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Lower 802.15.4a band edges (MHz).
pub const LOWER_BAND: (f64, f64) = (3244.0, 4742.0);
/// Upper 802.15.4a band edges (MHz).
pub const UPPER_BAND: (f64, f64) = (5944.0, 10234.0);

/// One mask segment; the ceiling varies linearly in dB from `level_lo_db` at `f_lo` to
/// `level_hi_db` at `f_hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaskSegment {
    pub f_lo: f64,
    pub f_hi: f64,
    pub level_lo_db: f64,
    pub level_hi_db: f64,
}

/// Ceiling on the peak-normalised PSD, in dB, as a function of frequency (MHz).
///
/// Frequencies covered by no segment are unconstrained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralMask {
    /// Band whose energy the synthesizer maximises (MHz).
    pub passband: (f64, f64),
    pub segments: Vec<MaskSegment>,
}

/// Shape of the default band mask outside the passband.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaskLevels {
    /// Ceiling reached at `f_lo/far_factor` and `f_hi*far_factor` (dB).
    pub transition_db: f64,
    /// Ceiling beyond the transition bands (dB).
    pub far_db: f64,
    /// Width of the transition bands as a frequency ratio.
    pub far_factor: f64,
}

impl Default for MaskLevels {
    fn default() -> Self {
        MaskLevels { transition_db: -20.0, far_db: -30.0, far_factor: 1.5 }
    }
}

/// Which 802.15.4a band.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Band {
    Lower,
    Upper,
}

impl Band {
    pub fn edges(self) -> (f64, f64) {
        match self {
            Band::Lower => LOWER_BAND,
            Band::Upper => UPPER_BAND,
        }
    }
}

impl std::str::FromStr for Band {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lower" => Ok(Band::Lower),
            "upper" => Ok(Band::Upper),
            _ => Err(invalid("band", format!("expected `lower` or `upper`, got `{s}`"))),
        }
    }
}

impl SpectralMask {
    /// 0 dB in `[f_lo, f_hi]`, linear-in-dB roll-off to `transition_db` over the
    /// transition bands, `far_db` beyond.
    pub fn band(f_lo: f64, f_hi: f64, levels: MaskLevels) -> Self {
        let a = f_lo / levels.far_factor;
        let b = f_hi * levels.far_factor;
        let (t, far) = (levels.transition_db, levels.far_db);
        SpectralMask {
            passband: (f_lo, f_hi),
            segments: vec![
                MaskSegment { f_lo: 0.0, f_hi: a, level_lo_db: far, level_hi_db: far },
                MaskSegment { f_lo: a, f_hi: f_lo, level_lo_db: t, level_hi_db: 0.0 },
                MaskSegment { f_lo, f_hi, level_lo_db: 0.0, level_hi_db: 0.0 },
                MaskSegment { f_lo: f_hi, f_hi: b, level_lo_db: 0.0, level_hi_db: t },
                MaskSegment { f_lo: b, f_hi: f64::INFINITY, level_lo_db: far, level_hi_db: far },
            ],
        }
    }

    /// Stepped mask: 0 dB in band, `out_db` out of band, `far_db` beyond
    /// `f_lo/far_factor` and `f_hi*far_factor`.
    pub fn stepped(f_lo: f64, f_hi: f64, out_db: f64, far_db: f64, far_factor: f64) -> Self {
        let a = f_lo / far_factor;
        let b = f_hi * far_factor;
        let flat = |lo, hi, l| MaskSegment { f_lo: lo, f_hi: hi, level_lo_db: l, level_hi_db: l };
        SpectralMask {
            passband: (f_lo, f_hi),
            segments: vec![
                flat(0.0, a, far_db),
                flat(a, f_lo, out_db),
                flat(f_lo, f_hi, 0.0),
                flat(f_hi, b, out_db),
                flat(b, f64::INFINITY, far_db),
            ],
        }
    }

    /// Default mask for one of the two bands.
    pub fn for_band(band: Band, levels: MaskLevels) -> Self {
        let (lo, hi) = band.edges();
        Self::band(lo, hi, levels)
    }

    /// Structural checks. A degenerate passband is reported as infeasible.
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.passband;
        if !(lo.is_finite() && hi.is_finite() && lo >= 0.0) {
            return Err(invalid("passband", "edges must be finite and non-negative"));
        }
        if !(hi > lo) {
            return Err(Error::Infeasible(format!("zero-width passband [{lo}, {hi}] MHz")));
        }
        for s in &self.segments {
            if !(s.f_hi > s.f_lo) || s.f_lo < 0.0 {
                return Err(invalid("segments", format!("segment [{}, {}] is empty", s.f_lo, s.f_hi)));
            }
            if !(s.level_lo_db.is_finite() && s.level_hi_db.is_finite()) {
                return Err(invalid("segments", "levels must be finite"));
            }
        }
        for w in self.segments.windows(2) {
            if w[1].f_lo < w[0].f_hi {
                return Err(invalid("segments", "segments must be sorted and non-overlapping"));
            }
        }
        Ok(())
    }

    /// Ceiling in dB at `f_mhz`, or `None` when unconstrained. At a shared edge the
    /// tighter of the two segments applies.
    pub fn ceiling_db(&self, f_mhz: f64) -> Option<f64> {
        let mut best: Option<f64> = None;
        for s in &self.segments {
            if f_mhz >= s.f_lo && f_mhz <= s.f_hi {
                let level = if s.f_hi.is_infinite() || s.level_lo_db == s.level_hi_db {
                    s.level_lo_db
                } else {
                    s.level_lo_db + (s.level_hi_db - s.level_lo_db) * (f_mhz - s.f_lo) / (s.f_hi - s.f_lo)
                };
                best = Some(best.map_or(level, |b: f64| b.min(level)));
            }
        }
        best
    }

    pub fn in_passband(&self, f_mhz: f64) -> bool {
        f_mhz >= self.passband.0 && f_mhz <= self.passband.1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn band_mask_levels() {
        let m = SpectralMask::for_band(Band::Lower, MaskLevels::default());
        m.validate().unwrap();
        assert_eq!(m.ceiling_db(4000.0), Some(0.0));
        assert_eq!(m.ceiling_db(100.0), Some(-30.0));
        assert_eq!(m.ceiling_db(20000.0), Some(-30.0));
        let mid = 0.5 * (4742.0 + 4742.0 * 1.5);
        assert!((m.ceiling_db(mid).unwrap() + 10.0).abs() < 1e-12);
    }

    #[test]
    fn zero_width_passband_is_infeasible() {
        let m = SpectralMask::band(4000.0, 4000.0, MaskLevels::default());
        assert!(matches!(m.validate(), Err(Error::Infeasible(_))));
    }

    #[test]
    fn band_parses() {
        assert_eq!("upper".parse::<Band>().unwrap(), Band::Upper);
        assert!("middle".parse::<Band>().is_err());
    }
}
