//! Mask-constrained pulse synthesis over a Gaussian kernel bank.
//!
//! The PSD of Σ c_k g(t - kD) is sampled on a uniform grid. We maximise the in-band
//! share of the energy, c'A_in c / c'A_tot c, subject to the peak-normalised PSD staying
//! under the mask at every grid point. Coordinates are whitened by the Cholesky factor
//! of A_tot, which turns the ratio into a quadratic form on the unit sphere. Mask
//! constraints enter through a quadratic penalty whose weight grows tenfold per stage;
//! each stage runs projected gradient ascent with step doubling and halving. The
//! result is then re-checked on the FFT grid of the sampled pulse, and only a compliant
//! pulse is returned.

use nalgebra::DMatrix;

use super::{check_mask, KernelBank, MaskReport, Pulse, SpectralMask};
use crate::error::{invalid, Error, Result};

/// Optimizer settings.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisOptions {
    /// Upper end of the design and check grid (MHz).
    pub fmax_mhz: f64,
    /// Points on the design grid, including 0 and `fmax_mhz`.
    pub grid_points: usize,
    /// Out-of-band design margin below the mask (dB).
    pub margin_db: f64,
    /// Stop a stage when the objective changes by less than this.
    pub tol: f64,
    /// Iteration cap per penalty stage.
    pub max_iter: usize,
    /// Initial penalty weight.
    pub mu0: f64,
    /// Penalty growth per stage.
    pub mu_growth: f64,
    pub max_stages: usize,
    /// Bin width of the final compliance check (MHz).
    pub check_resolution_mhz: f64,
    /// Starting coefficients; all-equal when `None` or numerically zero.
    pub initial: Option<Vec<f64>>,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        SynthesisOptions {
            fmax_mhz: 25_000.0,
            grid_points: 2501,
            margin_db: 0.05,
            tol: 1e-8,
            max_iter: 20_000,
            mu0: 1e-4,
            mu_growth: 10.0,
            max_stages: 14,
            check_resolution_mhz: 10.0,
            initial: None,
        }
    }
}

/// A synthesized, unit-energy pulse and its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Synthesis {
    pub pulse: Pulse,
    /// Kernel coefficients of the unit-energy pulse.
    pub coefficients: Vec<f64>,
    /// In-band share of energy on the design grid.
    pub in_band_fraction: f64,
    /// Compliance on the FFT grid.
    pub report: MaskReport,
    pub iterations: usize,
    /// Penalty weight of the accepted stage.
    pub penalty_weight: f64,
}

struct Problem {
    n: usize,
    /// Whitened real and imaginary parts of the PSD rows, row-major grid x n.
    u: Vec<f64>,
    w: Vec<f64>,
    a_in: Vec<f64>,
    /// Linear ceiling per grid point (design margin applied), `None` when free.
    ceil: Vec<Option<f64>>,
    /// Unmargined ceilings for the acceptance test on the design grid.
    ceil_raw: Vec<Option<f64>>,
    in_band: Vec<usize>,
}

struct Eval {
    j: f64,
    rho: f64,
    p: Vec<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
    peak_idx: usize,
}

impl Problem {
    fn eval(&self, z: &[f64], mu: f64) -> Eval {
        let n = self.n;
        let g = self.ceil.len();
        let mut a = vec![0.0; g];
        let mut b = vec![0.0; g];
        let mut p = vec![0.0; g];
        for i in 0..g {
            let ur = &self.u[i * n..(i + 1) * n];
            let wr = &self.w[i * n..(i + 1) * n];
            let (mut x, mut y) = (0.0, 0.0);
            for k in 0..n {
                x += ur[k] * z[k];
                y += wr[k] * z[k];
            }
            a[i] = x;
            b[i] = y;
            p[i] = x * x + y * y;
        }
        let mut rho = 0.0;
        for r in 0..n {
            let mut s = 0.0;
            for c in 0..n {
                s += self.a_in[r * n + c] * z[c];
            }
            rho += z[r] * s;
        }
        let peak_idx = *self.in_band.iter().max_by(|&&i, &&j| p[i].total_cmp(&p[j])).expect("in-band grid");
        let pk = p[peak_idx];
        let mut pen = 0.0;
        for i in 0..g {
            if let Some(m) = self.ceil[i] {
                let v = p[i] / (m * pk) - 1.0;
                if v > 0.0 {
                    pen += v * v;
                }
            }
        }
        Eval { j: rho - mu * pen, rho, p, a, b, peak_idx }
    }

    fn grad(&self, z: &[f64], e: &Eval, mu: f64) -> Vec<f64> {
        let n = self.n;
        let mut g = vec![0.0; n];
        for r in 0..n {
            let mut s = 0.0;
            for c in 0..n {
                s += self.a_in[r * n + c] * z[c];
            }
            g[r] = 2.0 * s;
        }
        let ip = e.peak_idx;
        let pk = e.p[ip];
        let mut dpk = vec![0.0; n];
        for k in 0..n {
            dpk[k] = 2.0 * (self.u[ip * n + k] * e.a[ip] + self.w[ip * n + k] * e.b[ip]);
        }
        for i in 0..self.ceil.len() {
            let Some(m) = self.ceil[i] else { continue };
            let v = e.p[i] / (m * pk) - 1.0;
            if v <= 0.0 {
                continue;
            }
            let c1 = 1.0 / (m * pk);
            let c2 = e.p[i] / (m * pk * pk);
            for k in 0..n {
                let dp = 2.0 * (self.u[i * n + k] * e.a[i] + self.w[i * n + k] * e.b[i]);
                g[k] -= mu * 2.0 * v * (dp * c1 - c2 * dpk[k]);
            }
        }
        g
    }

    fn worst_design_violation(&self, p: &[f64], peak_idx: usize) -> f64 {
        let pk = p[peak_idx];
        let mut worst = f64::NEG_INFINITY;
        for (i, c) in self.ceil_raw.iter().enumerate() {
            if let Some(m) = c {
                if p[i] > 0.0 {
                    worst = worst.max(10.0 * (p[i] / pk / m).log10());
                }
            }
        }
        worst
    }
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

/// Maximise in-band energy over the bank's coefficients subject to `mask`.
///
/// Deterministic for fixed inputs. Returns [`Error::Infeasible`] when no stage yields a
/// pulse that passes the FFT-grid compliance check.
pub fn synthesize_pulse(bank: &KernelBank, mask: &SpectralMask, opts: &SynthesisOptions) -> Result<Synthesis> {
    mask.validate()?;
    if opts.grid_points < 2 || !(opts.fmax_mhz > 0.0) {
        return Err(invalid("grid_points", "design grid needs at least two points and fmax > 0"));
    }
    let n = bank.count;
    let gn = opts.grid_points;
    let sigma = bank.sigma;
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut u_raw = vec![0.0; gn * n];
    let mut w_raw = vec![0.0; gn * n];
    let mut ceil = vec![None; gn];
    let mut ceil_raw = vec![None; gn];
    let mut in_band = Vec::new();
    let margin = 10f64.powf(-opts.margin_db / 10.0);
    for i in 0..gn {
        let f_mhz = opts.fmax_mhz * i as f64 / (gn - 1) as f64;
        let f = f_mhz * 1e-3;
        let g = sigma * two_pi.sqrt() * (-0.5 * (two_pi * sigma * f).powi(2)).exp();
        for k in 0..n {
            let ph = two_pi * f * k as f64 * bank.spacing;
            u_raw[i * n + k] = g * ph.cos();
            w_raw[i * n + k] = -g * ph.sin();
        }
        let lin = mask.ceiling_db(f_mhz).map(|d| 10f64.powf(d / 10.0));
        ceil_raw[i] = lin;
        if mask.in_passband(f_mhz) {
            in_band.push(i);
            ceil[i] = lin;
        } else {
            ceil[i] = lin.map(|m| m * margin);
        }
    }
    if in_band.is_empty() {
        return Err(Error::Infeasible("passband contains no design-grid point".into()));
    }

    let gram = |rows: &mut dyn Iterator<Item = usize>| {
        let mut a = DMatrix::<f64>::zeros(n, n);
        for i in rows {
            for r in 0..n {
                let (ur, wr) = (u_raw[i * n + r], w_raw[i * n + r]);
                for c in 0..n {
                    a[(r, c)] += ur * u_raw[i * n + c] + wr * w_raw[i * n + c];
                }
            }
        }
        a
    };
    let a_tot = gram(&mut (0..gn));
    let a_in = gram(&mut in_band.iter().copied());
    let chol =
        a_tot.clone().cholesky().ok_or_else(|| invalid("kernel bank", "kernel spectra are linearly dependent on the design grid"))?;
    let l = chol.l();
    let l_inv = l.clone().try_inverse().ok_or_else(|| invalid("kernel bank", "singular whitening factor"))?;
    let b = l_inv.transpose(); // c = B z
    let a_in_w = b.transpose() * &a_in * &b;

    let mut u = vec![0.0; gn * n];
    let mut w = vec![0.0; gn * n];
    for i in 0..gn {
        for k in 0..n {
            let (mut su, mut sw) = (0.0, 0.0);
            for j in 0..n {
                su += u_raw[i * n + j] * b[(j, k)];
                sw += w_raw[i * n + j] * b[(j, k)];
            }
            u[i * n + k] = su;
            w[i * n + k] = sw;
        }
    }
    let prob = Problem { n, u, w, a_in: (0..n * n).map(|i| a_in_w[(i / n, i % n)]).collect(), ceil, ceil_raw, in_band };

    let mut c0 = opts.initial.clone().unwrap_or_else(|| vec![1.0; n]);
    if c0.len() != n {
        return Err(invalid("initial", format!("expected {n} coefficients, got {}", c0.len())));
    }
    if c0.iter().map(|x| x * x).sum::<f64>() < 1e-300 {
        c0 = vec![1.0; n];
    }
    let mut z: Vec<f64> = (0..n).map(|r| (0..n).map(|c| l[(c, r)] * c0[c]).sum()).collect();
    normalize(&mut z);

    let mut mu = opts.mu0;
    let mut step = 0.1;
    let mut iterations = 0;
    let mut last_report = None;
    for _stage in 0..opts.max_stages {
        let mut cur = prob.eval(&z, mu);
        for _ in 0..opts.max_iter {
            let mut g = prob.grad(&z, &cur, mu);
            let gz: f64 = g.iter().zip(&z).map(|(a, b)| a * b).sum();
            g.iter_mut().zip(&z).for_each(|(gi, zi)| *gi -= gz * zi);
            let mut accepted = None;
            while step >= 1e-16 {
                let mut zn: Vec<f64> = z.iter().zip(&g).map(|(a, b)| a + step * b).collect();
                normalize(&mut zn);
                let en = prob.eval(&zn, mu);
                if en.j > cur.j {
                    accepted = Some((zn, en));
                    break;
                }
                step *= 0.5;
            }
            iterations += 1;
            let Some((zn, en)) = accepted else {
                step = 0.1;
                break;
            };
            let dj = en.j - cur.j;
            z = zn;
            cur = en;
            step *= 2.0;
            if dj.abs() < opts.tol {
                break;
            }
        }
        let design_ok = prob.worst_design_violation(&cur.p, cur.peak_idx) <= 0.0;
        if design_ok && mu >= 1.0 {
            let coeffs: Vec<f64> = (0..n).map(|r| (0..n).map(|c| b[(r, c)] * z[c]).sum()).collect();
            let (pulse, coefficients) = finish(bank, &coeffs)?;
            let report = check_mask(&pulse, mask, opts.fmax_mhz, opts.check_resolution_mhz)?;
            if report.compliant {
                return Ok(Synthesis { pulse, coefficients, in_band_fraction: cur.rho, report, iterations, penalty_weight: mu });
            }
            last_report = Some(report);
        }
        mu *= opts.mu_growth;
    }
    let detail = match last_report {
        Some(r) => format!("worst violation {:.3} dB at {:.0} MHz", r.worst_violation_db, r.worst_freq_mhz),
        None => "penalty continuation never reached a compliant design".into(),
    };
    Err(Error::Infeasible(detail))
}

/// Render, fix the sign (largest sample positive) and scale to unit energy.
fn finish(bank: &KernelBank, coeffs: &[f64]) -> Result<(Pulse, Vec<f64>)> {
    let raw = bank.render(coeffs)?;
    let peak = raw.samples.iter().copied().fold(0.0, |m: f64, x| if x.abs() > m.abs() { x } else { m });
    let e = raw.energy();
    if !(e > 0.0) {
        return Err(Error::Infeasible("optimizer returned the zero pulse".into()));
    }
    let k = peak.signum() / e.sqrt();
    let coefficients: Vec<f64> = coeffs.iter().map(|c| c * k).collect();
    let pulse = bank.render(&coefficients)?;
    Ok((pulse, coefficients))
}
