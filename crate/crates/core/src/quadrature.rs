//! Adaptive Gauss-Kronrod quadrature (7-point Gauss embedded in 15-point Kronrod).
//!
//! Integrands may be vector valued so that a family of integrals sharing the same
//! expensive factors (for example one per ray index) is integrated on one mesh. The
//! error estimate of a panel is the raw difference between the Kronrod and Gauss
//! rules, which is pessimistic but never optimistic for smooth integrands.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
// Gauss weights for XGK[1], XGK[3], XGK[5] and the centre.
const WG: [f64; 4] = [0.129_484_966_168_869_7, 0.279_705_391_489_276_7, 0.381_830_050_505_118_9, 0.417_959_183_673_469_4];

/// Tolerances and limits for adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadConfig {
    /// Relative tolerance on the (L1 norm of the) integral.
    pub rel_tol: f64,
    /// Absolute tolerance; convergence when error <= max(abs_tol, rel_tol * |I|).
    pub abs_tol: f64,
    /// Maximum number of panels before giving up.
    pub max_intervals: usize,
}

impl Default for QuadConfig {
    fn default() -> Self {
        QuadConfig { rel_tol: 1e-8, abs_tol: 0.0, max_intervals: 20_000 }
    }
}

impl QuadConfig {
    pub fn with_rel_tol(rel_tol: f64) -> Self {
        QuadConfig { rel_tol, ..Default::default() }
    }

    /// Same limits, tolerance tightened by `factor` (used for inner integrals).
    pub fn tightened(&self, factor: f64) -> Self {
        QuadConfig { rel_tol: self.rel_tol / factor, abs_tol: self.abs_tol / factor, ..*self }
    }
}

/// Result of a scalar integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    /// Estimated absolute error.
    pub error: f64,
    /// Number of integrand evaluations.
    pub evals: usize,
}

/// Result of a vector integration.
#[derive(Debug, Clone, PartialEq)]
pub struct VecEstimate {
    pub values: Vec<f64>,
    /// Per-component absolute error estimates.
    pub errors: Vec<f64>,
    /// Sum of the per-component errors.
    pub error: f64,
    pub evals: usize,
}

struct Panel {
    a: f64,
    b: f64,
    values: Vec<f64>,
    errors: Vec<f64>,
    err: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.err.total_cmp(&other.err)
    }
}

fn gk15<F: FnMut(f64, &mut [f64])>(f: &mut F, a: f64, b: f64, dim: usize, buf: &mut [f64]) -> Panel {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut k = vec![0.0; dim];
    let mut g = vec![0.0; dim];
    for (i, (&x, &w)) in XGK.iter().zip(WGK.iter()).enumerate() {
        let gw = match i {
            1 => WG[0],
            3 => WG[1],
            5 => WG[2],
            7 => WG[3],
            _ => 0.0,
        };
        if x == 0.0 {
            f(c, buf);
            for d in 0..dim {
                k[d] += w * buf[d];
                g[d] += gw * buf[d];
            }
        } else {
            for s in [-1.0, 1.0] {
                f(c + s * h * x, buf);
                for d in 0..dim {
                    k[d] += w * buf[d];
                    g[d] += gw * buf[d];
                }
            }
        }
    }
    let mut errors = vec![0.0; dim];
    let mut err = 0.0;
    for d in 0..dim {
        k[d] *= h;
        errors[d] = (k[d] - g[d] * h).abs();
        err += errors[d];
    }
    Panel { a, b, values: k, errors, err }
}

/// Integrate a vector-valued `f` of dimension `dim` over `[a, b]`.
///
/// `breakpoints` inside `(a, b)` seed the initial mesh; points outside are ignored.
/// `f(x, out)` must overwrite all of `out`.
pub fn integrate_vec<F>(mut f: F, dim: usize, a: f64, b: f64, breakpoints: &[f64], cfg: &QuadConfig) -> Result<VecEstimate>
where
    F: FnMut(f64, &mut [f64]),
{
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::InvalidParam { field: "limits", reason: "integration limits must be finite".into() });
    }
    if a == b || dim == 0 {
        return Ok(VecEstimate { values: vec![0.0; dim], errors: vec![0.0; dim], error: 0.0, evals: 0 });
    }
    if b < a {
        let mut r = integrate_vec(f, dim, b, a, breakpoints, cfg)?;
        r.values.iter_mut().for_each(|v| *v = -*v);
        return Ok(r);
    }
    let mut nodes: Vec<f64> = breakpoints.iter().copied().filter(|&x| x > a && x < b).collect();
    nodes.sort_by(f64::total_cmp);
    nodes.dedup();
    let mut edges = Vec::with_capacity(nodes.len() + 2);
    edges.push(a);
    edges.extend(nodes);
    edges.push(b);

    let mut buf = vec![0.0; dim];
    let mut heap = BinaryHeap::new();
    let mut evals = 0;
    for w in edges.windows(2) {
        heap.push(gk15(&mut f, w[0], w[1], dim, &mut buf));
        evals += 15;
    }
    // Running sums are updated incrementally; the final answer is re-summed exactly.
    let mut total = vec![0.0; dim];
    let mut err = 0.0;
    for p in heap.iter() {
        for d in 0..dim {
            total[d] += p.values[d];
        }
        err += p.err;
    }
    loop {
        let norm: f64 = total.iter().map(|v| v.abs()).sum();
        let target = cfg.abs_tol.max(cfg.rel_tol * norm);
        let worst_splittable = heap.peek().map(|p| {
            let m = 0.5 * (p.a + p.b);
            m > p.a && m < p.b
        });
        if err <= target || !err.is_finite() || heap.len() >= cfg.max_intervals || worst_splittable == Some(false) {
            let mut values = vec![0.0; dim];
            let mut errors = vec![0.0; dim];
            let mut err_sum = 0.0;
            for p in heap.iter() {
                for d in 0..dim {
                    values[d] += p.values[d];
                    errors[d] += p.errors[d];
                }
                err_sum += p.err;
            }
            let norm: f64 = values.iter().map(|v| v.abs()).sum();
            if err_sum <= cfg.abs_tol.max(cfg.rel_tol * norm) {
                return Ok(VecEstimate { values, errors, error: err_sum, evals });
            }
            let exhausted = heap.len() >= cfg.max_intervals || worst_splittable == Some(false) || !err_sum.is_finite();
            if exhausted {
                return Err(Error::NotConverged { value: norm, error: err_sum, intervals: heap.len() });
            }
            // Drift in the running sums; resynchronise and keep refining.
            total = values;
            err = err_sum;
        }
        let worst = heap.pop().expect("non-empty heap");
        let m = 0.5 * (worst.a + worst.b);
        let left = gk15(&mut f, worst.a, m, dim, &mut buf);
        let right = gk15(&mut f, m, worst.b, dim, &mut buf);
        for d in 0..dim {
            total[d] += left.values[d] + right.values[d] - worst.values[d];
        }
        err += left.err + right.err - worst.err;
        heap.push(left);
        heap.push(right);
        evals += 30;
    }
}

/// Integrate a scalar `f` over `[a, b]` with optional interior breakpoints.
pub fn integrate<F>(mut f: F, a: f64, b: f64, breakpoints: &[f64], cfg: &QuadConfig) -> Result<Estimate>
where
    F: FnMut(f64) -> f64,
{
    let r = integrate_vec(|x, out: &mut [f64]| out[0] = f(x), 1, a, b, breakpoints, cfg)?;
    Ok(Estimate { value: r.values[0], error: r.error, evals: r.evals })
}
