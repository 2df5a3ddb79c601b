//! Scalar numerics shared by the analytic modules: special functions,
//! one-dimensional search, and adaptive quadrature.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::PI;

use crate::error::{numeric, Result};

pub fn gamma(x: f64) -> f64 {
    statrs::function::gamma::gamma(x)
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}

/// Surface measure of the unit sphere S^{d-1}; equals 2 for d = 1.
pub fn sphere_area(d: usize) -> f64 {
    let h = d as f64 / 2.0;
    2.0 * PI.powf(h) / gamma(h)
}

/// Golden-section minimisation of a unimodal function on `[a, b]`.
/// Returns `(argmin, min)`. Stops once the bracket is narrower than `tol`.
pub fn golden_min<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..400 {
        if (b - a).abs() <= tol {
            break;
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    if fc <= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// Compensated sum of a sequence, accumulated in iteration order.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut acc = CompensatedSum::new();
    values.into_iter().for_each(|v| acc.add(v));
    acc.value()
}

/// Result of an adaptive quadrature.
#[derive(Debug, Clone, Copy)]
pub struct Quadrature {
    pub value: f64,
    pub error: f64,
    pub evals: usize,
}

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
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Globally adaptive Gauss-Kronrod (7/15) quadrature on a finite interval.
///
/// Fails with the current error estimate once `max_evals` integrand
/// evaluations are spent without reaching `abs_tol`.
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, abs_tol: f64, max_evals: usize) -> Result<Quadrature> {
    if a == b {
        return Ok(Quadrature { value: 0.0, error: 0.0, evals: 0 });
    }
    let (value, error) = gk15(&mut f, a, b);
    let mut evals = 15;
    let mut heap = BinaryHeap::new();
    heap.push(Segment { a, b, value, error });
    let mut total = value;
    let mut total_err = error;
    while total_err > abs_tol {
        if evals + 30 > max_evals {
            return numeric(
                "integrate",
                format!("no convergence after {evals} evaluations"),
                Some(total_err),
            );
        }
        let worst = heap.pop().expect("heap never empties");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            return numeric("integrate", "interval underflow", Some(total_err));
        }
        let (v1, e1) = gk15(&mut f, worst.a, mid);
        let (v2, e2) = gk15(&mut f, mid, worst.b);
        evals += 30;
        total += v1 + v2 - worst.value;
        total_err += e1 + e2 - worst.error;
        heap.push(Segment { a: worst.a, b: mid, value: v1, error: e1 });
        heap.push(Segment { a: mid, b: worst.b, value: v2, error: e2 });
        if total_err <= abs_tol {
            // re-sum to shed accumulated drift from the running totals
            total = heap.iter().map(|s| s.value).sum();
            total_err = heap.iter().map(|s| s.error).sum();
        }
    }
    Ok(Quadrature { value: total, error: total_err, evals })
}

/// `∫_a^∞ g(z) cos(ω z) dz` for a smooth, eventually monotone envelope `g`
/// decaying to zero. Integrates between consecutive zeros of the cosine and
/// accelerates the resulting alternating series by repeated averaging.
pub fn integrate_cos_tail<F: FnMut(f64) -> f64>(
    mut g: F,
    omega: f64,
    a: f64,
    abs_tol: f64,
    max_evals: usize,
) -> Result<Quadrature> {
    const TERMS: usize = 40;
    const DEPTH: usize = 14;
    let half = PI / omega;
    // first zero of cos(ω z) at or beyond a
    let k0 = ((a * omega / PI) - 0.5).ceil().max(0.0);
    let mut z0 = (k0 + 0.5) * half;
    if z0 < a {
        z0 += half;
    }
    let mut evals = 0;
    let mut err = 0.0;
    let piece_tol = abs_tol / (4.0 * (TERMS as f64 + 1.0));
    let mut integrand = |z: f64| g(z) * (omega * z).cos();
    let head = integrate(&mut integrand, a, z0, piece_tol, max_evals)?;
    evals += head.evals;
    err += head.error;
    let mut partial = Vec::with_capacity(TERMS);
    let mut acc = head.value;
    let mut lo = z0;
    for _ in 0..TERMS {
        let q = integrate(&mut integrand, lo, lo + half, piece_tol, max_evals.saturating_sub(evals).max(31))?;
        evals += q.evals;
        err += q.error;
        acc += q.value;
        partial.push(acc);
        lo += half;
        if evals > max_evals {
            return numeric("integrate_cos_tail", "evaluation cap exceeded", Some(err));
        }
    }
    let accel = |sums: &[f64]| {
        let mut s = sums.to_vec();
        while s.len() > 1 {
            s = s.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        }
        s[0]
    };
    let n = partial.len();
    let best = accel(&partial[n - DEPTH - 1..]);
    let prev = accel(&partial[n - DEPTH - 2..n - 1]);
    let extrapolation_err = (best - prev).abs();
    let total_err = err + extrapolation_err;
    if total_err > abs_tol.max(1e-14 * best.abs()) * 1e3 {
        return numeric("integrate_cos_tail", "alternating tail did not settle", Some(total_err));
    }
    Ok(Quadrature { value: best, error: total_err, evals })
}
