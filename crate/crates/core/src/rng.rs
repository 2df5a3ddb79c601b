//! Per-path random streams and the variate generators the samplers need.
//!
//! Every path draws from its own ChaCha8 stream selected by the path index,
//! so a path's randomness depends only on `(root seed, path index)` and never
//! on how paths are scheduled across workers.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

pub type PathRng = ChaCha8Rng;

/// Stream for path `index` under `seed`.
pub fn path_rng(seed: u64, index: u64) -> PathRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// SplitMix64 finaliser; used to derive independent root seeds for
/// auxiliary runs (refinement levels, reference runs) from one user seed.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[inline]
pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

#[inline]
fn exp1<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    Exp1.sample(rng)
}

/// Symmetric α-stable variate with characteristic function `exp(-|ξ|^α)`
/// (Chambers-Mallows-Stuck).
pub fn symmetric_stable<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> f64 {
    let v = PI * (rng.random::<f64>() - 0.5);
    if alpha == 1.0 {
        return v.tan();
    }
    let w = exp1(rng);
    let a = (alpha * v).sin() / v.cos().powf(1.0 / alpha);
    let b = ((v - alpha * v).cos() / w).powf((1.0 - alpha) / alpha);
    a * b
}

/// Positive β-stable variate with Laplace transform `exp(-s^β)`, β ∈ (0,1)
/// (Kanter's representation).
pub fn positive_stable<R: Rng + ?Sized>(beta: f64, rng: &mut R) -> f64 {
    // U uniform on (0, π), kept away from the endpoints
    let u = PI * (1.0 - rng.random::<f64>()).max(f64::EPSILON).min(1.0 - f64::EPSILON);
    let e = exp1(rng);
    let num = ((1.0 - beta) * u).sin() * (beta * u).sin().powf(beta / (1.0 - beta));
    let den = u.sin().powf(1.0 / (1.0 - beta)) * e;
    (num / den).powf((1.0 - beta) / beta)
}

/// Writes an isotropic α-stable vector with characteristic function
/// `exp(-|ξ|^α)` into `out`. One dimension uses CMS directly; higher
/// dimensions use the sub-Gaussian representation `sqrt(A)·G`, `G ~ N(0, 2I)`.
pub fn isotropic_stable<R: Rng + ?Sized>(alpha: f64, rng: &mut R, out: &mut [f64]) {
    if out.len() == 1 {
        out[0] = symmetric_stable(alpha, rng);
        return;
    }
    let scale = if alpha >= 2.0 {
        1.0
    } else {
        positive_stable(alpha / 2.0, rng).sqrt()
    } * std::f64::consts::SQRT_2;
    for o in out.iter_mut() {
        *o = scale * standard_normal(rng);
    }
}

/// Uniform point on the unit sphere S^{d-1}.
pub fn unit_direction<R: Rng + ?Sized>(rng: &mut R, out: &mut [f64]) {
    if out.len() == 1 {
        out[0] = if rng.random::<bool>() { 1.0 } else { -1.0 };
        return;
    }
    loop {
        let mut norm2 = 0.0;
        for o in out.iter_mut() {
            *o = standard_normal(rng);
            norm2 += *o * *o;
        }
        if norm2 > 1e-300 {
            let inv = norm2.sqrt().recip();
            out.iter_mut().for_each(|o| *o *= inv);
            return;
        }
    }
}

/// Poisson(mean) count; zero mean yields zero.
pub fn poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    if mean < 30.0 {
        // inversion by sequential search
        let mut k = 0u64;
        let mut p = (-mean).exp();
        let mut cdf = p;
        let u: f64 = rng.random();
        while u > cdf && k < 10_000 {
            k += 1;
            p *= mean / k as f64;
            cdf += p;
        }
        return k;
    }
    rand_distr::Poisson::new(mean).map(|d| d.sample(rng) as u64).unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ks_statistic(samples: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
        samples.sort_by(f64::total_cmp);
        let n = samples.len() as f64;
        samples
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = cdf(x);
                (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<u64> = (0..4).map(|_| path_rng(7, 3).random()).collect();
        let b: Vec<u64> = (0..4).map(|_| path_rng(7, 3).random()).collect();
        assert_eq!(a, b);
        let x: u64 = path_rng(7, 3).random();
        let y: u64 = path_rng(7, 4).random();
        assert_ne!(x, y);
    }

    #[test]
    fn cms_alpha_one_is_cauchy() {
        let mut rng = path_rng(11, 0);
        let mut xs: Vec<f64> = (0..10_000).map(|_| symmetric_stable(1.0, &mut rng)).collect();
        let d = ks_statistic(&mut xs, |x| 0.5 + x.atan() / PI);
        // 1% critical value 1.628/sqrt(n)
        assert!(d < 1.628 / 100.0, "KS = {d}");
    }

    #[test]
    fn cms_alpha_two_limit_is_gaussian_with_variance_two() {
        let mut rng = path_rng(5, 0);
        let n = 50_000;
        let xs: Vec<f64> = (0..n).map(|_| symmetric_stable(1.999_999, &mut rng)).collect();
        let var = xs.iter().map(|x| x * x).sum::<f64>() / n as f64;
        assert!((var - 2.0).abs() < 0.1, "var = {var}");
    }

    #[test]
    fn positive_half_stable_matches_levy_distribution() {
        // Laplace exp(-sqrt(s)) is the law of 1/(2 Z^2), Z standard normal:
        // P(A <= a) = 2 (1 - Φ(1/sqrt(2a))).
        let mut rng = path_rng(3, 9);
        let mut xs: Vec<f64> = (0..10_000).map(|_| positive_stable(0.5, &mut rng)).collect();
        let d = ks_statistic(&mut xs, |a| 2.0 * (1.0 - crate::numeric::normal_cdf((2.0 * a).sqrt().recip())));
        assert!(d < 1.628 / 100.0, "KS = {d}");
    }

    #[test]
    fn isotropic_stable_characteristic_function_in_two_dimensions() {
        let mut rng = path_rng(21, 1);
        let n = 40_000;
        let alpha = 1.3;
        let xi = [0.6, -0.8]; // |ξ| = 1
        let mut buf = [0.0; 2];
        let mut acc = 0.0;
        for _ in 0..n {
            isotropic_stable(alpha, &mut rng, &mut buf);
            acc += (xi[0] * buf[0] + xi[1] * buf[1]).cos();
        }
        let emp = acc / n as f64;
        let want = (-1.0f64).exp();
        assert!((emp - want).abs() < 4.0 / (n as f64).sqrt(), "{emp} vs {want}");
    }

    #[test]
    fn poisson_zero_mean() {
        let mut rng = path_rng(1, 1);
        assert_eq!(poisson(0.0, &mut rng), 0);
    }

    #[test]
    fn poisson_mean_matches() {
        let mut rng = path_rng(1, 2);
        for mean in [0.3, 4.0, 55.0] {
            let n = 20_000;
            let s: u64 = (0..n).map(|_| poisson(mean, &mut rng)).sum();
            let m = s as f64 / n as f64;
            assert!((m - mean).abs() < 4.0 * (mean / n as f64).sqrt(), "{m} vs {mean}");
        }
    }
}
