//! Young functions, Legendre transforms, and Luxemburg / Orlicz norms over
//! finite discrete measures.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, invalid, numeric, Error, Result};
use crate::numeric::golden_min;

/// Behaviour of a tabulated Young function beyond its last vertex.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TailRule {
    /// Continue with the last slope.
    #[default]
    Linear,
    /// Continue with the last slope plus `½ (x − x_last)²`; superlinear.
    Quadratic,
}

/// Piecewise-linear convex function through `(xs[i], values[i])`, extended
/// evenly to negative arguments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tabulated {
    pub xs: Vec<f64>,
    pub values: Vec<f64>,
    #[serde(default)]
    pub tail: TailRule,
}

impl Tabulated {
    pub fn new(xs: Vec<f64>, values: Vec<f64>, tail: TailRule) -> Result<Self> {
        let t = Self { xs, values, tail };
        t.validate()?;
        Ok(t)
    }

    fn validate(&self) -> Result<()> {
        if self.xs.len() < 2 || self.xs.len() != self.values.len() {
            return invalid("tabulated Young function needs at least two (x, Φ(x)) pairs");
        }
        ensure_finite("tabulated abscissae", &self.xs)?;
        ensure_finite("tabulated values", &self.values)?;
        if self.xs[0] != 0.0 || self.values[0] != 0.0 {
            return invalid("tabulated Young function must start at (0, 0)");
        }
        if self.xs.windows(2).any(|w| w[1] <= w[0]) {
            return invalid("tabulated abscissae must be strictly increasing");
        }
        let slopes = self.slopes();
        if slopes[0] < 0.0 {
            return invalid("tabulated Young function must be non-decreasing");
        }
        if slopes.windows(2).any(|w| w[1] < w[0] - 1e-12 * w[0].abs().max(1.0)) {
            return invalid("tabulated Young function is not convex (slopes decrease)");
        }
        if self.tail == TailRule::Linear && *slopes.last().unwrap() <= 0.0 {
            return invalid("tabulated Young function must grow without bound");
        }
        Ok(())
    }

    fn slopes(&self) -> Vec<f64> {
        self.xs
            .windows(2)
            .zip(self.values.windows(2))
            .map(|(x, v)| (v[1] - v[0]) / (x[1] - x[0]))
            .collect()
    }

    fn last_slope(&self) -> f64 {
        let n = self.xs.len();
        (self.values[n - 1] - self.values[n - 2]) / (self.xs[n - 1] - self.xs[n - 2])
    }

    fn eval(&self, x: f64) -> f64 {
        let x = x.abs();
        let n = self.xs.len();
        if x >= self.xs[n - 1] {
            let dx = x - self.xs[n - 1];
            let lin = self.values[n - 1] + self.last_slope() * dx;
            return match self.tail {
                TailRule::Linear => lin,
                TailRule::Quadratic => lin + 0.5 * dx * dx,
            };
        }
        let i = self.xs.partition_point(|&v| v <= x).saturating_sub(1);
        let (x0, x1) = (self.xs[i], self.xs[i + 1]);
        let (v0, v1) = (self.values[i], self.values[i + 1]);
        v0 + (v1 - v0) * (x - x0) / (x1 - x0)
    }
}

/// Convex even function `Φ` with `Φ(0) = 0` and `Φ(x) → ∞`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum YoungFunction {
    /// `|x|^p`, `p ≥ 1`.
    Power { p: f64 },
    /// `c |x|^p`.
    ScaledPower { p: f64, c: f64 },
    /// `e^{|x|} − 1`.
    ExpMinusOne,
    Tabulated(Tabulated),
    /// `0` on `|x| ≤ c`, `+∞` beyond; the conjugate of `c |x|`.
    Indicator { c: f64 },
    /// Numeric Legendre transform of the inner function.
    Conjugate { of: Box<YoungFunction> },
}

impl YoungFunction {
    pub fn power(p: f64) -> Result<Self> {
        let f = YoungFunction::Power { p };
        f.validate()?;
        Ok(f)
    }

    pub fn scaled_power(p: f64, c: f64) -> Result<Self> {
        let f = YoungFunction::ScaledPower { p, c };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            YoungFunction::Power { p } => {
                if !(p.is_finite() && *p >= 1.0) {
                    return invalid(format!("power Young function needs p >= 1, got {p}"));
                }
            }
            YoungFunction::ScaledPower { p, c } => {
                if !(p.is_finite() && *p >= 1.0 && c.is_finite() && *c > 0.0) {
                    return invalid(format!("scaled power needs p >= 1 and c > 0, got p = {p}, c = {c}"));
                }
            }
            YoungFunction::ExpMinusOne => {}
            YoungFunction::Tabulated(t) => t.validate()?,
            YoungFunction::Indicator { c } => {
                if !(c.is_finite() && *c > 0.0) {
                    return invalid("indicator Young function needs c > 0");
                }
            }
            YoungFunction::Conjugate { of } => of.validate()?,
        }
        Ok(())
    }

    /// `Φ(x)`, possibly `+∞`.
    pub fn eval(&self, x: f64) -> f64 {
        let a = x.abs();
        match self {
            YoungFunction::Power { p } => a.powf(*p),
            YoungFunction::ScaledPower { p, c } => c * a.powf(*p),
            YoungFunction::ExpMinusOne => a.exp_m1(),
            YoungFunction::Tabulated(t) => t.eval(a),
            YoungFunction::Indicator { c } => {
                if a <= *c {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            YoungFunction::Conjugate { of } => legendre(of, a).unwrap_or(f64::INFINITY),
        }
    }

    /// The Legendre transform as a Young function, in closed form where one
    /// exists.
    pub fn conjugate(&self) -> YoungFunction {
        match self {
            YoungFunction::Power { p } => YoungFunction::ScaledPower { p: *p, c: 1.0 }.conjugate(),
            YoungFunction::ScaledPower { p, c } if *p == 1.0 => YoungFunction::Indicator { c: *c },
            YoungFunction::ScaledPower { p, c } => {
                let q = p / (p - 1.0);
                let coef = c * (p - 1.0) * (c * p).powf(-q);
                if coef.is_normal() {
                    YoungFunction::ScaledPower { p: q, c: coef }
                } else {
                    // unrepresentable coefficient: evaluate through `legendre`
                    YoungFunction::Conjugate { of: Box::new(self.clone()) }
                }
            }
            YoungFunction::Indicator { c } => YoungFunction::ScaledPower { p: 1.0, c: *c },
            YoungFunction::Conjugate { of } => (**of).clone(),
            other => YoungFunction::Conjugate { of: Box::new(other.clone()) },
        }
    }

    /// `lim Φ(x)/x` when finite (linear growth), `None` for superlinear kinds.
    fn asymptotic_slope(&self) -> Option<f64> {
        match self {
            YoungFunction::Power { p } if *p == 1.0 => Some(1.0),
            YoungFunction::ScaledPower { p, c } if *p == 1.0 => Some(*c),
            YoungFunction::Tabulated(t) if t.tail == TailRule::Linear => Some(t.last_slope()),
            _ => None,
        }
    }

    /// Midpoint-convexity, evenness, `Φ(0) = 0` and growth, checked on a grid
    /// of `[0, x_max]`.
    pub fn check_on_grid(&self, x_max: f64, points: usize) -> Result<()> {
        if self.eval(0.0) != 0.0 {
            return invalid("Φ(0) must vanish");
        }
        let h = x_max / points as f64;
        for i in 0..points {
            let a = i as f64 * h;
            let b = (i + 2) as f64 * h;
            let (fa, fb, fm) = (self.eval(a), self.eval(b), self.eval(0.5 * (a + b)));
            if self.eval(-a) != fa {
                return invalid(format!("Φ not even at {a}"));
            }
            if fa.is_finite() && fb.is_finite() && fm > 0.5 * (fa + fb) * (1.0 + 1e-12) + 1e-300 {
                return invalid(format!("midpoint convexity fails on [{a}, {b}]"));
            }
        }
        if !(self.eval(x_max) > self.eval(0.5 * x_max)) {
            return invalid("Φ does not grow at the grid maximum");
        }
        Ok(())
    }

    /// `Φ(x) = 0` only at `x = 0`, probed at small machine-representable `x`.
    pub fn vanishes_only_at_zero(&self) -> bool {
        [1e-300, 1e-100, 1e-12, 1e-6, 1e-3].iter().all(|&x| self.eval(x) > 0.0)
    }
}

/// `Φ_c(y) = sup_{x≥0} (x|y| − Φ(x))`.
pub fn legendre(phi: &YoungFunction, y: f64) -> Result<f64> {
    ensure_finite("legendre argument", &[y])?;
    let ay = y.abs();
    match phi {
        // log form: near p = 1 the coefficient of the conjugate underflows
        // while |y|^q overflows
        YoungFunction::ScaledPower { p, c } if *p > 1.0 => {
            if ay == 0.0 {
                return Ok(0.0);
            }
            let q = p / (p - 1.0);
            Ok(c * (p - 1.0) * (q * (ay / (c * p)).ln()).exp())
        }
        YoungFunction::Power { .. } | YoungFunction::ScaledPower { .. } | YoungFunction::Indicator { .. } => {
            Ok(phi.conjugate().eval(ay))
        }
        YoungFunction::Conjugate { of } => Ok(of.eval(ay)),
        YoungFunction::ExpMinusOne => numeric_legendre(phi, ay, None),
        YoungFunction::Tabulated(t) => numeric_legendre(phi, ay, Some(t)),
    }
}

fn numeric_legendre(phi: &YoungFunction, ay: f64, table: Option<&Tabulated>) -> Result<f64> {
    if ay == 0.0 {
        return Ok(0.0);
    }
    let h = |x: f64| x * ay - phi.eval(x);
    let grid: Vec<f64> = match table {
        Some(t) => {
            let last = *t.xs.last().unwrap();
            let slope = t.last_slope();
            if t.tail == TailRule::Linear && ay > slope * (1.0 + 1e-15) {
                return numeric(
                    "legendre",
                    format!("tabulated grid does not bracket the supremum: |y| = {ay} exceeds final slope {slope}"),
                    None,
                );
            }
            let mut g = t.xs.clone();
            if t.tail == TailRule::Quadratic {
                // the tail maximiser sits at last + (|y| − slope) when positive
                g.push(last + (ay - slope).max(0.0) + 1.0);
                g.push(last + 2.0 * (ay - slope).max(0.0) + 2.0);
            }
            g
        }
        None => {
            let mut hi = 1.0;
            let mut expansions = 0;
            while h(2.0 * hi) > h(hi) {
                hi *= 2.0;
                expansions += 1;
                if expansions > 200 {
                    return numeric("legendre", "supremum not bracketed after 200 expansions", None);
                }
            }
            (0..=64).map(|i| 2.0 * hi * i as f64 / 64.0).collect()
        }
    };
    let (imax, _) = grid
        .iter()
        .enumerate()
        .map(|(i, &x)| (i, h(x)))
        .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
    let lo = grid[imax.saturating_sub(1)];
    let hi = grid[(imax + 1).min(grid.len() - 1)];
    let (_, neg) = golden_min(|x| -h(x), lo, hi, 1e-9 * hi.max(1e-300));
    Ok((-neg).max(h(grid[imax])).max(0.0))
}

/// Finite measure with non-negative weights on labelled atoms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteMeasure {
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
    total: f64,
}

impl DiscreteMeasure {
    pub fn new(points: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if points.len() != weights.len() {
            return invalid("measure needs one weight per atom");
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return invalid("measure weights must be finite and non-negative");
        }
        let total = weights.iter().sum();
        Ok(Self { points, weights, total })
    }

    /// Atoms labelled by their index.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        let points = (0..weights.len()).map(|i| vec![i as f64]).collect();
        Self::new(points, weights)
    }

    pub fn uniform(n: usize, total: f64) -> Result<Self> {
        Self::from_weights(vec![total / n as f64; n])
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn integrate(&self, f: &[f64]) -> f64 {
        self.weights.iter().zip(f).map(|(w, v)| if *w == 0.0 { 0.0 } else { w * v }).sum()
    }

    fn is_probability(&self) -> bool {
        (self.total - 1.0).abs() <= 1e-12
    }
}

fn check_function(f: &[f64], mu: &DiscreteMeasure) -> Result<()> {
    if f.len() != mu.len() {
        return invalid(format!("function has {} values, measure has {} atoms", f.len(), mu.len()));
    }
    ensure_finite("function values", f)?;
    if !(mu.total() > 0.0) {
        return invalid("measure must have positive total mass");
    }
    Ok(())
}

/// `∫ Φ(s f) dμ`.
fn modular(f: &[f64], mu: &DiscreteMeasure, phi: &YoungFunction, s: f64) -> f64 {
    let mut acc = 0.0;
    for (w, v) in mu.weights().iter().zip(f) {
        if *w > 0.0 {
            let val = phi.eval(s * v);
            if val > 0.0 {
                acc += w * val;
            }
        }
    }
    acc
}

fn essential_sup(f: &[f64], mu: &DiscreteMeasure) -> f64 {
    mu.weights().iter().zip(f).filter(|(w, _)| **w > 0.0).map(|(_, v)| v.abs()).fold(0.0, f64::max)
}

/// Luxemburg norm `inf{λ > 0 : ∫ Φ(f/λ) dμ ≤ 1}` by bisection on `λ`.
pub fn luxemburg_norm(f: &[f64], mu: &DiscreteMeasure, phi: &YoungFunction) -> Result<f64> {
    check_function(f, mu)?;
    let top = essential_sup(f, mu);
    if top == 0.0 {
        return Ok(0.0);
    }
    let g = |lambda: f64| modular(f, mu, phi, 1.0 / lambda);
    let mut hi = top * mu.total().max(1.0);
    let mut lo = hi;
    let mut guard = 0;
    while g(hi) > 1.0 {
        hi *= 2.0;
        guard += 1;
        if guard > 2000 {
            return numeric("luxemburg_norm", "upper bracket not found", None);
        }
    }
    while g(lo) <= 1.0 {
        lo *= 0.5;
        guard += 1;
        if guard > 4000 {
            return numeric("luxemburg_norm", "lower bracket not found", None);
        }
    }
    while hi - lo > 1e-13 * hi {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) <= 1.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Orlicz norm via the Amemiya formula `inf_{k>0} (1 + ∫Φ(kf)dμ)/k`,
/// minimised by golden section in `log k`.
pub fn orlicz_norm(f: &[f64], mu: &DiscreteMeasure, phi: &YoungFunction) -> Result<f64> {
    let lux = luxemburg_norm(f, mu, phi)?;
    if lux == 0.0 {
        return Ok(0.0);
    }
    let amemiya = |t: f64| {
        let k = t.exp();
        (1.0 + modular(f, mu, phi, k)) / k
    };
    let t0 = -lux.ln();
    let step = 1.0;
    let (mut ta, mut tb, mut tc) = (t0 - step, t0, t0 + step);
    let (mut fa, mut fb, mut fc) = (amemiya(ta), amemiya(tb), amemiya(tc));
    let mut expansions = 0;
    while fa < fb {
        // minimiser to the left of the bracket
        tc = tb;
        fc = fb;
        tb = ta;
        fb = fa;
        ta -= step * 2f64.powi(expansions.min(30));
        fa = amemiya(ta);
        expansions += 1;
        if expansions > 200 {
            return numeric("orlicz_norm", "minimiser escaped the bracket towards k → 0", Some(fb));
        }
    }
    expansions = 0;
    while fc < fb {
        ta = tb;
        tb = tc;
        fb = fc;
        tc += step * 2f64.powi(expansions.min(30));
        fc = amemiya(tc);
        expansions += 1;
        if expansions > 200 || !tc.exp().is_finite() {
            // the infimum is a limit k → ∞, finite only for linear growth
            return match phi.asymptotic_slope() {
                Some(s) => Ok(s * mu.integrate(&f.iter().map(|v| v.abs()).collect::<Vec<_>>())),
                None => numeric("orlicz_norm", "minimiser escaped the bracket after 200 expansions", Some(fb)),
            };
        }
    }
    let _ = fa;
    let (_, value) = golden_min(amemiya, ta, tc, 1e-9);
    Ok(value.min(fb))
}

/// `2 ‖f‖_(Φ) ‖g‖_(Φ_c) − ∫|fg| dμ`; non-negative up to round-off.
pub fn holder_defect(f: &[f64], g: &[f64], mu: &DiscreteMeasure, phi: &YoungFunction) -> Result<f64> {
    check_function(g, mu)?;
    let nf = luxemburg_norm(f, mu, phi)?;
    let ng = luxemburg_norm(g, mu, &phi.conjugate())?;
    let fg: Vec<f64> = f.iter().zip(g).map(|(a, b)| (a * b).abs()).collect();
    Ok(2.0 * nf * ng - mu.integrate(&fg))
}

/// `∫ ‖F(·, y)‖_Φ μ(dy) − ‖∫ F(·, y) μ(dy)‖_Φ` with Orlicz norms; `kernel[j][i]`
/// holds `F(x_i, y_j)` and both variables range over the atoms of `mu`.
pub fn minkowski_defect(kernel: &[Vec<f64>], mu: &DiscreteMeasure, phi: &YoungFunction) -> Result<f64> {
    if !mu.is_probability() {
        return invalid(format!("minkowski_defect needs a probability measure, total = {}", mu.total()));
    }
    if kernel.len() != mu.len() {
        return invalid("kernel needs one row per atom");
    }
    let mut outer = 0.0;
    let mut mixed = vec![0.0; mu.len()];
    for (row, w) in kernel.iter().zip(mu.weights()) {
        check_function(row, mu)?;
        if row.iter().any(|v| *v < 0.0) {
            return invalid("kernel must be non-negative");
        }
        outer += w * orlicz_norm(row, mu, phi)?;
        mixed.iter_mut().zip(row).for_each(|(m, v)| *m += w * v);
    }
    Ok(outer - orlicz_norm(&mixed, mu, phi)?)
}

/// Knobs for [`young_from_uniform_integrability`].
#[derive(Debug, Clone, Copy)]
pub struct UiOptions {
    /// Number of thresholds `c_1 ≤ … ≤ c_K`.
    pub levels: usize,
    /// Largest admissible threshold; a level needing more is reported as a
    /// failure of uniform integrability on the given atoms.
    pub max_threshold: f64,
}

impl Default for UiOptions {
    fn default() -> Self {
        Self { levels: 32, max_threshold: f64::INFINITY }
    }
}

/// de la Vallée-Poussin construction: thresholds `c_k` with
/// `sup_family ∫_{ρ>c_k} ρ dμ ≤ 2^{-k}` and `Φ(x) = Σ_k (x − c_k)_+`, so that
/// `Φ` has slope `k` on `[c_k, c_{k+1}]` and `sup_family ∫Φ(ρ)dμ ≤ 1`. The
/// table ends with a quadratic tail so `Φ(x)/x → ∞`.
pub fn young_from_uniform_integrability(
    densities: &[Vec<f64>],
    mu: &DiscreteMeasure,
    options: UiOptions,
) -> Result<YoungFunction> {
    if densities.is_empty() {
        return invalid("need at least one density");
    }
    if !mu.is_probability() {
        return invalid("reference measure must be a probability measure");
    }
    if options.levels == 0 {
        return invalid("need at least one level");
    }
    let mut candidates = vec![0.0];
    for rho in densities {
        if rho.len() != mu.len() {
            return invalid("density length does not match the measure");
        }
        if rho.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::ConstructionFailure {
                level: 1,
                detail: "density takes a negative or non-finite value".into(),
            });
        }
        let mass = mu.integrate(rho);
        if mass > 1.0 + 1e-9 {
            return invalid(format!("density integrates to {mass} > 1"));
        }
        candidates.extend(rho.iter().copied());
    }
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    let family_tail = |c: f64| {
        densities
            .iter()
            .map(|rho| {
                rho.iter()
                    .zip(mu.weights())
                    .filter(|(v, _)| **v > c)
                    .map(|(v, w)| v * w)
                    .sum::<f64>()
            })
            .fold(0.0, f64::max)
    };
    let mut thresholds = Vec::with_capacity(options.levels);
    for k in 1..=options.levels {
        let target = 0.5f64.powi(k as i32);
        // family_tail is non-increasing along the sorted candidates
        let idx = candidates.partition_point(|&c| family_tail(c) > target);
        let c = candidates[idx.min(candidates.len() - 1)];
        if c > options.max_threshold {
            return Err(Error::ConstructionFailure {
                level: k,
                detail: format!("threshold {c} needed for tail mass 2^-{k} exceeds the cap {}", options.max_threshold),
            });
        }
        thresholds.push(c);
    }
    let top = candidates.last().copied().unwrap_or(0.0).max(*thresholds.last().unwrap());
    let mut xs = vec![0.0];
    for &c in &thresholds {
        if c > *xs.last().unwrap() {
            xs.push(c);
        }
    }
    xs.push(top + 1.0);
    let values: Vec<f64> = xs.iter().map(|&x| thresholds.iter().map(|c| (x - c).max(0.0)).sum()).collect();
    // a flat start (c_1 > 0) is allowed; slopes are the level counts
    Ok(YoungFunction::Tabulated(Tabulated::new(xs, values, TailRule::Quadratic)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn half_square() -> YoungFunction {
        YoungFunction::scaled_power(2.0, 0.5).unwrap()
    }

    #[test]
    fn legendre_examples() {
        assert_relative_eq!(legendre(&half_square(), 3.0).unwrap(), 4.5, max_relative = 1e-12);
        let cubic = YoungFunction::scaled_power(3.0, 1.0 / 3.0).unwrap();
        assert_relative_eq!(legendre(&cubic, 1.0).unwrap(), 2.0 / 3.0, max_relative = 1e-12);
        assert_eq!(legendre(&YoungFunction::power(1.0).unwrap(), 0.5).unwrap(), 0.0);
        assert_eq!(legendre(&YoungFunction::power(1.0).unwrap(), 1.5).unwrap(), f64::INFINITY);
    }

    #[test]
    fn legendre_conjugate_exponent_matches_grid_sup() {
        // grid oracle for Φ = |x|^3/3 at y = 1
        let grid_sup = (0..=200_000)
            .map(|i| i as f64 * 1e-5)
            .map(|x| x - x.powi(3) / 3.0)
            .fold(f64::NEG_INFINITY, f64::max);
        assert!((grid_sup - 2.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn numeric_legendre_of_exponential_matches_closed_form() {
        let phi = YoungFunction::ExpMinusOne;
        for y in [0.0, 0.5, 1.0, 1.5, 3.0, 10.0] {
            let want = if y <= 1.0 { 0.0 } else { y * f64::ln(y) - y + 1.0 };
            let got = legendre(&phi, y).unwrap();
            assert!((got - want).abs() <= 1e-9 * want.max(1.0), "y = {y}: {got} vs {want}");
        }
    }

    #[test]
    fn scaled_power_legendre_near_linear_is_finite() {
        // p barely above 1: Φ_c(y) is tiny below the slope c·p, huge above
        let phi = YoungFunction::ScaledPower { p: 1.0006611477311176, c: 4.842757741963221 };
        let below = legendre(&phi, 2.159136134914557).unwrap();
        assert!(below >= 0.0 && below < 1e-100);
        let above = legendre(&phi, 6.0).unwrap();
        assert!(above.is_infinite() || above > 1e100);
        let conj = phi.conjugate();
        assert_eq!(conj.eval(2.159136134914557), below);
        assert!(matches!(conj.conjugate(), YoungFunction::ScaledPower { .. }));
        // matches a brute-force supremum at a moderate exponent
        let phi = YoungFunction::ScaledPower { p: 1.5, c: 2.0 };
        let brute = (0..200_000).map(|i| i as f64 * 1e-4).map(|x| 1.7 * x - phi.eval(x)).fold(0.0, f64::max);
        assert_relative_eq!(legendre(&phi, 1.7).unwrap(), brute, max_relative = 1e-6);
    }

    #[test]
    fn tabulated_legendre_fails_outside_bracket() {
        let t = Tabulated::new(vec![0.0, 1.0, 2.0], vec![0.0, 0.5, 2.0], TailRule::Linear).unwrap();
        let phi = YoungFunction::Tabulated(t);
        // vertices give sup = max(0, y - 0.5, 2y - 2) for |y| ≤ 1.5
        assert_relative_eq!(legendre(&phi, 1.2).unwrap(), 0.7, max_relative = 1e-9);
        assert!(matches!(legendre(&phi, 2.0), Err(Error::NumericFailure { .. })));
    }

    #[test]
    fn tabulated_rejects_non_convex() {
        assert!(Tabulated::new(vec![0.0, 1.0, 2.0], vec![0.0, 2.0, 2.5], TailRule::Linear).is_err());
    }

    #[test]
    fn luxemburg_examples() {
        let mu = DiscreteMeasure::uniform(4, 1.0).unwrap();
        let f = [1.0, -2.0, 0.5, 3.0];
        let l2 = mu.integrate(&f.map(|v| v * v)).sqrt();
        let got = luxemburg_norm(&f, &mu, &YoungFunction::power(2.0).unwrap()).unwrap();
        assert!((got - l2).abs() <= 1e-9 * l2);
        assert_eq!(luxemburg_norm(&[0.0; 4], &mu, &YoungFunction::power(2.0).unwrap()).unwrap(), 0.0);
        let ind = [1.0, 1.0, 0.0, 0.0];
        let got = luxemburg_norm(&ind, &mu, &YoungFunction::power(1.0).unwrap()).unwrap();
        assert_relative_eq!(got, 0.5, max_relative = 1e-10);
    }

    #[test]
    fn indicator_norm_oracle_is_inverse_formula() {
        // ‖1_A‖_(Φ) = 1 / Φ^{-1}(1/μ(A)); Φ = x², μ(A) = 1/2 gives 1/√2
        let mu = DiscreteMeasure::uniform(2, 1.0).unwrap();
        let got = luxemburg_norm(&[1.0, 0.0], &mu, &YoungFunction::power(2.0).unwrap()).unwrap();
        assert_relative_eq!(got, 1.0 / 2f64.sqrt(), max_relative = 1e-10);
    }

    #[test]
    fn orlicz_examples() {
        let mu = DiscreteMeasure::uniform(4, 1.0).unwrap();
        let sq = YoungFunction::power(2.0).unwrap();
        assert_eq!(orlicz_norm(&[0.0; 4], &mu, &sq).unwrap(), 0.0);
        // brute-force Amemiya grid with step 1e-4 in k
        let f = [1.0; 4];
        let oracle = (1..200_000)
            .map(|i| i as f64 * 1e-4)
            .map(|k| (1.0 + mu.integrate(&f.map(|v| (k * v).powi(2)))) / k)
            .fold(f64::INFINITY, f64::min);
        assert_relative_eq!(oracle, 2.0, max_relative = 1e-8);
        let got = orlicz_norm(&f, &mu, &sq).unwrap();
        assert_relative_eq!(got, 2.0, max_relative = 1e-12);
    }

    #[test]
    fn orlicz_norm_of_linear_young_function_is_l1() {
        let mu = DiscreteMeasure::from_weights(vec![0.2, 0.3, 0.5]).unwrap();
        let f = [1.0, -4.0, 0.25];
        let got = orlicz_norm(&f, &mu, &YoungFunction::power(1.0).unwrap()).unwrap();
        assert_relative_eq!(got, 0.2 + 1.2 + 0.125, max_relative = 1e-9);
    }

    #[test]
    fn orlicz_norm_of_indicator_young_function_is_scaled_sup() {
        let mu = DiscreteMeasure::from_weights(vec![0.2, 0.3, 0.5]).unwrap();
        let f = [1.0, -4.0, 0.25];
        let got = orlicz_norm(&f, &mu, &YoungFunction::Indicator { c: 2.0 }).unwrap();
        assert_relative_eq!(got, 2.0, max_relative = 1e-8);
    }

    #[test]
    fn holder_defect_examples() {
        let mu = DiscreteMeasure::uniform(2, 1.0).unwrap();
        let sq = half_square();
        assert_eq!(holder_defect(&[0.0, 0.0], &[0.0, 0.0], &mu, &sq).unwrap(), 0.0);
        // indicators with Φ = |x|: 2 · μ(A) · 1 − μ(A) = μ(A) = 1/2
        let d = holder_defect(&[1.0, 0.0], &[1.0, 0.0], &mu, &YoungFunction::power(1.0).unwrap()).unwrap();
        assert_relative_eq!(d, 0.5, max_relative = 1e-9);
    }

    #[test]
    fn minkowski_defect_examples() {
        let mu = DiscreteMeasure::uniform(3, 1.0).unwrap();
        let phi = YoungFunction::power(2.0).unwrap();
        let f = [0.5, 2.0, 1.0];
        let constant_in_y = vec![f.to_vec(); 3];
        assert!(minkowski_defect(&constant_in_y, &mu, &phi).unwrap().abs() < 1e-9);
        let g = [0.1, 3.0, 1.7];
        let product: Vec<Vec<f64>> = g.iter().map(|gy| f.iter().map(|fx| fx * gy).collect()).collect();
        assert!(minkowski_defect(&product, &mu, &phi).unwrap().abs() < 1e-9);
        let not_prob = DiscreteMeasure::uniform(3, 2.0).unwrap();
        assert!(matches!(
            minkowski_defect(&constant_in_y, &not_prob, &phi),
            Err(Error::InvalidArgument(_))
        ));
    }

    fn family_integral(phi: &YoungFunction, densities: &[Vec<f64>], mu: &DiscreteMeasure) -> f64 {
        densities
            .iter()
            .map(|rho| mu.integrate(&rho.iter().map(|v| phi.eval(*v)).collect::<Vec<_>>()))
            .fold(0.0, f64::max)
    }

    #[test]
    fn ui_construction_constant_density() {
        let mu = DiscreteMeasure::uniform(10, 1.0).unwrap();
        let phi = young_from_uniform_integrability(&[vec![1.0; 10]], &mu, UiOptions::default()).unwrap();
        assert!(phi.eval(1.0).is_finite());
        assert!(family_integral(&phi, &[vec![1.0; 10]], &mu) <= 1.0);
        phi.check_on_grid(10.0, 1000).unwrap();
        // superlinear: Φ(x)/x keeps growing past the table
        assert!(phi.eval(1e4) / 1e4 > phi.eval(1e2) / 1e2);
    }

    #[test]
    fn ui_construction_gaussian_family() {
        // Lebesgue on [-5, 5] normalised to a probability; densities of
        // N(x, 1) with respect to it, for x on a compact grid
        let n = 400;
        let width = 10.0 / n as f64;
        let centres: Vec<f64> = (0..n).map(|i| -5.0 + (i as f64 + 0.5) * width).collect();
        let mu = DiscreteMeasure::new(centres.iter().map(|c| vec![*c]).collect(), vec![1.0 / n as f64; n]).unwrap();
        let densities: Vec<Vec<f64>> = (-10..=10)
            .map(|k| k as f64 * 0.2)
            .map(|x| {
                centres
                    .iter()
                    .map(|y| 10.0 * (-(y - x) * (y - x) / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt())
                    .collect()
            })
            .collect();
        let phi = young_from_uniform_integrability(&densities, &mu, UiOptions::default()).unwrap();
        assert!(family_integral(&phi, &densities, &mu) <= 2.0);
    }

    #[test]
    fn ui_construction_fails_for_concentrating_family() {
        // two atoms; the second carries mass 2^-20 and a density that puts all
        // of its unit mass there, so the needed threshold is 2^20
        let eps = 0.5f64.powi(20);
        let mu = DiscreteMeasure::from_weights(vec![1.0 - eps, eps]).unwrap();
        let family = vec![vec![1.0, 1.0], vec![0.0, 1.0 / eps]];
        let err = young_from_uniform_integrability(&family, &mu, UiOptions { levels: 16, max_threshold: 1e3 })
            .unwrap_err();
        assert!(matches!(err, Error::ConstructionFailure { level: 1, .. }), "{err:?}");
    }

    fn arb_young() -> impl Strategy<Value = YoungFunction> {
        prop_oneof![
            (1.0..4.0f64).prop_map(|p| YoungFunction::Power { p }),
            (1.2..3.0f64, 0.2..3.0f64).prop_map(|(p, c)| YoungFunction::ScaledPower { p, c }),
            Just(YoungFunction::ExpMinusOne),
        ]
    }

    proptest! {
        #[test]
        fn luxemburg_is_absolutely_homogeneous(
            f in prop::collection::vec(-5.0..5.0f64, 5),
            c in -4.0..4.0f64,
            phi in arb_young(),
        ) {
            let mu = DiscreteMeasure::from_weights(vec![0.1, 0.4, 0.2, 0.2, 0.1]).unwrap();
            let n = luxemburg_norm(&f, &mu, &phi).unwrap();
            let scaled: Vec<f64> = f.iter().map(|v| c * v).collect();
            let ns = luxemburg_norm(&scaled, &mu, &phi).unwrap();
            prop_assert!((ns - c.abs() * n).abs() <= 1e-9 * (1.0 + ns));
        }

        #[test]
        fn legendre_is_convex_and_fenchel_young_holds(phi in arb_young(), x in 0.0..4.0f64, y in -4.0..4.0f64, h in 0.01..1.0f64) {
            let v = |t: f64| legendre(&phi, t).unwrap();
            prop_assert!(x * y.abs() <= phi.eval(x) + v(y) + 1e-9 * (1.0 + phi.eval(x)));
            let mid = v(y);
            let (lo, hi) = (v(y - h), v(y + h));
            if lo.is_finite() && hi.is_finite() {
                prop_assert!(mid <= 0.5 * (lo + hi) + 1e-9 * (1.0 + mid.abs()));
            }
        }
    }
}
