//! State-dependent Lévy characteristics `(a(x), b(x), ν(x, dz))` and their
//! symbol
//!
//! ```text
//! p(x, ξ) = ½ ξ·a(x)ξ − i b(x)·ξ + ∫ (1 − e^{i z·ξ} + i z·ξ 1{|z|≤1}) ν(x, dz)
//! ```
//!
//! Jump measures are restricted to three families whose tail masses and
//! truncated moments are available in closed form: isotropic radial power
//! laws `c |z|^{-d-α} dz`, finitely many atoms, and the zero measure.

use std::borrow::Cow;
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, invalid, Error, Result};
use crate::numeric::{self, gamma, sphere_area, Quadrature};

/// Normalising constant `C_α` of the fractional Laplacian in dimension `d`:
/// `|ξ|^α = C_α ∫ (1 − cos ξ·z) |z|^{-d-α} dz`.
pub fn stable_constant(alpha: f64, dim: usize) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 2.0) {
        return invalid(format!("stable index must lie in (0,2), got {alpha}"));
    }
    if dim == 0 {
        return invalid("dimension must be positive");
    }
    let d = dim as f64;
    Ok(alpha * 2f64.powf(alpha - 1.0) * gamma((alpha + d) / 2.0) / (PI.powf(d / 2.0) * gamma(1.0 - alpha / 2.0)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LevyMeasureSpec {
    Zero,
    /// `intensity · |z|^{-dim-alpha} dz` on ℝ^dim \ {0}.
    RadialPower { dim: usize, intensity: f64, alpha: f64 },
    /// `Σ mass_i δ_{point_i}`.
    FiniteAtoms { atoms: Vec<Atom> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub point: Vec<f64>,
    pub mass: f64,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl LevyMeasureSpec {
    pub fn radial_power(dim: usize, intensity: f64, alpha: f64) -> Result<Self> {
        let m = LevyMeasureSpec::RadialPower { dim, intensity, alpha };
        m.validate(dim)?;
        Ok(m)
    }

    /// Radial power law normalised so that its symbol is exactly `|ξ|^α`.
    pub fn fractional_laplacian(dim: usize, alpha: f64) -> Result<Self> {
        Self::radial_power(dim, stable_constant(alpha, dim)?, alpha)
    }

    pub fn finite_atoms(atoms: Vec<(Vec<f64>, f64)>) -> Result<Self> {
        let dim = atoms.first().map(|a| a.0.len()).unwrap_or(1);
        let m = LevyMeasureSpec::FiniteAtoms {
            atoms: atoms.into_iter().map(|(point, mass)| Atom { point, mass }).collect(),
        };
        m.validate(dim)?;
        Ok(m)
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            LevyMeasureSpec::Zero => Ok(()),
            LevyMeasureSpec::RadialPower { dim: d, intensity, alpha } => {
                if *d != dim {
                    return invalid(format!("radial-power measure has dimension {d}, expected {dim}"));
                }
                if !(intensity.is_finite() && *intensity >= 0.0) {
                    return invalid("radial-power intensity must be finite and non-negative");
                }
                if !(*alpha > 0.0 && *alpha < 2.0) {
                    return invalid(format!("radial-power exponent must lie in (0,2), got {alpha}"));
                }
                Ok(())
            }
            LevyMeasureSpec::FiniteAtoms { atoms } => {
                for a in atoms {
                    if a.point.len() != dim {
                        return invalid("atom dimension mismatch");
                    }
                    ensure_finite("atom point", &a.point)?;
                    if !(a.mass.is_finite() && a.mass > 0.0) {
                        return invalid("atom masses must be finite and positive");
                    }
                    if norm(&a.point) == 0.0 {
                        return invalid("jump measure may not charge the origin");
                    }
                }
                Ok(())
            }
        }
    }

    /// `ν({|z| > r})`.
    pub fn tail_mass(&self, r: f64) -> f64 {
        match self {
            LevyMeasureSpec::Zero => 0.0,
            LevyMeasureSpec::RadialPower { dim, intensity, alpha } => {
                if r <= 0.0 {
                    f64::INFINITY
                } else {
                    intensity * sphere_area(*dim) * r.powf(-alpha) / alpha
                }
            }
            LevyMeasureSpec::FiniteAtoms { atoms } => {
                atoms.iter().filter(|a| norm(&a.point) > r).map(|a| a.mass).sum()
            }
        }
    }

    /// `ν({|z| ≥ r})`; differs from [`tail_mass`](Self::tail_mass) only for atoms on the sphere.
    pub fn tail_mass_closed(&self, r: f64) -> f64 {
        match self {
            LevyMeasureSpec::FiniteAtoms { atoms } => {
                atoms.iter().filter(|a| norm(&a.point) >= r).map(|a| a.mass).sum()
            }
            other => other.tail_mass(r),
        }
    }

    /// `∫_{|z|≤r} |z|² ν(dz)`.
    pub fn truncated_second_moment(&self, r: f64) -> f64 {
        match self {
            LevyMeasureSpec::Zero => 0.0,
            LevyMeasureSpec::RadialPower { dim, intensity, alpha } => {
                if r <= 0.0 {
                    0.0
                } else {
                    intensity * sphere_area(*dim) * r.powf(2.0 - alpha) / (2.0 - alpha)
                }
            }
            LevyMeasureSpec::FiniteAtoms { atoms } => atoms
                .iter()
                .filter(|a| norm(&a.point) <= r)
                .map(|a| a.mass * dot(&a.point, &a.point))
                .sum(),
        }
    }

    /// `∫_{r<|z|≤1} z ν(dz)`; vanishes for symmetric radial laws.
    pub fn shell_first_moment(&self, r: f64, dim: usize) -> Vec<f64> {
        let mut out = vec![0.0; dim];
        if let LevyMeasureSpec::FiniteAtoms { atoms } = self {
            for a in atoms {
                let n = norm(&a.point);
                if n > r && n <= 1.0 {
                    out.iter_mut().zip(&a.point).for_each(|(o, z)| *o += a.mass * z);
                }
            }
        }
        out
    }

    /// `∫ (1 ∧ |z|²) ν(dz)`.
    pub fn integrability(&self) -> f64 {
        self.truncated_second_moment(1.0) + self.tail_mass(1.0)
    }

    /// Total mass, infinite for radial power laws with positive intensity.
    pub fn total_mass(&self) -> f64 {
        match self {
            LevyMeasureSpec::RadialPower { intensity, .. } if *intensity == 0.0 => 0.0,
            LevyMeasureSpec::RadialPower { .. } => f64::INFINITY,
            LevyMeasureSpec::Zero => 0.0,
            LevyMeasureSpec::FiniteAtoms { atoms } => atoms.iter().map(|a| a.mass).sum(),
        }
    }

    /// `∫ (1 − e^{i z·ξ} + i z·ξ 1{|z|≤1}) ν(dz)`.
    pub fn symbol_integral(&self, xi: &[f64]) -> Result<Complex64> {
        match self {
            LevyMeasureSpec::Zero => Ok(Complex64::new(0.0, 0.0)),
            LevyMeasureSpec::RadialPower { dim, intensity, alpha } => {
                let c = stable_constant(*alpha, *dim)?;
                Ok(Complex64::new(intensity / c * norm(xi).powf(*alpha), 0.0))
            }
            LevyMeasureSpec::FiniteAtoms { atoms } => {
                let mut acc = Complex64::new(0.0, 0.0);
                for a in atoms {
                    let zx = dot(&a.point, xi);
                    let comp = if norm(&a.point) <= 1.0 { zx } else { 0.0 };
                    acc += a.mass * Complex64::new(1.0 - zx.cos(), comp - zx.sin());
                }
                Ok(acc)
            }
        }
    }
}

/// A coefficient that is either fixed or a function of the state.
#[derive(Clone)]
pub enum Coefficient<T: Clone> {
    Constant(T),
    StateDependent(Arc<dyn Fn(&[f64]) -> T + Send + Sync>),
}

impl<T: Clone> Coefficient<T> {
    pub fn at(&self, x: &[f64]) -> Cow<'_, T> {
        match self {
            Coefficient::Constant(v) => Cow::Borrowed(v),
            Coefficient::StateDependent(f) => Cow::Owned(f(x)),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, Coefficient::Constant(_))
    }
}

impl<T: Clone + fmt::Debug> fmt::Debug for Coefficient<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Coefficient::Constant(v) => write!(f, "Constant({v:?})"),
            Coefficient::StateDependent(_) => f.write_str("StateDependent(..)"),
        }
    }
}

/// Smooth parametric forms for a state-dependent stability index; all act on
/// the first coordinate of the state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AlphaProfile {
    Constant { alpha: f64 },
    /// `mean + amplitude · sin(frequency · x₀)`
    Sine { mean: f64, amplitude: f64, frequency: f64 },
    /// `mean + amplitude · tanh(x₀ / scale)`
    Tanh { mean: f64, amplitude: f64, scale: f64 },
}

impl AlphaProfile {
    pub fn eval(&self, x: &[f64]) -> f64 {
        let x0 = x.first().copied().unwrap_or(0.0);
        match *self {
            AlphaProfile::Constant { alpha } => alpha,
            AlphaProfile::Sine { mean, amplitude, frequency } => mean + amplitude * (frequency * x0).sin(),
            AlphaProfile::Tanh { mean, amplitude, scale } => mean + amplitude * (x0 / scale).tanh(),
        }
    }

    fn bounds(&self) -> (f64, f64) {
        match *self {
            AlphaProfile::Constant { alpha } => (alpha, alpha),
            AlphaProfile::Sine { mean, amplitude, .. } | AlphaProfile::Tanh { mean, amplitude, .. } => {
                (mean - amplitude.abs(), mean + amplitude.abs())
            }
        }
    }
}

/// State-dependent stability index `α(x)` with bounds `0 < α̲ ≤ α(x) ≤ ᾱ < 2`.
#[derive(Clone)]
pub struct StableLikeIndex {
    alpha: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
    lower: f64,
    upper: f64,
    profile: Option<AlphaProfile>,
}

impl fmt::Debug for StableLikeIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("StableLikeIndex")
            .field("profile", &self.profile)
            .field("lower", &self.lower)
            .field("upper", &self.upper)
            .finish()
    }
}

impl StableLikeIndex {
    pub fn from_profile(profile: AlphaProfile) -> Result<Self> {
        if let AlphaProfile::Tanh { scale, .. } = profile {
            if !(scale.is_finite() && scale > 0.0) {
                return invalid("tanh profile scale must be positive");
            }
        }
        let (lower, upper) = profile.bounds();
        Self::check_bounds(lower, upper)?;
        let p = profile.clone();
        Ok(Self {
            alpha: Arc::new(move |x| p.eval(x)),
            lower,
            upper,
            profile: Some(profile),
        })
    }

    /// Arbitrary index function; `lower`/`upper` are the caller's bounds and
    /// are enforced at every probed state by [`check`](Self::check).
    pub fn from_fn(f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static, lower: f64, upper: f64) -> Result<Self> {
        Self::check_bounds(lower, upper)?;
        Ok(Self { alpha: Arc::new(f), lower, upper, profile: None })
    }

    fn check_bounds(lower: f64, upper: f64) -> Result<()> {
        if !(lower > 0.0 && upper < 2.0 && lower <= upper) {
            return invalid(format!("stable-like index bounds must satisfy 0 < {lower} <= {upper} < 2"));
        }
        Ok(())
    }

    pub fn alpha(&self, x: &[f64]) -> f64 {
        (self.alpha)(x)
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn profile(&self) -> Option<&AlphaProfile> {
        self.profile.as_ref()
    }

    pub fn check(&self, x: &[f64]) -> Result<f64> {
        let a = self.alpha(x);
        if !(a >= self.lower - 1e-12 && a <= self.upper + 1e-12) {
            return invalid(format!("alpha({x:?}) = {a} escapes [{}, {}]", self.lower, self.upper));
        }
        Ok(a)
    }
}

/// Lévy characteristics as functions of the state.
#[derive(Clone, Debug)]
pub struct StateTriplet {
    dim: usize,
    /// Row-major `dim × dim` diffusion matrix.
    diffusion: Coefficient<Vec<f64>>,
    drift: Coefficient<Vec<f64>>,
    jumps: Coefficient<LevyMeasureSpec>,
    pub coeff_bound_hint: Option<f64>,
}

impl StateTriplet {
    pub fn new(
        dim: usize,
        diffusion: Coefficient<Vec<f64>>,
        drift: Coefficient<Vec<f64>>,
        jumps: Coefficient<LevyMeasureSpec>,
    ) -> Result<Self> {
        if dim == 0 {
            return invalid("dimension must be positive");
        }
        let t = Self { dim, diffusion, drift, jumps, coeff_bound_hint: None };
        // constant parts are checked once here; state-dependent parts at each probe
        if t.diffusion.is_constant() || t.drift.is_constant() || t.jumps.is_constant() {
            t.check_at(&vec![0.0; dim])?;
        }
        Ok(t)
    }

    pub fn constant(dim: usize, diffusion: Vec<f64>, drift: Vec<f64>, jumps: LevyMeasureSpec) -> Result<Self> {
        Self::new(
            dim,
            Coefficient::Constant(diffusion),
            Coefficient::Constant(drift),
            Coefficient::Constant(jumps),
        )
    }

    pub fn zero(dim: usize) -> Self {
        Self::constant(dim, vec![0.0; dim * dim], vec![0.0; dim], LevyMeasureSpec::Zero)
            .expect("zero triplet is valid")
    }

    pub fn brownian(dim: usize, sigma: f64) -> Result<Self> {
        let mut a = vec![0.0; dim * dim];
        (0..dim).for_each(|i| a[i * dim + i] = sigma * sigma);
        Self::constant(dim, a, vec![0.0; dim], LevyMeasureSpec::Zero)
    }

    /// Symbol `|ξ|^α`.
    pub fn isotropic_stable(dim: usize, alpha: f64) -> Result<Self> {
        Self::constant(
            dim,
            vec![0.0; dim * dim],
            vec![0.0; dim],
            LevyMeasureSpec::fractional_laplacian(dim, alpha)?,
        )
    }

    /// Symbol `|ξ|^{α(x)}`.
    pub fn stable_like(dim: usize, index: StableLikeIndex) -> Result<Self> {
        let jumps = Coefficient::StateDependent(Arc::new(move |x: &[f64]| {
            let a = index.alpha(x);
            LevyMeasureSpec::RadialPower {
                dim,
                intensity: stable_constant(a, dim).unwrap_or(f64::NAN),
                alpha: a,
            }
        }));
        Self::new(
            dim,
            Coefficient::Constant(vec![0.0; dim * dim]),
            Coefficient::Constant(vec![0.0; dim]),
            jumps,
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn diffusion_at(&self, x: &[f64]) -> Cow<'_, Vec<f64>> {
        self.diffusion.at(x)
    }

    pub fn drift_at(&self, x: &[f64]) -> Cow<'_, Vec<f64>> {
        self.drift.at(x)
    }

    pub fn jumps_at(&self, x: &[f64]) -> Cow<'_, LevyMeasureSpec> {
        self.jumps.at(x)
    }

    pub fn is_spatially_homogeneous(&self) -> bool {
        self.diffusion.is_constant() && self.drift.is_constant() && self.jumps.is_constant()
    }

    /// Checks the triplet invariants at one state: `a(x)` symmetric and
    /// positive semi-definite, `b(x)` finite, `ν(x,·)` admissible.
    pub fn check_at(&self, x: &[f64]) -> Result<()> {
        let d = self.dim;
        if x.len() != d {
            return invalid(format!("state has dimension {}, triplet has {d}", x.len()));
        }
        let a = self.diffusion_at(x);
        if a.len() != d * d {
            return invalid("diffusion matrix has wrong size");
        }
        ensure_finite("diffusion matrix", &a)?;
        for i in 0..d {
            for j in 0..i {
                if (a[i * d + j] - a[j * d + i]).abs() > 1e-12 {
                    return invalid(format!("diffusion matrix not symmetric at {x:?}"));
                }
            }
        }
        let m = DMatrix::from_row_slice(d, d, &a);
        let min_eig = SymmetricEigen::new(m).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
        if min_eig < -1e-10 {
            return invalid(format!("diffusion matrix not positive semi-definite at {x:?} (eigenvalue {min_eig})"));
        }
        let b = self.drift_at(x);
        if b.len() != d {
            return invalid("drift has wrong dimension");
        }
        ensure_finite("drift", &b)?;
        let nu = self.jumps_at(x);
        nu.validate(d)?;
        if !nu.integrability().is_finite() {
            return invalid("jump measure violates ∫(1∧|z|²)ν(dz) < ∞");
        }
        Ok(())
    }
}

/// Lévy-Khinchine symbol `p(x, ξ)`.
pub fn eval_symbol(triplet: &StateTriplet, x: &[f64], xi: &[f64]) -> Result<Complex64> {
    ensure_finite("state", x)?;
    ensure_finite("frequency", xi)?;
    let d = triplet.dim();
    if xi.len() != d {
        return invalid(format!("frequency has dimension {}, triplet has {d}", xi.len()));
    }
    triplet.check_at(x)?;
    let a = triplet.diffusion_at(x);
    let b = triplet.drift_at(x);
    let mut quad = 0.0;
    for i in 0..d {
        for j in 0..d {
            quad += xi[i] * a[i * d + j] * xi[j];
        }
    }
    let jump = triplet.jumps_at(x).symbol_integral(xi)?;
    Ok(Complex64::new(0.5 * quad, -dot(&b, xi)) + jump)
}

/// One-dimensional radial jump part `c ∫ (1 − cos ξz) |z|^{-1-α} dz` evaluated
/// by quadrature rather than the closed form: adaptive Gauss-Kronrod on a
/// head interval, the non-oscillatory tail in closed form, and the
/// oscillatory tail by integration between zeros with series acceleration.
pub fn radial_symbol_quadrature(intensity: f64, alpha: f64, xi: f64, abs_tol: f64) -> Result<Quadrature> {
    const MAX_EVALS: usize = 1_000_000;
    if !(alpha > 0.0 && alpha < 2.0) {
        return invalid(format!("stable index must lie in (0,2), got {alpha}"));
    }
    ensure_finite("frequency", &[xi])?;
    let w = xi.abs();
    if w == 0.0 || intensity == 0.0 {
        return Ok(Quadrature { value: 0.0, error: 0.0, evals: 0 });
    }
    // integrate over z > 0 and double
    let head_end = 8.0 * PI / w;
    let tol = abs_tol / (2.0 * intensity.max(1e-300)) / 3.0;
    let head = numeric::integrate(
        |z| {
            let s = (0.5 * w * z).sin();
            2.0 * s * s * z.powf(-1.0 - alpha)
        },
        0.0,
        head_end,
        tol,
        MAX_EVALS,
    )?;
    let flat_tail = head_end.powf(-alpha) / alpha;
    let osc_tail = numeric::integrate_cos_tail(|z| z.powf(-1.0 - alpha), w, head_end, tol, MAX_EVALS - head.evals)?;
    let value = 2.0 * intensity * (head.value + flat_tail - osc_tail.value);
    let error = 2.0 * intensity * (head.error + osc_tail.error);
    if !value.is_finite() {
        return Err(Error::NumericFailure {
            op: "radial_symbol_quadrature",
            detail: "non-finite result".into(),
            residual: Some(error),
        });
    }
    Ok(Quadrature { value, error, evals: head.evals + osc_tail.evals })
}

/// Symbol evaluated through quadrature for one-dimensional radial jump
/// parts; identical to [`eval_symbol`] for the other families.
pub fn eval_symbol_quadrature(triplet: &StateTriplet, x: &[f64], xi: &[f64]) -> Result<Complex64> {
    let nu = triplet.jumps_at(x).into_owned();
    match nu {
        LevyMeasureSpec::RadialPower { dim: 1, intensity, alpha } => {
            let analytic_jump = nu.symbol_integral(xi)?;
            let total = eval_symbol(triplet, x, xi)?;
            let q = radial_symbol_quadrature(intensity, alpha, xi[0], 1e-8)?;
            Ok(total - analytic_jump + Complex64::new(q.value, 0.0))
        }
        LevyMeasureSpec::RadialPower { .. } => invalid("quadrature route is implemented for d = 1 only"),
        _ => eval_symbol(triplet, x, xi),
    }
}

/// Deterministic frequency lattice in the closed unit ball: the origin plus
/// `4·2^level` radii along `16·2^level` directions (2 directions in d = 1).
/// Lattices are nested in `level`.
pub fn unit_ball_lattice(dim: usize, level: u32) -> Vec<Vec<f64>> {
    let radii = 4usize << level;
    let mut dirs: Vec<Vec<f64>> = Vec::new();
    match dim {
        1 => {
            dirs.push(vec![1.0]);
            dirs.push(vec![-1.0]);
        }
        2 => {
            let n = 16usize << level;
            for k in 0..n {
                let th = 2.0 * PI * k as f64 / n as f64;
                dirs.push(vec![th.cos(), th.sin()]);
            }
        }
        _ => {
            for i in 0..dim {
                for s in [1.0, -1.0] {
                    let mut e = vec![0.0; dim];
                    e[i] = s;
                    dirs.push(e);
                }
            }
            let want = (16usize << level).max(dirs.len());
            let mut k = 1u64;
            while dirs.len() < want {
                let p: Vec<f64> = (0..dim).map(|j| 2.0 * halton(k, PRIMES[j % PRIMES.len()]) - 1.0).collect();
                let n = norm(&p);
                if n > 1e-3 {
                    dirs.push(p.iter().map(|v| v / n).collect());
                }
                k += 1;
            }
        }
    }
    let mut pts = vec![vec![0.0; dim]];
    // d = 1 needs 32 radii per side to reach 64 points per state
    let radii = if dim == 1 { radii * 8 } else { radii };
    for j in 1..=radii {
        let r = j as f64 / radii as f64;
        for d in &dirs {
            pts.push(d.iter().map(|v| v * r).collect());
        }
    }
    pts
}

pub(crate) const PRIMES: [u64; 10] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29];

/// Radical inverse of `k` in base `b`.
pub(crate) fn halton(mut k: u64, b: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while k > 0 {
        f /= b as f64;
        r += f * (k % b) as f64;
        k /= b;
    }
    r
}

/// `2 sup_{|ξ|≤1} |p(x, ξ)|` at one state over the lattice of the given level.
pub fn local_coeff_bound(triplet: &StateTriplet, x: &[f64], level: u32) -> Result<f64> {
    let mut best: f64 = 0.0;
    for xi in unit_ball_lattice(triplet.dim(), level) {
        best = best.max(eval_symbol(triplet, x, &xi)?.norm());
    }
    Ok(2.0 * best)
}

/// Bounded-coefficients certificate on a probe set: the maximum over probes
/// of `2 sup_{|ξ|≤1} |p(x, ξ)|`, the supremum taken over a fixed lattice (so
/// the result is a lower bound for the true supremum).
pub fn coeff_bound(triplet: &StateTriplet, probe_states: &[Vec<f64>]) -> Result<f64> {
    coeff_bound_at_level(triplet, probe_states, 0)
}

pub fn coeff_bound_at_level(triplet: &StateTriplet, probe_states: &[Vec<f64>], level: u32) -> Result<f64> {
    if probe_states.is_empty() {
        return invalid("coeff_bound needs at least one probe state");
    }
    let mut best: f64 = 0.0;
    for x in probe_states {
        best = best.max(local_coeff_bound(triplet, x, level)?);
    }
    Ok(best)
}
