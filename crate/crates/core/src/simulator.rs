//! Seeded Monte-Carlo engine: Euler-type path sampling, first exits from
//! balls and boxes, and estimators for `T_t u`, `E^x u(X_τ)` and `R_α u`.
//!
//! Path `i` draws only from stream `i` of the root seed, so every result is a
//! deterministic function of `(model, config, domain, start)`, independent of
//! the worker count. Runs at different start points share streams, which
//! gives common random numbers across probe states for free.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::characteristics::{LevyMeasureSpec, StableLikeIndex, StateTriplet};
use crate::error::{ensure_finite, invalid, Result};
use crate::numeric::{compensated_sum, CompensatedSum};
use crate::orlicz::DiscreteMeasure;
use crate::parallel::par_map;
use crate::rng::{self, path_rng, PathRng};

/// Default small-jump truncation for generic triplets.
pub const DEFAULT_EPSILON: f64 = 1e-3;

#[derive(Clone)]
enum Kind {
    Brownian { sigma: f64 },
    IsotropicStable { alpha: f64 },
    CompoundPoisson { rate: f64, points: Vec<Vec<f64>>, cdf: Vec<f64> },
    StableLike { index: StableLikeIndex },
    Generic { triplet: StateTriplet, epsilon: f64, frozen: Option<Arc<JumpParams>> },
}

/// A process family together with its sampler.
#[derive(Clone)]
pub struct ProcessModel {
    dim: usize,
    kind: Kind,
}

impl fmt::Debug for ProcessModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ProcessModel({}, d = {})", self.kind_name(), self.dim)
    }
}

/// Local characteristics prepared for sampling at one state.
#[derive(Debug, Clone)]
struct JumpParams {
    /// Row-major square root of `a(x)`.
    sqrt_a: Vec<f64>,
    /// `b(x)` minus the compensator of the exactly simulated atoms.
    drift: Vec<f64>,
    /// Per-coordinate variance rate of the Gaussian replacing jumps below ε.
    small_var: f64,
    /// Intensity and index of radial jumps above ε.
    big_rate: f64,
    big_alpha: f64,
    epsilon: f64,
    atom_mass: f64,
    atom_points: Vec<Vec<f64>>,
    atom_cdf: Vec<f64>,
}

impl JumpParams {
    fn at(triplet: &StateTriplet, x: &[f64], epsilon: f64) -> Result<Self> {
        let d = triplet.dim();
        let a = triplet.diffusion_at(x);
        let sqrt_a = psd_sqrt(&a, d);
        let mut drift = triplet.drift_at(x).into_owned();
        let nu = triplet.jumps_at(x).into_owned();
        let mut p = JumpParams {
            sqrt_a,
            drift: vec![0.0; d],
            small_var: 0.0,
            big_rate: 0.0,
            big_alpha: 1.0,
            epsilon,
            atom_mass: 0.0,
            atom_points: Vec::new(),
            atom_cdf: Vec::new(),
        };
        match nu {
            LevyMeasureSpec::Zero => {}
            LevyMeasureSpec::RadialPower { alpha, .. } => {
                // symmetric: the compensator integral vanishes
                p.small_var = nu.truncated_second_moment(epsilon) / d as f64;
                p.big_rate = nu.tail_mass(epsilon);
                p.big_alpha = alpha;
            }
            LevyMeasureSpec::FiniteAtoms { atoms } => {
                let mut acc = 0.0;
                for at in &atoms {
                    acc += at.mass;
                    p.atom_cdf.push(acc);
                    p.atom_points.push(at.point.clone());
                    if at.point.iter().map(|z| z * z).sum::<f64>() <= 1.0 {
                        drift.iter_mut().zip(&at.point).for_each(|(b, z)| *b -= at.mass * z);
                    }
                }
                p.atom_mass = acc;
            }
        }
        p.drift = drift;
        ensure_finite("sampler parameters", &p.drift)?;
        Ok(p)
    }

    fn sample<R: Rng + ?Sized>(&self, dt: f64, rng: &mut R, out: &mut [f64], scratch: &mut [f64]) {
        let d = out.len();
        let sq = dt.sqrt();
        for (o, b) in out.iter_mut().zip(&self.drift) {
            *o = b * dt;
        }
        if self.sqrt_a.iter().any(|&v| v != 0.0) {
            for s in scratch.iter_mut() {
                *s = rng::standard_normal(rng);
            }
            for i in 0..d {
                let row = &self.sqrt_a[i * d..(i + 1) * d];
                out[i] += sq * row.iter().zip(scratch.iter()).map(|(a, g)| a * g).sum::<f64>();
            }
        }
        if self.small_var > 0.0 {
            let s = (self.small_var * dt).sqrt();
            for o in out.iter_mut() {
                *o += s * rng::standard_normal(rng);
            }
        }
        if self.big_rate > 0.0 {
            let n = rng::poisson(self.big_rate * dt, rng);
            for _ in 0..n {
                let u: f64 = 1.0 - rng.random::<f64>();
                let radius = self.epsilon * u.powf(-1.0 / self.big_alpha);
                rng::unit_direction(rng, scratch);
                out.iter_mut().zip(scratch.iter()).for_each(|(o, e)| *o += radius * e);
            }
        }
        if self.atom_mass > 0.0 {
            let n = rng::poisson(self.atom_mass * dt, rng);
            for _ in 0..n {
                let k = pick(&self.atom_cdf, rng);
                out.iter_mut().zip(&self.atom_points[k]).for_each(|(o, z)| *o += z);
            }
        }
    }
}

fn pick<R: Rng + ?Sized>(cdf: &[f64], rng: &mut R) -> usize {
    let total = *cdf.last().expect("non-empty cdf");
    let u = rng.random::<f64>() * total;
    cdf.partition_point(|&c| c <= u).min(cdf.len() - 1)
}

fn psd_sqrt(a: &[f64], d: usize) -> Vec<f64> {
    if a.iter().all(|&v| v == 0.0) {
        return vec![0.0; d * d];
    }
    if d == 1 {
        return vec![a[0].max(0.0).sqrt()];
    }
    let eig = SymmetricEigen::new(DMatrix::from_row_slice(d, d, a));
    let v = &eig.eigenvectors;
    let mut out = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            out[i * d + j] = (0..d).map(|k| v[(i, k)] * eig.eigenvalues[k].max(0.0).sqrt() * v[(j, k)]).sum();
        }
    }
    out
}

impl ProcessModel {
    pub fn brownian(dim: usize, sigma: f64) -> Result<Self> {
        check_dim(dim)?;
        if !(sigma > 0.0 && sigma.is_finite()) {
            return invalid(format!("brownian sigma must be positive, got {sigma}"));
        }
        Ok(Self { dim, kind: Kind::Brownian { sigma } })
    }

    /// Symbol `|ξ|^α`, `α ∈ (0, 2)`.
    pub fn isotropic_stable(dim: usize, alpha: f64) -> Result<Self> {
        check_dim(dim)?;
        if !(alpha > 0.0 && alpha < 2.0) {
            return invalid(format!("stable index must lie in (0,2), got {alpha}"));
        }
        Ok(Self { dim, kind: Kind::IsotropicStable { alpha } })
    }

    /// Jumps at `rate` with sizes drawn from `jumps` (weights are normalised).
    pub fn compound_poisson(rate: f64, jumps: &DiscreteMeasure) -> Result<Self> {
        if !(rate >= 0.0 && rate.is_finite()) {
            return invalid(format!("jump rate must be non-negative, got {rate}"));
        }
        let points = jumps.points().to_vec();
        let Some(dim) = points.first().map(Vec::len) else {
            return invalid("compound-poisson jump law needs at least one atom");
        };
        check_dim(dim)?;
        if points.iter().any(|p| p.len() != dim) {
            return invalid("jump atoms have inconsistent dimensions");
        }
        let total: f64 = jumps.weights().iter().sum();
        if !(total > 0.0) {
            return invalid("jump law has zero mass");
        }
        let mut acc = 0.0;
        let cdf = jumps
            .weights()
            .iter()
            .map(|w| {
                acc += w / total;
                acc
            })
            .collect();
        Ok(Self { dim, kind: Kind::CompoundPoisson { rate, points, cdf } })
    }

    /// Symbol `|ξ|^{α(x)}`, simulated with the index frozen over each step.
    pub fn stable_like(dim: usize, index: StableLikeIndex) -> Result<Self> {
        check_dim(dim)?;
        Ok(Self { dim, kind: Kind::StableLike { index } })
    }

    /// Arbitrary triplet: Gaussian part, jumps below `epsilon` replaced by a
    /// Gaussian of matched covariance, jumps above `epsilon` simulated exactly.
    pub fn generic(triplet: StateTriplet, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return invalid(format!("small-jump truncation must lie in (0,1), got {epsilon}"));
        }
        let dim = triplet.dim();
        let frozen = if triplet.is_spatially_homogeneous() {
            Some(Arc::new(JumpParams::at(&triplet, &vec![0.0; dim], epsilon)?))
        } else {
            None
        };
        Ok(Self { dim, kind: Kind::Generic { triplet, epsilon, frozen } })
    }

    /// Deterministic motion `x + b t`: the shift semigroup.
    pub fn drift(velocity: Vec<f64>) -> Result<Self> {
        let d = velocity.len();
        check_dim(d)?;
        let t = StateTriplet::constant(d, vec![0.0; d * d], velocity, LevyMeasureSpec::Zero)?;
        Self::generic(t, DEFAULT_EPSILON)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            Kind::Brownian { .. } => "brownian",
            Kind::IsotropicStable { .. } => "isotropic-stable",
            Kind::CompoundPoisson { .. } => "compound-poisson",
            Kind::StableLike { .. } => "stable-like",
            Kind::Generic { .. } => "generic",
        }
    }

    /// Increments are independent of the current state.
    pub fn is_spatially_homogeneous(&self) -> bool {
        match &self.kind {
            Kind::StableLike { .. } => false,
            Kind::Generic { frozen, .. } => frozen.is_some(),
            _ => true,
        }
    }

    /// The Lévy characteristics the sampler approximates.
    pub fn triplet(&self) -> Result<StateTriplet> {
        let d = self.dim;
        match &self.kind {
            Kind::Brownian { sigma } => StateTriplet::brownian(d, *sigma),
            Kind::IsotropicStable { alpha } => StateTriplet::isotropic_stable(d, *alpha),
            Kind::CompoundPoisson { rate, points, cdf } => {
                let mut atoms = Vec::new();
                let mut prev = 0.0;
                let mut drift = vec![0.0; d];
                for (p, c) in points.iter().zip(cdf) {
                    let mass = rate * (c - prev);
                    prev = *c;
                    if mass > 0.0 && p.iter().any(|&z| z != 0.0) {
                        if p.iter().map(|z| z * z).sum::<f64>() <= 1.0 {
                            drift.iter_mut().zip(p).for_each(|(b, z)| *b += mass * z);
                        }
                        atoms.push((p.clone(), mass));
                    }
                }
                let nu = if atoms.is_empty() {
                    LevyMeasureSpec::Zero
                } else {
                    LevyMeasureSpec::finite_atoms(atoms)?
                };
                StateTriplet::constant(d, vec![0.0; d * d], drift, nu)
            }
            Kind::StableLike { index } => StateTriplet::stable_like(d, index.clone()),
            Kind::Generic { triplet, .. } => Ok(triplet.clone()),
        }
    }

    /// Upper activity index ᾱ: 2 with a Gaussian part, the stable index for
    /// power-law jumps, 1 for finite-activity or deterministic motion.
    pub fn activity_index(&self) -> f64 {
        match &self.kind {
            Kind::Brownian { .. } => 2.0,
            Kind::IsotropicStable { alpha } => *alpha,
            Kind::CompoundPoisson { .. } => 1.0,
            Kind::StableLike { index } => index.upper(),
            Kind::Generic { triplet, frozen, .. } => match frozen {
                Some(p) if p.sqrt_a.iter().any(|&v| v != 0.0) => 2.0,
                Some(p) if p.big_rate > 0.0 => p.big_alpha.max(1.0),
                Some(_) => 1.0,
                None => {
                    let x = vec![0.0; self.dim];
                    let a = triplet.diffusion_at(&x);
                    if a.iter().any(|&v| v != 0.0) {
                        2.0
                    } else if let LevyMeasureSpec::RadialPower { alpha, .. } = *triplet.jumps_at(&x) {
                        alpha.max(1.0)
                    } else {
                        1.0
                    }
                }
            },
        }
    }

    /// Exponent `β` of the discretisation allowance `C Δ^β`: `1/ᾱ`, capped at 1
    /// since the Euler drift error is already first order.
    pub fn allowance_exponent(&self) -> f64 {
        (1.0 / self.activity_index()).min(1.0)
    }

    /// Writes one increment over a step of length `dt` from state `x` into `out`.
    pub fn sample_increment<R: Rng + ?Sized>(&self, x: &[f64], dt: f64, rng: &mut R, out: &mut [f64]) -> Result<()> {
        let mut scratch = vec![0.0; self.dim];
        self.increment(x, dt, rng, out, &mut scratch)
    }

    fn increment<R: Rng + ?Sized>(
        &self,
        x: &[f64],
        dt: f64,
        rng: &mut R,
        out: &mut [f64],
        scratch: &mut [f64],
    ) -> Result<()> {
        match &self.kind {
            Kind::Brownian { sigma } => {
                let s = sigma * dt.sqrt();
                out.iter_mut().for_each(|o| *o = s * rng::standard_normal(rng));
            }
            Kind::IsotropicStable { alpha } => {
                rng::isotropic_stable(*alpha, rng, out);
                let s = dt.powf(1.0 / alpha);
                out.iter_mut().for_each(|o| *o *= s);
            }
            Kind::CompoundPoisson { rate, points, cdf } => {
                out.iter_mut().for_each(|o| *o = 0.0);
                let n = rng::poisson(rate * dt, rng);
                for _ in 0..n {
                    let k = pick(cdf, rng);
                    out.iter_mut().zip(&points[k]).for_each(|(o, z)| *o += z);
                }
            }
            Kind::StableLike { index } => {
                let alpha = index.check(x)?;
                rng::isotropic_stable(alpha, rng, out);
                let s = dt.powf(1.0 / alpha);
                out.iter_mut().for_each(|o| *o *= s);
            }
            Kind::Generic { triplet, epsilon, frozen } => match frozen {
                Some(p) => p.sample(dt, rng, out, scratch),
                None => {
                    triplet.check_at(x)?;
                    JumpParams::at(triplet, x, *epsilon)?.sample(dt, rng, out, scratch)
                }
            },
        }
        Ok(())
    }
}

fn check_dim(dim: usize) -> Result<()> {
    if dim == 0 {
        return invalid("dimension must be positive");
    }
    Ok(())
}

/// Step size, horizon, path count and seed of one Monte-Carlo run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dt: f64,
    pub horizon: f64,
    pub paths: usize,
    pub seed: u64,
    /// Cap on the total number of steps over all paths.
    #[serde(default = "default_budget")]
    pub step_budget: u64,
}

fn default_budget() -> u64 {
    50_000_000_000
}

impl SimConfig {
    pub fn new(dt: f64, horizon: f64, paths: usize, seed: u64) -> Result<Self> {
        let cfg = Self { dt, horizon, paths, seed, step_budget: default_budget() };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_budget(mut self, step_budget: u64) -> Self {
        self.step_budget = step_budget;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return invalid(format!("time step must be positive, got {}", self.dt));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return invalid(format!("horizon must be positive, got {}", self.horizon));
        }
        if self.dt > self.horizon {
            return invalid(format!("time step {} exceeds horizon {}", self.dt, self.horizon));
        }
        if self.paths == 0 {
            return invalid("path count must be at least 1");
        }
        if self.step_budget == 0 {
            return invalid("step budget must be positive");
        }
        Ok(())
    }

    /// Grid steps needed to reach `t`; the last one may be shorter than `dt`.
    fn steps_to(&self, t: f64) -> u64 {
        ((t / self.dt) * (1.0 - 1e-12)).ceil().max(1.0) as u64
    }

    fn per_path_cap(&self) -> u64 {
        (self.step_budget / self.paths as u64).max(1)
    }
}

/// An open ball or open box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Domain {
    Ball { center: Vec<f64>, radius: f64 },
    Box { lower: Vec<f64>, upper: Vec<f64> },
}

impl Domain {
    pub fn interval(lower: f64, upper: f64) -> Result<Self> {
        let d = Domain::Box { lower: vec![lower], upper: vec![upper] };
        d.validate()?;
        Ok(d)
    }

    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self> {
        let d = Domain::Ball { center, radius };
        d.validate()?;
        Ok(d)
    }

    pub fn dim(&self) -> usize {
        match self {
            Domain::Ball { center, .. } => center.len(),
            Domain::Box { lower, .. } => lower.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Domain::Ball { center, radius } => {
                ensure_finite("ball center", center)?;
                if center.is_empty() || !(*radius > 0.0 && radius.is_finite()) {
                    return invalid("ball needs a center and a positive radius");
                }
            }
            Domain::Box { lower, upper } => {
                ensure_finite("box corners", lower)?;
                ensure_finite("box corners", upper)?;
                if lower.is_empty() || lower.len() != upper.len() || lower.iter().zip(upper).any(|(l, u)| l >= u) {
                    return invalid("box needs lower < upper in every coordinate");
                }
            }
        }
        Ok(())
    }

    /// Membership in the open set.
    #[inline]
    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            Domain::Ball { center, radius } => {
                x.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum::<f64>() < radius * radius
            }
            Domain::Box { lower, upper } => x.iter().zip(lower.iter().zip(upper)).all(|(v, (l, u))| l < v && v < u),
        }
    }

    /// Euclidean distance from `x` to the complement.
    pub fn distance_to_boundary(&self, x: &[f64]) -> f64 {
        match self {
            Domain::Ball { center, radius } => {
                let r = x.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum::<f64>().sqrt();
                (radius - r).max(0.0)
            }
            Domain::Box { lower, upper } => x
                .iter()
                .zip(lower.iter().zip(upper))
                .map(|(v, (l, u))| (v - l).min(u - v))
                .fold(f64::INFINITY, f64::min)
                .max(0.0),
        }
    }
}

/// First exit of one path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExitRecord {
    /// Exit time; the horizon for censored paths, or the time reached when
    /// the step budget ran out.
    pub tau: f64,
    pub exit_position: Vec<f64>,
    pub censored: bool,
    #[serde(default)]
    pub budget_exhausted: bool,
}

/// Exit records of one run plus censoring counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExitRun {
    pub records: Vec<ExitRecord>,
    pub censored: usize,
    pub budget_exhausted: usize,
}

impl ExitRun {
    fn from_records(records: Vec<ExitRecord>) -> Self {
        let censored = records.iter().filter(|r| r.censored).count();
        let budget_exhausted = records.iter().filter(|r| r.budget_exhausted).count();
        Self { records, censored, budget_exhausted }
    }

    pub fn censored_fraction(&self) -> f64 {
        self.censored as f64 / self.records.len().max(1) as f64
    }

    /// Sample mean of τ over all paths (censored ones contribute the horizon).
    pub fn mean_tau(&self) -> Estimate {
        Estimate::from_samples(self.records.iter().map(|r| r.tau))
    }

    /// Empirical `P(τ ≤ t)`.
    pub fn exit_cdf(&self, t: f64) -> Estimate {
        Estimate::from_samples(self.records.iter().map(|r| if !r.censored && r.tau <= t { 1.0 } else { 0.0 }))
    }
}

/// Monte-Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
    pub n: usize,
}

impl Estimate {
    /// Mean and standard error, accumulated in sample order with
    /// compensated summation.
    pub fn from_samples<I: IntoIterator<Item = f64>>(samples: I) -> Self {
        let xs: Vec<f64> = samples.into_iter().collect();
        let n = xs.len();
        if n == 0 {
            return Self { value: f64::NAN, se: f64::NAN, n: 0 };
        }
        let mean = compensated_sum(xs.iter().copied()) / n as f64;
        let se = if n > 1 {
            let ss = compensated_sum(xs.iter().map(|x| (x - mean) * (x - mean)));
            (ss / (n as f64 - 1.0) / n as f64).sqrt()
        } else {
            0.0
        };
        Self { value: mean, se, n }
    }

    /// `|value − target| ≤ k·se + allowance`.
    pub fn agrees_with(&self, target: f64, k: f64, allowance: f64) -> bool {
        (self.value - target).abs() <= k * self.se + allowance
    }
}

/// A bounded test function `u` with a known bound on `sup |u|`.
#[derive(Clone)]
pub struct TestFunction {
    f: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
    sup: f64,
    label: String,
}

impl fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TestFunction({}, sup = {})", self.label, self.sup)
    }
}

impl TestFunction {
    pub fn new(label: impl Into<String>, sup: f64, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Result<Self> {
        if !(sup >= 0.0 && sup.is_finite()) {
            return invalid(format!("sup |u| must be finite, got {sup}"));
        }
        Ok(Self { f: Arc::new(f), sup, label: label.into() })
    }

    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }

    pub fn sup(&self) -> f64 {
        self.sup
    }

    pub fn label(&self) -> &str {
        &self.label
    }
}

/// Serializable test functions; every variant acts on the first coordinate
/// unless it names a vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FunctionSpec {
    Constant { value: f64 },
    /// `1{lower ≤ x₀ < upper}`; a missing bound is infinite.
    Indicator {
        #[serde(default)]
        lower: Option<f64>,
        #[serde(default)]
        upper: Option<f64>,
    },
    /// `1{|x| ≥ radius}`.
    OutsideBall { radius: f64 },
    /// `height · exp(−|x − center|² / (2 scale²))`.
    GaussianBump { center: Vec<f64>, scale: f64, height: f64 },
}

impl FunctionSpec {
    pub fn build(&self) -> Result<TestFunction> {
        match self.clone() {
            FunctionSpec::Constant { value } => {
                ensure_finite("constant", &[value])?;
                TestFunction::new(format!("const({value})"), value.abs(), move |_| value)
            }
            FunctionSpec::Indicator { lower, upper } => {
                let lo = lower.unwrap_or(f64::NEG_INFINITY);
                let hi = upper.unwrap_or(f64::INFINITY);
                if !(lo < hi) {
                    return invalid("indicator needs lower < upper");
                }
                TestFunction::new(format!("1[{lo},{hi})"), 1.0, move |x| {
                    if lo <= x[0] && x[0] < hi {
                        1.0
                    } else {
                        0.0
                    }
                })
            }
            FunctionSpec::OutsideBall { radius } => {
                if !(radius > 0.0) {
                    return invalid("outside-ball radius must be positive");
                }
                TestFunction::new(format!("1{{|x|>={radius}}}"), 1.0, move |x| {
                    if x.iter().map(|v| v * v).sum::<f64>() >= radius * radius {
                        1.0
                    } else {
                        0.0
                    }
                })
            }
            FunctionSpec::GaussianBump { center, scale, height } => {
                ensure_finite("bump center", &center)?;
                if !(scale > 0.0 && height.is_finite()) {
                    return invalid("gaussian bump needs positive scale and finite height");
                }
                let label = format!("bump({center:?},{scale})");
                TestFunction::new(label, height.abs(), move |x| {
                    let r2: f64 = x.iter().zip(&center).map(|(a, c)| (a - c) * (a - c)).sum();
                    height * (-r2 / (2.0 * scale * scale)).exp()
                })
            }
        }
    }
}

fn check_start(model: &ProcessModel, x0: &[f64]) -> Result<()> {
    ensure_finite("start state", x0)?;
    if x0.len() != model.dim() {
        return invalid(format!("start state has dimension {}, model has {}", x0.len(), model.dim()));
    }
    Ok(())
}

fn check_domain(model: &ProcessModel, domain: &Domain, x0: &[f64]) -> Result<()> {
    check_start(model, x0)?;
    domain.validate()?;
    if domain.dim() != model.dim() {
        return invalid("domain dimension differs from model dimension");
    }
    if !domain.contains(x0) {
        return invalid(format!("start state {x0:?} is not inside the open domain"));
    }
    Ok(())
}

/// Positions at time `t` of `cfg.paths` paths started at `x0`, flattened
/// path-major (`d` values per path).
pub fn simulate_cloud(model: &ProcessModel, x0: &[f64], t: f64, cfg: &SimConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    check_start(model, x0)?;
    if !(t > 0.0 && t.is_finite()) {
        return invalid(format!("time must be positive, got {t}"));
    }
    let d = model.dim();
    let steps = cfg.steps_to(t);
    let rows: Vec<Result<Vec<f64>>> = par_map(cfg.paths, |i| {
        let mut rng = path_rng(cfg.seed, i as u64);
        let mut x = x0.to_vec();
        let mut inc = vec![0.0; d];
        let mut scratch = vec![0.0; d];
        for n in 0..steps {
            let h = step_len(cfg.dt, t, n, steps);
            model.increment(&x, h, &mut rng, &mut inc, &mut scratch)?;
            x.iter_mut().zip(&inc).for_each(|(a, b)| *a += b);
        }
        Ok(x)
    });
    let mut out = Vec::with_capacity(cfg.paths * d);
    for r in rows {
        out.extend(r?);
    }
    Ok(out)
}

#[inline]
fn step_len(dt: f64, t: f64, n: u64, steps: u64) -> f64 {
    if n + 1 == steps {
        t - dt * n as f64
    } else {
        dt
    }
}

/// First exits from `domain` on the grid `k·dt`, censored at the horizon.
pub fn simulate_exit(model: &ProcessModel, domain: &Domain, x0: &[f64], cfg: &SimConfig) -> Result<ExitRun> {
    Ok(simulate_exit_levels(model, domain, x0, cfg, &[1])?.remove(0))
}

/// Exit runs at step sizes `factor · dt` for each factor. For spatially
/// homogeneous models all levels are driven by the same fine increments
/// (coarse steps are sums of fine ones), so level differences carry little
/// Monte-Carlo noise; other models run each level on the same streams.
pub fn simulate_exit_levels(
    model: &ProcessModel,
    domain: &Domain,
    x0: &[f64],
    cfg: &SimConfig,
    factors: &[usize],
) -> Result<Vec<ExitRun>> {
    cfg.validate()?;
    check_domain(model, domain, x0)?;
    if factors.is_empty() || factors.contains(&0) {
        return invalid("refinement factors must be positive");
    }
    if !model.is_spatially_homogeneous() {
        return factors
            .iter()
            .map(|&f| {
                let c = SimConfig { dt: cfg.dt * f as f64, ..*cfg };
                c.validate()?;
                simulate_exit_levels_coupled(model, domain, x0, &c, &[1]).map(|mut v| v.remove(0))
            })
            .collect();
    }
    simulate_exit_levels_coupled(model, domain, x0, cfg, factors)
}

fn simulate_exit_levels_coupled(
    model: &ProcessModel,
    domain: &Domain,
    x0: &[f64],
    cfg: &SimConfig,
    factors: &[usize],
) -> Result<Vec<ExitRun>> {
    let d = model.dim();
    let levels = factors.len();
    let steps = cfg.steps_to(cfg.horizon);
    let cap = cfg.per_path_cap().min(steps);
    let per_path: Vec<Result<Vec<ExitRecord>>> = par_map(cfg.paths, |i| {
        let mut rng: PathRng = path_rng(cfg.seed, i as u64);
        let mut pos: Vec<Vec<f64>> = vec![x0.to_vec(); levels];
        let mut acc: Vec<Vec<f64>> = vec![vec![0.0; d]; levels];
        let mut done: Vec<Option<ExitRecord>> = vec![None; levels];
        let mut live = levels;
        let mut inc = vec![0.0; d];
        let mut scratch = vec![0.0; d];
        let mut t = 0.0;
        let mut n = 0u64;
        while live > 0 && n < cap {
            let h = step_len(cfg.dt, cfg.horizon, n, steps);
            // homogeneous models ignore the state; others run one level
            model.increment(&pos[0], h, &mut rng, &mut inc, &mut scratch)?;
            n += 1;
            t = if n == steps { cfg.horizon } else { cfg.dt * n as f64 };
            for k in 0..levels {
                if done[k].is_some() {
                    continue;
                }
                acc[k].iter_mut().zip(&inc).for_each(|(a, b)| *a += b);
                if n % factors[k] as u64 == 0 || n == steps || n == cap {
                    pos[k].iter_mut().zip(acc[k].iter_mut()).for_each(|(p, a)| {
                        *p += *a;
                        *a = 0.0;
                    });
                    if !domain.contains(&pos[k]) {
                        done[k] = Some(ExitRecord {
                            tau: t,
                            exit_position: pos[k].clone(),
                            censored: false,
                            budget_exhausted: false,
                        });
                        live -= 1;
                    }
                }
            }
        }
        let budget_hit = n < steps && live > 0;
        Ok(done
            .into_iter()
            .zip(pos)
            .map(|(r, p)| {
                r.unwrap_or(ExitRecord { tau: t, exit_position: p, censored: true, budget_exhausted: budget_hit })
            })
            .collect())
    });
    let mut runs: Vec<Vec<ExitRecord>> = vec![Vec::with_capacity(cfg.paths); levels];
    for row in per_path {
        for (k, rec) in row?.into_iter().enumerate() {
            runs[k].push(rec);
        }
    }
    Ok(runs.into_iter().map(ExitRun::from_records).collect())
}

/// `T_t u(x0) = E^{x0} u(X_t)`.
pub fn estimate_semigroup(
    model: &ProcessModel,
    u: &TestFunction,
    t: f64,
    x0: &[f64],
    cfg: &SimConfig,
) -> Result<Estimate> {
    let d = model.dim();
    let cloud = simulate_cloud(model, x0, t, cfg)?;
    Ok(Estimate::from_samples(cloud.chunks(d).map(|x| u.eval(x))))
}

/// Exit functional `E^{x0} u(X_τ)` over the paths that exited before the horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExitFunctionalEstimate {
    pub estimate: Estimate,
    pub censored_fraction: f64,
    /// `sup|u| ·` censored fraction: the most the censored paths could shift
    /// an all-path average.
    pub censored_bound: f64,
    /// More than half of the paths were censored.
    pub unreliable: bool,
}

pub fn estimate_exit_functional(
    model: &ProcessModel,
    u: &TestFunction,
    domain: &Domain,
    x0: &[f64],
    cfg: &SimConfig,
) -> Result<ExitFunctionalEstimate> {
    let run = simulate_exit(model, domain, x0, cfg)?;
    Ok(exit_functional_from_run(&run, u))
}

pub fn exit_functional_from_run(run: &ExitRun, u: &TestFunction) -> ExitFunctionalEstimate {
    let estimate =
        Estimate::from_samples(run.records.iter().filter(|r| !r.censored).map(|r| u.eval(&r.exit_position)));
    let frac = run.censored_fraction();
    ExitFunctionalEstimate {
        estimate,
        censored_fraction: frac,
        censored_bound: u.sup() * frac,
        unreliable: frac > 0.5,
    }
}

/// Resolvent `R_α u(x0) = E ∫_0^∞ e^{−αt} u(X_t) dt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolventEstimate {
    pub estimate: Estimate,
    /// `sup|u| e^{−αT} / α`, the deterministic cost of stopping at the horizon.
    pub truncation_bound: f64,
}

/// Left-point quadrature in time with exact exponential weights
/// `∫_{t_n}^{t_{n+1}} e^{−αs} ds`, so that `u ≡ 1` returns `(1 − e^{−αT})/α`
/// up to rounding.
pub fn estimate_resolvent(
    model: &ProcessModel,
    u: &TestFunction,
    rate: f64,
    x0: &[f64],
    cfg: &SimConfig,
) -> Result<ResolventEstimate> {
    cfg.validate()?;
    check_start(model, x0)?;
    if !(rate > 0.0 && rate.is_finite()) {
        return invalid(format!("resolvent rate must be positive, got {rate}"));
    }
    let d = model.dim();
    let steps = cfg.steps_to(cfg.horizon);
    let weights: Vec<f64> = (0..steps)
        .map(|n| {
            let t0 = cfg.dt * n as f64;
            let h = step_len(cfg.dt, cfg.horizon, n, steps);
            (-rate * t0).exp() * -(-rate * h).exp_m1() / rate
        })
        .collect();
    let values: Vec<Result<f64>> = par_map(cfg.paths, |i| {
        let mut rng = path_rng(cfg.seed, i as u64);
        let mut x = x0.to_vec();
        let mut inc = vec![0.0; d];
        let mut scratch = vec![0.0; d];
        let mut acc = CompensatedSum::new();
        for (n, w) in weights.iter().enumerate() {
            acc.add(w * u.eval(&x));
            let h = step_len(cfg.dt, cfg.horizon, n as u64, steps);
            model.increment(&x, h, &mut rng, &mut inc, &mut scratch)?;
            x.iter_mut().zip(&inc).for_each(|(a, b)| *a += b);
        }
        Ok(acc.value())
    });
    let values: Vec<f64> = values.into_iter().collect::<Result<_>>()?;
    Ok(ResolventEstimate {
        estimate: Estimate::from_samples(values),
        truncation_bound: u.sup() * (-rate * cfg.horizon).exp() / rate,
    })
}

/// Discretisation allowance `C Δ^β` for the mean exit time, with `C` fitted
/// by least squares on the levels `4Δ, 2Δ, Δ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaAllowance {
    pub exponent: f64,
    pub coefficient: f64,
    /// `|C| Δ^β` at the finest step.
    pub allowance: f64,
    /// Mean exit time per level, coarsest first.
    pub level_means: Vec<Estimate>,
    pub level_dts: Vec<f64>,
    /// Intercept of the fit: the `Δ → 0` extrapolation.
    pub extrapolated: f64,
}

/// Runs the three refinement levels and returns the finest run with its
/// allowance.
pub fn exit_with_allowance(
    model: &ProcessModel,
    domain: &Domain,
    x0: &[f64],
    cfg: &SimConfig,
) -> Result<(ExitRun, DeltaAllowance)> {
    let factors = [4usize, 2, 1];
    if cfg.dt * 4.0 > cfg.horizon {
        return invalid("allowance fit needs 4·dt within the horizon");
    }
    let mut runs = simulate_exit_levels(model, domain, x0, cfg, &factors)?;
    let means: Vec<Estimate> = runs.iter().map(ExitRun::mean_tau).collect();
    let dts: Vec<f64> = factors.iter().map(|&f| cfg.dt * f as f64).collect();
    let beta = model.allowance_exponent();
    let (intercept, slope) = fit_line(&dts.iter().map(|h| h.powf(beta)).collect::<Vec<_>>(), &means);
    let finest = runs.pop().expect("three levels");
    Ok((
        finest,
        DeltaAllowance {
            exponent: beta,
            coefficient: slope,
            allowance: slope.abs() * cfg.dt.powf(beta),
            level_means: means,
            level_dts: dts,
            extrapolated: intercept,
        },
    ))
}

fn fit_line(xs: &[f64], ys: &[Estimate]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().map(|e| e.value).sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y.value - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (my - slope * mx, slope)
}

/// `E^0 τ` for the symmetric α-stable process (symbol `|ξ|^α`) leaving the
/// ball of radius `r` from `x`, `|x| < r`.
pub fn stable_mean_exit_time(alpha: f64, dim: usize, r: f64, x_norm: f64) -> f64 {
    use crate::numeric::gamma;
    let d = dim as f64;
    (r * r - x_norm * x_norm).powf(alpha / 2.0) * gamma(d / 2.0)
        / (2f64.powf(alpha) * gamma(1.0 + alpha / 2.0) * gamma((d + alpha) / 2.0))
}
