//! Empirical signatures of the strong Feller property.
//!
//! A semigroup is strong Feller when `x ↦ T_t u(x)` is continuous for every
//! bounded measurable `u`; equivalently, on compacts, when the kernels
//! `P_t(x, ·)` move continuously in total variation. The diagnostics here
//! estimate that quantity and its relatives from simulated path clouds:
//!
//! * total-variation profiles between kernels at nearby starting points,
//! * the absolute-continuity modulus `sup_{x∈K} sup_{|A|≤δ} P_t(x, A)`,
//! * Orlicz-ultracontractivity ratios `sup_K |T_t u| / ‖u‖_Φ`,
//! * continuity profiles of exit functionals, and
//! * uniform decay of `P^x(τ_U ≤ t)` on compacts with its explicit bound.
//!
//! TV is reported on the `[0, 1]` scale (half the `L¹` distance). All
//! kernels in one diagnostic share one histogram grid and one set of random
//! streams, so probe-to-probe differences are not swamped by sampling noise.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::exit_bounds::{compute_big_h, exit_probability_bound, small_h_extremum, BallSpec, BoundReport};
use crate::orlicz::{orlicz_norm, DiscreteMeasure, YoungFunction};
use crate::simulator::{
    exit_functional_from_run, simulate_cloud, simulate_exit, Domain, Estimate, ExitRun, ProcessModel, SimConfig,
    TestFunction,
};

const MAX_BINS: usize = 1 << 22;
const OVERFLOW_LIMIT: f64 = 0.01;

/// Uniform rectangular histogram grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramGrid {
    pub lower: Vec<f64>,
    pub width: Vec<f64>,
    pub bins: Vec<usize>,
}

impl HistogramGrid {
    pub fn new(lower: Vec<f64>, width: Vec<f64>, bins: Vec<usize>) -> Result<Self> {
        let g = Self { lower, width, bins };
        g.validate()?;
        Ok(g)
    }

    fn validate(&self) -> Result<()> {
        let d = self.lower.len();
        if d == 0 || self.width.len() != d || self.bins.len() != d {
            return invalid("grid needs lower, width and bins for every axis");
        }
        if self.width.iter().any(|w| !(*w > 0.0 && w.is_finite())) || self.lower.iter().any(|l| !l.is_finite()) {
            return invalid("grid widths must be positive and corners finite");
        }
        if self.bins.iter().any(|&b| b == 0) || self.total_bins() > MAX_BINS {
            return invalid(format!("grid must have between 1 and {MAX_BINS} bins"));
        }
        Ok(())
    }

    /// Freedman-Diaconis width per axis from a pooled cloud, covering the
    /// pooled 0.1%–99.9% quantile range plus two bins on each side.
    pub fn freedman_diaconis(pooled: &[f64], dim: usize) -> Result<Self> {
        if dim == 0 || pooled.is_empty() || pooled.len() % dim != 0 {
            return invalid("pooled cloud is empty or ragged");
        }
        let n = pooled.len() / dim;
        let mut lower = Vec::with_capacity(dim);
        let mut width = Vec::with_capacity(dim);
        let mut bins = Vec::with_capacity(dim);
        for k in 0..dim {
            let mut xs: Vec<f64> = pooled.iter().skip(k).step_by(dim).copied().collect();
            if xs.iter().any(|x| !x.is_finite()) {
                return Err(Error::NumericFailure {
                    op: "freedman_diaconis",
                    detail: "non-finite sample in cloud".into(),
                    residual: None,
                });
            }
            xs.sort_by(f64::total_cmp);
            let q = |p: f64| xs[((p * (n - 1) as f64).round() as usize).min(n - 1)];
            let (lo, hi) = (q(0.001), q(0.999));
            let iqr = q(0.75) - q(0.25);
            let mut w = 2.0 * iqr / (n as f64).cbrt();
            if !(w > 0.0) {
                w = if hi > lo { (hi - lo) / 64.0 } else { 1e-2 * lo.abs().max(1.0) };
            }
            let span = (hi - lo).max(w);
            let per_axis = ((MAX_BINS as f64).powf(1.0 / dim as f64)).floor() - 4.0;
            if span / w > per_axis {
                w = span / per_axis;
            }
            lower.push(lo - 2.0 * w);
            let b = ((hi - lo) / w).ceil() as usize + 4;
            width.push(w);
            bins.push(b.max(1));
        }
        Self::new(lower, width, bins)
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn total_bins(&self) -> usize {
        self.bins.iter().product()
    }

    /// Lebesgue measure of one bin.
    pub fn bin_volume(&self) -> f64 {
        self.width.iter().product()
    }

    /// Flattened bin index, `None` outside the grid.
    pub fn locate(&self, x: &[f64]) -> Option<usize> {
        let mut idx = 0usize;
        for k in 0..self.dim() {
            let f = ((x[k] - self.lower[k]) / self.width[k]).floor();
            if !(f >= 0.0 && f < self.bins[k] as f64) {
                return None;
            }
            idx = idx * self.bins[k] + f as usize;
        }
        Some(idx)
    }

    /// Center of a flattened bin.
    pub fn center(&self, mut idx: usize) -> Vec<f64> {
        let d = self.dim();
        let mut c = vec![0.0; d];
        for k in (0..d).rev() {
            let i = idx % self.bins[k];
            idx /= self.bins[k];
            c[k] = self.lower[k] + (i as f64 + 0.5) * self.width[k];
        }
        c
    }

    /// Same corner, half the width.
    pub fn refined(&self) -> Result<Self> {
        Self::new(
            self.lower.clone(),
            self.width.iter().map(|w| w / 2.0).collect(),
            self.bins.iter().map(|b| 2 * b).collect(),
        )
    }

    /// Same corner, twice the width.
    pub fn coarsened(&self) -> Result<Self> {
        Self::new(
            self.lower.clone(),
            self.width.iter().map(|w| w * 2.0).collect(),
            self.bins.iter().map(|b| b.div_ceil(2)).collect(),
        )
    }
}

/// Histogram of one path cloud on a shared grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalKernel {
    pub x: Vec<f64>,
    pub t: f64,
    pub counts: Vec<u64>,
    pub n: u64,
    pub overflow: u64,
    /// Bin of each path, `u32::MAX` for overflow; used for paired errors.
    #[serde(skip)]
    pub path_bins: Vec<u32>,
}

impl EmpiricalKernel {
    pub fn from_cloud(x: &[f64], t: f64, cloud: &[f64], grid: &HistogramGrid) -> Self {
        let d = grid.dim();
        let mut counts = vec![0u64; grid.total_bins()];
        let mut overflow = 0;
        let path_bins = cloud
            .chunks(d)
            .map(|p| match grid.locate(p) {
                Some(i) => {
                    counts[i] += 1;
                    i as u32
                }
                None => {
                    overflow += 1;
                    u32::MAX
                }
            })
            .collect::<Vec<_>>();
        Self { x: x.to_vec(), t, counts, n: path_bins.len() as u64, overflow, path_bins }
    }

    pub fn overflow_fraction(&self) -> f64 {
        self.overflow as f64 / self.n as f64
    }

    fn check_coverage(&self) -> Result<()> {
        let f = self.overflow_fraction();
        if f > OVERFLOW_LIMIT {
            return Err(Error::GridTooSmall { probe: format!("{:?}", self.x), overflow: f });
        }
        Ok(())
    }
}

/// `½ Σ |p̂ − q̂|` with overflow treated as one extra cell, and its standard
/// error. With paired samples (common random numbers) the estimate is the
/// mean of `½(s(bin X_n) − s(bin Y_n))`, `s = sign(p̂ − q̂)`, whose sample
/// deviation gives the error; unpaired clouds combine two binomial terms.
fn tv_between(p: &EmpiricalKernel, q: &EmpiricalKernel, paired: bool) -> (f64, f64) {
    let n = p.n as f64;
    let m = q.n as f64;
    let sign = |i: u32| -> f64 {
        let (a, b) = if i == u32::MAX {
            (p.overflow as f64 / n, q.overflow as f64 / m)
        } else {
            (p.counts[i as usize] as f64 / n, q.counts[i as usize] as f64 / m)
        };
        if a > b {
            1.0
        } else if a < b {
            -1.0
        } else {
            0.0
        }
    };
    let mut diff: u128 = 0;
    for (a, b) in p.counts.iter().zip(&q.counts) {
        diff += a.abs_diff(*b) as u128;
    }
    let tv = if p.n == q.n {
        0.5 * (diff + p.overflow.abs_diff(q.overflow) as u128) as f64 / n
    } else {
        let mut s = 0.0;
        for (a, b) in p.counts.iter().zip(&q.counts) {
            s += (*a as f64 / n - *b as f64 / m).abs();
        }
        0.5 * (s + (p.overflow as f64 / n - q.overflow as f64 / m).abs())
    };
    let se = if paired && p.n == q.n {
        let z: Vec<f64> =
            p.path_bins.iter().zip(&q.path_bins).map(|(&a, &b)| 0.5 * (sign(a) - sign(b))).collect();
        Estimate::from_samples(z).se
    } else {
        let sp = Estimate::from_samples(p.path_bins.iter().map(|&a| 0.5 * sign(a))).se;
        let sq = Estimate::from_samples(q.path_bins.iter().map(|&b| 0.5 * sign(b))).se;
        (sp * sp + sq * sq).sqrt()
    };
    (tv, se)
}

/// TV distance between the kernels at `x` and `y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TvRow {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub gap: f64,
    pub tv: f64,
    pub se: f64,
    /// Half the largest change of the estimate under halving or doubling the bin width.
    pub binning_allowance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TvProfile {
    pub t: f64,
    pub grid: HistogramGrid,
    pub rows: Vec<TvRow>,
    /// The kernels at the closest pair overlap substantially: TV + 3·SE < ½.
    pub strong_feller_signature: bool,
}

fn distinct_states(states: impl IntoIterator<Item = Vec<f64>>) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    for s in states {
        if !out.iter().any(|o| o == &s) {
            out.push(s);
        }
    }
    out
}

fn index_of(states: &[Vec<f64>], x: &[f64]) -> usize {
    states.iter().position(|s| s == x).expect("state registered")
}

/// Clouds at time `t` for each state, on common random numbers.
fn clouds(model: &ProcessModel, states: &[Vec<f64>], t: f64, cfg: &SimConfig) -> Result<Vec<Vec<f64>>> {
    states.iter().map(|x| simulate_cloud(model, x, t, cfg)).collect()
}

fn shared_grid(clouds: &[Vec<f64>], dim: usize, grid: Option<&HistogramGrid>) -> Result<HistogramGrid> {
    match grid {
        Some(g) => {
            if g.dim() != dim {
                return invalid("grid dimension differs from model dimension");
            }
            g.validate()?;
            Ok(g.clone())
        }
        None => HistogramGrid::freedman_diaconis(&clouds.concat(), dim),
    }
}

fn kernels(states: &[Vec<f64>], clouds: &[Vec<f64>], t: f64, grid: &HistogramGrid) -> Vec<EmpiricalKernel> {
    states.iter().zip(clouds).map(|(x, c)| EmpiricalKernel::from_cloud(x, t, c, grid)).collect()
}

/// TV profile over probe pairs; `grid = None` selects a Freedman-Diaconis
/// grid on the pooled clouds.
pub fn tv_profile(
    model: &ProcessModel,
    t: f64,
    pairs: &[(Vec<f64>, Vec<f64>)],
    cfg: &SimConfig,
    grid: Option<&HistogramGrid>,
) -> Result<TvProfile> {
    if pairs.is_empty() {
        return invalid("tv_profile needs at least one probe pair");
    }
    let states = distinct_states(pairs.iter().flat_map(|(x, y)| [x.clone(), y.clone()]));
    let cl = clouds(model, &states, t, cfg)?;
    let grid = shared_grid(&cl, model.dim(), grid)?;
    let base = kernels(&states, &cl, t, &grid);
    for k in &base {
        k.check_coverage()?;
    }
    let fine = kernels(&states, &cl, t, &grid.refined()?);
    let coarse = kernels(&states, &cl, t, &grid.coarsened()?);
    let rows: Vec<TvRow> = pairs
        .iter()
        .map(|(x, y)| {
            let (i, j) = (index_of(&states, x), index_of(&states, y));
            let (tv, se) = tv_between(&base[i], &base[j], true);
            let (tf, _) = tv_between(&fine[i], &fine[j], true);
            let (tc, _) = tv_between(&coarse[i], &coarse[j], true);
            let gap = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            TvRow {
                x: x.clone(),
                y: y.clone(),
                gap,
                tv,
                se,
                binning_allowance: 0.5 * (tf - tv).abs().max((tc - tv).abs()),
            }
        })
        .collect();
    let closest = rows
        .iter()
        .filter(|r| r.gap > 0.0)
        .min_by(|a, b| a.gap.total_cmp(&b.gap));
    let strong_feller_signature = closest.is_some_and(|r| r.tv + 3.0 * r.se < 0.5);
    Ok(TvProfile { t, grid, rows, strong_feller_signature })
}

/// TV profiles at several times for the same pairs: a smoke test for
/// anomalous jumps in the time variable.
pub fn tv_time_scan(
    model: &ProcessModel,
    times: &[f64],
    pairs: &[(Vec<f64>, Vec<f64>)],
    cfg: &SimConfig,
    grid: Option<&HistogramGrid>,
) -> Result<Vec<TvProfile>> {
    times.iter().map(|&t| tv_profile(model, t, pairs, cfg, grid)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcRow {
    pub delta: f64,
    /// `max_{x∈K}` of the largest kernel mass on a union of bins of measure ≤ δ.
    pub mass: f64,
    pub se: f64,
    pub binning_allowance: f64,
    pub argmax: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcModulus {
    pub t: f64,
    pub grid: HistogramGrid,
    pub rows: Vec<AcRow>,
}

/// Largest mass on `k` bins: greedy by descending count, which is optimal
/// when every bin has the same measure.
fn top_mass(kernel: &EmpiricalKernel, k: usize) -> f64 {
    let mut c = kernel.counts.clone();
    c.sort_unstable_by(|a, b| b.cmp(a));
    c.iter().take(k).sum::<u64>() as f64 / kernel.n as f64
}

fn budget_bins(delta: f64, grid: &HistogramGrid) -> usize {
    ((delta / grid.bin_volume()) * (1.0 + 1e-9)).floor() as usize
}

pub fn ac_modulus(
    model: &ProcessModel,
    t: f64,
    probes: &[Vec<f64>],
    deltas: &[f64],
    cfg: &SimConfig,
    grid: Option<&HistogramGrid>,
) -> Result<AcModulus> {
    if probes.is_empty() || deltas.is_empty() {
        return invalid("ac_modulus needs probe states and δ values");
    }
    let states = distinct_states(probes.iter().cloned());
    let cl = clouds(model, &states, t, cfg)?;
    let grid = shared_grid(&cl, model.dim(), grid)?;
    let vol = grid.bin_volume();
    if let Some(&d) = deltas.iter().find(|&&d| budget_bins(d, &grid) == 0) {
        return invalid(format!("δ = {d} is smaller than one bin of measure {vol}"));
    }
    let base = kernels(&states, &cl, t, &grid);
    for k in &base {
        k.check_coverage()?;
    }
    let fine_grid = grid.refined()?;
    let coarse_grid = grid.coarsened()?;
    let fine = kernels(&states, &cl, t, &fine_grid);
    let coarse = kernels(&states, &cl, t, &coarse_grid);
    let best = |ks: &[EmpiricalKernel], g: &HistogramGrid, delta: f64| -> Option<(f64, usize)> {
        let k = budget_bins(delta, g);
        if k == 0 {
            return None;
        }
        ks.iter()
            .enumerate()
            .map(|(i, kern)| (top_mass(kern, k), i))
            .fold(None, |acc: Option<(f64, usize)>, v| match acc {
                Some(a) if a.0 >= v.0 => Some(a),
                _ => Some(v),
            })
    };
    let rows = deltas
        .iter()
        .map(|&delta| {
            let (mass, i) = best(&base, &grid, delta).expect("δ checked above");
            let n = base[i].n as f64;
            let mut allow: f64 = 0.0;
            for (ks, g) in [(&fine, &fine_grid), (&coarse, &coarse_grid)] {
                if let Some((m, _)) = best(ks, g, delta) {
                    allow = allow.max((m - mass).abs());
                }
            }
            AcRow {
                delta,
                mass,
                se: (mass * (1.0 - mass) / n).sqrt(),
                binning_allowance: 0.5 * allow,
                argmax: states[i].clone(),
            }
        })
        .collect();
    Ok(AcModulus { t, grid, rows })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UltraRow {
    pub label: String,
    /// `sup_{x∈K} |T_t u(x)|`.
    pub sup_semigroup: f64,
    pub se: f64,
    pub argmax: Vec<f64>,
    pub orlicz_norm: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UltraReport {
    pub t: f64,
    pub rows: Vec<UltraRow>,
    pub max_ratio: f64,
    /// Largest `(sup + 3·SE) / ‖u‖_Φ`.
    pub max_ratio_upper: f64,
}

/// Orlicz norm of `u` against Lebesgue measure restricted to the grid,
/// discretised at bin centers.
pub fn grid_orlicz_norm(u: &TestFunction, grid: &HistogramGrid, phi: &YoungFunction) -> Result<(f64, bool)> {
    let vol = grid.bin_volume();
    let n = grid.total_bins();
    let values: Vec<f64> = (0..n).map(|i| u.eval(&grid.center(i))).collect();
    let nonzero = values.iter().any(|v| *v != 0.0);
    let mu = DiscreteMeasure::from_weights(vec![vol; n])?;
    Ok((orlicz_norm(&values, &mu, phi)?, nonzero))
}

pub fn ultracontractivity_ratio(
    model: &ProcessModel,
    t: f64,
    probes: &[Vec<f64>],
    phi: &YoungFunction,
    corpus: &[TestFunction],
    cfg: &SimConfig,
    grid: &HistogramGrid,
) -> Result<UltraReport> {
    if probes.is_empty() || corpus.is_empty() {
        return invalid("ultracontractivity needs probe states and test functions");
    }
    phi.validate()?;
    if grid.dim() != model.dim() {
        return invalid("grid dimension differs from model dimension");
    }
    let states = distinct_states(probes.iter().cloned());
    let cl = clouds(model, &states, t, cfg)?;
    let d = model.dim();
    let mut rows = Vec::with_capacity(corpus.len());
    for u in corpus {
        let (norm, nonzero) = grid_orlicz_norm(u, grid, phi)?;
        if !nonzero {
            return invalid(format!("test function {} vanishes on the grid", u.label()));
        }
        if !(norm > 0.0) {
            return invalid(format!(
                "Young function gives ‖{}‖_Φ = 0 for a non-zero function; it is unsuitable for this test",
                u.label()
            ));
        }
        let mut best: Option<(Estimate, usize)> = None;
        for (i, c) in cl.iter().enumerate() {
            let e = Estimate::from_samples(c.chunks(d).map(|x| u.eval(x)));
            let e = Estimate { value: e.value.abs(), ..e };
            if best.is_none_or(|(b, _)| e.value > b.value) {
                best = Some((e, i));
            }
        }
        let (e, i) = best.expect("at least one probe");
        rows.push(UltraRow {
            label: u.label().to_string(),
            sup_semigroup: e.value,
            se: e.se,
            argmax: states[i].clone(),
            orlicz_norm: norm,
            ratio: e.value / norm,
        });
    }
    let max_ratio = rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
    let max_ratio_upper = rows.iter().map(|r| (r.sup_semigroup + 3.0 * r.se) / r.orlicz_norm).fold(0.0, f64::max);
    Ok(UltraReport { t, rows, max_ratio, max_ratio_upper })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarmonicRow {
    pub x: Vec<f64>,
    pub value: f64,
    pub se: f64,
    pub censored_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarmonicProfile {
    pub rows: Vec<HarmonicRow>,
    /// `max_i |f(x_i) − f(x_{i+1})|` over consecutive probes.
    pub modulus: f64,
    pub unreliable: bool,
}

/// Largest jump between consecutive values.
pub fn modulus_of_continuity(values: &[f64]) -> f64 {
    values.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max)
}

/// `x ↦ E^x u(X_τ)` on probe states, all on the same random streams.
pub fn harmonic_profile(
    model: &ProcessModel,
    u: &TestFunction,
    domain: &Domain,
    probes: &[Vec<f64>],
    cfg: &SimConfig,
) -> Result<HarmonicProfile> {
    if probes.is_empty() {
        return invalid("harmonic_profile needs probe states");
    }
    let mut rows = Vec::with_capacity(probes.len());
    let mut unreliable = false;
    for x in probes {
        let run = simulate_exit(model, domain, x, cfg)?;
        let e = exit_functional_from_run(&run, u);
        unreliable |= e.unreliable;
        rows.push(HarmonicRow {
            x: x.clone(),
            value: e.estimate.value,
            se: e.estimate.se,
            censored_fraction: e.censored_fraction,
        });
    }
    let values: Vec<f64> = rows.iter().map(|r| r.value).collect();
    Ok(HarmonicProfile { modulus: modulus_of_continuity(&values), rows, unreliable })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayRow {
    pub t: f64,
    /// `sup_{x∈D}` of the empirical `P^x(τ_U ≤ t)`.
    pub sup_exit_probability: f64,
    pub se: f64,
    pub argmax: Vec<f64>,
    /// `sup_{x∈D} t H(x, r) / (1 − e^{-1})`.
    pub bound: f64,
    pub within_bound: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayTable {
    /// Radius used in `H(x, r)`: `min(dist(D, ∂U), 0.99)`.
    pub radius: f64,
    pub rows: Vec<DecayRow>,
    /// Non-increasing as `t ↓ 0`.
    pub monotone: bool,
}

/// Uniform decay of exit probabilities on a compact set `D ⊂ U`, against
/// the bound from `H`.
pub fn uniform_decay_check(
    model: &ProcessModel,
    domain: &Domain,
    compact: &[Vec<f64>],
    times: &[f64],
    cfg: &SimConfig,
) -> Result<DecayTable> {
    if compact.is_empty() || times.is_empty() {
        return invalid("uniform_decay_check needs probe states and times");
    }
    if times.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
        return invalid("decay times must be positive");
    }
    let dist = compact.iter().map(|x| domain.distance_to_boundary(x)).fold(f64::INFINITY, f64::min);
    if !(dist > 0.0) {
        return invalid("the compact set touches the boundary of the domain");
    }
    let r = dist.min(0.99);
    let triplet = model.triplet()?;
    let mut hs = Vec::with_capacity(compact.len());
    for x in compact {
        hs.push(compute_big_h(&triplet, &BallSpec::new(x.clone(), r)?, 64)?);
    }
    let horizon = times.iter().copied().fold(0.0, f64::max);
    let run_cfg = SimConfig { horizon, ..*cfg };
    run_cfg.validate()?;
    let runs: Vec<ExitRun> =
        compact.iter().map(|x| simulate_exit(model, domain, x, &run_cfg)).collect::<Result<_>>()?;
    let mut sorted = times.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rows: Vec<DecayRow> = sorted
        .iter()
        .map(|&t| {
            let (e, i) = runs
                .iter()
                .enumerate()
                .map(|(i, run)| (run.exit_cdf(t), i))
                .fold(None, |acc: Option<(Estimate, usize)>, v| match acc {
                    Some(a) if a.0.value >= v.0.value => Some(a),
                    _ => Some(v),
                })
                .expect("non-empty compact");
            let bound = hs.iter().map(|&h| exit_probability_bound(h, t)).fold(0.0, f64::max);
            DecayRow {
                t,
                sup_exit_probability: e.value,
                se: e.se,
                argmax: compact[i].clone(),
                bound,
                within_bound: e.value <= bound + 3.0 * e.se,
            }
        })
        .collect();
    let monotone = rows.windows(2).all(|w| w[0].sup_exit_probability <= w[1].sup_exit_probability);
    Ok(DecayTable { radius: r, rows, monotone })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExitBoundRow {
    pub t: f64,
    pub p_exit: f64,
    pub p_exit_se: f64,
    pub p_exit_bound: f64,
    pub p_exit_ok: bool,
    pub p_survive: f64,
    pub p_survive_se: f64,
    pub p_survive_bound: f64,
    pub p_survive_ok: bool,
}

/// Empirical exit statistics for `B(x, R)` against the explicit bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExitBoundCheck {
    /// Radius of the simulated ball.
    pub radius: f64,
    /// Radius at which `H` entered the exit-probability bound (`< 1`, `≤ R`).
    pub h_radius: f64,
    pub big_h: f64,
    /// `h(x, R)` for the survival bound.
    pub small_h: f64,
    pub rows: Vec<ExitBoundRow>,
    pub mean_tau: Estimate,
    pub censored_fraction: f64,
    /// Expectation bounds for `B(x, R)`, from a report at radius `R/2`.
    pub expectation: Option<BoundReport>,
    pub e_tau_lower_ok: Option<bool>,
    pub e_tau_upper_ok: Option<bool>,
    pub all_ok: bool,
}

/// Checks a simulated run in the ball `B(center, radius)` against the exit
/// bounds. `H` is evaluated at `min(radius, 0.99)`, valid because the smaller
/// ball is left first.
pub fn check_exit_bounds(
    model: &ProcessModel,
    center: &[f64],
    radius: f64,
    run: &ExitRun,
    times: &[f64],
) -> Result<ExitBoundCheck> {
    let triplet = model.triplet()?;
    let h_radius = radius.min(0.99);
    let big_h = compute_big_h(&triplet, &BallSpec::new(center.to_vec(), h_radius)?, 64)?;
    let small_h = small_h_extremum(&triplet, &BallSpec::new(center.to_vec(), radius)?, 64)?.value;
    let rows: Vec<ExitBoundRow> = times
        .iter()
        .map(|&t| {
            let pe = run.exit_cdf(t);
            let ps = Estimate::from_samples(
                run.records.iter().map(|r| if r.censored || r.tau > t { 1.0 } else { 0.0 }),
            );
            let pb = exit_probability_bound(big_h, t);
            let sb = if small_h > 0.0 { (1.0 / (t * small_h)).min(1.0) } else { 1.0 };
            ExitBoundRow {
                t,
                p_exit: pe.value,
                p_exit_se: pe.se,
                p_exit_bound: pb,
                p_exit_ok: pe.value <= pb + 3.0 * pe.se,
                p_survive: ps.value,
                p_survive_se: ps.se,
                p_survive_bound: sb,
                p_survive_ok: ps.value <= sb + 3.0 * ps.se,
            }
        })
        .collect();
    let mean_tau = run.mean_tau();
    let expectation = if radius / 2.0 < 1.0 {
        Some(crate::exit_bounds::bound_report(&triplet, &BallSpec::new(center.to_vec(), radius / 2.0)?)?)
    } else {
        None
    };
    let (lo_ok, up_ok) = match &expectation {
        Some(rep) => (
            (!rep.e_tau_lower_vacuous).then(|| rep.e_tau_lower <= mean_tau.value + 3.0 * mean_tau.se),
            (!rep.e_tau_upper_vacuous).then(|| mean_tau.value <= rep.e_tau_upper + 3.0 * mean_tau.se),
        ),
        None => (None, None),
    };
    let all_ok = rows.iter().all(|r| r.p_exit_ok && r.p_survive_ok) && lo_ok != Some(false) && up_ok != Some(false);
    Ok(ExitBoundCheck {
        radius,
        h_radius,
        big_h,
        small_h,
        rows,
        mean_tau,
        censored_fraction: run.censored_fraction(),
        expectation,
        e_tau_lower_ok: lo_ok,
        e_tau_upper_ok: up_ok,
        all_ok,
    })
}

/// Simulates exits from `B(center, radius)` and checks them against the bounds.
pub fn verify_exit_bounds(
    model: &ProcessModel,
    center: &[f64],
    radius: f64,
    times: &[f64],
    cfg: &SimConfig,
) -> Result<ExitBoundCheck> {
    let domain = Domain::ball(center.to_vec(), radius)?;
    let run = simulate_exit(model, &domain, center, cfg)?;
    check_exit_bounds(model, center, radius, &run, times)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::normal_cdf;
    use crate::simulator::FunctionSpec;

    fn cfg(dt: f64, horizon: f64, paths: usize) -> SimConfig {
        SimConfig::new(dt, horizon, paths, 99).unwrap()
    }

    fn grid05() -> HistogramGrid {
        HistogramGrid::new(vec![-6.0], vec![0.05], vec![260]).unwrap()
    }

    #[test]
    fn grid_locates_and_centers() {
        let g = HistogramGrid::new(vec![0.0, -1.0], vec![0.5, 0.25], vec![4, 8]).unwrap();
        let i = g.locate(&[1.2, 0.1]).unwrap();
        assert_eq!(g.center(i), vec![1.25, 0.125]);
        assert!(g.locate(&[2.0, 0.0]).is_none());
        assert!(g.locate(&[-1e-12, 0.0]).is_none());
        assert_eq!(g.refined().unwrap().total_bins(), 4 * g.total_bins());
    }

    #[test]
    fn tv_of_a_state_with_itself_is_zero() {
        let m = ProcessModel::isotropic_stable(1, 1.3).unwrap();
        let p = tv_profile(&m, 0.5, &[(vec![0.2], vec![0.2])], &cfg(0.1, 1.0, 2000), None).unwrap();
        assert_eq!(p.rows[0].tv, 0.0);
        assert_eq!(p.rows[0].se, 0.0);
    }

    #[test]
    fn brownian_tv_matches_gaussian_formula() {
        let m = ProcessModel::brownian(1, 1.0).unwrap();
        let p = tv_profile(&m, 1.0, &[(vec![0.0], vec![0.1])], &cfg(1.0, 1.0, 100_000), Some(&grid05())).unwrap();
        let r = &p.rows[0];
        let want = 2.0 * normal_cdf(0.05) - 1.0;
        assert!((r.tv - want).abs() <= 3.0 * r.se + r.binning_allowance, "{r:?} vs {want}");
        assert!(p.strong_feller_signature);
    }

    #[test]
    fn drift_tv_is_one() {
        let m = ProcessModel::drift(vec![1.0]).unwrap();
        let g = HistogramGrid::new(vec![0.998], vec![0.004], vec![100]).unwrap();
        let pairs = [(vec![0.0], vec![0.1]), (vec![0.0], vec![0.01])];
        let p = tv_profile(&m, 1.0, &pairs, &cfg(0.5, 1.0, 500), Some(&g)).unwrap();
        for r in &p.rows {
            assert_eq!((r.tv, r.se), (1.0, 0.0), "{r:?}");
        }
        assert!(!p.strong_feller_signature);
        // point masses closer than a bin merge; the allowance exposes it
        let coarse = HistogramGrid::new(vec![0.999], vec![0.02], vec![8]).unwrap();
        let p = tv_profile(&m, 1.0, &pairs[1..], &cfg(0.5, 1.0, 500), Some(&coarse)).unwrap();
        assert_eq!(p.rows[0].tv, 0.0);
        assert_eq!(p.rows[0].binning_allowance, 0.5);
    }

    #[test]
    fn independent_clouds_of_one_kernel_give_small_tv() {
        // calibrated null: two seeds, same start
        let m = ProcessModel::brownian(1, 1.0).unwrap();
        let g = HistogramGrid::new(vec![-6.0], vec![0.25], vec![48]).unwrap();
        let a = simulate_cloud(&m, &[0.0], 1.0, &cfg(1.0, 1.0, 50_000)).unwrap();
        let b = simulate_cloud(&m, &[0.0], 1.0, &SimConfig { seed: 7, ..cfg(1.0, 1.0, 50_000) }).unwrap();
        let ka = EmpiricalKernel::from_cloud(&[0.0], 1.0, &a, &g);
        let kb = EmpiricalKernel::from_cloud(&[0.0], 1.0, &b, &g);
        let (tv, se) = tv_between(&ka, &kb, false);
        // the plug-in estimator is biased up by about Σ_i sd|p̂_i − q̂_i|
        let bias: f64 =
            ka.counts.iter().map(|&c| (2.0 * c as f64 / 50_000.0 / 50_000.0 / std::f64::consts::PI).sqrt()).sum();
        assert!(tv <= 0.5 * bias + 3.0 * se, "tv = {tv}, bias = {bias}, se = {se}");
    }

    #[test]
    fn grid_too_small_names_the_probe() {
        let m = ProcessModel::brownian(1, 1.0).unwrap();
        let g = HistogramGrid::new(vec![-0.5], vec![0.1], vec![10]).unwrap();
        let err = tv_profile(&m, 1.0, &[(vec![0.0], vec![0.1])], &cfg(1.0, 1.0, 1000), Some(&g)).unwrap_err();
        assert!(matches!(err, Error::GridTooSmall { .. }), "{err}");
    }

    #[test]
    fn ac_modulus_brownian_and_drift() {
        let m = ProcessModel::brownian(1, 1.0).unwrap();
        let ac = ac_modulus(&m, 1.0, &[vec![0.0]], &[0.05, 0.1, 0.5, 13.0], &cfg(1.0, 1.0, 100_000), Some(&grid05()))
            .unwrap();
        let r = &ac.rows[1];
        let want = 2.0 * normal_cdf(0.05) - 1.0;
        assert!((r.mass - want).abs() <= 3.0 * r.se + r.binning_allowance, "{r:?}");
        assert!(ac.rows.windows(2).all(|w| w[0].mass <= w[1].mass));
        assert_eq!(ac.rows[3].mass, 1.0);

        let d = ProcessModel::drift(vec![1.0]).unwrap();
        let ac = ac_modulus(&d, 1.0, &[vec![0.0], vec![0.3]], &[0.05, 0.1], &cfg(0.5, 1.0, 100), Some(&grid05()))
            .unwrap();
        assert!(ac.rows.iter().all(|r| r.mass == 1.0));
        assert!(ac_modulus(&d, 1.0, &[vec![0.0]], &[0.01], &cfg(0.5, 1.0, 10), Some(&grid05())).is_err());
    }

    #[test]
    fn ultracontractivity_brownian_and_shift() {
        let m = ProcessModel::brownian(1, 1.0).unwrap();
        let phi = YoungFunction::power(2.0).unwrap();
        let g = HistogramGrid::new(vec![-4.0], vec![0.05], vec![160]).unwrap();
        let corpus: Vec<TestFunction> = [
            FunctionSpec::Indicator { lower: Some(-0.5), upper: Some(0.5) },
            FunctionSpec::Indicator { lower: Some(0.0), upper: Some(0.1) },
            FunctionSpec::GaussianBump { center: vec![0.0], scale: 0.3, height: 1.0 },
        ]
        .iter()
        .map(|s| s.build().unwrap())
        .collect();
        let rep = ultracontractivity_ratio(&m, 1.0, &[vec![0.0], vec![0.5]], &phi, &corpus, &cfg(1.0, 1.0, 50_000), &g)
            .unwrap();
        // ‖T_1 u‖∞ ≤ ‖p_1‖₂ ‖u‖₂ and the Orlicz norm of x² is 2‖u‖₂
        let bound = (4.0 * std::f64::consts::PI).powf(-0.25) / 2.0;
        assert!(rep.max_ratio <= bound, "{rep:?}");

        let d = ProcessModel::drift(vec![1.0]).unwrap();
        let mut prev = 0.0;
        for w in [0.4, 0.2, 0.1] {
            let spike = FunctionSpec::Indicator { lower: Some(1.0), upper: Some(1.0 + w) }.build().unwrap();
            let rep =
                ultracontractivity_ratio(&d, 1.0, &[vec![0.0]], &phi, &[spike], &cfg(0.5, 1.0, 10), &g).unwrap();
            // ‖1_A‖_Φ = 2|A|^{1/2}, so halving |A| multiplies the ratio by √2
            assert!(rep.max_ratio > 1.4 * prev, "{rep:?}");
            prev = rep.max_ratio;
        }
    }

    #[test]
    fn zero_function_is_rejected() {
        let m = ProcessModel::brownian(1, 1.0).unwrap();
        let g = HistogramGrid::new(vec![-1.0], vec![0.1], vec![20]).unwrap();
        let z = FunctionSpec::Constant { value: 0.0 }.build().unwrap();
        let r = ultracontractivity_ratio(&m, 1.0, &[vec![0.0]], &YoungFunction::power(2.0).unwrap(), &[z], &cfg(1.0, 1.0, 10), &g);
        assert!(r.is_err());
    }

    #[test]
    fn gamblers_ruin_profile_is_linear() {
        let m = ProcessModel::brownian(1, 1.0).unwrap();
        let u = FunctionSpec::Indicator { lower: Some(1.0), upper: None }.build().unwrap();
        let dom = Domain::interval(0.0, 1.0).unwrap();
        let probes: Vec<Vec<f64>> = (1..10).map(|k| vec![k as f64 / 10.0]).collect();
        let p = harmonic_profile(&m, &u, &dom, &probes, &cfg(1e-4, 5.0, 2000)).unwrap();
        for r in &p.rows {
            // grid monitoring biases by O(√Δ)
            assert!((r.value - r.x[0]).abs() <= 3.0 * r.se + 0.01, "{r:?}");
        }
        let one = FunctionSpec::Constant { value: 1.0 }.build().unwrap();
        let p = harmonic_profile(&m, &one, &dom, &probes, &cfg(1e-3, 5.0, 200)).unwrap();
        assert!(p.rows.iter().all(|r| r.value == 1.0));
        assert_eq!(p.modulus, 0.0);
    }

    #[test]
    fn drift_exit_profile_keeps_its_jump() {
        // sideways drift in the disk: the exit half is decided by the sign of x₁
        let m = ProcessModel::drift(vec![1.0, 0.0]).unwrap();
        let u = TestFunction::new("upper", 1.0, |x: &[f64]| if x[1] >= 0.0 { 1.0 } else { 0.0 }).unwrap();
        let dom = Domain::ball(vec![0.0, 0.0], 1.0).unwrap();
        let moduli: Vec<f64> = [4usize, 8, 16]
            .iter()
            .map(|&n| {
                let probes: Vec<Vec<f64>> =
                    (0..=n).map(|k| vec![0.0, -0.5 + k as f64 / n as f64 - 0.5 / n as f64 * 0.1]).collect();
                harmonic_profile(&m, &u, &dom, &probes, &cfg(0.01, 5.0, 4)).unwrap().modulus
            })
            .collect();
        assert!(moduli.iter().all(|&v| v == 1.0), "{moduli:?}");
    }

    #[test]
    fn decay_for_brownian_and_drift() {
        let m = ProcessModel::brownian(1, 1.0).unwrap();
        let dom = Domain::interval(-1.0, 1.0).unwrap();
        let tab = uniform_decay_check(&m, &dom, &[vec![0.0]], &[0.01, 0.05, 0.2], &cfg(1e-3, 1.0, 4000)).unwrap();
        assert!(tab.monotone);
        assert!((tab.radius - 0.99).abs() < 1e-15);
        assert!(tab.rows.iter().all(|r| r.within_bound), "{tab:?}");

        let d = ProcessModel::drift(vec![1.0]).unwrap();
        let tab = uniform_decay_check(&d, &dom, &[vec![0.5]], &[0.25, 0.49, 0.51, 0.9], &cfg(0.01, 1.0, 3)).unwrap();
        let v: Vec<f64> = tab.rows.iter().map(|r| r.sup_exit_probability).collect();
        assert_eq!(v, vec![0.0, 0.0, 1.0, 1.0]);
        assert!(uniform_decay_check(&d, &dom, &[vec![1.0]], &[0.1], &cfg(0.01, 1.0, 3)).is_err());
    }

    #[test]
    fn exit_bound_check_for_cauchy() {
        let m = ProcessModel::isotropic_stable(1, 1.0).unwrap();
        let times: Vec<f64> = (1..=10).map(|k| 0.3 * k as f64).collect();
        let c = verify_exit_bounds(&m, &[0.0], 1.0, &times, &cfg(1e-3, 20.0, 3000)).unwrap();
        assert!(c.all_ok, "{c:?}");
        assert_eq!(c.e_tau_upper_ok, Some(true));
        assert!((c.small_h - 2.0 / (3.0 * std::f64::consts::PI)).abs() < 1e-14);
    }
}
