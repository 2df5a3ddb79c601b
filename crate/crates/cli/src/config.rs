//! Run configuration: a single TOML file with named models, domains and
//! Young functions, followed by an ordered list of diagnostics.
//!
//! ```toml
//! seed = 7
//!
//! [sim]
//! dt = 0.01
//! horizon = 2.0
//! paths = 20000
//!
//! [models.bm]
//! kind = "brownian"
//!
//! [[diagnostics]]
//! kind = "simulate"
//! model = "bm"
//! t = 1.0
//! x0 = [0.0]
//! function = { kind = "indicator", lower = 0.0 }
//! ```
//!
//! The full schema lives in `configs/SCHEMA.md`.

use std::collections::BTreeMap;
use std::path::PathBuf;

use feller_core::characteristics::{AlphaProfile, LevyMeasureSpec, StableLikeIndex, StateTriplet};
use feller_core::diagnostics::HistogramGrid;
use feller_core::orlicz::{DiscreteMeasure, YoungFunction};
use feller_core::simulator::{Domain, FunctionSpec, ProcessModel, SimConfig, DEFAULT_EPSILON};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Root seed; every diagnostic derives its own stream family from it.
    pub seed: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
    pub sim: SimSection,
    #[serde(default)]
    pub models: BTreeMap<String, ModelSpec>,
    #[serde(default)]
    pub domains: BTreeMap<String, Domain>,
    #[serde(default)]
    pub young: BTreeMap<String, YoungFunction>,
    #[serde(default)]
    pub diagnostics: Vec<DiagnosticSpec>,
}

#[derive(Debug, Clone, Copy, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub dt: f64,
    pub horizon: f64,
    pub paths: usize,
    #[serde(default)]
    pub step_budget: Option<u64>,
}

/// Per-diagnostic replacement of any simulation field.
#[derive(Debug, Clone, Copy, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SimOverride {
    pub dt: Option<f64>,
    pub horizon: Option<f64>,
    pub paths: Option<usize>,
    pub step_budget: Option<u64>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelSpec {
    Brownian {
        #[serde(default = "one")]
        dim: usize,
        #[serde(default = "unit")]
        sigma: f64,
    },
    IsotropicStable {
        #[serde(default = "one")]
        dim: usize,
        alpha: f64,
    },
    CompoundPoisson {
        rate: f64,
        atoms: Vec<Vec<f64>>,
        weights: Vec<f64>,
    },
    StableLike {
        #[serde(default = "one")]
        dim: usize,
        profile: AlphaProfile,
    },
    Drift {
        velocity: Vec<f64>,
    },
    /// Constant triplet `(a, b, ν)`; `diffusion` is the row-major `d×d` matrix.
    Generic {
        dim: usize,
        diffusion: Vec<f64>,
        drift: Vec<f64>,
        jumps: LevyMeasureSpec,
        #[serde(default)]
        epsilon: Option<f64>,
    },
}

fn one() -> usize {
    1
}

fn unit() -> f64 {
    1.0
}

impl ModelSpec {
    pub fn build(&self) -> feller_core::Result<ProcessModel> {
        match self.clone() {
            ModelSpec::Brownian { dim, sigma } => ProcessModel::brownian(dim, sigma),
            ModelSpec::IsotropicStable { dim, alpha } => ProcessModel::isotropic_stable(dim, alpha),
            ModelSpec::CompoundPoisson { rate, atoms, weights } => {
                ProcessModel::compound_poisson(rate, &DiscreteMeasure::new(atoms, weights)?)
            }
            ModelSpec::StableLike { dim, profile } => {
                ProcessModel::stable_like(dim, StableLikeIndex::from_profile(profile)?)
            }
            ModelSpec::Drift { velocity } => ProcessModel::drift(velocity),
            ModelSpec::Generic { dim, diffusion, drift, jumps, epsilon } => ProcessModel::generic(
                StateTriplet::constant(dim, diffusion, drift, jumps)?,
                epsilon.unwrap_or(DEFAULT_EPSILON),
            ),
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DiagnosticSpec {
    /// `T_t u(x0)`.
    Simulate {
        #[serde(default)]
        name: Option<String>,
        #[serde(default)]
        sim: SimOverride,
        model: String,
        t: f64,
        x0: Vec<f64>,
        function: FunctionSpec,
    },
    /// Explicit exit bounds for `B(center, radius)`; with `verify`, also a
    /// simulated comparison at the listed times.
    ExitBounds {
        #[serde(default)]
        name: Option<String>,
        #[serde(default)]
        sim: SimOverride,
        model: String,
        center: Vec<f64>,
        radius: f64,
        #[serde(default)]
        times: Vec<f64>,
        #[serde(default)]
        verify: bool,
    },
    /// TV between `x0` and `x0 + gap·direction` for each gap.
    TvProfile {
        #[serde(default)]
        name: Option<String>,
        #[serde(default)]
        sim: SimOverride,
        model: String,
        t: f64,
        x0: Vec<f64>,
        gaps: Vec<f64>,
        #[serde(default)]
        direction: Option<Vec<f64>>,
        #[serde(default)]
        grid: Option<HistogramGrid>,
        /// When set, the strong-Feller flag must take this value.
        #[serde(default)]
        expect_strong_feller: Option<bool>,
    },
    AcModulus {
        #[serde(default)]
        name: Option<String>,
        #[serde(default)]
        sim: SimOverride,
        model: String,
        t: f64,
        probes: Vec<Vec<f64>>,
        deltas: Vec<f64>,
        #[serde(default)]
        grid: Option<HistogramGrid>,
    },
    Ultra {
        #[serde(default)]
        name: Option<String>,
        #[serde(default)]
        sim: SimOverride,
        model: String,
        t: f64,
        probes: Vec<Vec<f64>>,
        young: String,
        functions: Vec<FunctionSpec>,
        grid: HistogramGrid,
        /// Optional ceiling the largest ratio must respect (within 3 SE).
        #[serde(default)]
        max_ratio: Option<f64>,
    },
    /// `x ↦ E^x u(X_τ)` on probes; `refinements = k` also reports the
    /// modulus on every `2^j`-th probe, `j ≤ k`.
    Harmonic {
        #[serde(default)]
        name: Option<String>,
        #[serde(default)]
        sim: SimOverride,
        model: String,
        domain: String,
        function: FunctionSpec,
        probes: Vec<Vec<f64>>,
        #[serde(default)]
        refinements: u32,
        /// Require the modulus to shrink as probes are added.
        #[serde(default)]
        expect_continuous: bool,
    },
    Decay {
        #[serde(default)]
        name: Option<String>,
        #[serde(default)]
        sim: SimOverride,
        model: String,
        domain: String,
        compact: Vec<Vec<f64>>,
        times: Vec<f64>,
    },
    /// `∫_0^T e^{-rate·t} T_t u(x0) dt`, with `T` the horizon.
    Resolvent {
        #[serde(default)]
        name: Option<String>,
        #[serde(default)]
        sim: SimOverride,
        model: String,
        rate: f64,
        x0: Vec<f64>,
        function: FunctionSpec,
    },
    /// Norms of a vector of values against a discrete measure.
    Orlicz {
        #[serde(default)]
        name: Option<String>,
        young: String,
        values: Vec<f64>,
        weights: Vec<f64>,
        /// Second function for the Hölder check.
        #[serde(default)]
        partner: Option<Vec<f64>>,
    },
    Symbol {
        #[serde(default)]
        name: Option<String>,
        model: String,
        x: Vec<f64>,
        xis: Vec<Vec<f64>>,
    },
}

impl DiagnosticSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            DiagnosticSpec::Simulate { .. } => "simulate",
            DiagnosticSpec::ExitBounds { .. } => "exit-bounds",
            DiagnosticSpec::TvProfile { .. } => "tv-profile",
            DiagnosticSpec::AcModulus { .. } => "ac-modulus",
            DiagnosticSpec::Ultra { .. } => "ultra",
            DiagnosticSpec::Harmonic { .. } => "harmonic",
            DiagnosticSpec::Decay { .. } => "decay",
            DiagnosticSpec::Resolvent { .. } => "resolvent",
            DiagnosticSpec::Orlicz { .. } => "orlicz",
            DiagnosticSpec::Symbol { .. } => "symbol",
        }
    }

    fn explicit_name(&self) -> Option<&str> {
        match self {
            DiagnosticSpec::Simulate { name, .. }
            | DiagnosticSpec::ExitBounds { name, .. }
            | DiagnosticSpec::TvProfile { name, .. }
            | DiagnosticSpec::AcModulus { name, .. }
            | DiagnosticSpec::Ultra { name, .. }
            | DiagnosticSpec::Harmonic { name, .. }
            | DiagnosticSpec::Decay { name, .. }
            | DiagnosticSpec::Resolvent { name, .. }
            | DiagnosticSpec::Orlicz { name, .. }
            | DiagnosticSpec::Symbol { name, .. } => name.as_deref(),
        }
    }

    /// File stem for this diagnostic's artifacts.
    pub fn name(&self, index: usize) -> String {
        self.explicit_name().map(str::to_owned).unwrap_or_else(|| format!("{index:02}-{}", self.kind()))
    }

    pub fn sim_override(&self) -> SimOverride {
        match self {
            DiagnosticSpec::Simulate { sim, .. }
            | DiagnosticSpec::ExitBounds { sim, .. }
            | DiagnosticSpec::TvProfile { sim, .. }
            | DiagnosticSpec::AcModulus { sim, .. }
            | DiagnosticSpec::Ultra { sim, .. }
            | DiagnosticSpec::Harmonic { sim, .. }
            | DiagnosticSpec::Decay { sim, .. }
            | DiagnosticSpec::Resolvent { sim, .. } => *sim,
            DiagnosticSpec::Orlicz { .. } | DiagnosticSpec::Symbol { .. } => SimOverride::default(),
        }
    }

    pub fn model(&self) -> Option<&str> {
        match self {
            DiagnosticSpec::Simulate { model, .. }
            | DiagnosticSpec::ExitBounds { model, .. }
            | DiagnosticSpec::TvProfile { model, .. }
            | DiagnosticSpec::AcModulus { model, .. }
            | DiagnosticSpec::Ultra { model, .. }
            | DiagnosticSpec::Harmonic { model, .. }
            | DiagnosticSpec::Decay { model, .. }
            | DiagnosticSpec::Resolvent { model, .. }
            | DiagnosticSpec::Symbol { model, .. } => Some(model),
            DiagnosticSpec::Orlicz { .. } => None,
        }
    }

    fn domain(&self) -> Option<&str> {
        match self {
            DiagnosticSpec::Harmonic { domain, .. } | DiagnosticSpec::Decay { domain, .. } => Some(domain),
            _ => None,
        }
    }

    fn young(&self) -> Option<&str> {
        match self {
            DiagnosticSpec::Ultra { young, .. } | DiagnosticSpec::Orlicz { young, .. } => Some(young),
            _ => None,
        }
    }

    /// States the diagnostic starts paths from, with their field names.
    fn states(&self) -> Vec<(&'static str, &[f64])> {
        match self {
            DiagnosticSpec::Simulate { x0, .. } | DiagnosticSpec::Resolvent { x0, .. } => vec![("x0", x0)],
            DiagnosticSpec::TvProfile { x0, .. } => vec![("x0", x0)],
            DiagnosticSpec::ExitBounds { center, .. } => vec![("center", center)],
            DiagnosticSpec::AcModulus { probes, .. }
            | DiagnosticSpec::Ultra { probes, .. }
            | DiagnosticSpec::Harmonic { probes, .. } => probes.iter().map(|p| ("probes", p.as_slice())).collect(),
            DiagnosticSpec::Decay { compact, .. } => compact.iter().map(|p| ("compact", p.as_slice())).collect(),
            DiagnosticSpec::Symbol { x, .. } => vec![("x", x)],
            DiagnosticSpec::Orlicz { .. } => vec![],
        }
    }
}

/// Command-line replacements applied after the file is read.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub paths: Option<usize>,
    pub dt: Option<f64>,
}

/// A parsed configuration with every name resolved.
#[derive(Debug, Clone)]
pub struct ResolvedConfig {
    pub raw: RunConfig,
    pub models: BTreeMap<String, ProcessModel>,
    pub out: PathBuf,
    pub overrides: Overrides,
}

impl ResolvedConfig {
    pub fn seed(&self) -> u64 {
        self.overrides.seed.unwrap_or(self.raw.seed)
    }

    /// Simulation settings for one diagnostic: the global section, then the
    /// diagnostic's own overrides, then command-line flags.
    pub fn sim_for(&self, spec: &DiagnosticSpec, seed: u64) -> feller_core::Result<SimConfig> {
        let g = self.raw.sim;
        let o = spec.sim_override();
        let dt = self.overrides.dt.or(o.dt).unwrap_or(g.dt);
        let paths = self.overrides.paths.or(o.paths).unwrap_or(g.paths);
        let horizon = o.horizon.unwrap_or(g.horizon);
        let mut cfg = SimConfig::new(dt, horizon, paths, seed)?;
        if let Some(b) = o.step_budget.or(g.step_budget) {
            cfg = cfg.with_budget(b);
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn parse(text: &str) -> Result<RunConfig, CliError> {
    toml::from_str(text).map_err(|e| CliError::Schema(e.to_string().trim_end().to_string()))
}

/// Resolves names and checks everything that can be checked without running.
pub fn resolve(raw: RunConfig, overrides: Overrides) -> Result<ResolvedConfig, CliError> {
    let schema = |field: String, msg: String| CliError::Schema(format!("{field}: {msg}"));
    let mut models = BTreeMap::new();
    for (name, spec) in &raw.models {
        let m = spec.build().map_err(|e| schema(format!("models.{name}"), e.to_string()))?;
        models.insert(name.clone(), m);
    }
    for (name, d) in &raw.domains {
        d.validate().map_err(|e| schema(format!("domains.{name}"), e.to_string()))?;
    }
    for (name, y) in &raw.young {
        y.validate().map_err(|e| schema(format!("young.{name}"), e.to_string()))?;
    }
    let mut names = std::collections::BTreeSet::new();
    for (i, spec) in raw.diagnostics.iter().enumerate() {
        let field = |f: &str| format!("diagnostics[{i}].{f}");
        let stem = spec.name(i);
        if stem.is_empty() || !stem.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c)) {
            return Err(schema(field("name"), format!("{stem:?} is not a usable file stem")));
        }
        if !names.insert(stem.clone()) {
            return Err(schema(field("name"), format!("duplicate diagnostic name {stem:?}")));
        }
        let model = match spec.model() {
            Some(m) => Some(models.get(m).ok_or_else(|| schema(field("model"), format!("unknown model {m:?}")))?),
            None => None,
        };
        if let Some(d) = spec.domain() {
            let dom = raw.domains.get(d).ok_or_else(|| schema(field("domain"), format!("unknown domain {d:?}")))?;
            if let Some(m) = model {
                if dom.dim() != m.dim() {
                    return Err(schema(field("domain"), "domain dimension differs from model dimension".into()));
                }
            }
        }
        if let Some(y) = spec.young() {
            if !raw.young.contains_key(y) {
                return Err(schema(field("young"), format!("unknown Young function {y:?}")));
            }
        }
        if let Some(m) = model {
            for (f, s) in spec.states() {
                if s.len() != m.dim() {
                    return Err(schema(field(f), format!("state {s:?} has dimension {}, model has {}", s.len(), m.dim())));
                }
            }
        }
        if let DiagnosticSpec::ExitBounds { radius, times, verify, .. } = spec {
            if !(*radius > 0.0 && *radius < 1.0) {
                return Err(schema(field("radius"), format!("exit bounds need 0 < r < 1, got r = {radius}")));
            }
            if *verify && times.is_empty() {
                return Err(schema(field("times"), "verification needs at least one time".into()));
            }
        }
        if let DiagnosticSpec::TvProfile { gaps, direction, x0, .. } = spec {
            if gaps.is_empty() || gaps.iter().any(|g| !(*g >= 0.0 && g.is_finite())) {
                return Err(schema(field("gaps"), "gaps must be non-negative and non-empty".into()));
            }
            if let Some(d) = direction {
                let n = d.iter().map(|v| v * v).sum::<f64>().sqrt();
                if d.len() != x0.len() || !(n > 0.0) {
                    return Err(schema(field("direction"), "direction must be a non-zero vector of the state dimension".into()));
                }
            }
        }
        if let Some(o) = spec.sim_override().dt.or(overrides.dt) {
            if !(o > 0.0) {
                return Err(schema(field("sim.dt"), "dt must be positive".into()));
            }
        }
    }
    let g = raw.sim;
    SimConfig::new(overrides.dt.unwrap_or(g.dt), g.horizon, overrides.paths.unwrap_or(g.paths), 0)
        .and_then(|c| c.validate())
        .map_err(|e| schema("sim".into(), e.to_string()))?;
    let out = overrides.out.clone().or_else(|| raw.out.clone()).unwrap_or_else(|| PathBuf::from("feller-out"));
    Ok(ResolvedConfig { raw, models, out, overrides })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
seed = 1
[sim]
dt = 0.1
horizon = 1.0
paths = 100
[models.bm]
kind = "brownian"
[[diagnostics]]
kind = "simulate"
model = "bm"
t = 1.0
x0 = [0.0]
function = { kind = "constant", value = 1.0 }
"#;

    #[test]
    fn minimal_parses_and_resolves() {
        let c = resolve(parse(MINIMAL).unwrap(), Overrides::default()).unwrap();
        assert_eq!(c.raw.diagnostics[0].name(0), "00-simulate");
        assert_eq!(c.seed(), 1);
    }

    #[test]
    fn missing_seed_is_a_schema_error() {
        let text = MINIMAL.replace("seed = 1", "");
        assert!(matches!(parse(&text), Err(CliError::Schema(m)) if m.contains("seed")));
    }

    #[test]
    fn unknown_fields_are_rejected_with_position() {
        let text = MINIMAL.replace("t = 1.0", "t = 1.0\ntypo = 3");
        let Err(CliError::Schema(m)) = parse(&text) else { panic!() };
        assert!(m.contains("typo") && m.contains("line"), "{m}");
    }

    #[test]
    fn dangling_model_reference() {
        let text = MINIMAL.replace("model = \"bm\"", "model = \"nope\"");
        let Err(CliError::Schema(m)) = resolve(parse(&text).unwrap(), Overrides::default()) else { panic!() };
        assert!(m.starts_with("diagnostics[0].model"), "{m}");
    }

    #[test]
    fn flags_win_over_file() {
        let text = MINIMAL.replace("function", "sim = { paths = 7, dt = 0.5 }\nfunction");
        let o = Overrides { paths: Some(11), ..Default::default() };
        let c = resolve(parse(&text).unwrap(), o).unwrap();
        let s = c.sim_for(&c.raw.diagnostics[0], 3).unwrap();
        assert_eq!((s.paths, s.dt), (11, 0.5));
    }
}
