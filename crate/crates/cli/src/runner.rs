//! Executes resolved diagnostics and turns their results into tables,
//! report entries and pass/fail checks.

use serde_json::{json, Map, Value};

use feller_core::characteristics::{eval_symbol, eval_symbol_quadrature};
use feller_core::diagnostics::{
    ac_modulus, harmonic_profile, modulus_of_continuity, tv_profile, ultracontractivity_ratio, uniform_decay_check,
    verify_exit_bounds,
};
use feller_core::exit_bounds::{bound_report, BallSpec};
use feller_core::orlicz::{holder_defect, luxemburg_norm, orlicz_norm, DiscreteMeasure};
use feller_core::rng::derive_seed;
use feller_core::simulator::{estimate_resolvent, estimate_semigroup, FunctionSpec, ProcessModel, TestFunction};

use crate::config::{DiagnosticSpec, ResolvedConfig};
use crate::error::CliError;
use crate::output::{bound, estimate, exact, exact_vec, flag, num, vec_cells, vec_header, Table};

/// One named pass/fail verdict.
#[derive(Debug, Clone)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        Self { name: name.into(), pass, detail: detail.into() }
    }

    pub fn to_json(&self) -> Value {
        json!({ "name": self.name, "pass": self.pass, "detail": self.detail })
    }
}

/// Everything one diagnostic produced.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub name: String,
    pub kind: &'static str,
    pub values: Map<String, Value>,
    pub checks: Vec<Check>,
    /// `(file suffix, table)`; the file is `{name}{suffix}.csv`.
    pub tables: Vec<(String, Table)>,
}

impl Outcome {
    fn new(name: String, kind: &'static str) -> Self {
        Self { name, kind, values: Map::new(), checks: Vec::new(), tables: Vec::new() }
    }

    fn value(&mut self, key: &str, v: Value) {
        self.values.insert(key.to_string(), v);
    }

    fn check(&mut self, name: impl Into<String>, pass: bool, detail: impl Into<String>) {
        self.checks.push(Check::new(name, pass, detail));
    }

    fn table(&mut self, suffix: &str, t: Table) {
        self.tables.push((suffix.to_string(), t));
    }
}

/// Maps a library error to a schema or numeric failure naming the stage.
fn stage_error(index: usize, spec: &DiagnosticSpec, name: &str, op: &str, e: feller_core::Error) -> CliError {
    let stage = format!("diagnostics[{index}] ({} {name:?}) {op}", spec.kind());
    match e {
        feller_core::Error::InvalidArgument(m) => CliError::Schema(format!("{stage}: {m}")),
        other => CliError::Numeric { stage, detail: other.to_string() },
    }
}

fn build(f: &FunctionSpec) -> feller_core::Result<TestFunction> {
    f.build()
}

pub fn run_diagnostic(cfg: &ResolvedConfig, index: usize, spec: &DiagnosticSpec) -> Result<Outcome, CliError> {
    let name = spec.name(index);
    let seed = derive_seed(cfg.seed(), index as u64);
    let err = |op: &str| {
        let name = name.clone();
        let op = op.to_string();
        move |e: feller_core::Error| stage_error(index, spec, &name, &op, e)
    };
    let model = |m: &str| -> &ProcessModel { &cfg.models[m] };
    let mut out = Outcome::new(name.clone(), spec.kind());
    if let Some(m) = spec.model() {
        out.value("model", json!(m));
    }
    match spec {
        DiagnosticSpec::Simulate { model: m, t, x0, function, .. } => {
            let sim = cfg.sim_for(spec, seed).map_err(err("sim"))?;
            let u = build(function).map_err(err("function"))?;
            let e = estimate_semigroup(model(m), &u, *t, x0, &sim).map_err(err("estimate_semigroup"))?;
            out.value("t", exact(*t));
            out.value("function", json!(u.label()));
            out.value("semigroup", estimate(&e));
            let mut tab = Table::new(vec_header("x", x0.len()));
            tab.header.extend(["t", "value", "se", "n"].map(String::from));
            let mut row = vec_cells(x0);
            row.extend([num(*t), num(e.value), num(e.se), e.n.to_string()]);
            tab.push(row);
            out.table("", tab);
            out.check(
                "sub-markov",
                e.value.abs() <= u.sup() * (1.0 + 1e-12),
                format!("|T_t u| = {} against sup|u| = {}", e.value.abs(), u.sup()),
            );
        }
        DiagnosticSpec::ExitBounds { model: m, center, radius, times, verify, .. } => {
            let triplet = model(m).triplet().map_err(err("triplet"))?;
            let ball = BallSpec::new(center.clone(), *radius).map_err(err("ball"))?;
            let rep = bound_report(&triplet, &ball).map_err(err("bound_report"))?;
            out.value("radius", exact(*radius));
            out.value("big_h", exact(rep.big_h));
            out.value("small_h", exact(rep.small_h));
            out.value("small_h_upper", exact(rep.small_h_upper));
            out.value("e_tau_lower", bound(rep.e_tau_lower));
            out.value("e_tau_upper", bound(rep.e_tau_upper));
            out.value("radius_note", json!(rep.radius_note));
            if let Some(c) = &rep.caveat {
                out.value("caveat", json!(c));
            }
            let mut tab = Table::new(["t", "p_exit_upper", "p_survive_upper"]);
            for &t in times {
                tab.push(vec![num(t), num(rep.p_exit_upper(t)), num(rep.p_survive_upper(t))]);
            }
            out.table("-bounds", tab);
            if *verify {
                let sim = cfg.sim_for(spec, seed).map_err(err("sim"))?;
                let c = verify_exit_bounds(model(m), center, *radius, times, &sim).map_err(err("verify_exit_bounds"))?;
                out.value("mean_tau", estimate(&c.mean_tau));
                out.value("censored_fraction", exact(c.censored_fraction));
                out.value("verify_h_radius", exact(c.h_radius));
                out.value("verify_big_h", exact(c.big_h));
                out.value("verify_small_h", exact(c.small_h));
                if let Some(r) = &c.expectation {
                    out.value("sandwich_lower", bound(r.e_tau_lower));
                    out.value("sandwich_upper", bound(r.e_tau_upper));
                    out.value("sandwich_note", json!(r.radius_note));
                }
                let mut tab = Table::new([
                    "t",
                    "p_exit",
                    "p_exit_se",
                    "p_exit_bound",
                    "p_exit_ok",
                    "p_survive",
                    "p_survive_se",
                    "p_survive_bound",
                    "p_survive_ok",
                ]);
                for r in &c.rows {
                    tab.push(vec![
                        num(r.t),
                        num(r.p_exit),
                        num(r.p_exit_se),
                        num(r.p_exit_bound),
                        flag(r.p_exit_ok),
                        num(r.p_survive),
                        num(r.p_survive_se),
                        num(r.p_survive_bound),
                        flag(r.p_survive_ok),
                    ]);
                    out.check(format!("p_exit(t={})", r.t), r.p_exit_ok, format!("{} vs bound {}", r.p_exit, r.p_exit_bound));
                    out.check(
                        format!("p_survive(t={})", r.t),
                        r.p_survive_ok,
                        format!("{} vs bound {}", r.p_survive, r.p_survive_bound),
                    );
                }
                out.table("-verify", tab);
                if let Some(ok) = c.e_tau_lower_ok {
                    out.check("e_tau_lower", ok, "lower expectation bound against mean exit time");
                }
                if let Some(ok) = c.e_tau_upper_ok {
                    out.check("e_tau_upper", ok, "upper expectation bound against mean exit time");
                }
            }
        }
        DiagnosticSpec::TvProfile { model: m, t, x0, gaps, direction, grid, expect_strong_feller, .. } => {
            let sim = cfg.sim_for(spec, seed).map_err(err("sim"))?;
            let dir = direction.clone().unwrap_or_else(|| {
                let mut e = vec![0.0; x0.len()];
                e[0] = 1.0;
                e
            });
            let n = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
            let pairs: Vec<(Vec<f64>, Vec<f64>)> = gaps
                .iter()
                .map(|g| (x0.clone(), x0.iter().zip(&dir).map(|(a, d)| a + g * d / n).collect()))
                .collect();
            let p = tv_profile(model(m), *t, &pairs, &sim, grid.as_ref()).map_err(err("tv_profile"))?;
            let d = x0.len();
            let mut head = vec!["gap".to_string(), "tv".into(), "se".into(), "binning_allowance".into()];
            head.extend(vec_header("x", d));
            head.extend(vec_header("y", d));
            let mut tab = Table::new(head);
            for r in &p.rows {
                let mut row = vec![num(r.gap), num(r.tv), num(r.se), num(r.binning_allowance)];
                row.extend(vec_cells(&r.x));
                row.extend(vec_cells(&r.y));
                tab.push(row);
            }
            out.table("", tab);
            out.value("t", exact(*t));
            out.value("strong_feller_signature", json!(p.strong_feller_signature));
            out.value("grid_width", exact_vec(&p.grid.width));
            out.value("grid_lower", exact_vec(&p.grid.lower));
            out.value(
                "tv",
                json!(p.rows.iter().map(|r| json!({"gap": exact(r.gap), "tv": {"value": r.tv, "se": r.se}, "binning_allowance": bound(r.binning_allowance)})).collect::<Vec<_>>()),
            );
            out.check(
                "tv-range",
                p.rows.iter().all(|r| (0.0..=1.0).contains(&r.tv)),
                "every TV estimate lies in [0, 1]",
            );
            if let Some(want) = expect_strong_feller {
                out.check(
                    "strong-feller-signature",
                    p.strong_feller_signature == *want,
                    format!("flag {} expected {}", p.strong_feller_signature, want),
                );
            }
        }
        DiagnosticSpec::AcModulus { model: m, t, probes, deltas, grid, .. } => {
            let sim = cfg.sim_for(spec, seed).map_err(err("sim"))?;
            let ac = ac_modulus(model(m), *t, probes, deltas, &sim, grid.as_ref()).map_err(err("ac_modulus"))?;
            let d = model(m).dim();
            let mut head = vec!["delta".to_string(), "mass".into(), "se".into(), "binning_allowance".into()];
            head.extend(vec_header("argmax", d));
            let mut tab = Table::new(head);
            for r in &ac.rows {
                let mut row = vec![num(r.delta), num(r.mass), num(r.se), num(r.binning_allowance)];
                row.extend(vec_cells(&r.argmax));
                tab.push(row);
            }
            out.table("", tab);
            out.value("t", exact(*t));
            out.value("bin_volume", exact(ac.grid.bin_volume()));
            out.value(
                "mass",
                json!(ac.rows.iter().map(|r| json!({"delta": exact(r.delta), "mass": {"value": r.mass, "se": r.se}, "binning_allowance": bound(r.binning_allowance)})).collect::<Vec<_>>()),
            );
            let mut sorted: Vec<_> = ac.rows.iter().map(|r| (r.delta, r.mass)).collect();
            sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
            out.check(
                "monotone-in-delta",
                sorted.windows(2).all(|w| w[0].1 <= w[1].1),
                "kernel mass on sets of measure δ grows with δ",
            );
        }
        DiagnosticSpec::Ultra { model: m, t, probes, young, functions, grid, max_ratio, .. } => {
            let sim = cfg.sim_for(spec, seed).map_err(err("sim"))?;
            let phi = &cfg.raw.young[young];
            let corpus: Vec<TestFunction> =
                functions.iter().map(build).collect::<feller_core::Result<_>>().map_err(err("functions"))?;
            let rep = ultracontractivity_ratio(model(m), *t, probes, phi, &corpus, &sim, grid)
                .map_err(err("ultracontractivity_ratio"))?;
            let d = model(m).dim();
            let mut head = vec!["function".to_string(), "sup_semigroup".into(), "se".into(), "orlicz_norm".into(), "ratio".into()];
            head.extend(vec_header("argmax", d));
            let mut tab = Table::new(head);
            for r in &rep.rows {
                let mut row = vec![r.label.clone(), num(r.sup_semigroup), num(r.se), num(r.orlicz_norm), num(r.ratio)];
                row.extend(vec_cells(&r.argmax));
                tab.push(row);
            }
            out.table("", tab);
            out.value("t", exact(*t));
            out.value("young", json!(young));
            let se_of_max = rep
                .rows
                .iter()
                .max_by(|a, b| a.ratio.total_cmp(&b.ratio))
                .map(|r| r.se / r.orlicz_norm)
                .unwrap_or(0.0);
            out.value("max_ratio", json!({ "value": rep.max_ratio, "se": se_of_max }));
            out.value("max_ratio_upper", bound(rep.max_ratio_upper));
            if let Some(c) = max_ratio {
                out.check(
                    "ratio-ceiling",
                    rep.rows.iter().all(|r| r.ratio <= c + 3.0 * r.se / r.orlicz_norm),
                    format!("largest ratio {} against ceiling {c}", rep.max_ratio),
                );
            }
        }
        DiagnosticSpec::Harmonic { model: m, domain, function, probes, refinements, expect_continuous, .. } => {
            let sim = cfg.sim_for(spec, seed).map_err(err("sim"))?;
            let u = build(function).map_err(err("function"))?;
            let dom = &cfg.raw.domains[domain];
            let p = harmonic_profile(model(m), &u, dom, probes, &sim).map_err(err("harmonic_profile"))?;
            let d = model(m).dim();
            let mut head = vec_header("x", d);
            head.extend(["value", "se", "censored_fraction"].map(String::from));
            let mut tab = Table::new(head);
            for r in &p.rows {
                let mut row = vec_cells(&r.x);
                row.extend([num(r.value), num(r.se), num(r.censored_fraction)]);
                tab.push(row);
            }
            out.table("", tab);
            let values: Vec<f64> = p.rows.iter().map(|r| r.value).collect();
            let mut mtab = Table::new(["stride", "probes", "modulus"]);
            let mut moduli = Vec::new();
            for j in 0..=*refinements {
                let stride = 1usize << j;
                let sub: Vec<f64> = values.iter().step_by(stride).copied().collect();
                if sub.len() < 2 {
                    break;
                }
                let md = modulus_of_continuity(&sub);
                mtab.push(vec![stride.to_string(), sub.len().to_string(), num(md)]);
                moduli.push(md);
            }
            out.table("-modulus", mtab);
            out.value("function", json!(u.label()));
            let max_se = p.rows.iter().map(|r| r.se).fold(0.0, f64::max);
            out.value("modulus", json!({ "value": p.modulus, "se": max_se * std::f64::consts::SQRT_2 }));
            out.value("moduli_fine_to_coarse", exact_vec(&moduli));
            out.check("reliable", !p.unreliable, "no probe lost more than half its paths to censoring");
            if *expect_continuous {
                let shrinking = moduli.windows(2).all(|w| w[0] <= w[1])
                    && moduli.len() >= 2
                    && moduli[0] < moduli[moduli.len() - 1];
                out.check("modulus-shrinks", shrinking, format!("moduli fine to coarse {moduli:?}"));
            }
        }
        DiagnosticSpec::Decay { model: m, domain, compact, times, .. } => {
            let sim = cfg.sim_for(spec, seed).map_err(err("sim"))?;
            let dom = &cfg.raw.domains[domain];
            let tab_ = uniform_decay_check(model(m), dom, compact, times, &sim).map_err(err("uniform_decay_check"))?;
            let d = model(m).dim();
            let mut head = vec!["t".to_string(), "sup_exit_probability".into(), "se".into(), "bound".into(), "within_bound".into()];
            head.extend(vec_header("argmax", d));
            let mut tab = Table::new(head);
            for r in &tab_.rows {
                let mut row = vec![num(r.t), num(r.sup_exit_probability), num(r.se), num(r.bound), flag(r.within_bound)];
                row.extend(vec_cells(&r.argmax));
                tab.push(row);
                out.check(format!("within-bound(t={})", r.t), r.within_bound, format!("{} vs {}", r.sup_exit_probability, r.bound));
            }
            out.table("", tab);
            out.value("radius", exact(tab_.radius));
            out.check("monotone", tab_.monotone, "sup exit probability is non-decreasing in t");
        }
        DiagnosticSpec::Resolvent { model: m, rate, x0, function, .. } => {
            let sim = cfg.sim_for(spec, seed).map_err(err("sim"))?;
            let u = build(function).map_err(err("function"))?;
            let r = estimate_resolvent(model(m), &u, *rate, x0, &sim).map_err(err("estimate_resolvent"))?;
            out.value("rate", exact(*rate));
            out.value("function", json!(u.label()));
            out.value("resolvent", estimate(&r.estimate));
            out.value("truncation_bound", bound(r.truncation_bound));
            let mut tab = Table::new(vec_header("x", x0.len()));
            tab.header.extend(["rate", "value", "se", "truncation_bound"].map(String::from));
            let mut row = vec_cells(x0);
            row.extend([num(*rate), num(r.estimate.value), num(r.estimate.se), num(r.truncation_bound)]);
            tab.push(row);
            out.table("", tab);
            let tol = 3.0 * r.estimate.se + r.truncation_bound + 1e-12;
            out.check(
                "resolvent-norm",
                r.estimate.value.abs() <= u.sup() / rate + tol,
                format!("|R u| = {} against sup|u|/rate = {}", r.estimate.value.abs(), u.sup() / rate),
            );
            if let FunctionSpec::Constant { value } = function {
                let target = value / rate;
                out.value("target", exact(target));
                out.check(
                    "constant-function",
                    (r.estimate.value - target).abs() <= tol,
                    format!("{} vs {target} (tolerance {tol})", r.estimate.value),
                );
            }
        }
        DiagnosticSpec::Orlicz { young, values, weights, partner, .. } => {
            let phi = &cfg.raw.young[young];
            let mu = DiscreteMeasure::from_weights(weights.clone()).map_err(err("measure"))?;
            let lux = luxemburg_norm(values, &mu, phi).map_err(err("luxemburg_norm"))?;
            let orl = orlicz_norm(values, &mu, phi).map_err(err("orlicz_norm"))?;
            let conj = phi.conjugate();
            let lux_c = luxemburg_norm(values, &mu, &conj).map_err(err("luxemburg_norm(conjugate)"))?;
            out.value("young", json!(young));
            out.value("luxemburg", exact(lux));
            out.value("orlicz", exact(orl));
            out.value("conjugate_luxemburg", exact(lux_c));
            let mut tab = Table::new(["luxemburg", "orlicz", "conjugate_luxemburg", "holder_defect"]);
            let slack = 1e-9 * lux.max(1.0);
            out.check(
                "norm-sandwich",
                lux <= orl + slack && orl <= 2.0 * lux + slack,
                format!("luxemburg {lux}, orlicz {orl}"),
            );
            let mut defect = String::new();
            if let Some(g) = partner {
                let h = holder_defect(values, g, &mu, phi).map_err(err("holder_defect"))?;
                out.value("holder_defect", exact(h));
                out.check("holder", h >= -1e-9, format!("defect {h}"));
                defect = num(h);
            }
            tab.push(vec![num(lux), num(orl), num(lux_c), defect]);
            out.table("", tab);
        }
        DiagnosticSpec::Symbol { model: m, x, xis, .. } => {
            let triplet = model(m).triplet().map_err(err("triplet"))?;
            let d = x.len();
            let mut head = vec_header("xi", d);
            head.extend(["re", "im", "re_quadrature", "im_quadrature", "difference"].map(String::from));
            let mut tab = Table::new(head);
            let mut worst: f64 = 0.0;
            let mut min_re = f64::INFINITY;
            for xi in xis {
                if xi.len() != d {
                    return Err(CliError::Schema(format!(
                        "diagnostics[{index}].xis: frequency {xi:?} has dimension {}, state has {d}",
                        xi.len()
                    )));
                }
                let p = eval_symbol(&triplet, x, xi).map_err(err("eval_symbol"))?;
                let q = eval_symbol_quadrature(&triplet, x, xi).map_err(err("eval_symbol_quadrature"))?;
                let diff = (p - q).norm();
                worst = worst.max(diff / (1.0 + p.norm()));
                min_re = min_re.min(p.re);
                let mut row = vec_cells(xi);
                row.extend([num(p.re), num(p.im), num(q.re), num(q.im), num(diff)]);
                tab.push(row);
            }
            out.table("", tab);
            out.value("x", exact_vec(x));
            out.value("max_relative_difference", exact(worst));
            out.check("closed-form-vs-quadrature", worst <= 1e-6, format!("largest relative gap {worst}"));
            out.check("real-part-non-negative", min_re >= -1e-12, format!("smallest Re p = {min_re}"));
        }
    }
    Ok(out)
}
