//! wasm-bindgen exports behind `www/index.html`. Every export returns a
//! JSON string; errors come back as `{"error": "..."}` so the page can show
//! them instead of throwing.

use feller_core::characteristics::StateTriplet;
use feller_core::diagnostics::{tv_profile, HistogramGrid};
use feller_core::exit_bounds::{bound_report, BallSpec};
use feller_core::orlicz::{legendre, YoungFunction};
use feller_core::simulator::{simulate_exit, Domain, ProcessModel, SimConfig};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

fn model(kind: &str, param: f64) -> Result<ProcessModel, String> {
    match kind {
        "brownian" => ProcessModel::brownian(1, param),
        "stable" => ProcessModel::isotropic_stable(1, param),
        "drift" => ProcessModel::drift(vec![param]),
        other => return Err(format!("unknown model {other}")),
    }
    .map_err(|e| e.to_string())
}

fn triplet(kind: &str, param: f64) -> Result<StateTriplet, String> {
    match kind {
        "brownian" => StateTriplet::brownian(1, param),
        "stable" => StateTriplet::isotropic_stable(1, param),
        other => return Err(format!("no exit bounds for {other}")),
    }
    .map_err(|e| e.to_string())
}

fn finish(r: Result<Value, String>) -> String {
    r.unwrap_or_else(|e| json!({ "error": e })).to_string()
}

// JSON has no infinity
fn num(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}

/// Empirical `P(τ ≤ t)` for `B(0, radius)` next to `tH/(1−e⁻¹)` and the
/// survival bound `1/(th)`.
#[wasm_bindgen]
pub fn exit_curve(kind: &str, param: f64, radius: f64, horizon: f64, paths: usize, seed: u64) -> String {
    finish((|| {
        let m = model(kind, param)?;
        let rep = bound_report(&triplet(kind, param)?, &BallSpec::new(vec![0.0], radius).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
        let dt = (radius * radius * 1e-3).clamp(1e-5, 1e-2);
        let cfg = SimConfig::new(dt, horizon, paths, seed).map_err(|e| e.to_string())?;
        let dom = Domain::interval(-radius, radius).map_err(|e| e.to_string())?;
        let run = simulate_exit(&m, &dom, &[0.0], &cfg).map_err(|e| e.to_string())?;
        let times: Vec<f64> = (1..=60).map(|k| horizon * k as f64 / 60.0).collect();
        let cdf: Vec<_> = times.iter().map(|&t| run.exit_cdf(t)).collect();
        Ok(json!({
            "times": times,
            "p_exit": cdf.iter().map(|c| c.value).collect::<Vec<_>>(),
            "se": cdf.iter().map(|c| c.se).collect::<Vec<_>>(),
            "p_exit_bound": times.iter().map(|&t| rep.p_exit_upper(t)).collect::<Vec<_>>(),
            "p_survive_bound": times.iter().map(|&t| rep.p_survive_upper(t)).collect::<Vec<_>>(),
            "big_h": num(rep.big_h),
            "small_h": num(rep.small_h),
            "censored": run.censored,
        }))
    })())
}

/// Histogram TV between `P_t(0, ·)` and `P_t(g, ·)` for `gaps` equally
/// spaced gaps up to `max_gap`.
#[wasm_bindgen]
pub fn tv_curve(kind: &str, param: f64, t: f64, max_gap: f64, gaps: usize, paths: usize, seed: u64) -> String {
    finish((|| {
        let m = model(kind, param)?;
        let cfg = SimConfig::new(t / 50.0, t, paths, seed).map_err(|e| e.to_string())?;
        let gs: Vec<f64> = (1..=gaps.max(1)).map(|k| max_gap * k as f64 / gaps.max(1) as f64).collect();
        let pairs: Vec<_> = gs.iter().map(|&g| (vec![0.0], vec![g])).collect();
        // a deterministic flow needs bins narrower than the smallest gap
        let grid = if kind == "drift" {
            let w = gs[0] / 2.0;
            let lo = param * t - w;
            let bins = ((max_gap + 2.0 * w) / w).ceil() as usize;
            Some(HistogramGrid::new(vec![lo], vec![w], vec![bins]).map_err(|e| e.to_string())?)
        } else {
            None
        };
        let prof = tv_profile(&m, t, &pairs, &cfg, grid.as_ref()).map_err(|e| e.to_string())?;
        Ok(json!({
            "gaps": gs,
            "tv": prof.rows.iter().map(|r| r.tv).collect::<Vec<_>>(),
            "se": prof.rows.iter().map(|r| r.se).collect::<Vec<_>>(),
            "binning_allowance": prof.rows.iter().map(|r| r.binning_allowance).collect::<Vec<_>>(),
            "strong_feller_signature": prof.strong_feller_signature,
        }))
    })())
}

/// `Φ` and its conjugate `Φ_c` sampled on `[0, x_max]`.
#[wasm_bindgen]
pub fn young_curve(kind: &str, p: f64, c: f64, x_max: f64, points: usize) -> String {
    finish((|| {
        let phi = match kind {
            "power" => YoungFunction::ScaledPower { p, c },
            "exp" => YoungFunction::ExpMinusOne,
            other => return Err(format!("unknown Young function {other}")),
        };
        phi.validate().map_err(|e| e.to_string())?;
        let xs: Vec<f64> = (0..=points).map(|i| x_max * i as f64 / points.max(1) as f64).collect();
        let conj: Result<Vec<Value>, String> =
            xs.iter().map(|&y| legendre(&phi, y).map(num).map_err(|e| e.to_string())).collect();
        Ok(json!({
            "x": xs,
            "phi": xs.iter().map(|&x| num(phi.eval(x))).collect::<Vec<_>>(),
            "conjugate": conj?,
        }))
    })())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: String) -> Value {
        serde_json::from_str(&s).unwrap()
    }

    #[test]
    fn exit_curve_stays_under_bound() {
        let v = parse(exit_curve("brownian", 1.0, 0.5, 0.5, 2000, 7));
        let p = v["p_exit"].as_array().unwrap();
        let b = v["p_exit_bound"].as_array().unwrap();
        for (p, b) in p.iter().zip(b) {
            assert!(p.as_f64().unwrap() <= b.as_f64().unwrap() + 0.05);
        }
    }

    #[test]
    fn drift_tv_is_one() {
        let v = parse(tv_curve("drift", 1.0, 1.0, 0.5, 5, 200, 1));
        assert!(v["tv"].as_array().unwrap().iter().all(|x| x.as_f64().unwrap() == 1.0));
        assert_eq!(v["strong_feller_signature"], false);
    }

    #[test]
    fn half_square_is_self_conjugate() {
        let v = parse(young_curve("power", 2.0, 0.5, 3.0, 30));
        let (a, b) = (v["phi"].as_array().unwrap(), v["conjugate"].as_array().unwrap());
        for (a, b) in a.iter().zip(b) {
            assert!((a.as_f64().unwrap() - b.as_f64().unwrap()).abs() <= 1e-12);
        }
    }

    #[test]
    fn bad_input_reports_error() {
        assert!(parse(young_curve("nope", 2.0, 1.0, 1.0, 3))["error"].is_string());
        assert!(parse(exit_curve("drift", 1.0, 0.5, 1.0, 10, 1))["error"].is_string());
    }
}
