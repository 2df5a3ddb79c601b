//! Batch front end: reads a configuration file, runs the requested
//! diagnostics and writes `report.json`, one CSV per table and
//! `manifest.json` into the output directory.
//!
//! Exit codes: 0 success, 1 i/o, 2 configuration, 3 numerical failure,
//! 4 a pass/fail check failed (all artifacts are still written).

pub mod config;
pub mod error;
pub mod output;
pub mod runner;

use std::path::{Path, PathBuf};

use serde_json::{json, Value};

pub use config::{Overrides, ResolvedConfig, RunConfig};
pub use error::CliError;
use output::{sha256_hex, Artifacts};
use runner::Outcome;

/// Which diagnostics of a configuration to run.
#[derive(Debug, Clone, Copy, Default)]
pub struct Selection<'a> {
    /// Only diagnostics of this kind; `None` runs everything.
    pub kind: Option<&'a str>,
    /// Turn on simulation for every `exit-bounds` entry.
    pub force_verify: bool,
}

#[derive(Debug)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub outcomes: Vec<Outcome>,
    pub artifacts: Vec<PathBuf>,
    /// `"{diagnostic}: {check}"` for every failed check.
    pub failed_checks: Vec<String>,
}

impl RunSummary {
    pub fn exit_code(&self) -> i32 {
        if self.failed_checks.is_empty() {
            0
        } else {
            4
        }
    }
}

pub fn run_file(path: &Path, overrides: Overrides, selection: Selection) -> Result<RunSummary, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let label = path.file_name().and_then(|n| n.to_str()).unwrap_or("config");
    run_text(&text, label, overrides, selection)
}

/// Runs a configuration given as text; `label` names it in the manifest.
pub fn run_text(text: &str, label: &str, overrides: Overrides, selection: Selection) -> Result<RunSummary, CliError> {
    let mut raw = config::parse(text)?;
    if selection.force_verify {
        for d in &mut raw.diagnostics {
            if let config::DiagnosticSpec::ExitBounds { verify, .. } = d {
                *verify = true;
            }
        }
    }
    let cfg = config::resolve(raw, overrides)?;
    let chosen: Vec<usize> = (0..cfg.raw.diagnostics.len())
        .filter(|&i| selection.kind.is_none_or(|k| cfg.raw.diagnostics[i].kind() == k))
        .collect();
    if chosen.is_empty() {
        return Err(CliError::Schema(match selection.kind {
            Some(k) => format!("diagnostics: the configuration has no {k} entries"),
            None => "diagnostics: the configuration lists no diagnostics".into(),
        }));
    }
    let mut artifacts = Artifacts::new(cfg.out.clone());
    let mut outcomes = Vec::new();
    let mut failure = None;
    for &i in &chosen {
        let spec = &cfg.raw.diagnostics[i];
        match runner::run_diagnostic(&cfg, i, spec) {
            Ok(o) => {
                for (suffix, table) in &o.tables {
                    artifacts.write(&format!("{}{suffix}.csv", o.name), &table.to_csv()?)?;
                }
                outcomes.push(o);
            }
            Err(e @ CliError::Numeric { .. }) => {
                failure = Some(e);
                break;
            }
            Err(e) => return Err(e),
        }
    }
    let failed_checks: Vec<String> = outcomes
        .iter()
        .flat_map(|o| o.checks.iter().filter(|c| !c.pass).map(move |c| format!("{}: {}", o.name, c.name)))
        .collect();
    let status = match (&failure, failed_checks.is_empty()) {
        (Some(_), _) => "numeric-failure",
        (None, false) => "check-failure",
        (None, true) => "ok",
    };
    let report = json!({
        "status": status,
        "error": failure.as_ref().map(|e| e.to_string()),
        "diagnostics": outcomes.iter().map(outcome_json).collect::<Vec<_>>(),
    });
    artifacts.write("report.json", &pretty(&report))?;
    let manifest = json!({
        "tool": "feller",
        "version": env!("CARGO_PKG_VERSION"),
        "config": label,
        "config_sha256": sha256_hex(text.as_bytes()),
        "seed": cfg.seed(),
        "selection": selection.kind,
        "status": status,
        "created_utc": chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        "artifacts": artifacts.manifest_entries(),
    });
    artifacts.write("manifest.json", &pretty(&manifest))?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(RunSummary { out_dir: cfg.out.clone(), outcomes, artifacts: artifacts.paths(), failed_checks })
}

fn outcome_json(o: &Outcome) -> Value {
    json!({
        "name": o.name,
        "kind": o.kind,
        "values": o.values,
        "checks": o.checks.iter().map(|c| c.to_json()).collect::<Vec<_>>(),
        "tables": o.tables.iter().map(|(s, _)| format!("{}{s}.csv", o.name)).collect::<Vec<_>>(),
    })
}

fn pretty(v: &Value) -> Vec<u8> {
    let mut s = serde_json::to_vec_pretty(v).expect("report serialises");
    s.push(b'\n');
    s
}
