use std::path::Path;

use hhg_core::integrator::IntegratorConfig;
use hhg_core::lattice::{DEFAULT_CUTOFF, MAX_HALF_SIZE};
use hhg_core::model::DEFAULT_OMEGA0_RATIO;
use hhg_core::observables::Window;
use hhg_core::phase_space::PhaseGrid;
use hhg_core::{ModelParams, C64};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Complex {
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

impl From<Complex> for C64 {
    fn from(c: Complex) -> Self {
        C64::new(c.re, c.im)
    }
}

/// Physical parameters in units of the field frequency. Give the coupling
/// either as the γ magnitude or as the Rabi frequency Ω, not both.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default = "default_omega0_ratio")]
    pub omega0_ratio: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rabi: Option<f64>,
    pub alpha0: Complex,
}

fn default_omega0_ratio() -> f64 {
    DEFAULT_OMEGA0_RATIO
}

impl ModelConfig {
    pub fn params(&self) -> Result<ModelParams, CliError> {
        let p = match (self.gamma, self.rabi) {
            (Some(g), None) => ModelParams::from_gamma_magnitude(1.0, self.omega0_ratio, g),
            (None, Some(r)) => ModelParams::new(1.0, self.omega0_ratio, r),
            _ => return Err(CliError::Config("model: give exactly one of `gamma` and `rabi`".into())),
        };
        p.map_err(|e| CliError::Config(format!("model: {e}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Propagator {
    #[default]
    Lattice,
    TwoState,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LatticeConfig {
    pub half_size: usize,
    pub cutoff: f64,
}

impl Default for LatticeConfig {
    fn default() -> Self {
        Self { half_size: 5, cutoff: DEFAULT_CUTOFF }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleConfig {
    /// Photon-number cutoff; sized from |α₀| when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_max: Option<usize>,
    pub tail_tol: f64,
    pub threshold: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self { n_max: None, tail_tol: 1e-8, threshold: 1e-4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub model: ModelConfig,
    #[serde(default)]
    pub propagator: Propagator,
    #[serde(default)]
    pub lattice: LatticeConfig,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    pub duration_cycles: f64,
    #[serde(default = "default_samples_per_cycle")]
    pub samples_per_cycle: usize,
    /// When set, `simulate` also writes per-lattice-point weights at this rate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight_samples_per_cycle: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<PhaseGrid>,
    #[serde(default = "default_wigner_times")]
    pub wigner_times: Vec<f64>,
    #[serde(default)]
    pub window: Window,
    #[serde(default)]
    pub oracle: OracleConfig,
    #[serde(default = "default_out_dir")]
    pub out_dir: String,
}

fn default_samples_per_cycle() -> usize {
    4096
}

fn default_wigner_times() -> Vec<f64> {
    (0..8).map(|k| k as f64 / 8.0).collect()
}

fn default_out_dir() -> String {
    "out".into()
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        self.model.params()?;
        if !(self.duration_cycles.is_finite() && self.duration_cycles > 0.0) {
            return bad(format!("duration_cycles must be positive, got {}", self.duration_cycles));
        }
        if self.samples_per_cycle < 2 {
            return bad("samples_per_cycle must be at least 2".into());
        }
        if self.weight_samples_per_cycle == Some(0) {
            return bad("weight_samples_per_cycle must be positive".into());
        }
        if self.lattice.half_size > MAX_HALF_SIZE {
            return bad(format!("lattice.half_size must be at most {MAX_HALF_SIZE}"));
        }
        if let Some(g) = &self.grid {
            g.validate().map_err(|e| CliError::Config(format!("grid: {e}")))?;
        }
        self.integrator.validate().map_err(|e| CliError::Config(format!("integrator: {e}")))
    }

    /// Snapshot times are only checked when a Wigner run asks for them.
    pub fn validate_wigner_times(&self) -> Result<(), CliError> {
        if self.wigner_times.is_empty() {
            return Err(CliError::Config("wigner_times is empty".into()));
        }
        match self.wigner_times.iter().find(|t| !(t.is_finite() && **t >= 0.0 && **t <= self.duration_cycles)) {
            Some(t) => Err(CliError::Config(format!("wigner time {t} lies outside [0, duration_cycles]"))),
            None => Ok(()),
        }
    }

    pub fn alpha0(&self) -> C64 {
        self.model.alpha0.into()
    }
}

/// Reads a JSON document and applies `key.path=value` overrides. Values
/// are parsed as JSON, falling back to a plain string.
pub fn load_value(path: &Path, overrides: &[String]) -> Result<Value, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let mut doc: Value =
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    for o in overrides {
        apply_override(&mut doc, o)?;
    }
    Ok(doc)
}

pub fn apply_override(doc: &mut Value, assignment: &str) -> Result<(), CliError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{assignment}` is not key=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    // Sweep documents: apply to every run.
    let runs = match doc {
        Value::Object(o) if o.get("runs").is_some_and(Value::is_array) => o.get_mut("runs").unwrap(),
        other => other,
    };
    match runs {
        Value::Array(items) => {
            for item in items {
                set_path(item, key, value.clone())?;
            }
            Ok(())
        }
        other => set_path(other, key, value),
    }
}

fn set_path(doc: &mut Value, key: &str, value: Value) -> Result<(), CliError> {
    let mut cur = doc;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if part.is_empty() {
            return Err(CliError::Config(format!("empty segment in override key `{key}`")));
        }
        let obj = cur.as_object_mut().ok_or_else(|| {
            CliError::Config(format!("override `{key}`: `{}` is not an object", parts[..i].join(".")))
        })?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        cur = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    Ok(())
}

pub fn parse_run(doc: Value) -> Result<RunConfig, CliError> {
    let cfg: RunConfig = serde_json::from_value(doc).map_err(|e| CliError::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

/// A sweep file is either an array of run configs or `{"runs": [...]}`.
pub fn parse_sweep(doc: Value) -> Result<Vec<RunConfig>, CliError> {
    let runs = match doc {
        Value::Array(a) => a,
        Value::Object(mut o) => match o.remove("runs") {
            Some(Value::Array(a)) if o.is_empty() => a,
            _ => return Err(CliError::Config("sweep config must be an array or {\"runs\": [...]}".into())),
        },
        _ => return Err(CliError::Config("sweep config must be an array or {\"runs\": [...]}".into())),
    };
    if runs.is_empty() {
        return Err(CliError::Config("sweep has no runs".into()));
    }
    runs.into_iter().map(parse_run).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> Value {
        serde_json::json!({"model": {"gamma": 0.05, "alpha0": {"re": 2.0}}, "duration_cycles": 1.0})
    }

    #[test]
    fn defaults_fill_in() {
        let c = parse_run(minimal()).unwrap();
        assert_eq!(c.lattice.half_size, 5);
        assert_eq!(c.samples_per_cycle, 4096);
        assert_eq!(c.wigner_times.len(), 8);
        assert_eq!(c.window, Window::Hann);
        assert_eq!(c.model.omega0_ratio, DEFAULT_OMEGA0_RATIO);
    }

    #[test]
    fn round_trip() {
        let mut doc = minimal();
        apply_override(&mut doc, "grid={\"re_min\":-1,\"re_max\":1,\"im_min\":-1,\"im_max\":1,\"n_re\":3,\"n_im\":3}")
            .unwrap();
        apply_override(&mut doc, "integrator.rel_tol=1e-9").unwrap();
        let c = parse_run(doc).unwrap();
        let again = parse_run(serde_json::to_value(&c).unwrap()).unwrap();
        assert_eq!(c, again);
        assert_eq!(again.integrator.rel_tol, 1e-9);
    }

    #[test]
    fn overrides() {
        let mut doc = minimal();
        apply_override(&mut doc, "model.alpha0.im=0.5").unwrap();
        apply_override(&mut doc, "label=abc").unwrap();
        let c = parse_run(doc).unwrap();
        assert_eq!(c.alpha0(), C64::new(2.0, 0.5));
        assert_eq!(c.label.as_deref(), Some("abc"));
        assert!(apply_override(&mut minimal(), "novalue").is_err());
        assert!(apply_override(&mut minimal(), "duration_cycles.x=1").is_err());
    }

    #[test]
    fn rejects_bad_configs() {
        let mut both = minimal();
        apply_override(&mut both, "model.rabi=0.1").unwrap();
        assert!(parse_run(both).is_err());
        let mut unknown = minimal();
        apply_override(&mut unknown, "colour=1").unwrap();
        assert!(parse_run(unknown).is_err());
        let mut late = minimal();
        apply_override(&mut late, "wigner_times=[2.0]").unwrap();
        assert!(parse_run(late).unwrap().validate_wigner_times().is_err());
        assert!(parse_sweep(serde_json::json!([])).is_err());
    }

    #[test]
    fn sweep_overrides_reach_every_run() {
        let mut doc = serde_json::json!({"runs": [minimal(), minimal()]});
        apply_override(&mut doc, "duration_cycles=3").unwrap();
        let runs = parse_sweep(doc).unwrap();
        assert!(runs.iter().all(|r| r.duration_cycles == 3.0));
    }
}
