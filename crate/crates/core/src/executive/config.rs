use std::path::{Path, PathBuf};

use serde_json::{Map, Value};

use super::{Scenario, Variant};
use crate::error::{Error, Result};
use crate::integrator::SolverSettings;
use crate::models::{Margin, ModelSpec, TriggerParams};
use crate::observability::{AlgorithmSettings, DrawSettings, SearchSettings};
use crate::par::ExecMode;

const TOP_KEYS: &[&str] = &[
    "model",
    "theta_true",
    "thetahat0",
    "x0",
    "T",
    "a_coeff",
    "Ntilde",
    "t_final",
    "variant",
    "solver",
    "output",
    "observability",
];

#[derive(Clone, Debug, Default, PartialEq)]
pub struct OutputPaths {
    pub trajectory_csv: Option<PathBuf>,
    pub events_csv: Option<PathBuf>,
    pub plot_svg: Option<PathBuf>,
}

/// The optional `observability` section.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ObservabilityConfig {
    pub draws: DrawSettings,
    pub algorithm: AlgorithmSettings,
}

#[derive(Clone, Debug)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub model: ModelSpec,
    pub output: OutputPaths,
    pub observability: Option<ObservabilityConfig>,
}

impl ScenarioConfig {
    pub fn from_json_str(s: &str) -> Result<Self> {
        scenario_from_config(&serde_json::from_str(s)?)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }
}

fn obj<'a>(v: &'a Value, path: &str) -> Result<&'a Map<String, Value>> {
    v.as_object()
        .ok_or_else(|| Error::config(path, "must be an object"))
}

fn num(m: &Map<String, Value>, key: &str, path: &str) -> Result<Option<f64>> {
    match m.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(v) => v
            .as_f64()
            .map(Some)
            .ok_or_else(|| Error::config(path, "must be a number")),
    }
}

fn req_num(m: &Map<String, Value>, key: &str) -> Result<f64> {
    num(m, key, key)?.ok_or_else(|| Error::config(key, "missing required field"))
}

fn int(m: &Map<String, Value>, key: &str, path: &str) -> Result<Option<u64>> {
    match m.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(v) => v
            .as_u64()
            .map(Some)
            .ok_or_else(|| Error::config(path, "must be a non-negative integer")),
    }
}

fn vector(m: &Map<String, Value>, key: &str) -> Result<Option<Vec<f64>>> {
    match m.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::Array(a)) => a
            .iter()
            .enumerate()
            .map(|(i, v)| {
                v.as_f64()
                    .ok_or_else(|| Error::config(format!("{key}[{i}]"), "must be a number"))
            })
            .collect::<Result<Vec<f64>>>()
            .map(Some),
        Some(_) => Err(Error::config(key, "must be an array of numbers")),
    }
}

fn path(m: &Map<String, Value>, key: &str, prefix: &str) -> Result<Option<PathBuf>> {
    match m.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) => Ok(Some(PathBuf::from(s))),
        Some(_) => Err(Error::config(format!("{prefix}.{key}"), "must be a string")),
    }
}

fn check_keys(m: &Map<String, Value>, allowed: &[&str], prefix: &str) -> Result<()> {
    for k in m.keys() {
        if !allowed.contains(&k.as_str()) {
            let p = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
            return Err(Error::config(p, "unknown field"));
        }
    }
    Ok(())
}

fn solver_settings(root: &Map<String, Value>, dwell: f64) -> Result<(SolverSettings, f64)> {
    let mut s = SolverSettings::for_dwell(dwell);
    let mut eps_zero = 1e-12;
    if let Some(v) = root.get("solver") {
        let m = obj(v, "solver")?;
        check_keys(m, &["rtol", "atol", "dt_log", "tol_event", "eps_zero"], "solver")?;
        if let Some(x) = num(m, "rtol", "solver.rtol")? {
            s.rtol = x;
        }
        if let Some(x) = num(m, "atol", "solver.atol")? {
            s.atol = x;
        }
        if let Some(x) = num(m, "dt_log", "solver.dt_log")? {
            s.dt_log = x;
        }
        s.tol_event = num(m, "tol_event", "solver.tol_event")?;
        if let Some(x) = num(m, "eps_zero", "solver.eps_zero")? {
            eps_zero = x;
        }
    }
    s.validate()?;
    Ok((s, eps_zero))
}

/// Reads the `observability` section (absent → `None`).
pub(crate) fn observability_section(root: &Map<String, Value>) -> Result<Option<ObservabilityConfig>> {
    let Some(v) = root.get("observability") else {
        return Ok(None);
    };
    let m = obj(v, "observability")?;
    check_keys(
        m,
        &["draws", "J", "seed", "sample_range", "n_starts", "witness_tol"],
        "observability",
    )?;
    let mut c = ObservabilityConfig::default();
    if let Some(d) = int(m, "draws", "observability.draws")? {
        c.draws.draws = d as usize;
    }
    if let Some(s) = int(m, "seed", "observability.seed")? {
        c.draws.seed = s;
    }
    if let Some(r) = num(m, "sample_range", "observability.sample_range")? {
        if !(r > 0.0) {
            return Err(Error::config("observability.sample_range", "must be positive"));
        }
        c.draws.range = r;
    }
    if let Some(j) = int(m, "J", "observability.J")? {
        if j == 0 {
            return Err(Error::config("observability.J", "must be at least 1"));
        }
        c.algorithm.order = Some(j as usize);
    }
    let mut search = SearchSettings::default();
    if let Some(k) = int(m, "n_starts", "observability.n_starts")? {
        if k == 0 {
            return Err(Error::config("observability.n_starts", "must be at least 1"));
        }
        search.n_starts = k as usize;
    }
    if let Some(t) = num(m, "witness_tol", "observability.witness_tol")? {
        if !(t > 0.0) {
            return Err(Error::config("observability.witness_tol", "must be positive"));
        }
        search.witness_tol = t;
    }
    c.algorithm.search = search;
    Ok(Some(c))
}

/// Model and observability settings only; used where no simulation is run.
pub fn observability_from_config(doc: &Value) -> Result<(ModelSpec, Option<Vec<f64>>, ObservabilityConfig)> {
    let root = obj(doc, "")?;
    check_keys(root, TOP_KEYS, "")?;
    let spec = ModelSpec::from_json(root.get("model").ok_or_else(|| Error::config("model", "missing required field"))?)?;
    let theta = vector(root, "theta_true")?;
    if let Some(t) = &theta {
        let l = spec.poly_plant()?.dims().l;
        if t.len() != l {
            return Err(Error::config(
                "theta_true",
                format!("dimension mismatch: the model needs {l} entries, got {}", t.len()),
            ));
        }
    }
    Ok((spec, theta, observability_section(root)?.unwrap_or_default()))
}

/// Parses and validates a scenario document.
pub fn scenario_from_config(doc: &Value) -> Result<ScenarioConfig> {
    let root = obj(doc, "")?;
    check_keys(root, TOP_KEYS, "")?;
    let spec = ModelSpec::from_json(
        root.get("model")
            .ok_or_else(|| Error::config("model", "missing required field"))?,
    )?;
    let model = spec.build()?;
    let d = model.dims();

    let dwell = req_num(root, "T")?;
    if !(dwell > 0.0) || !dwell.is_finite() {
        return Err(Error::config("T", format!("dwell cap must be positive, got {dwell}")));
    }
    let a_coeff = req_num(root, "a_coeff")?;
    if !(a_coeff > 0.0) || !a_coeff.is_finite() {
        return Err(Error::config("a_coeff", format!("must be positive, got {a_coeff}")));
    }
    let window = int(root, "Ntilde", "Ntilde")?
        .ok_or_else(|| Error::config("Ntilde", "missing required field"))?;
    let t_final = req_num(root, "t_final")?;

    let theta_true = vector(root, "theta_true")?
        .ok_or_else(|| Error::config("theta_true", "missing required field"))?;
    let thetahat0 = vector(root, "thetahat0")?.unwrap_or_else(|| vec![0.0; d.l]);
    let x0 = vector(root, "x0")?.ok_or_else(|| Error::config("x0", "missing required field"))?;

    let variant = match root.get("variant") {
        None | Some(Value::Null) => Variant::Generic,
        Some(Value::String(s)) if s == "generic" => Variant::Generic,
        Some(Value::String(s)) if s == "linear_filter" => Variant::LinearFilter,
        Some(_) => {
            return Err(Error::config(
                "variant",
                "must be \"generic\" or \"linear_filter\"",
            ))
        }
    };
    let (solver, eps_zero) = solver_settings(root, dwell)?;

    let output = match root.get("output") {
        None | Some(Value::Null) => OutputPaths::default(),
        Some(v) => {
            let m = obj(v, "output")?;
            check_keys(m, &["trajectory_csv", "events_csv", "plot_svg"], "output")?;
            OutputPaths {
                trajectory_csv: path(m, "trajectory_csv", "output")?,
                events_csv: path(m, "events_csv", "output")?,
                plot_svg: path(m, "plot_svg", "output")?,
            }
        }
    };

    let trigger = TriggerParams {
        dwell,
        margin: Margin::Quadratic(a_coeff),
        window: window as usize,
        eps_zero,
    };
    let scenario = Scenario {
        model,
        trigger,
        theta_true,
        thetahat0,
        x0,
        t_final,
        solver,
        variant,
        certified_n: None,
        mode: ExecMode::default(),
    };
    scenario.validate()?;
    scenario.check_model()?;
    Ok(ScenarioConfig {
        scenario,
        model: spec,
        output,
        observability: observability_section(root)?,
    })
}
