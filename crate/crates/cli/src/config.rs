//! Experiment configuration: a TOML file with a `[run]` and a `[params]`
//! section, plus command-line overrides.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::CliError;
use crate::scenarios::{find_scenario, ParamSpec, Scenario};

/// A scenario parameter: a number or a list of numbers.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Num(f64),
    List(Vec<f64>),
}

impl Value {
    fn kind(&self) -> &'static str {
        match self {
            Value::Num(_) => "number",
            Value::List(_) => "list of numbers",
        }
    }

    fn to_toml(&self) -> String {
        match self {
            Value::Num(x) => toml_float(*x),
            Value::List(xs) => format!("[{}]", xs.iter().map(|x| toml_float(*x)).collect::<Vec<_>>().join(", ")),
        }
    }
}

fn toml_float(x: f64) -> String {
    if x.fract() == 0.0 && x.abs() < 1e15 {
        format!("{}", x as i64)
    } else {
        // shortest round-trip form, always valid TOML
        format!("{x:?}")
    }
}

/// What a config file or `--set` said, before defaults are applied.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig {
    pub scenario: Option<String>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
    pub failure_budget: Option<f64>,
    pub params: BTreeMap<String, Value>,
}

/// Fully resolved configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub scenario: &'static Scenario,
    pub seed: u64,
    pub workers: usize,
    pub out: PathBuf,
    /// Largest tolerated fraction of blown-up replicas.
    pub failure_budget: f64,
    pub params: BTreeMap<String, Value>,
}

pub const DEFAULT_SEED: u64 = 20240917;
pub const DEFAULT_FAILURE_BUDGET: f64 = 0.01;

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Line of the first `key =` assignment, for errors raised after parsing.
fn key_line(text: &str, key: &str) -> Option<usize> {
    text.lines().position(|l| {
        let t = l.trim_start();
        t.strip_prefix(key).is_some_and(|rest| rest.trim_start().starts_with('='))
    })
    .map(|i| i + 1)
}

fn invalid(origin: &str, text: &str, key: &str, msg: String) -> CliError {
    match key_line(text, key) {
        Some(line) => CliError::Parse { origin: origin.to_string(), line, message: msg },
        None => CliError::Invalid(format!("{origin}: {msg}")),
    }
}

fn to_value(v: &toml::Value) -> Option<Value> {
    match v {
        toml::Value::Integer(i) => Some(Value::Num(*i as f64)),
        toml::Value::Float(x) => Some(Value::Num(*x)),
        toml::Value::Array(items) => items
            .iter()
            .map(|i| match i {
                toml::Value::Integer(i) => Some(*i as f64),
                toml::Value::Float(x) => Some(*x),
                _ => None,
            })
            .collect::<Option<Vec<f64>>>()
            .map(Value::List),
        _ => None,
    }
}

/// Parse config text. `origin` names the source in error messages.
pub fn parse_config(text: &str, origin: &str) -> Result<RawConfig, CliError> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| CliError::Parse {
        origin: origin.to_string(),
        line: e.span().map(|s| line_of(text, s.start)).unwrap_or(1),
        message: e.message().to_string(),
    })?;
    let mut raw = RawConfig::default();
    for (section, body) in &table {
        let body = match (section.as_str(), body) {
            ("run" | "params", toml::Value::Table(t)) => t,
            ("run" | "params", _) => return Err(invalid(origin, text, section, format!("`{section}` must be a section"))),
            _ => {
                return Err(invalid(
                    origin,
                    text,
                    section,
                    format!("unknown top-level entry `{section}` (expected [run] and [params])"),
                ))
            }
        };
        for (key, v) in body {
            if section == "params" {
                let value = to_value(v)
                    .ok_or_else(|| invalid(origin, text, key, format!("param `{key}` must be a number or a list of numbers")))?;
                raw.params.insert(key.clone(), value);
                continue;
            }
            let bad = |what: &str| invalid(origin, text, key, format!("run.{key} must be {what}"));
            match key.as_str() {
                "scenario" => raw.scenario = Some(v.as_str().ok_or_else(|| bad("a string"))?.to_string()),
                "seed" => {
                    let s = v.as_integer().filter(|s| *s >= 0).ok_or_else(|| bad("a non-negative integer"))?;
                    raw.seed = Some(s as u64);
                }
                "workers" => {
                    let w = v.as_integer().filter(|w| *w >= 1).ok_or_else(|| bad("a positive integer"))?;
                    raw.workers = Some(w as usize);
                }
                "out" => raw.out = Some(PathBuf::from(v.as_str().ok_or_else(|| bad("a string"))?)),
                "failure_budget" => {
                    let b = to_value(v)
                        .and_then(|v| match v {
                            Value::Num(x) if (0.0..=1.0).contains(&x) => Some(x),
                            _ => None,
                        })
                        .ok_or_else(|| bad("a number in [0, 1]"))?;
                    raw.failure_budget = Some(b);
                }
                _ => {
                    return Err(invalid(
                        origin,
                        text,
                        key,
                        format!("unknown run key `{key}` (expected scenario, seed, workers, out, failure_budget)"),
                    ))
                }
            }
        }
    }
    Ok(raw)
}

pub fn load_config(path: &Path) -> Result<RawConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Invalid(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text, &path.display().to_string())
}

/// Apply one `--set key=value`. Keys may be bare (a scenario param),
/// `params.<key>` or `run.<key>`.
pub fn apply_set(raw: &mut RawConfig, assignment: &str) -> Result<(), CliError> {
    let (key, value) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Invalid(format!("--set expects key=value, got `{assignment}`")))?;
    let key = key.trim();
    let value = value.trim();
    let (section, name) = match key.split_once('.') {
        Some((s, n)) => (s, n),
        None => ("params", key),
    };
    let quoted = if section == "run" && matches!(name, "scenario" | "out") && !value.starts_with('"') {
        format!("{value:?}")
    } else {
        value.to_string()
    };
    let snippet = format!("[{section}]\n{name} = {quoted}\n");
    let parsed = parse_config(&snippet, &format!("--set {assignment}"))?;
    merge(raw, parsed);
    Ok(())
}

/// Fields set in `over` replace those in `base`.
pub fn merge(base: &mut RawConfig, over: RawConfig) {
    if over.scenario.is_some() {
        base.scenario = over.scenario;
    }
    if over.seed.is_some() {
        base.seed = over.seed;
    }
    if over.workers.is_some() {
        base.workers = over.workers;
    }
    if over.out.is_some() {
        base.out = over.out;
    }
    if over.failure_budget.is_some() {
        base.failure_budget = over.failure_budget;
    }
    base.params.extend(over.params);
}

/// Fill in defaults and check every parameter against the scenario.
pub fn resolve(raw: RawConfig) -> Result<ExperimentConfig, CliError> {
    let name = raw.scenario.ok_or_else(|| CliError::Invalid("no scenario given (positional argument or run.scenario)".into()))?;
    let scenario = find_scenario(&name)?;
    let specs = (scenario.params)();
    let mut params: BTreeMap<String, Value> = specs.iter().map(|p| (p.key.to_string(), p.default.clone())).collect();
    for (key, value) in raw.params {
        let spec = specs.iter().find(|p| p.key == key).ok_or_else(|| {
            let keys: Vec<&str> = specs.iter().map(|p| p.key).collect();
            CliError::Invalid(format!("scenario {} has no param `{key}`; valid params: {}", scenario.name, keys.join(", ")))
        })?;
        let value = match (&spec.default, value) {
            (Value::List(_), Value::Num(x)) => Value::List(vec![x]),
            (d, v) if std::mem::discriminant(d) != std::mem::discriminant(&v) => {
                return Err(CliError::Invalid(format!("param `{key}` must be a {}, got a {}", d.kind(), v.kind())))
            }
            (_, v) => v,
        };
        params.insert(key, value);
    }
    for spec in &specs {
        check_param(spec, &params[spec.key])?;
    }
    let workers = raw.workers.unwrap_or_else(rds_lab_core::ensemble::default_workers);
    Ok(ExperimentConfig {
        scenario,
        seed: raw.seed.unwrap_or(DEFAULT_SEED),
        workers,
        out: raw.out.unwrap_or_else(|| PathBuf::from("out").join(scenario.name)),
        failure_budget: raw.failure_budget.unwrap_or(DEFAULT_FAILURE_BUDGET),
        params,
    })
}

fn check_param(spec: &ParamSpec, value: &Value) -> Result<(), CliError> {
    let xs: Vec<f64> = match value {
        Value::Num(x) => vec![*x],
        Value::List(xs) if xs.is_empty() => return Err(CliError::Invalid(format!("param `{}` must not be empty", spec.key))),
        Value::List(xs) => xs.clone(),
    };
    for x in xs {
        if !x.is_finite() {
            return Err(CliError::Invalid(format!("param `{}` must be finite", spec.key)));
        }
        if !(spec.check)(x) {
            return Err(CliError::Invalid(format!("param `{}` = {x} is out of range: {}", spec.key, spec.doc)));
        }
    }
    Ok(())
}

impl ExperimentConfig {
    /// The effective configuration as TOML. Worker count and output
    /// directory are left out since they do not affect results.
    pub fn to_toml(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "[run]");
        let _ = writeln!(s, "scenario = {:?}", self.scenario.name);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "failure_budget = {}", toml_float(self.failure_budget));
        let _ = writeln!(s, "\n[params]");
        for (k, v) in &self.params {
            let _ = writeln!(s, "{k} = {}", v.to_toml());
        }
        s
    }

    pub fn num(&self, key: &str) -> f64 {
        match &self.params[key] {
            Value::Num(x) => *x,
            Value::List(_) => unreachable!("param {key} is a list"),
        }
    }

    pub fn int(&self, key: &str) -> usize {
        self.num(key) as usize
    }

    pub fn list(&self, key: &str) -> &[f64] {
        match &self.params[key] {
            Value::List(xs) => xs,
            Value::Num(_) => unreachable!("param {key} is a number"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_errors_carry_line_numbers() {
        let text = "[run]\nscenario = \"gbm-sync\"\nseed = = 3\n";
        match parse_config(text, "cfg.toml") {
            Err(CliError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let text = "[run]\nscenario = \"gbm-sync\"\n\n[params]\nhorizon = \"long\"\n";
        match parse_config(text, "cfg.toml") {
            Err(CliError::Parse { line, .. }) => assert_eq!(line, 5),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(parse_config("[run]\nthreads = 3\n", "x").is_err());
        assert!(parse_config("[other]\na = 1\n", "x").is_err());
        let raw = parse_config("[run]\nscenario = \"gbm-sync\"\n[params]\nbogus = 1\n", "x").unwrap();
        assert!(matches!(resolve(raw), Err(CliError::Invalid(_))));
    }

    #[test]
    fn defaults_resolve_and_round_trip() {
        let raw = RawConfig { scenario: Some("lorenz-gamma-sweep".into()), ..Default::default() };
        let cfg = resolve(raw).unwrap();
        assert_eq!(cfg.list("gamma"), &[0.25, 0.5, 1.0, 1.4, 2.0, 4.0, 8.0]);
        let again = resolve(parse_config(&cfg.to_toml(), "echo").unwrap()).unwrap();
        assert_eq!(again.params, cfg.params);
        assert_eq!(again.seed, cfg.seed);
        assert_eq!(again.to_toml(), cfg.to_toml());
    }

    #[test]
    fn set_overrides() {
        let mut raw = RawConfig { scenario: Some("gbm-sync".into()), ..Default::default() };
        apply_set(&mut raw, "reps=5").unwrap();
        apply_set(&mut raw, "run.seed=9").unwrap();
        apply_set(&mut raw, "run.out=/tmp/x y").unwrap();
        let cfg = resolve(raw).unwrap();
        assert_eq!(cfg.int("reps"), 5);
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.out, PathBuf::from("/tmp/x y"));
        let mut raw = RawConfig { scenario: Some("gbm-sync".into()), ..Default::default() };
        apply_set(&mut raw, "dt=-1").unwrap();
        assert!(resolve(raw).is_err());
    }

    #[test]
    fn scalar_promotes_to_list() {
        let mut raw = RawConfig { scenario: Some("lorenz-gamma-sweep".into()), ..Default::default() };
        apply_set(&mut raw, "gamma=0.7").unwrap();
        assert_eq!(resolve(raw).unwrap().list("gamma"), &[0.7]);
    }
}
