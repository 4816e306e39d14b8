//! TOML configuration: parsing, `--set` overrides and validation.
//!
//! Coefficients accept a scalar, a vector, a matrix (for `market.sigma`), or a
//! piecewise-constant schedule `{ breakpoints = [...], values = [...] }`.

use nalgebra::{DMatrix, DVector};
use pension_core::experiments::{ExperimentConfig, Revision, SimSettings};
use pension_core::model_core::{Family, ModelParams, ModelSpec, PreferenceSpec, Schedule};
use toml::{Table, Value};

use crate::error::CliError;

/// Every accepted key, by section.
const KNOWN: &[(&str, &[&str])] = &[
    ("market", &["r", "mu", "sigma"]),
    ("salary", &["muY", "sigmaY1", "sigmaY2", "y0", "revision"]),
    ("salary.revision", &["at", "muY"]),
    ("plan", &["p", "w0", "horizon"]),
    ("preference", &["family", "gamma", "theta1", "theta2", "beta", "pihat"]),
    (
        "simulation",
        &["paths", "seed", "steps_per_year", "workers", "checkpoints", "reference"],
    ),
];

pub fn parse_toml(text: &str) -> Result<Table, CliError> {
    text.parse::<Table>().map_err(|e| CliError::Parse(e.to_string()))
}

/// Applies `key=value`; the value is read as a TOML value, or as a bare
/// string when that fails.
pub fn apply_override(doc: &mut Table, assignment: &str) -> Result<(), CliError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("override `{assignment}` is not key=value")))?;
    let key = key.trim();
    let raw = raw.trim();
    let value = match format!("v = {raw}").parse::<Table>() {
        Ok(mut t) => t.remove("v").expect("just inserted"),
        Err(_) => Value::String(raw.to_string()),
    };
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Usage(format!("bad override key `{key}`")));
    }
    let mut table = doc;
    for p in &parts[..parts.len() - 1] {
        let entry = table
            .entry(p.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| CliError::invalid(key, "cannot descend into a non-table value"))?;
    }
    table.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

fn check_unknown(doc: &Table) -> Result<(), CliError> {
    fn walk(prefix: &str, t: &Table) -> Result<(), CliError> {
        let allowed = KNOWN.iter().find(|(s, _)| *s == prefix).map(|(_, k)| *k);
        for (k, v) in t {
            let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
            match allowed {
                None if prefix.is_empty() => {
                    if !KNOWN.iter().any(|(s, _)| *s == k) {
                        return Err(CliError::invalid(&path, "unknown section"));
                    }
                    let sub = v
                        .as_table()
                        .ok_or_else(|| CliError::invalid(&path, "expected a table"))?;
                    walk(&path, sub)?;
                }
                Some(keys) if keys.contains(&k.as_str()) => {
                    if KNOWN.iter().any(|(s, _)| *s == path) {
                        let sub = v
                            .as_table()
                            .ok_or_else(|| CliError::invalid(&path, "expected a table"))?;
                        walk(&path, sub)?;
                    }
                }
                _ => return Err(CliError::invalid(&path, "unknown key")),
            }
        }
        Ok(())
    }
    walk("", doc)
}

struct Doc<'a> {
    root: &'a Table,
}

impl<'a> Doc<'a> {
    fn get(&self, key: &str) -> Option<&'a Value> {
        let mut cur = self.root;
        let parts: Vec<&str> = key.split('.').collect();
        for p in &parts[..parts.len() - 1] {
            cur = cur.get(*p)?.as_table()?;
        }
        cur.get(parts[parts.len() - 1])
    }

    fn require(&self, key: &str) -> Result<&'a Value, CliError> {
        self.get(key).ok_or_else(|| CliError::invalid(key, "missing required key"))
    }

    fn float(&self, key: &str) -> Result<Option<f64>, CliError> {
        self.get(key).map(|v| number(key, v)).transpose()
    }

    fn uint(&self, key: &str) -> Result<Option<usize>, CliError> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Integer(i)) if *i >= 0 => Ok(Some(*i as usize)),
            Some(_) => Err(CliError::invalid(key, "expected a non-negative integer")),
        }
    }
}

fn number(key: &str, v: &Value) -> Result<f64, CliError> {
    match v {
        Value::Float(f) => Ok(*f),
        Value::Integer(i) => Ok(*i as f64),
        _ => Err(CliError::invalid(key, "expected a number")),
    }
}

fn numbers(key: &str, v: &Value) -> Result<Vec<f64>, CliError> {
    match v {
        Value::Array(a) => a.iter().map(|x| number(key, x)).collect(),
        other => Ok(vec![number(key, other)?]),
    }
}

fn matrix(key: &str, v: &Value) -> Result<DMatrix<f64>, CliError> {
    match v {
        Value::Array(rows) if rows.iter().all(|r| r.is_array()) => {
            let rows: Vec<Vec<f64>> = rows.iter().map(|r| numbers(key, r)).collect::<Result<_, _>>()?;
            let n = rows.len();
            if n == 0 || rows.iter().any(|r| r.len() != n) {
                return Err(CliError::invalid(key, "matrix must be square and non-empty"));
            }
            Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
        }
        Value::Array(diag) => {
            let d = numbers(key, &Value::Array(diag.clone()))?;
            Ok(DMatrix::from_diagonal(&DVector::from_vec(d)))
        }
        other => Ok(DMatrix::from_element(1, 1, number(key, other)?)),
    }
}

/// Reads a schedule whose pieces are parsed by `piece`.
fn schedule<V>(
    key: &str,
    v: &Value,
    piece: impl Fn(&str, &Value) -> Result<V, CliError>,
) -> Result<Schedule<V>, CliError> {
    match v {
        Value::Table(t) => {
            let bps = t
                .get("breakpoints")
                .ok_or_else(|| CliError::invalid(&format!("{key}.breakpoints"), "missing required key"))?;
            let vals = t
                .get("values")
                .and_then(|v| v.as_array())
                .ok_or_else(|| CliError::invalid(&format!("{key}.values"), "expected an array"))?;
            if let Some(extra) = t.keys().find(|k| *k != "breakpoints" && *k != "values") {
                return Err(CliError::invalid(&format!("{key}.{extra}"), "unknown key"));
            }
            let bps = numbers(key, bps)?;
            let vals = vals.iter().map(|x| piece(key, x)).collect::<Result<Vec<_>, _>>()?;
            Schedule::new(bps, vals).map_err(|e| CliError::invalid(key, &e.to_string()))
        }
        other => Ok(Schedule::constant(piece(key, other)?)),
    }
}

fn vector_schedule(key: &str, v: &Value, len: usize) -> Result<Schedule<DVector<f64>>, CliError> {
    let s = schedule(key, v, |k, x| numbers(k, x).map(DVector::from_vec))?;
    for x in s.values() {
        if x.len() != len {
            return Err(CliError::invalid(key, &format!("expected length {len}, found {}", x.len())));
        }
    }
    Ok(s)
}

fn vector_or_zero(doc: &Doc, key: &str, len: usize) -> Result<Schedule<DVector<f64>>, CliError> {
    match doc.get(key) {
        None => Ok(Schedule::constant(DVector::zeros(len))),
        Some(Value::Float(f)) if len > 1 => Ok(Schedule::constant(DVector::from_element(len, *f))),
        Some(v) => vector_schedule(key, v, len),
    }
}

fn first_len(s: &Schedule<DVector<f64>>) -> usize {
    s.values()[0].len()
}

/// Builds the experiment configuration from a parsed document.
pub fn build(doc: &Table) -> Result<ExperimentConfig, CliError> {
    check_unknown(doc)?;
    let d = Doc { root: doc };

    let mu = schedule("market.mu", d.require("market.mu")?, |k, x| numbers(k, x).map(DVector::from_vec))?;
    let n = first_len(&mu);
    let mu = vector_schedule("market.mu", d.require("market.mu")?, n)?;
    let sigma = schedule("market.sigma", d.require("market.sigma")?, matrix)?;
    if sigma.values().iter().any(|s| s.nrows() != n) {
        return Err(CliError::invalid("market.sigma", &format!("expected a {n}x{n} matrix")));
    }
    let s2 = schedule("salary.sigmaY2", d.require("salary.sigmaY2")?, |k, x| {
        numbers(k, x).map(DVector::from_vec)
    })?;
    let m = first_len(&s2);
    let spec = ModelSpec {
        n,
        m,
        r: d.float("market.r")?.ok_or_else(|| CliError::invalid("market.r", "missing required key"))?,
        mu,
        sigma,
        mu_y: schedule("salary.muY", d.require("salary.muY")?, number)?,
        sigma_y1: vector_schedule("salary.sigmaY1", d.require("salary.sigmaY1")?, n)?,
        sigma_y2: vector_schedule("salary.sigmaY2", d.require("salary.sigmaY2")?, m)?,
        p: schedule("plan.p", d.require("plan.p")?, number)?,
        w0: d.float("plan.w0")?.unwrap_or(1.0),
        y0: d.float("salary.y0")?.unwrap_or(1.0),
    };
    let params = ModelParams::new(spec)?;

    let family_name = d
        .require("preference.family")?
        .as_str()
        .ok_or_else(|| CliError::invalid("preference.family", "expected a string"))?;
    let family = Family::from_id(family_name).ok_or_else(|| {
        CliError::invalid("preference.family", "expected one of power, exp, powerW, expW")
    })?;
    let baseline_key = if family.is_wealth() { "preference.pihat" } else { "preference.beta" };
    let pref = PreferenceSpec {
        family,
        gamma: d
            .float("preference.gamma")?
            .ok_or_else(|| CliError::invalid("preference.gamma", "missing required key"))?,
        theta1: vector_or_zero(&d, "preference.theta1", n)?,
        theta2: vector_or_zero(&d, "preference.theta2", m)?,
        baseline: vector_or_zero(&d, baseline_key, n)?,
    };
    pref.validate(&params)?;

    let horizon = d
        .float("plan.horizon")?
        .ok_or_else(|| CliError::invalid("plan.horizon", "missing required key"))?;
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(CliError::invalid("plan.horizon", "must be positive"));
    }
    let revision = match d.get("salary.revision") {
        None => None,
        Some(_) => Some(Revision {
            at: d
                .float("salary.revision.at")?
                .ok_or_else(|| CliError::invalid("salary.revision.at", "missing required key"))?,
            mu_y: d
                .float("salary.revision.muY")?
                .ok_or_else(|| CliError::invalid("salary.revision.muY", "missing required key"))?,
        }),
    };

    let defaults = SimSettings::default();
    let paths = d.uint("simulation.paths")?.unwrap_or(defaults.paths);
    if paths == 0 {
        return Err(CliError::invalid("simulation.paths", "need at least one path"));
    }
    let steps_per_year = d.uint("simulation.steps_per_year")?.unwrap_or(defaults.steps_per_year);
    if steps_per_year == 0 {
        return Err(CliError::invalid("simulation.steps_per_year", "must be positive"));
    }
    let seed = match d.get("simulation.seed") {
        None => defaults.seed,
        Some(Value::Integer(i)) => *i as u64,
        Some(_) => return Err(CliError::invalid("simulation.seed", "expected an integer")),
    };
    let workers = d.uint("simulation.workers")?.unwrap_or(0);
    let checkpoints = match d.get("simulation.checkpoints") {
        None => Vec::new(),
        Some(v) => numbers("simulation.checkpoints", v)?,
    };
    let reference = match d.get("simulation.reference") {
        None => Vec::new(),
        Some(Value::Array(rows)) => rows
            .iter()
            .map(|r| {
                let pair = numbers("simulation.reference", r)?;
                if pair.len() != 2 {
                    return Err(CliError::invalid("simulation.reference", "expected [t, value] pairs"));
                }
                Ok((pair[0], pair[1]))
            })
            .collect::<Result<_, _>>()?,
        Some(_) => return Err(CliError::invalid("simulation.reference", "expected [t, value] pairs")),
    };

    Ok(ExperimentConfig {
        params,
        pref,
        horizon,
        revision,
        checkpoints,
        reference,
        sim: SimSettings {
            paths,
            seed,
            steps_per_year,
            workers,
        },
    })
}

/// Parses `text`, applies the overrides in order and validates.
pub fn load(text: &str, overrides: &[String]) -> Result<ExperimentConfig, CliError> {
    let mut doc = parse_toml(text)?;
    for o in overrides {
        apply_override(&mut doc, o)?;
    }
    build(&doc)
}
