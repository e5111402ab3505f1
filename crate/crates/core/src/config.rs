//! Run configuration files and `--set` overrides.
//!
//! A configuration is a TOML document with the sections `[system]`,
//! `[schedule]`, `[integrator]` and `[reduced]`. Saved files also carry a
//! `[derived]` section echoing every number computed from the inputs; it is
//! ignored on load.
//!
//! Override paths are dotted keys into that document. A path that does not
//! start with a section name is taken relative to `system`. Three shorthands
//! address entries by level label instead of position:
//!
//! * `couplings.G.<j>.<k>` and `couplings.Omega.<j>.<k>` for G_jk and Ω_jk,
//! * `levels.detuning.<k>` for Δ_k,
//! * `reduced.term.<n>` for the weight of term n of the reduced equation.
//!
//! Numeric segments index arrays from zero. A trailing `.scale` multiplies
//! the addressed value (a number, a `[re, im]` pair or a nested array) by
//! the given factor instead of replacing it.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use toml::Value;

use crate::dynamics::IntegratorOptions;
use crate::error::{Error, Result};
use crate::metrics::{regime_of, Regime};
use crate::model::{homogeneous_linewidth, SystemSpec, TableUnits};
use crate::presets;
use crate::pulse::PulseSchedule;
use crate::reduced::{amplification_rate, ReducedParams, TermMask};

const SECTIONS: [&str; 4] = ["system", "schedule", "integrator", "reduced"];
const OPTIONAL_KEYS: [&str; 3] = ["volume_m3", "dipole_moment_cm", "retrieval_window_start_s"];

fn default_spectator() -> u8 {
    8
}

/// Settings of the reduced model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReducedSettings {
    /// Excited level carrying the unwanted pair.
    #[serde(default = "default_spectator")]
    pub spectator: u8,
    #[serde(default)]
    pub mask: TermMask,
}

impl Default for ReducedSettings {
    fn default() -> Self {
        ReducedSettings {
            spectator: default_spectator(),
            mask: TermMask::full(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub system: SystemSpec,
    pub schedule: PulseSchedule,
    #[serde(default)]
    pub integrator: IntegratorOptions,
    #[serde(default)]
    pub reduced: ReducedSettings,
}

/// Numbers derived from a configuration, written next to it for auditing.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DerivedEcho {
    pub kappa_convention: String,
    pub table_units: TableUnits,
    pub omega_c_rad_per_s: f64,
    pub kappa_rad_per_s: f64,
    pub volume_m3: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub g_c_rad_per_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cooperativity: Option<f64>,
    pub linewidth_rad_per_s: f64,
    pub linewidth_beyond_validity: bool,
    pub gamma_d_rad_per_s: f64,
    pub optical_damping_rad_per_s: f64,
    pub regime: Regime,
    pub regime_f: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reduced_alpha: Option<f64>,
    /// |b| at the peak control amplitude.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reduced_abs_b: Option<f64>,
}

impl Config {
    /// Built-in system and schedule with default numerics.
    pub fn preset(name: &str) -> Result<Config> {
        let (system, schedule) = presets::by_name(name).ok_or_else(|| {
            Error::invalid(format!(
                "unknown preset `{name}`; available: {}",
                presets::PRESET_NAMES.join(", ")
            ))
        })?;
        Ok(Config {
            system,
            schedule,
            integrator: IntegratorOptions::default(),
            reduced: ReducedSettings::default(),
        })
    }

    pub fn from_toml_str(text: &str) -> Result<Config> {
        Config::from_toml_str_with(text, &Overrides::default())
    }

    /// Parses `text`, applies `overrides` and validates the result.
    pub fn from_toml_str_with(text: &str, overrides: &Overrides) -> Result<Config> {
        let mut root: Value = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        if let Some(t) = root.as_table_mut() {
            t.remove("derived");
        }
        let base = Config::from_value(root)?;
        base.with_overrides(overrides)
    }

    pub fn load(path: &Path) -> Result<Config> {
        Config::load_with(path, &Overrides::default())
    }

    pub fn load_with(path: &Path, overrides: &Overrides) -> Result<Config> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Config::from_toml_str_with(&text, overrides)
    }

    fn from_value(v: Value) -> Result<Config> {
        Config::deserialize(v).map_err(|e| Error::config("config", e.to_string().trim().to_string()))
    }

    /// The configuration as a TOML value with every default spelled out.
    pub fn to_value(&self) -> Result<Value> {
        Value::try_from(self).map_err(|e| Error::Parse(e.to_string()))
    }

    /// Copy with `overrides` applied and validated.
    pub fn with_overrides(&self, overrides: &Overrides) -> Result<Config> {
        if overrides.is_empty() {
            self.validate()?;
            return Ok(self.clone());
        }
        let mut v = self.to_value()?;
        overrides.apply(&mut v)?;
        let c = Config::from_value(v)?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        self.schedule.validate()?;
        let o = &self.integrator;
        if !(o.rtol > 0.0) || !(o.atol > 0.0) {
            return Err(Error::config("integrator.rtol", "rtol and atol must be > 0"));
        }
        if !(o.samples_per_period >= 1.0) {
            return Err(Error::config("integrator.samples_per_period", "must be >= 1"));
        }
        Ok(())
    }

    pub fn reduced_params(&self) -> Result<ReducedParams> {
        ReducedParams::from_spec(&self.system, self.reduced.spectator)
    }

    pub fn derived(&self) -> Result<DerivedEcho> {
        let cav = self.system.derived_cavity()?;
        let lw = homogeneous_linewidth(&self.system.relaxation)?;
        let regime = regime_of(&self.system, &self.schedule)?;
        let reduced = self.reduced_params().ok();
        let abs_b = reduced
            .as_ref()
            .and_then(|p| amplification_rate(&p.with_control(self.schedule.peak_control())).ok())
            .map(|b| b.norm());
        Ok(DerivedEcho {
            kappa_convention: "kappa = omega_c / (2 Q)".into(),
            table_units: self.system.table_units,
            omega_c_rad_per_s: cav.omega_c_rad_per_s,
            kappa_rad_per_s: cav.kappa_rad_per_s,
            volume_m3: cav.volume_m3,
            g_c_rad_per_s: cav.g_c_rad_per_s,
            cooperativity: cav.cooperativity,
            linewidth_rad_per_s: lw.gamma,
            linewidth_beyond_validity: lw.beyond_validity,
            gamma_d_rad_per_s: lw.gamma / 2.0,
            optical_damping_rad_per_s: self.system.relaxation.optical_damping()?,
            regime: regime.regime,
            regime_f: regime.f,
            reduced_alpha: reduced.as_ref().map(|p| p.alpha()),
            reduced_abs_b: abs_b,
        })
    }

    /// TOML text of the configuration followed by its `[derived]` echo.
    pub fn to_toml_string(&self) -> Result<String> {
        let mut v = self.to_value()?;
        let d = Value::try_from(self.derived()?).map_err(|e| Error::Parse(e.to_string()))?;
        v.as_table_mut().expect("config serializes to a table").insert("derived".into(), d);
        toml::to_string_pretty(&v).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_toml_string()?).map_err(|e| Error::io(path, e))
    }

    /// The configuration plus derived echo as JSON, for output sidecars.
    pub fn to_json(&self) -> Result<serde_json::Value> {
        let to = |e: serde_json::Error| Error::Parse(e.to_string());
        let mut v = serde_json::to_value(self).map_err(to)?;
        v["derived"] = serde_json::to_value(self.derived()?).map_err(to)?;
        Ok(v)
    }
}

/// A set of `path = value` assignments. Later assignments to the same path
/// replace earlier ones, so repeating an override has no further effect.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    entries: BTreeMap<String, Value>,
}

impl Overrides {
    pub fn new() -> Overrides {
        Overrides::default()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    /// Adds an assignment; the path is normalized first.
    pub fn insert(&mut self, path: &str, value: Value) {
        self.entries.insert(normalize_path(path).join("."), value);
    }

    /// Parses `key=value`. The value is read as a TOML value when possible
    /// and as a bare string otherwise.
    pub fn push_assignment(&mut self, text: &str) -> Result<()> {
        let (k, v) = text
            .split_once('=')
            .ok_or_else(|| Error::invalid(format!("override `{text}` is not of the form key=value")))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(Error::invalid(format!("override `{text}` has an empty key")));
        }
        self.insert(k, parse_value(v));
        Ok(())
    }

    pub fn from_assignments<S: AsRef<str>>(items: &[S]) -> Result<Overrides> {
        let mut o = Overrides::new();
        for s in items {
            o.push_assignment(s.as_ref())?;
        }
        Ok(o)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Value)> {
        self.entries.iter()
    }

    /// Applies replacements first, then `.scale` multipliers.
    pub fn apply(&self, root: &mut Value) -> Result<()> {
        let (scales, sets): (Vec<_>, Vec<_>) = self.entries.iter().partition(|(k, _)| k.ends_with(".scale"));
        for (k, v) in sets.into_iter().chain(scales) {
            apply_override(root, k, v.clone())?;
        }
        Ok(())
    }
}

/// Reads a command-line value: TOML syntax when it parses, otherwise a
/// string.
pub fn parse_value(text: &str) -> Value {
    #[derive(Deserialize)]
    struct W {
        v: Value,
    }
    match toml::from_str::<W>(&format!("v = {text}")) {
        Ok(w) => w.v,
        Err(_) => Value::String(text.to_string()),
    }
}

/// Splits a dotted path and prefixes `system` when it names no section.
pub fn normalize_path(path: &str) -> Vec<String> {
    let mut segs: Vec<String> = path.split('.').map(|s| s.trim().to_string()).collect();
    if !SECTIONS.contains(&segs[0].as_str()) {
        segs.insert(0, "system".into());
    }
    segs
}

/// Checks that `path` addresses an existing value of `root`.
pub fn resolve_path(root: &Value, path: &str) -> Result<()> {
    let mut probe = root.clone();
    let segs = normalize_path(path);
    let (segs, _) = split_scale(&segs);
    let target = locate(&mut probe, segs, path, false)?;
    if target.is_none() {
        return Err(Error::UnresolvedPath(path.into()));
    }
    Ok(())
}

fn split_scale(segs: &[String]) -> (&[String], bool) {
    match segs.split_last() {
        Some((last, rest)) if last == "scale" && !rest.is_empty() => (rest, true),
        _ => (segs, false),
    }
}

/// Sets or scales the value at `path` in `root`.
pub fn apply_override(root: &mut Value, path: &str, value: Value) -> Result<()> {
    let all = normalize_path(path);
    let (segs, scale) = split_scale(&all);
    if scale {
        let f = as_f64(&value).ok_or_else(|| Error::config(path, "scale factor must be a number"))?;
        if !(f >= 0.0) || !f.is_finite() {
            return Err(Error::config(path, format!("scale factor must be finite and >= 0, got {f}")));
        }
        let target = locate(root, segs, path, false)?.ok_or_else(|| Error::UnresolvedPath(path.into()))?;
        scale_value(target, f).map_err(|m| Error::config(path, m))
    } else {
        let target = locate(root, segs, path, true)?.ok_or_else(|| Error::UnresolvedPath(path.into()))?;
        *target = coerce(target, value);
        Ok(())
    }
}

fn as_f64(v: &Value) -> Option<f64> {
    match v {
        Value::Float(f) => Some(*f),
        Value::Integer(i) => Some(*i as f64),
        _ => None,
    }
}

fn scale_value(v: &mut Value, f: f64) -> std::result::Result<(), String> {
    match v {
        Value::Float(x) => {
            *x *= f;
            Ok(())
        }
        Value::Integer(i) => {
            let y = *i as f64 * f;
            if y.fract() != 0.0 {
                return Err(format!("scaling the integer {i} by {f} gives a non-integer"));
            }
            *i = y as i64;
            Ok(())
        }
        Value::Array(a) => a.iter_mut().try_for_each(|x| scale_value(x, f)),
        other => Err(format!("cannot scale a {}", other.type_str())),
    }
}

/// Matches the shape of the replaced value where that is unambiguous.
fn coerce(old: &Value, new: Value) -> Value {
    match (old, &new) {
        (Value::Float(_), Value::Integer(i)) => Value::Float(*i as f64),
        (Value::Integer(_), Value::Float(f)) if f.fract() == 0.0 => Value::Integer(*f as i64),
        (Value::Array(pair), Value::Integer(_) | Value::Float(_)) if is_complex_pair(pair) => {
            Value::Array(vec![Value::Float(as_f64(&new).unwrap_or(0.0)), Value::Float(0.0)])
        }
        (Value::Array(pair), Value::Array(new_pair)) if is_complex_pair(pair) && new_pair.len() == 2 => {
            Value::Array(new_pair.iter().map(|x| as_f64(x).map(Value::Float).unwrap_or(x.clone())).collect())
        }
        _ => new,
    }
}

fn is_complex_pair(a: &[Value]) -> bool {
    a.len() == 2 && a.iter().all(|x| as_f64(x).is_some())
}

fn label_index(root: &Value, list: &str, label: &str, path: &str) -> Result<usize> {
    let l: i64 = label.parse().map_err(|_| Error::UnresolvedPath(path.into()))?;
    root.get("system")
        .and_then(|s| s.get("levels"))
        .and_then(|s| s.get(list))
        .and_then(Value::as_array)
        .and_then(|a| a.iter().position(|x| x.as_integer() == Some(l)))
        .ok_or_else(|| Error::UnresolvedPath(path.into()))
}

/// Rewrites label shorthands into positional segments.
fn expand(root: &Value, segs: &[String], path: &str) -> Result<Vec<String>> {
    let s: Vec<&str> = segs.iter().map(String::as_str).collect();
    let mut out: Vec<String> = Vec::new();
    let mut i = 0;
    while i < s.len() {
        match (&s[..i], s[i]) {
            (["system", "couplings"], m @ ("G" | "Omega")) => {
                if i + 2 >= s.len() {
                    return Err(Error::UnresolvedPath(path.into()));
                }
                let row = label_index(root, "ground", s[i + 1], path)?;
                let col = label_index(root, "excited", s[i + 2], path)?;
                out.push(format!("{m}_rad_per_s"));
                out.push(row.to_string());
                out.push(col.to_string());
                i += 3;
                continue;
            }
            (["system", "levels"], "detuning") => {
                if i + 1 >= s.len() {
                    return Err(Error::UnresolvedPath(path.into()));
                }
                out.push("detunings_rad_per_s".into());
                out.push(label_index(root, "excited", s[i + 1], path)?.to_string());
                i += 2;
                continue;
            }
            (["reduced"], "term") => {
                let n: usize = s
                    .get(i + 1)
                    .and_then(|t| t.parse().ok())
                    .filter(|n| (2..=8).contains(n))
                    .ok_or_else(|| Error::UnresolvedPath(path.into()))?;
                out.push("mask".into());
                out.push("weights".into());
                out.push((n - 1).to_string());
                i += 2;
                continue;
            }
            _ => {}
        }
        out.push(s[i].to_string());
        i += 1;
    }
    Ok(out)
}

fn locate<'a>(root: &'a mut Value, segs: &[String], path: &str, allow_insert: bool) -> Result<Option<&'a mut Value>> {
    let segs = expand(root, segs, path)?;
    let mut cur = root;
    let last = segs.len() - 1;
    for (i, seg) in segs.iter().enumerate() {
        cur = match cur {
            Value::Table(t) => {
                if !t.contains_key(seg) {
                    if allow_insert && i == last && OPTIONAL_KEYS.contains(&seg.as_str()) {
                        t.insert(seg.clone(), Value::Float(0.0));
                    } else {
                        return Ok(None);
                    }
                }
                t.get_mut(seg).expect("key present")
            }
            Value::Array(a) => {
                let idx: usize = match seg.parse() {
                    Ok(i) => i,
                    Err(_) => return Ok(None),
                };
                match a.get_mut(idx) {
                    Some(v) => v,
                    None => return Ok(None),
                }
            }
            _ => return Ok(None),
        };
    }
    Ok(Some(cur))
}
