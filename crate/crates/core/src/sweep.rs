//! Parameter sweeps over one or two configuration paths.
//!
//! Every grid point is an independent run on a copy of the base
//! configuration. Points run on a bounded rayon pool and are collected in
//! lexicographic order of their axis indices, so the output does not
//! depend on the number of workers. A failing point is recorded in the
//! `status` column and leaves the rest of the grid untouched.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{normalize_path, resolve_path, Config, Overrides};
use crate::dynamics::{noise_run, run_protocol};
use crate::error::{Error, Result};
use crate::metrics::{apparent_fidelity, efficiency};
use crate::model::SystemSpec;
use crate::reduced::{reduced_noise_run, reduced_protocol, TermMask};

pub const SWEEP_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SweepModel {
    #[default]
    FullNumeric,
    Reduced,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepOutput {
    E,
    F,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub path: String,
    pub values: Vec<f64>,
}

impl Axis {
    /// `n` evenly spaced values from `lo` to `hi` inclusive.
    pub fn linspace(path: &str, lo: f64, hi: f64, n: usize) -> Axis {
        let values = match n {
            0 => Vec::new(),
            1 => vec![lo],
            _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
        };
        Axis {
            path: path.into(),
            values,
        }
    }
}

fn default_name() -> String {
    "sweep".into()
}

fn default_outputs() -> Vec<SweepOutput> {
    vec![SweepOutput::E, SweepOutput::F]
}

/// A sweep recipe. `base` is either `preset:<name>` or the path of a
/// configuration file, relative to the plan file when read from disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepPlan {
    #[serde(default = "default_name")]
    pub name: String,
    pub base: String,
    #[serde(default)]
    pub model: SweepModel,
    /// Enabled reduced-model terms; the base configuration's mask when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terms: Option<Vec<u8>>,
    #[serde(default = "default_outputs")]
    pub outputs: Vec<SweepOutput>,
    /// Fixed overrides applied to the base before the axis values.
    #[serde(default)]
    pub set: BTreeMap<String, toml::Value>,
    pub axes: Vec<Axis>,
}

impl SweepPlan {
    pub fn from_toml_str(text: &str) -> Result<SweepPlan> {
        toml::from_str(text).map_err(|e| Error::config("plan", e.to_string().trim().to_string()))
    }

    pub fn load(path: &Path) -> Result<SweepPlan> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        SweepPlan::from_toml_str(&text)
    }

    /// Loads the base configuration named by `base`. Relative paths are
    /// taken from `dir`.
    pub fn resolve_base(&self, dir: Option<&Path>) -> Result<Config> {
        if let Some(name) = self.base.strip_prefix("preset:") {
            return Config::preset(name);
        }
        let p = PathBuf::from(&self.base);
        let p = match dir {
            Some(d) if p.is_relative() => d.join(p),
            _ => p,
        };
        Config::load(&p)
    }

    pub fn wants(&self, o: SweepOutput) -> bool {
        self.outputs.contains(&o)
    }

    fn fixed_overrides(&self) -> Overrides {
        let mut o = Overrides::new();
        for (k, v) in &self.set {
            o.insert(k, v.clone());
        }
        o
    }

    /// The plan's terms weighted by the configuration's term weights.
    fn mask(&self, cfg: &Config) -> Result<TermMask> {
        let mut m = cfg.reduced.mask;
        if let Some(t) = &self.terms {
            let on = TermMask::from_terms(t)?;
            for (w, o) in m.weights.iter_mut().zip(on.weights) {
                *w *= o;
            }
        }
        Ok(m)
    }

    /// Checks the grid shape and that every path resolves against `base`.
    pub fn validate(&self, base: &Config) -> Result<()> {
        if self.axes.is_empty() || self.axes.len() > 2 {
            return Err(Error::invalid(format!("a sweep needs 1 or 2 axes, got {}", self.axes.len())));
        }
        if self.outputs.is_empty() {
            return Err(Error::invalid("no outputs requested"));
        }
        for a in &self.axes {
            if a.values.is_empty() {
                return Err(Error::invalid(format!("axis `{}` has no values (empty grid)", a.path)));
            }
            if let Some(v) = a.values.iter().find(|v| !v.is_finite()) {
                return Err(Error::config(&a.path, format!("non-finite axis value {v}")));
            }
        }
        if self.terms.is_some() && self.model != SweepModel::Reduced {
            return Err(Error::config("terms", "a term mask needs model = \"reduced\""));
        }
        self.mask(base)?;
        let fixed = base.with_overrides(&self.fixed_overrides())?;
        let v = fixed.to_value()?;
        for a in &self.axes {
            resolve_path(&v, &a.path)?;
        }
        Ok(())
    }

    /// Axis-index tuples in lexicographic order.
    pub fn grid(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new()];
        for a in &self.axes {
            out = out
                .into_iter()
                .flat_map(|p| {
                    (0..a.values.len()).map(move |i| {
                        let mut q = p.clone();
                        q.push(i);
                        q
                    })
                })
                .collect();
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis_values: Vec<f64>,
    pub efficiency: Option<f64>,
    pub fidelity: Option<f64>,
    /// `ok` or the failure message.
    pub status: String,
}

impl SweepRow {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepTiming {
    pub elapsed_s: f64,
    pub jobs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub schema_version: u32,
    pub plan: SweepPlan,
    /// The base configuration with the plan's fixed overrides applied.
    pub base: Config,
    pub rows: Vec<SweepRow>,
    pub timing: SweepTiming,
}

/// Runs one grid point.
fn evaluate_point(plan: &SweepPlan, base: &Config, values: &[f64]) -> Result<(f64, Option<f64>)> {
    let mut o = Overrides::new();
    for (a, v) in plan.axes.iter().zip(values) {
        o.insert(&a.path, toml::Value::Float(*v));
    }
    let cfg = base.with_overrides(&o)?;
    let want_f = plan.wants(SweepOutput::F);
    let (run, noise) = match plan.model {
        SweepModel::FullNumeric => {
            let run = run_protocol(&cfg.system, &cfg.schedule, &cfg.integrator)?;
            let noise = if want_f {
                Some(noise_run(&cfg.system, &cfg.schedule, &cfg.integrator)?)
            } else {
                None
            };
            (run, noise)
        }
        SweepModel::Reduced => {
            let p = cfg.reduced_params()?;
            let mask = &plan.mask(&cfg)?;
            let run = reduced_protocol(&p, &cfg.schedule, mask, &cfg.integrator)?;
            let noise = if want_f {
                Some(reduced_noise_run(&p, &cfg.schedule, mask, &cfg.integrator)?)
            } else {
                None
            };
            (run, noise)
        }
    };
    let e = efficiency(&run, cfg.schedule.window)?;
    let f = noise.map(|n| apparent_fidelity(&n).map(|f| f.fidelity)).transpose()?;
    Ok((e, f))
}

/// Evaluates every grid point of `plan` on top of `base` with at most
/// `jobs` workers (the rayon default when `None`).
pub fn sweep(plan: &SweepPlan, base: &Config, jobs: Option<usize>) -> Result<SweepResult> {
    plan.validate(base)?;
    let fixed = base.with_overrides(&plan.fixed_overrides())?;
    let grid = plan.grid();
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        builder = builder.num_threads(j.max(1));
    }
    let pool = builder.build().map_err(|e| Error::invalid(format!("worker pool: {e}")))?;
    let started = Instant::now();
    let rows: Vec<SweepRow> = pool.install(|| {
        grid.par_iter()
            .map(|idx| {
                let values: Vec<f64> = idx.iter().zip(&plan.axes).map(|(&i, a)| a.values[i]).collect();
                match evaluate_point(plan, &fixed, &values) {
                    Ok((e, f)) => SweepRow {
                        axis_values: values,
                        efficiency: Some(e),
                        fidelity: f,
                        status: "ok".into(),
                    },
                    Err(err) => {
                        log::warn!("sweep point {values:?} failed: {err}");
                        SweepRow {
                            axis_values: values,
                            efficiency: None,
                            fidelity: None,
                            status: err.to_string(),
                        }
                    }
                }
            })
            .collect()
    });
    Ok(SweepResult {
        schema_version: SWEEP_SCHEMA_VERSION,
        plan: plan.clone(),
        base: fixed,
        rows,
        timing: SweepTiming {
            elapsed_s: started.elapsed().as_secs_f64(),
            jobs: pool.current_num_threads(),
        },
    })
}

/// Copy of `spec` with G_jk (or Ω_jk when `omega` is set) multiplied by
/// `factor`.
pub fn scale_coupling(spec: &SystemSpec, omega: bool, j: u8, k: u8, factor: f64) -> Result<SystemSpec> {
    if !(factor >= 0.0) || !factor.is_finite() {
        return Err(Error::invalid(format!("scale factor must be finite and >= 0, got {factor}")));
    }
    let r = spec
        .levels
        .ground_index(j)
        .ok_or_else(|| Error::invalid(format!("{j} is not a ground level")))?;
    let c = spec
        .levels
        .excited_index(k)
        .ok_or_else(|| Error::invalid(format!("{k} is not an excited level")))?;
    let mut out = spec.clone();
    let m = if omega { &mut out.couplings.omega } else { &mut out.couplings.g };
    let z = m
        .get_mut(r)
        .and_then(|row| row.get_mut(c))
        .ok_or_else(|| Error::invalid(format!("coupling ({j},{k}) outside the table")))?;
    *z *= factor;
    Ok(out)
}

/// CSV column names: the axis paths, then `efficiency,fidelity,status`.
pub fn csv_header(plan: &SweepPlan) -> Vec<String> {
    let mut h: Vec<String> = plan.axes.iter().map(|a| normalize_path(&a.path).join(".")).collect();
    h.extend(["efficiency", "fidelity", "status"].map(String::from));
    h
}

/// Sidecar path `<stem>.plan.json` next to `csv_path`.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    let stem = csv_path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    csv_path.with_file_name(format!("{stem}.plan.json"))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl SweepResult {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let err = |e: csv::Error| Error::Parse(e.to_string());
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(csv_header(&self.plan)).map_err(err)?;
        for r in &self.rows {
            let mut rec: Vec<String> = r.axis_values.iter().map(f64::to_string).collect();
            rec.push(opt(r.efficiency));
            rec.push(opt(r.fidelity));
            rec.push(r.status.clone());
            wr.write_record(&rec).map_err(err)?;
        }
        wr.flush().map_err(|e| Error::io("sweep output", e))
    }

    fn sidecar(&self) -> Result<serde_json::Value> {
        let to = |e: serde_json::Error| Error::Parse(e.to_string());
        Ok(serde_json::json!({
            "schema_version": self.schema_version,
            "columns": csv_header(&self.plan),
            "plan": serde_json::to_value(&self.plan).map_err(to)?,
            "base": self.base.to_json()?,
            "timing": serde_json::to_value(self.timing).map_err(to)?,
        }))
    }

    /// Writes the CSV to `path` and the provenance sidecar next to it.
    pub fn persist(&self, path: &Path) -> Result<()> {
        let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f))?;
        let side = sidecar_path(path);
        let text = serde_json::to_string_pretty(&self.sidecar()?).map_err(|e| Error::Parse(e.to_string()))?;
        fs::write(&side, text).map_err(|e| Error::io(side, e))
    }

    pub fn load(path: &Path) -> Result<SweepResult> {
        let side = sidecar_path(path);
        let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
        let mut meta: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?;
        let found = meta["schema_version"]
            .as_u64()
            .ok_or_else(|| Error::Parse("sidecar lacks schema_version".into()))? as u32;
        if found != SWEEP_SCHEMA_VERSION {
            return Err(Error::SchemaVersion {
                expected: SWEEP_SCHEMA_VERSION,
                found,
            });
        }
        let plan: SweepPlan =
            serde_json::from_value(meta["plan"].take()).map_err(|e| Error::Parse(e.to_string()))?;
        let mut base_v = meta["base"].take();
        if let Some(o) = base_v.as_object_mut() {
            o.remove("derived");
        }
        let base: Config = serde_json::from_value(base_v).map_err(|e| Error::Parse(e.to_string()))?;
        let timing: SweepTiming =
            serde_json::from_value(meta["timing"].take()).map_err(|e| Error::Parse(e.to_string()))?;

        let n_axes = plan.axes.len();
        let mut rd = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            k => Error::Parse(format!("{k:?}")),
        })?;
        let header: Vec<String> = rd
            .headers()
            .map_err(|e| Error::Parse(e.to_string()))?
            .iter()
            .map(String::from)
            .collect();
        if header != csv_header(&plan) {
            return Err(Error::Parse(format!("unexpected sweep header {header:?}")));
        }
        let num = |s: &str| -> Result<f64> { s.parse().map_err(|_| Error::Parse(format!("bad number `{s}`"))) };
        let opt_num = |s: &str| -> Result<Option<f64>> { if s.is_empty() { Ok(None) } else { num(s).map(Some) } };
        let mut rows = Vec::new();
        for rec in rd.records() {
            let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
            if rec.len() != n_axes + 3 {
                return Err(Error::Parse(format!("row with {} fields, expected {}", rec.len(), n_axes + 3)));
            }
            rows.push(SweepRow {
                axis_values: (0..n_axes).map(|i| num(&rec[i])).collect::<Result<_>>()?,
                efficiency: opt_num(&rec[n_axes])?,
                fidelity: opt_num(&rec[n_axes + 1])?,
                status: rec[n_axes + 2].to_string(),
            });
        }
        Ok(SweepResult {
            schema_version: found,
            plan,
            base,
            rows,
            timing,
        })
    }
}
