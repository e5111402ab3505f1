//! Apparent efficiency, apparent fidelity, regime classification and the
//! storage-time scan.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{noise_run, run_protocol, IntegratorOptions, MemoryRun};
use crate::error::{Error, Result};
use crate::model::{homogeneous_linewidth, SystemSpec};
use crate::pulse::{PulseSchedule, Window};

/// Composite Simpson rule on uniformly spaced samples. With an odd number
/// of intervals the last interval uses the trapezoid rule.
pub fn simpson(y: &[f64], dx: f64) -> f64 {
    let n = y.len();
    if n < 2 {
        return 0.0;
    }
    let intervals = n - 1;
    let even = intervals - intervals % 2;
    let mut s = 0.0;
    if even >= 2 {
        let mut odd_sum = 0.0;
        let mut even_sum = 0.0;
        for i in 1..even {
            if i % 2 == 1 {
                odd_sum += y[i];
            } else {
                even_sum += y[i];
            }
        }
        s = dx / 3.0 * (y[0] + 4.0 * odd_sum + 2.0 * even_sum + y[even]);
    }
    if even < intervals {
        s += 0.5 * dx * (y[n - 2] + y[n - 1]);
    }
    s
}

/// ∫|a_out|²dt from `t_start` to the end of the run.
pub fn output_energy(run: &MemoryRun, t_start: f64) -> f64 {
    let dt = run.dt();
    let tol = 1e-9 * dt;
    let first = run.times.iter().position(|&t| t >= t_start - tol).unwrap_or(run.times.len());
    let p: Vec<f64> = run.a_out[first..].iter().map(|z| z.norm_sqr()).collect();
    simpson(&p, dt)
}

fn window_start(run: &MemoryRun, window: Window) -> f64 {
    match window {
        Window::Retrieval => run.retrieval_start_s,
        Window::Total => 0.0,
    }
}

/// Apparent efficiency E = ∫|a_out|²dt over `window`.
pub fn efficiency(run: &MemoryRun, window: Window) -> Result<f64> {
    if run.is_noise_run {
        return Err(Error::invalid("efficiency needs a run with the input switched on"));
    }
    Ok(output_energy(run, window_start(run, window)))
}

/// Apparent fidelity of a noise run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fidelity {
    /// 1 − noise energy, clamped to [0, 1].
    pub fidelity: f64,
    /// ∫|a_n|²dt over the whole run.
    pub noise_energy: f64,
    /// 1 − noise energy before clamping.
    pub unclamped: f64,
}

/// F = 1 − ∫|a_n|²dt over the whole run.
pub fn apparent_fidelity(noise: &MemoryRun) -> Result<Fidelity> {
    if !noise.is_noise_run {
        return Err(Error::invalid("apparent fidelity needs a run with zero input"));
    }
    let e = output_energy(noise, 0.0);
    let unclamped = 1.0 - e;
    if unclamped < 0.0 {
        log::warn!("noise energy {e:.4e} exceeds 1; apparent fidelity clamped to 0");
    }
    Ok(Fidelity {
        fidelity: unclamped.clamp(0.0, 1.0),
        noise_energy: e,
        unclamped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Eit,
    Ats,
    Boundary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeClass {
    pub regime: Regime,
    /// f = Ω/Γ(T).
    pub f: f64,
}

/// EIT when f = Ω/Γ < 1, ATS when f > 1, boundary within 1e-6 of 1.
pub fn classify_regime(omega_peak: f64, gamma: f64) -> Result<RegimeClass> {
    if !(gamma > 0.0) {
        return Err(Error::invalid(format!("linewidth must be > 0, got {gamma}")));
    }
    let f = omega_peak.abs() / gamma;
    let regime = if (f - 1.0).abs() <= 1e-6 {
        Regime::Boundary
    } else if f < 1.0 {
        Regime::Eit
    } else {
        Regime::Ats
    };
    Ok(RegimeClass { regime, f })
}

/// Regime of `spec` driven by `schedule`, using the desired control
/// coupling at peak envelope.
pub fn regime_of(spec: &SystemSpec, schedule: &PulseSchedule) -> Result<RegimeClass> {
    let l = spec.lambda()?;
    let omega = spec.omega(l.control_ground, l.excited).norm() * schedule.peak_control();
    classify_regime(omega, homogeneous_linewidth(&spec.relaxation)?.gamma)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsResult {
    pub efficiency: f64,
    pub apparent_fidelity: f64,
    pub noise_energy: f64,
    pub window: Window,
    pub regime: Regime,
    pub f: f64,
}

/// Runs the protocol with and without input and collects the figures of
/// merit.
pub fn evaluate(spec: &SystemSpec, schedule: &PulseSchedule, opts: &IntegratorOptions) -> Result<MetricsResult> {
    let run = run_protocol(spec, schedule, opts)?;
    let noise = noise_run(spec, schedule, opts)?;
    metrics_from_runs(spec, schedule, &run, &noise)
}

pub fn metrics_from_runs(
    spec: &SystemSpec,
    schedule: &PulseSchedule,
    run: &MemoryRun,
    noise: &MemoryRun,
) -> Result<MetricsResult> {
    let e = efficiency(run, schedule.window)?;
    let f = apparent_fidelity(noise)?;
    let r = regime_of(spec, schedule)?;
    Ok(MetricsResult {
        efficiency: e,
        apparent_fidelity: f.fidelity,
        noise_energy: f.noise_energy,
        window: schedule.window,
        regime: r.regime,
        f: r.f,
    })
}

/// Summary JSON with the full effective configuration embedded.
pub fn metrics_json(
    result: &MetricsResult,
    spec: &SystemSpec,
    schedule: &PulseSchedule,
    opts: &IntegratorOptions,
) -> Result<serde_json::Value> {
    let to = |e: serde_json::Error| Error::Parse(e.to_string());
    Ok(serde_json::json!({
        "metrics": serde_json::to_value(result).map_err(to)?,
        "config": {
            "system": serde_json::to_value(spec).map_err(to)?,
            "schedule": serde_json::to_value(schedule).map_err(to)?,
            "integrator": serde_json::to_value(opts).map_err(to)?,
            "derived": serde_json::to_value(spec.derived_cavity()?).map_err(to)?,
        },
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub t_storage_s: f64,
    pub efficiency: f64,
    /// Absent when the scan was run without noise runs.
    pub fidelity: Option<f64>,
}

/// Oscillation period of E(t_s) with the two closed-form candidates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeriodEstimate {
    pub measured_s: f64,
    /// π/δ, the period of the e^{2iδt} phase.
    pub pi_over_delta_s: f64,
    /// δ/π read literally as a time, for comparison only.
    pub delta_over_pi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StorageScan {
    pub points: Vec<ScanPoint>,
    pub period: Option<PeriodEstimate>,
}

impl StorageScan {
    pub fn efficiencies(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.efficiency).collect()
    }

    /// Writes `t_storage_s, efficiency, fidelity`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let err = |e: csv::Error| Error::Parse(e.to_string());
        wr.write_record(["t_storage_s", "efficiency", "fidelity"]).map_err(err)?;
        for p in &self.points {
            let f = p.fidelity.map(|f| f.to_string()).unwrap_or_default();
            wr.write_record([p.t_storage_s.to_string(), p.efficiency.to_string(), f])
                .map_err(err)?;
        }
        wr.flush().map_err(|e| Error::io("scan output", e))?;
        Ok(())
    }
}

/// Reruns the protocol for every storage time. Runs execute in parallel on
/// the current rayon pool; points come back in input order.
pub fn storage_time_scan(
    spec: &SystemSpec,
    base: &PulseSchedule,
    storage_times: &[f64],
    opts: &IntegratorOptions,
    with_noise: bool,
) -> Result<StorageScan> {
    if let Some(t) = storage_times.iter().find(|t| !(**t >= 0.0)) {
        return Err(Error::invalid(format!("storage time must be >= 0, got {t}")));
    }
    let points = storage_times
        .par_iter()
        .map(|&ts| {
            let s = base.with_storage_time(ts);
            let run = run_protocol(spec, &s, opts)?;
            let efficiency = efficiency(&run, s.window)?;
            let fidelity = if with_noise {
                Some(apparent_fidelity(&noise_run(spec, &s, opts)?)?.fidelity)
            } else {
                None
            };
            Ok(ScanPoint {
                t_storage_s: ts,
                efficiency,
                fidelity,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let ts: Vec<f64> = points.iter().map(|p| p.t_storage_s).collect();
    let es: Vec<f64> = points.iter().map(|p| p.efficiency).collect();
    let delta = spec.levels.delta;
    let period = dominant_period(&ts, &es).map(|measured_s| PeriodEstimate {
        measured_s,
        pi_over_delta_s: std::f64::consts::PI / delta,
        delta_over_pi: delta / std::f64::consts::PI,
    });
    if let Some(p) = &period {
        log::info!(
            "storage-time oscillation: measured {:.4e} s, pi/delta = {:.4e} s, delta/pi = {:.4e}",
            p.measured_s,
            p.pi_over_delta_s,
            p.delta_over_pi
        );
    }
    Ok(StorageScan { points, period })
}

/// Variance explained by the least-squares fit of c + A cos(wt) + B sin(wt)
/// to the mean-removed series.
fn ls_power(t: &[f64], y: &[f64], w: f64) -> f64 {
    let mut m = [[0.0f64; 3]; 3];
    let mut r = [0.0f64; 3];
    for (&ti, &yi) in t.iter().zip(y) {
        let (s, c) = (w * ti).sin_cos();
        let basis = [1.0, c, s];
        for i in 0..3 {
            r[i] += basis[i] * yi;
            for j in 0..3 {
                m[i][j] += basis[i] * basis[j];
            }
        }
    }
    match solve3(m, r) {
        Some(x) => x[0] * r[0] + x[1] * r[1] + x[2] * r[2],
        None => 0.0,
    }
}

fn solve3(mut m: [[f64; 3]; 3], mut r: [f64; 3]) -> Option<[f64; 3]> {
    let scale = m.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
    for col in 0..3 {
        let piv = (col..3).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))?;
        if m[piv][col].abs() <= 1e-12 * scale {
            return None;
        }
        m.swap(col, piv);
        r.swap(col, piv);
        for row in col + 1..3 {
            let f = m[row][col] / m[col][col];
            for k in col..3 {
                m[row][k] -= f * m[col][k];
            }
            r[row] -= f * r[col];
        }
    }
    let mut x = [0.0; 3];
    for i in (0..3).rev() {
        let s: f64 = (i + 1..3).map(|k| m[i][k] * x[k]).sum();
        x[i] = (r[i] - s) / m[i][i];
    }
    Some(x)
}

/// Dominant period of `y(t)` minus its mean: a periodogram peak refined by
/// golden-section search. `None` for fewer than four points or a flat
/// series.
pub fn dominant_period(t: &[f64], y: &[f64]) -> Option<f64> {
    let n = t.len();
    if n < 4 || y.len() != n {
        return None;
    }
    let mean = y.iter().sum::<f64>() / n as f64;
    let yc: Vec<f64> = y.iter().map(|v| v - mean).collect();
    let scale = yc.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale <= 1e-12 * mean.abs().max(1e-300) {
        return None;
    }
    let (tmin, tmax) = t.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    let span = tmax - tmin;
    if !(span > 0.0) {
        return None;
    }
    let tau = std::f64::consts::TAU;
    let w_lo = tau / (2.0 * span);
    let w_hi = tau * (n as f64 - 1.0) / (2.0 * span);
    let m = 40 * n;
    let (mut best_w, mut best_p) = (w_lo, -1.0);
    for i in 0..=m {
        let w = w_lo + (w_hi - w_lo) * i as f64 / m as f64;
        let p = ls_power(t, &yc, w);
        if p > best_p {
            best_p = p;
            best_w = w;
        }
    }
    let dw = (w_hi - w_lo) / m as f64;
    let (mut a, mut b) = ((best_w - dw).max(w_lo * 0.5), best_w + dw);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..80 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if ls_power(t, &yc, c) > ls_power(t, &yc, d) {
            b = d;
        } else {
            a = c;
        }
    }
    Some(tau / (0.5 * (a + b)))
}
