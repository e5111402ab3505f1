//! Linearized semi-classical equations of motion for the collective
//! coherences and the cavity field, and the storage/retrieval protocol built
//! on them.
//!
//! The equations follow from the rotating-frame Hamiltonian
//!
//! ```text
//! H/ħ = Σ_k Δ_k σ_kk − Σ_{j,k} (a G_jk φ^G_j(t) + Ω_jk(t) φ^Ω_j(t)) σ_kj + h.c.
//! ```
//!
//! with the per-ground-level frame phases
//!
//! ```text
//! φ^G_1 = e^{iω₂₂t}  φ^Ω_1 = e^{iω₃₃t}
//! φ^G_2 = 1          φ^Ω_2 = e^{−iδt}
//! φ^G_3 = e^{iδt}    φ^Ω_3 = 1
//! ```
//!
//! Writing `D_jk = a G_jk φ^G_j + Ω_jk(t) φ^Ω_j`, the Heisenberg equations with
//! mean-field products are
//!
//! ```text
//! σ̇_jk  = −(iΔ_k + γ_d + γ_e) σ_jk + i Σ_j' D_j'k S_jj'
//! σ̇_jj' = −γ_s σ_jj' − i Σ_k (D_jk σ_kj' − D*_j'k σ_jk)
//! ȧ     = −κ a + √(2κ) a_in + i Σ_jk G*_jk φ^G*_j σ_jk
//! ```
//!
//! where `S_jj = σ_jj − σ_kk` and `S_jj' = σ_jj'` otherwise. Under the fixed
//! closure the initial ground level holds N and every other population is
//! zero. Excited–excited coherences are second order and dropped.

use std::io::Write;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::{self, IntegratorStats, OdeSystem, StepControl};
use crate::model::SystemSpec;
use crate::pulse::PulseSchedule;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Numerical settings for a protocol run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Output samples (and maximum steps) per period of the fastest phase.
    pub samples_per_period: f64,
    #[serde(default)]
    pub store_trajectory: bool,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        IntegratorOptions {
            rtol: 1e-8,
            atol: 1e-10,
            samples_per_period: 20.0,
            store_trajectory: false,
        }
    }
}

/// Which coherences the state vector carries, by level label.
#[derive(Debug, Clone, PartialEq)]
pub struct StateLayout {
    /// Ground–ground coherences σ_jj'.
    pub ground_pairs: Vec<(u8, u8)>,
    /// Ground–excited coherences σ_jk.
    pub optical: Vec<(u8, u8)>,
}

impl StateLayout {
    pub fn for_spec(spec: &SystemSpec) -> StateLayout {
        let grounds: Vec<u8> = spec
            .levels
            .ground
            .iter()
            .copied()
            .filter(|&j| spec.ground_active(j))
            .collect();
        let mut ground_pairs = Vec::new();
        if grounds.contains(&2) && grounds.contains(&3) {
            ground_pairs.push((2, 3));
        }
        for j in [2u8, 3] {
            if grounds.contains(&j) && grounds.contains(&1) {
                ground_pairs.push((j, 1));
            }
        }
        let mut optical = Vec::new();
        for &j in [1u8, 2, 3].iter().filter(|j| grounds.contains(j)) {
            for &k in &spec.levels.excited {
                if !spec.is_dropped(j, k) {
                    optical.push((j, k));
                }
            }
        }
        StateLayout { ground_pairs, optical }
    }

    pub fn len(&self) -> usize {
        1 + self.ground_pairs.len() + self.optical.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn ground_offset(&self) -> usize {
        1
    }

    pub fn optical_offset(&self) -> usize {
        1 + self.ground_pairs.len()
    }

    pub fn index_of_ground(&self, j: u8, jp: u8) -> Option<usize> {
        self.ground_pairs
            .iter()
            .position(|&p| p == (j, jp))
            .map(|i| i + self.ground_offset())
    }

    pub fn index_of_optical(&self, j: u8, k: u8) -> Option<usize> {
        self.optical
            .iter()
            .position(|&p| p == (j, k))
            .map(|i| i + self.optical_offset())
    }

    pub fn names(&self) -> Vec<String> {
        let mut v = vec!["a".to_string()];
        v.extend(self.ground_pairs.iter().map(|(j, k)| format!("sigma{j}{k}")));
        v.extend(self.optical.iter().map(|(j, k)| format!("sigma{j}{k}")));
        v
    }
}

/// Frame rotation rates (ω^G_j, ω^Ω_j) for a ground label.
fn frame_rates(spec: &SystemSpec, j: u8) -> (f64, f64) {
    let l = &spec.levels;
    match j {
        1 => (l.omega22, l.omega33),
        2 => (0.0, -l.delta),
        3 => (l.delta, 0.0),
        _ => unreachable!("ground labels are validated to 1..=3"),
    }
}

#[derive(Debug, Clone, Copy)]
enum Coh {
    Zero,
    Direct(usize),
    Conj(usize),
}

/// Time-dependent right-hand side of the full equations of motion.
#[derive(Debug, Clone)]
pub struct Rhs {
    layout: StateLayout,
    n_ground: usize,
    n_excited: usize,
    frame: Vec<(f64, f64)>,
    detunings: Vec<f64>,
    g: Vec<Vec<C64>>,
    omega: Vec<Vec<C64>>,
    populations: Vec<f64>,
    /// coh[a][b] gives σ_{ground a, ground b} for a ≠ b.
    coh: Vec<Vec<Coh>>,
    /// opt[a][k] gives the state index of σ_{ground a, excited k}.
    opt: Vec<Vec<Option<usize>>>,
    /// (ground index, excited index) for each optical state entry.
    opt_pairs: Vec<(usize, usize)>,
    ground_pairs: Vec<(usize, usize)>,
    kappa: f64,
    delta: f64,
    sqrt_2kappa: f64,
    optical_damping: f64,
    gamma_s: f64,
    schedule: PulseSchedule,
    input_scale: C64,
}

/// Builds the derivative function for `spec` driven by `schedule`.
pub fn build_rhs(spec: &SystemSpec, schedule: &PulseSchedule) -> Result<Rhs> {
    spec.validate()?;
    schedule.validate()?;
    let layout = StateLayout::for_spec(spec);
    let grounds: Vec<u8> = spec
        .levels
        .ground
        .iter()
        .copied()
        .filter(|&j| spec.ground_active(j))
        .collect();
    let gidx = |j: u8| grounds.iter().position(|&x| x == j);
    let excited = &spec.levels.excited;
    let ng = grounds.len();
    let ne = excited.len();

    let mut coh = vec![vec![Coh::Zero; ng]; ng];
    for (i, &(j, jp)) in layout.ground_pairs.iter().enumerate() {
        let (a, b) = (gidx(j).unwrap(), gidx(jp).unwrap());
        coh[a][b] = Coh::Direct(i + layout.ground_offset());
        coh[b][a] = Coh::Conj(i + layout.ground_offset());
    }
    let mut opt = vec![vec![None; ne]; ng];
    let mut opt_pairs = Vec::with_capacity(layout.optical.len());
    for (i, &(j, k)) in layout.optical.iter().enumerate() {
        let a = gidx(j).unwrap();
        let kk = spec.levels.excited_index(k).unwrap();
        opt[a][kk] = Some(i + layout.optical_offset());
        opt_pairs.push((a, kk));
    }
    let ground_pairs = layout
        .ground_pairs
        .iter()
        .map(|&(j, jp)| (gidx(j).unwrap(), gidx(jp).unwrap()))
        .collect();

    let n = spec.ensemble.n as f64;
    let kappa = spec.kappa()?;
    Ok(Rhs {
        n_ground: ng,
        n_excited: ne,
        frame: grounds.iter().map(|&j| frame_rates(spec, j)).collect(),
        detunings: spec.levels.detunings.clone(),
        g: grounds.iter().map(|&j| excited.iter().map(|&k| spec.g(j, k)).collect()).collect(),
        omega: grounds
            .iter()
            .map(|&j| excited.iter().map(|&k| spec.omega(j, k)).collect())
            .collect(),
        populations: grounds
            .iter()
            .map(|&j| if j == spec.levels.initial_ground { n } else { 0.0 })
            .collect(),
        coh,
        opt,
        opt_pairs,
        ground_pairs,
        kappa,
        delta: spec.levels.delta,
        sqrt_2kappa: (2.0 * kappa).sqrt(),
        optical_damping: spec.relaxation.optical_damping()?,
        gamma_s: spec.relaxation.gamma_s_rad_per_s,
        schedule: schedule.clone(),
        input_scale: C64::new(1.0, 0.0),
        layout,
    })
}

impl Rhs {
    pub fn layout(&self) -> &StateLayout {
        &self.layout
    }

    pub fn schedule(&self) -> &PulseSchedule {
        &self.schedule
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// Multiplies the input field by `scale` (zero for a noise run).
    pub fn with_input_scale(mut self, scale: C64) -> Self {
        self.input_scale = scale;
        self
    }

    pub fn input_scale(&self) -> C64 {
        self.input_scale
    }

    pub fn a_in(&self, t: f64) -> C64 {
        if self.input_scale == ZERO {
            ZERO
        } else {
            self.input_scale * self.schedule.a_in(t)
        }
    }

    #[inline]
    fn coh(&self, y: &[C64], a: usize, b: usize) -> C64 {
        match self.coh[a][b] {
            Coh::Zero => ZERO,
            Coh::Direct(i) => y[i],
            Coh::Conj(i) => y[i].conj(),
        }
    }

    #[inline]
    fn opt(&self, y: &[C64], a: usize, k: usize) -> C64 {
        match self.opt[a][k] {
            Some(i) => y[i],
            None => ZERO,
        }
    }

    /// Fastest rotation or decay rate that the output grid must resolve:
    /// max(|ω^G_j|, |ω^Ω_j|, 2δ, |Δ_k|, κ).
    pub fn fastest_rate(&self) -> f64 {
        let mut w = self.kappa.max(2.0 * self.delta);
        for &(wg, wo) in &self.frame {
            w = w.max(wg.abs()).max(wo.abs());
        }
        self.detunings.iter().fold(w, |w, d| w.max(d.abs()))
    }
}

impl OdeSystem for Rhs {
    fn dim(&self) -> usize {
        self.layout.len()
    }

    fn rhs(&self, t: f64, y: &[C64], dy: &mut [C64]) {
        let ng = self.n_ground;
        let ne = self.n_excited;
        let a = y[0];
        let ctrl = self.schedule.control(t);
        let a_in = self.a_in(t);

        // D_jk and the cavity-side phase factors.
        let mut d = [[ZERO; 16]; 3];
        let mut pg = [ZERO; 3];
        for gi in 0..ng {
            let (wg, wo) = self.frame[gi];
            pg[gi] = C64::from_polar(1.0, wg * t);
            let po = C64::from_polar(1.0, wo * t) * ctrl;
            for k in 0..ne {
                d[gi][k] = a * self.g[gi][k] * pg[gi] + self.omega[gi][k] * po;
            }
        }

        let mut da = -self.kappa * a + self.sqrt_2kappa * a_in;
        for (i, &(gi, k)) in self.opt_pairs.iter().enumerate() {
            let idx = i + self.layout.optical_offset();
            let s = y[idx];
            let mut acc = d[gi][k] * self.populations[gi];
            for gj in 0..ng {
                if gj != gi {
                    acc += d[gj][k] * self.coh(y, gi, gj);
                }
            }
            dy[idx] = -C64::new(self.optical_damping, self.detunings[k]) * s + I * acc;
            da += I * (self.g[gi][k] * pg[gi]).conj() * s;
        }
        dy[0] = da;

        for (i, &(gi, gj)) in self.ground_pairs.iter().enumerate() {
            let idx = i + self.layout.ground_offset();
            let mut acc = ZERO;
            for k in 0..ne {
                acc += d[gi][k] * self.opt(y, gj, k).conj() - d[gj][k].conj() * self.opt(y, gi, k);
            }
            dy[idx] = -self.gamma_s * y[idx] - I * acc;
        }
    }
}

/// Output of one protocol run on a uniform grid.
#[derive(Debug, Clone)]
pub struct MemoryRun {
    pub times: Vec<f64>,
    pub a_in: Vec<C64>,
    pub a_out: Vec<C64>,
    /// Full state at every grid time, when requested.
    pub trajectory: Option<Vec<Vec<C64>>>,
    pub state_names: Vec<String>,
    pub is_noise_run: bool,
    pub stats: IntegratorStats,
    /// Start of the retrieval window.
    pub retrieval_start_s: f64,
    pub warnings: Vec<String>,
}

impl MemoryRun {
    pub fn dt(&self) -> f64 {
        if self.times.len() > 1 {
            self.times[1] - self.times[0]
        } else {
            0.0
        }
    }

    /// Writes `t_s, re_a_in, im_a_in, re_a_out, im_a_out, abs2_a_out` and,
    /// on request, the real and imaginary part of every state entry.
    pub fn write_csv<W: Write>(&self, w: W, include_state: bool) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header: Vec<String> = ["t_s", "re_a_in", "im_a_in", "re_a_out", "im_a_out", "abs2_a_out"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let traj = if include_state { self.trajectory.as_ref() } else { None };
        if include_state && traj.is_none() {
            return Err(Error::invalid("state columns requested but the trajectory was not stored"));
        }
        if traj.is_some() {
            for n in &self.state_names {
                header.push(format!("re_{n}"));
                header.push(format!("im_{n}"));
            }
        }
        let csv_err = |e: csv::Error| Error::Parse(e.to_string());
        wr.write_record(&header).map_err(csv_err)?;
        for (i, (&t, z)) in self.times.iter().zip(&self.a_out).enumerate() {
            let x = self.a_in[i];
            let mut rec = vec![
                t.to_string(),
                x.re.to_string(),
                x.im.to_string(),
                z.re.to_string(),
                z.im.to_string(),
                z.norm_sqr().to_string(),
            ];
            if let Some(tr) = traj {
                for s in &tr[i] {
                    rec.push(s.re.to_string());
                    rec.push(s.im.to_string());
                }
            }
            wr.write_record(&rec).map_err(csv_err)?;
        }
        wr.flush().map_err(|e| Error::io("csv output", e))?;
        Ok(())
    }
}

/// Uniform output grid resolving `fastest_rate` with `samples_per_period`
/// points and the pulse features with at least 20 points.
pub fn output_grid(t_end: f64, fastest_rate: f64, shortest_feature: f64, samples_per_period: f64) -> (Vec<f64>, f64) {
    let mut dt = shortest_feature / 20.0;
    if fastest_rate > 0.0 {
        dt = dt.min(2.0 * std::f64::consts::PI / fastest_rate / samples_per_period);
    }
    let n = (t_end / dt).ceil() as usize;
    let dt = t_end / n as f64;
    ((0..=n).map(|i| i as f64 * dt).collect(), dt)
}

/// Integrates `rhs` from the zero state over the whole schedule.
pub fn integrate_protocol(rhs: &Rhs, opts: &IntegratorOptions) -> Result<MemoryRun> {
    if !(opts.samples_per_period >= 1.0) {
        return Err(Error::config("integrator.samples_per_period", "must be >= 1"));
    }
    let sched = rhs.schedule();
    let (grid, dt) = output_grid(
        sched.t_end_s,
        rhs.fastest_rate(),
        sched.shortest_feature_s(),
        opts.samples_per_period,
    );
    let ctl = StepControl {
        rtol: opts.rtol,
        atol: opts.atol,
        max_step: dt,
        ..Default::default()
    };
    let n = grid.len();
    let mut a_out = vec![ZERO; n];
    let mut a_in = vec![ZERO; n];
    let mut traj = opts.store_trajectory.then(|| Vec::with_capacity(n));
    let y0 = vec![ZERO; rhs.dim()];
    let s2k = (2.0 * rhs.kappa()).sqrt();
    let (_, stats) = integrator::integrate(rhs, 0.0, &y0, sched.t_end_s, &grid, &ctl, |i, t, y| {
        let ain = rhs.a_in(t);
        a_in[i] = ain;
        a_out[i] = s2k * y[0] - ain;
        if let Some(tr) = traj.as_mut() {
            tr.push(y.to_vec());
        }
    })?;
    Ok(MemoryRun {
        times: grid,
        a_in,
        a_out,
        trajectory: traj,
        state_names: rhs.layout().names(),
        is_noise_run: rhs.input_scale() == ZERO,
        stats,
        retrieval_start_s: sched.retrieval_start_s(),
        warnings: Vec::new(),
    })
}

/// Storage followed by retrieval of the unit-energy input pulse.
pub fn run_protocol(spec: &SystemSpec, schedule: &PulseSchedule, opts: &IntegratorOptions) -> Result<MemoryRun> {
    integrate_protocol(&build_rhs(spec, schedule)?, opts)
}

/// Same protocol with the input switched off.
pub fn noise_run(spec: &SystemSpec, schedule: &PulseSchedule, opts: &IntegratorOptions) -> Result<MemoryRun> {
    integrate_protocol(&build_rhs(spec, schedule)?.with_input_scale(ZERO), opts)
}

/// Protocol run with the input multiplied by a complex factor.
pub fn run_scaled_input(
    spec: &SystemSpec,
    schedule: &PulseSchedule,
    opts: &IntegratorOptions,
    scale: C64,
) -> Result<MemoryRun> {
    integrate_protocol(&build_rhs(spec, schedule)?.with_input_scale(scale), opts)
}

/// True when no control-sourced coherence can reach the cavity without a
/// nonzero cavity amplitude, which makes the zero state an exact solution
/// of the noise run.
pub fn noise_free_by_structure(spec: &SystemSpec) -> bool {
    let j0 = spec.levels.initial_ground;
    spec.levels
        .excited
        .iter()
        .all(|&k| spec.omega(j0, k).norm() == 0.0 || spec.g(j0, k).norm() == 0.0 || spec.is_dropped(j0, k))
        && (!spec.include_level1 || {
            // Level-1 coherences are sourced by Raman terms Ω*_1k Ω_j0k once
            // σ_j0k is populated.
            spec.levels
                .excited
                .iter()
                .all(|&k| spec.omega(j0, k).norm() == 0.0 || spec.omega(1, k).norm() == 0.0)
        })
        && {
            let other: Vec<u8> = spec
                .levels
                .ground
                .iter()
                .copied()
                .filter(|&j| j != j0 && spec.ground_active(j))
                .collect();
            // Raman transfer j0 → j through control couplings alone.
            spec.levels.excited.iter().all(|&k| {
                spec.omega(j0, k).norm() == 0.0 || other.iter().all(|&j| spec.omega(j, k).norm() == 0.0)
            })
        }
}
