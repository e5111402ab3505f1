//! Adiabatically eliminated model of the four-level system {2, 3, 8, 9}.
//!
//! Eliminating the cavity mode and the optical coherences σ₂₉, σ₃₉, σ₂₈
//! leaves one equation for the spin coherence,
//!
//! ```text
//! σ̇₃₂ = −[ γ_s σ₃₂                                             (2)
//!        + √(2κ) N G₂₉* Ω₃₉ a_in / α                          (3)
//!        + κ |Ω₃₉|² σ₃₂ / α                                   (4)
//!        + |G₂₉|² |β|² σ₃₂ / (Γ α²)                           (5)
//!        + |G₃₈|² |β|² σ₃₂ / ((Γ − iΔ₈) α²)                   (6)
//!        + e^{2iδt} √(2κ) N Γ G₃₈ Ω₂₈* a_in / ((Γ − iΔ₈) α)   (7)
//!        − e^{2iδt} N G₃₈ Ω₂₈* Ω₃₉ G₂₉* σ₂₃ / ((Γ − iΔ₈) α) ] (8)
//! ```
//!
//! with Γ = γ_d + γ_e, α = Γκ + |G₂₉|²N, β = √(2κ)Γ a_in − Ω₃₉ G₂₉* σ₂₃ and
//! σ₂₃ = σ₃₂*. Term 1 is σ̇₃₂ itself. The control couplings carry the
//! envelope multiplier of the schedule.
//!
//! The cavity follows from the same elimination: σ₂₉ = i(aG₂₉N + Ω₃₉σ₂₃)/Γ
//! inserted into the stationary cavity equation gives a = β/α, and the
//! output field is a_out = √(2κ)β/α − a_in.
//!
//! Keeping only term 8 gives, for u = σ₃₂e^{−iδt} and v = u*,
//!
//! ```text
//! u̇ = −iδu + c v,   v̇ = iδv + c* u,   c = b/(Γ − iΔ₈),   b = N G₂₉* Ω₃₉ G₃₈ Ω₂₈* / α
//! ```
//!
//! whose eigenvalues are ±√(|c|² − δ²); in the lab frame they shift by iδ.

use std::io::Write;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::dynamics::{output_grid, IntegratorOptions, MemoryRun};
use crate::error::{Error, Result};
use crate::integrator::{self, OdeSystem, StepControl};
use crate::model::SystemSpec;
use crate::pulse::PulseSchedule;
use crate::serde_complex;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Parameters of the reduced four-level model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReducedParams {
    pub n: f64,
    #[serde(with = "serde_complex::scalar")]
    pub g29: C64,
    #[serde(with = "serde_complex::scalar")]
    pub omega39: C64,
    #[serde(with = "serde_complex::scalar")]
    pub g38: C64,
    #[serde(with = "serde_complex::scalar")]
    pub omega28: C64,
    pub delta8: f64,
    pub delta: f64,
    pub kappa: f64,
    pub gamma_d: f64,
    pub gamma_e: f64,
    pub gamma_s: f64,
}

impl ReducedParams {
    /// Picks the desired Λ of `spec` and the unwanted pair through the
    /// spectator excited level `spectator`.
    pub fn from_spec(spec: &SystemSpec, spectator: u8) -> Result<ReducedParams> {
        spec.validate()?;
        let l = spec.lambda()?;
        if (l.signal_ground, l.control_ground) != (2, 3) {
            return Err(Error::invalid(
                "the reduced model needs the signal on ground level 2 and the control on ground level 3",
            ));
        }
        let d8 = spec
            .levels
            .detuning(spectator)
            .ok_or_else(|| Error::invalid(format!("{spectator} is not an excited level")))?;
        if spectator == l.excited {
            return Err(Error::invalid("spectator must differ from the resonant excited level"));
        }
        Ok(ReducedParams {
            n: spec.ensemble.n as f64,
            g29: spec.g(2, l.excited),
            omega39: spec.omega(3, l.excited),
            g38: spec.g(3, spectator),
            omega28: spec.omega(2, spectator),
            delta8: d8,
            delta: spec.levels.delta,
            kappa: spec.kappa()?,
            gamma_d: spec.relaxation.gamma_d()?,
            gamma_e: spec.relaxation.gamma_e_rad_per_s,
            gamma_s: spec.relaxation.gamma_s_rad_per_s,
        })
    }

    /// Γ = γ_d + γ_e.
    pub fn gamma(&self) -> f64 {
        self.gamma_d + self.gamma_e
    }

    /// α = Γκ + |G₂₉|²N.
    pub fn alpha(&self) -> f64 {
        self.gamma() * self.kappa + self.g29.norm_sqr() * self.n
    }

    pub fn validate(&self) -> Result<()> {
        for (k, v) in [
            ("n", self.n),
            ("kappa", self.kappa),
            ("gamma_d", self.gamma_d),
            ("gamma_e", self.gamma_e),
            ("gamma_s", self.gamma_s),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::config(format!("reduced.{k}"), format!("must be >= 0, got {v}")));
            }
        }
        if !(self.alpha() > 0.0) {
            return Err(Error::SingularParameters("alpha = Gamma*kappa + |G29|^2 N vanishes".into()));
        }
        Ok(())
    }

    /// Copy with both control couplings multiplied by `ctrl`.
    pub fn with_control(&self, ctrl: f64) -> ReducedParams {
        ReducedParams {
            omega39: self.omega39 * ctrl,
            omega28: self.omega28 * ctrl,
            ..self.clone()
        }
    }
}

/// Per-term weights of the reduced equation, terms 2 to 8. Term 1 is the
/// derivative itself and cannot be switched off.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TermMask {
    /// weights[i] multiplies term i + 1; weights[0] is always 1.
    pub weights: [f64; 8],
}

impl TermMask {
    pub fn full() -> TermMask {
        TermMask { weights: [1.0; 8] }
    }

    /// Mask with exactly the listed terms enabled; term 1 is implied.
    pub fn from_terms(terms: &[u8]) -> Result<TermMask> {
        let mut weights = [0.0; 8];
        weights[0] = 1.0;
        for &t in terms {
            if !(1..=8).contains(&t) {
                return Err(Error::config("term_mask", format!("term {t} outside 1..=8")));
            }
            weights[t as usize - 1] = 1.0;
        }
        Ok(TermMask { weights })
    }

    /// Full mask without the listed terms.
    pub fn without(terms: &[u8]) -> Result<TermMask> {
        let mut m = TermMask::full();
        for &t in terms {
            if !(2..=8).contains(&t) {
                return Err(Error::config("term_mask", format!("term {t} cannot be removed")));
            }
            m.weights[t as usize - 1] = 0.0;
        }
        Ok(m)
    }

    /// Sets the weight of one term.
    pub fn with_weight(mut self, term: u8, w: f64) -> Result<TermMask> {
        if !(2..=8).contains(&term) {
            return Err(Error::config("term_mask", format!("term {term} has no weight")));
        }
        self.weights[term as usize - 1] = w;
        Ok(self)
    }

    pub fn weight(&self, term: u8) -> f64 {
        self.weights[term as usize - 1]
    }

    pub fn enabled_terms(&self) -> Vec<u8> {
        (1..=8u8).filter(|&t| self.weight(t) != 0.0).collect()
    }
}

impl Default for TermMask {
    fn default() -> Self {
        TermMask::full()
    }
}

/// The eight terms of the reduced equation at one instant, with the
/// control multiplier already folded into `p`. `terms[0]` is unused.
pub fn reduced_terms(t: f64, sigma32: C64, p: &ReducedParams, a_in: f64) -> [C64; 8] {
    let gamma = p.gamma();
    let alpha = p.alpha();
    let s2k = (2.0 * p.kappa).sqrt();
    let s23 = sigma32.conj();
    let beta = C64::new(s2k * gamma * a_in, 0.0) - p.omega39 * p.g29.conj() * s23;
    let b2 = beta.norm_sqr();
    let off = C64::new(gamma, -p.delta8);
    let phase = C64::from_polar(1.0, 2.0 * p.delta * t);
    let unwanted = p.g38 * p.omega28.conj();
    [
        ZERO,
        p.gamma_s * sigma32,
        s2k * p.n * p.g29.conj() * p.omega39 * a_in / alpha,
        p.kappa * p.omega39.norm_sqr() * sigma32 / alpha,
        p.g29.norm_sqr() * b2 * sigma32 / (gamma * alpha * alpha),
        p.g38.norm_sqr() * b2 * sigma32 / (off * alpha * alpha),
        phase * s2k * p.n * gamma * unwanted * a_in / (off * alpha),
        phase * p.n * unwanted * p.omega39 * p.g29.conj() * s23 / (off * alpha),
    ]
}

/// dσ₃₂/dt for the masked reduced equation.
pub fn reduced_rhs(t: f64, sigma32: C64, p: &ReducedParams, mask: &TermMask, a_in: f64) -> C64 {
    let tr = reduced_terms(t, sigma32, p, a_in);
    let w = &mask.weights;
    -(w[1] * tr[1] + w[2] * tr[2] + w[3] * tr[3] + w[4] * tr[4] + w[5] * tr[5] + w[6] * tr[6] - w[7] * tr[7])
}

/// Cavity amplitude a = β/α.
pub fn cavity_amplitude(sigma32: C64, p: &ReducedParams, a_in: f64) -> C64 {
    let beta = C64::new((2.0 * p.kappa).sqrt() * p.gamma() * a_in, 0.0) - p.omega39 * p.g29.conj() * sigma32.conj();
    beta / p.alpha()
}

/// Reduced model driven by a pulse schedule.
#[derive(Debug, Clone)]
pub struct ReducedSystem {
    pub params: ReducedParams,
    pub schedule: PulseSchedule,
    pub mask: TermMask,
    pub input_scale: f64,
}

impl ReducedSystem {
    pub fn new(params: ReducedParams, schedule: PulseSchedule, mask: TermMask) -> Result<ReducedSystem> {
        params.validate()?;
        schedule.validate()?;
        Ok(ReducedSystem {
            params,
            schedule,
            mask,
            input_scale: 1.0,
        })
    }

    fn a_in(&self, t: f64) -> f64 {
        if self.input_scale == 0.0 {
            0.0
        } else {
            self.input_scale * self.schedule.a_in(t)
        }
    }

    /// Conditions under which the adiabatic elimination is questionable.
    pub fn adiabatic_warnings(&self) -> Vec<String> {
        let p = &self.params;
        let mut w = Vec::new();
        let drive = (self.schedule.peak_control() * p.omega39.norm()).max(p.g29.norm() * p.n.sqrt());
        if drive > 0.5 * p.kappa {
            w.push(format!(
                "adiabatic elimination questionable: coupling {drive:.3e} rad/s exceeds kappa/2 = {:.3e} rad/s",
                0.5 * p.kappa
            ));
        }
        let bw = 1.0
            / self
                .schedule
                .control1
                .envelope
                .time_scale()
                .min(self.schedule.control2.envelope.time_scale());
        if bw > 0.5 * p.gamma() {
            w.push(format!(
                "adiabatic elimination questionable: control bandwidth {bw:.3e} 1/s exceeds Gamma/2 = {:.3e} rad/s",
                0.5 * p.gamma()
            ));
        }
        w
    }
}

impl OdeSystem for ReducedSystem {
    fn dim(&self) -> usize {
        1
    }

    fn rhs(&self, t: f64, y: &[C64], dy: &mut [C64]) {
        let p = self.params.with_control(self.schedule.control(t));
        dy[0] = reduced_rhs(t, y[0], &p, &self.mask, self.a_in(t));
    }
}

/// Integrates the reduced model through the schedule and rebuilds the
/// output field.
pub fn integrate_reduced(sys: &ReducedSystem, opts: &IntegratorOptions) -> Result<MemoryRun> {
    let sched = &sys.schedule;
    let (grid, dt) = output_grid(
        sched.t_end_s,
        2.0 * sys.params.delta,
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
    let mut a_in = vec![ZERO; n];
    let mut a_out = vec![ZERO; n];
    let mut traj = opts.store_trajectory.then(|| Vec::with_capacity(n));
    let s2k = (2.0 * sys.params.kappa).sqrt();
    let (_, stats) = integrator::integrate(sys, 0.0, &[ZERO], sched.t_end_s, &grid, &ctl, |i, t, y| {
        let ain = sys.a_in(t);
        let p = sys.params.with_control(sched.control(t));
        a_in[i] = C64::new(ain, 0.0);
        a_out[i] = s2k * cavity_amplitude(y[0], &p, ain) - ain;
        if let Some(tr) = traj.as_mut() {
            tr.push(vec![y[0]]);
        }
    })?;
    let warnings = sys.adiabatic_warnings();
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(MemoryRun {
        times: grid,
        a_in,
        a_out,
        trajectory: traj,
        state_names: vec!["sigma32".into()],
        is_noise_run: sys.input_scale == 0.0,
        stats,
        retrieval_start_s: sched.retrieval_start_s(),
        warnings,
    })
}

/// Storage and retrieval in the reduced model.
pub fn reduced_protocol(
    params: &ReducedParams,
    schedule: &PulseSchedule,
    mask: &TermMask,
    opts: &IntegratorOptions,
) -> Result<MemoryRun> {
    integrate_reduced(&ReducedSystem::new(params.clone(), schedule.clone(), *mask)?, opts)
}

/// Reduced protocol with the input switched off.
pub fn reduced_noise_run(
    params: &ReducedParams,
    schedule: &PulseSchedule,
    mask: &TermMask,
    opts: &IntegratorOptions,
) -> Result<MemoryRun> {
    let mut sys = ReducedSystem::new(params.clone(), schedule.clone(), *mask)?;
    sys.input_scale = 0.0;
    integrate_reduced(&sys, opts)
}

/// Four-wave-mixing rate b = N G₂₉* Ω₃₉ G₃₈ Ω₂₈* / α.
pub fn amplification_rate(p: &ReducedParams) -> Result<C64> {
    let alpha = p.alpha();
    if !(alpha > 0.0) {
        return Err(Error::SingularParameters("alpha vanishes".into()));
    }
    Ok(p.n * p.g29.conj() * p.omega39 * p.g38 * p.omega28.conj() / alpha)
}

/// λ± = iδ ± √(|b|²/(Γ² + Δ₈²) − δ²), principal square root.
///
/// Below threshold both roots are imaginary and λ₋ is taken from
/// λ₊λ₋ = −|c|² so that it keeps full precision when |c| ≪ δ.
pub fn growth_exponents(b: C64, gamma: f64, delta8: f64, delta: f64) -> (C64, C64) {
    let c2 = b.norm_sqr() / (gamma * gamma + delta8 * delta8);
    let radicand = c2 - delta * delta;
    let id = C64::new(0.0, delta);
    if radicand >= 0.0 {
        let root = radicand.sqrt();
        return (id + root, id - root);
    }
    let upper = delta + (-radicand).sqrt();
    (C64::new(0.0, upper), C64::new(0.0, c2 / upper))
}

/// Closed-form σ₃₂(t) of the term-8-only equation with constant couplings
/// `p`, starting from `sigma32_0` at t = 0.
pub fn two_level_oracle(p: &ReducedParams, t: f64, sigma32_0: C64) -> Result<C64> {
    let b = amplification_rate(p)?;
    let c = b / C64::new(p.gamma(), -p.delta8);
    let d = p.delta;
    // M = [[-iδ, c], [c*, iδ]], M² = (|c|² − δ²) I.
    let s = C64::new(c.norm_sqr() - d * d, 0.0).sqrt();
    let st = s * t;
    let cosh = st.cosh();
    let sinh_over_s = if st.norm() < 1e-8 {
        C64::new(t, 0.0) * (1.0 + st * st / 6.0)
    } else {
        st.sinh() / s
    };
    let (u0, v0) = (sigma32_0, sigma32_0.conj());
    let mu = C64::new(0.0, -d) * u0 + c * v0;
    let u = cosh * u0 + sinh_over_s * mu;
    Ok(u * C64::from_polar(1.0, d * t))
}

/// One amplification channel through a spectator excited level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Channel {
    pub channel_k: u8,
    #[serde(with = "serde_complex::scalar")]
    pub b: C64,
    pub abs_b: f64,
    pub re_lambda_plus: f64,
    /// |G₃ₖ Ω₂ₖ| / |Δₖ|.
    pub ratio: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub system: String,
    pub signal_ground: u8,
    pub control_ground: u8,
    pub excited: u8,
    pub control_amplitude: f64,
    pub control_duration_s: f64,
    /// Channels with b ≠ 0, strongest growth first.
    pub channels: Vec<Channel>,
}

impl AuditReport {
    /// Writes `channel_k, abs_b, re_lambda_plus, ratio, flagged`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let err = |e: csv::Error| Error::Parse(e.to_string());
        wr.write_record(["channel_k", "abs_b", "re_lambda_plus", "ratio", "flagged"])
            .map_err(err)?;
        for c in &self.channels {
            wr.write_record([
                c.channel_k.to_string(),
                c.abs_b.to_string(),
                c.re_lambda_plus.to_string(),
                c.ratio.to_string(),
                c.flagged.to_string(),
            ])
            .map_err(err)?;
        }
        wr.flush().map_err(|e| Error::io("audit output", e))?;
        Ok(())
    }
}

/// Scores every spectator excited level as an independent four-wave-mixing
/// channel at the peak control amplitude of `schedule`. A channel is
/// flagged when Re λ₊ times the total control-on time exceeds 1.
pub fn audit(spec: &SystemSpec, schedule: &PulseSchedule) -> Result<AuditReport> {
    let l = spec.lambda()?;
    let amp = schedule.peak_control();
    let duration = schedule.control_duration_s();
    let mut channels = Vec::new();
    for &k in &spec.levels.excited {
        if k == l.excited {
            continue;
        }
        let p = ReducedParams::from_spec(spec, k)?.with_control(amp);
        let b = amplification_rate(&p)?;
        if b.norm() == 0.0 {
            continue;
        }
        let (lp, _) = growth_exponents(b, p.gamma(), p.delta8, p.delta);
        let num = (spec.g(l.control_ground, k) * spec.omega(l.signal_ground, k)).norm() * amp;
        let ratio = if p.delta8 == 0.0 { f64::INFINITY } else { num / p.delta8.abs() };
        channels.push(Channel {
            channel_k: k,
            b,
            abs_b: b.norm(),
            re_lambda_plus: lp.re,
            ratio,
            flagged: lp.re * duration > 1.0,
        });
    }
    channels.sort_by(|a, b| {
        b.re_lambda_plus
            .total_cmp(&a.re_lambda_plus)
            .then(b.abs_b.total_cmp(&a.abs_b))
            .then(a.channel_k.cmp(&b.channel_k))
    });
    Ok(AuditReport {
        system: spec.name.clone(),
        signal_ground: l.signal_ground,
        control_ground: l.control_ground,
        excited: l.excited,
        control_amplitude: amp,
        control_duration_s: duration,
        channels,
    })
}

/// Rate report for the `rate` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub params: ReducedParams,
    pub control_amplitude: f64,
    pub alpha: f64,
    pub gamma: f64,
    #[serde(with = "serde_complex::scalar")]
    pub b: C64,
    pub abs_b: f64,
    #[serde(with = "serde_complex::scalar")]
    pub lambda_plus: C64,
    #[serde(with = "serde_complex::scalar")]
    pub lambda_minus: C64,
    pub amplifying: bool,
}

pub fn rate_report(params: &ReducedParams, control_amplitude: f64) -> Result<RateReport> {
    let p = params.with_control(control_amplitude);
    let b = amplification_rate(&p)?;
    let (lp, lm) = growth_exponents(b, p.gamma(), p.delta8, p.delta);
    Ok(RateReport {
        params: params.clone(),
        control_amplitude,
        alpha: p.alpha(),
        gamma: p.gamma(),
        b,
        abs_b: b.norm(),
        lambda_plus: lp,
        lambda_minus: lm,
        amplifying: lp.re > 0.0,
    })
}
