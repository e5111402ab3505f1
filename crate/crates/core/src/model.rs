//! Physical description of an ensemble Λ memory: level scheme, coupling
//! tables, cavity, relaxation and ensemble size.
//!
//! All rates are angular frequencies in rad/s and all times are in seconds.
//! Ground levels carry the labels 1, 2 and 3; the label fixes which rotating
//! frame phase multiplies the couplings out of that level (see
//! [`crate::dynamics`]). Excited levels may carry any label above 3.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::serde_complex;

pub mod consts {
    /// Speed of light in vacuum [m/s].
    pub const C_LIGHT: f64 = 299_792_458.0;
    /// Reduced Planck constant [J s].
    pub const HBAR: f64 = 1.054_571_817e-34;
    /// Vacuum permittivity [F/m].
    pub const EPS0: f64 = 8.854_187_812_8e-12;
}

/// Upper end of the temperature range where the T⁵ linewidth law holds.
pub const LINEWIDTH_VALID_MAX_K: f64 = 100.0;

/// How printed coupling-table frequencies were turned into rates.
///
/// `Angular` takes the printed number directly as rad/s; `Cyclic` multiplies
/// it by 2π first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TableUnits {
    #[default]
    Angular,
    Cyclic,
}

impl TableUnits {
    pub fn factor(self) -> f64 {
        match self {
            TableUnits::Angular => 1.0,
            TableUnits::Cyclic => 2.0 * std::f64::consts::PI,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelScheme {
    /// Ground level labels, a subset of {1, 2, 3}.
    pub ground: Vec<u8>,
    /// Excited level labels, lowest energy first.
    pub excited: Vec<u8>,
    /// The ground level holding the whole ensemble.
    pub initial_ground: u8,
    /// Splitting δ = ω₂₂ − ω₃₃ between ground levels 2 and 3.
    #[serde(rename = "delta_rad_per_s")]
    pub delta: f64,
    #[serde(rename = "omega22_rad_per_s")]
    pub omega22: f64,
    #[serde(rename = "omega33_rad_per_s")]
    pub omega33: f64,
    /// Δ_k = ω_k2 − ω_c, one entry per excited level.
    #[serde(rename = "detunings_rad_per_s")]
    pub detunings: Vec<f64>,
}

impl LevelScheme {
    pub fn ground_index(&self, label: u8) -> Option<usize> {
        self.ground.iter().position(|&g| g == label)
    }

    pub fn excited_index(&self, label: u8) -> Option<usize> {
        self.excited.iter().position(|&e| e == label)
    }

    pub fn detuning(&self, label: u8) -> Option<f64> {
        self.excited_index(label).map(|i| self.detunings[i])
    }

    fn validate(&self) -> Result<()> {
        if self.ground.is_empty() || self.excited.is_empty() {
            return Err(Error::config("levels", "need at least one ground and one excited level"));
        }
        for &g in &self.ground {
            if !(1..=3).contains(&g) {
                return Err(Error::config("levels.ground", format!("ground label {g} outside 1..=3")));
            }
        }
        let mut all: Vec<u8> = self.ground.iter().chain(&self.excited).copied().collect();
        all.sort_unstable();
        if all.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::config("levels", "level labels must be distinct"));
        }
        if self.ground_index(self.initial_ground).is_none() {
            return Err(Error::config(
                "levels.initial_ground",
                format!("{} is not a ground level", self.initial_ground),
            ));
        }
        if self.detunings.len() != self.excited.len() {
            return Err(Error::Dimension {
                what: "levels.detunings_rad_per_s".into(),
                expected: self.excited.len().to_string(),
                found: self.detunings.len().to_string(),
            });
        }
        if !(self.delta >= 0.0) {
            return Err(Error::config("levels.delta_rad_per_s", "must be >= 0"));
        }
        let finite = [self.delta, self.omega22, self.omega33]
            .iter()
            .chain(&self.detunings)
            .all(|x| x.is_finite());
        if !finite {
            return Err(Error::config("levels", "non-finite frequency"));
        }
        Ok(())
    }
}

/// Cavity (G) and control (Ω) coupling rates, rows indexed by ground level
/// and columns by excited level in [`LevelScheme`] order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingSet {
    #[serde(rename = "G_rad_per_s", with = "serde_complex::matrix")]
    pub g: Vec<Vec<C64>>,
    #[serde(rename = "Omega_rad_per_s", with = "serde_complex::matrix")]
    pub omega: Vec<Vec<C64>>,
    /// (ground, excited) label pairs of the intended cavity couplings.
    #[serde(rename = "desired_G", default)]
    pub desired_g: Vec<[u8; 2]>,
    /// (ground, excited) label pairs of the intended control couplings.
    #[serde(rename = "desired_Omega", default)]
    pub desired_omega: Vec<[u8; 2]>,
}

impl CouplingSet {
    pub fn zeros(n_ground: usize, n_excited: usize) -> Self {
        CouplingSet {
            g: vec![vec![C64::new(0.0, 0.0); n_excited]; n_ground],
            omega: vec![vec![C64::new(0.0, 0.0); n_excited]; n_ground],
            desired_g: Vec::new(),
            desired_omega: Vec::new(),
        }
    }

    fn check_shape(m: &[Vec<C64>], rows: usize, cols: usize, what: &str) -> Result<()> {
        if m.len() != rows || m.iter().any(|r| r.len() != cols) {
            let found = format!(
                "{}x[{}]",
                m.len(),
                m.iter().map(|r| r.len().to_string()).collect::<Vec<_>>().join(",")
            );
            return Err(Error::Dimension {
                what: what.into(),
                expected: format!("{rows}x{cols}"),
                found,
            });
        }
        if m.iter().flatten().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::config(what, "non-finite coupling"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CavityParams {
    /// Vacuum wavelength of the cavity mode.
    pub wavelength_m: f64,
    pub refractive_index: f64,
    pub q_factor: f64,
    pub volume_scale: f64,
    /// Explicit mode volume; overrides `volume_scale·(λ/n)³` when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub volume_m3: Option<f64>,
    /// Transition dipole d_z, needed only for g_c and the cooperativity.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dipole_moment_cm: Option<f64>,
}

/// Quantities derived from [`CavityParams`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedCavity {
    pub omega_c_rad_per_s: f64,
    /// Amplitude decay rate, ȧ = −κa + …
    pub kappa_rad_per_s: f64,
    pub volume_m3: f64,
    pub g_c_rad_per_s: Option<f64>,
    pub cooperativity: Option<f64>,
}

/// Fills in ω_c, κ = ω_c/(2Q), V, g_c and C = g_c²N/(κγ_r).
pub fn derive_cavity(cav: &CavityParams, n: u64, gamma_r: f64) -> Result<DerivedCavity> {
    if !(cav.q_factor > 0.0) {
        return Err(Error::config("cavity.q_factor", "must be > 0"));
    }
    if !(cav.wavelength_m > 0.0) {
        return Err(Error::config("cavity.wavelength_m", "must be > 0"));
    }
    if !(cav.volume_scale > 0.0) {
        return Err(Error::config("cavity.volume_scale", "must be > 0"));
    }
    if !(cav.refractive_index > 0.0) {
        return Err(Error::config("cavity.refractive_index", "must be > 0"));
    }
    let omega_c = 2.0 * std::f64::consts::PI * consts::C_LIGHT / cav.wavelength_m;
    let kappa = omega_c / (2.0 * cav.q_factor);
    let volume = match cav.volume_m3 {
        Some(v) if v > 0.0 => v,
        Some(_) => return Err(Error::config("cavity.volume_m3", "must be > 0")),
        None => cav.volume_scale * (cav.wavelength_m / cav.refractive_index).powi(3),
    };
    let eps = cav.refractive_index.powi(2) * consts::EPS0;
    let g_c = cav
        .dipole_moment_cm
        .map(|dz| dz * (omega_c / (2.0 * volume * consts::HBAR * eps)).sqrt());
    let cooperativity = g_c.and_then(|g| {
        (gamma_r > 0.0).then(|| g * g * n as f64 / (kappa * gamma_r))
    });
    Ok(DerivedCavity {
        omega_c_rad_per_s: omega_c,
        kappa_rad_per_s: kappa,
        volume_m3: volume,
        g_c_rad_per_s: g_c,
        cooperativity,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelaxationParams {
    /// Spin inhomogeneous broadening.
    pub gamma_s_rad_per_s: f64,
    /// Optical inhomogeneous broadening.
    pub gamma_e_rad_per_s: f64,
    pub temperature_k: f64,
    pub gamma0_rad_per_s: f64,
    pub c_per_k5: f64,
    pub r_per_s: f64,
    /// Radiative decay; enters only the cooperativity.
    pub gamma_r_rad_per_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Linewidth {
    /// Γ(T) [rad/s].
    pub gamma: f64,
    /// Set when T exceeds the range where the T⁵ law was fitted.
    pub beyond_validity: bool,
}

/// Γ(T) = γ₀ + c·r·T⁵.
pub fn homogeneous_linewidth(relax: &RelaxationParams) -> Result<Linewidth> {
    let t = relax.temperature_k;
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::config("relaxation.temperature_k", format!("must be >= 0, got {t}")));
    }
    let gamma = relax.gamma0_rad_per_s + relax.c_per_k5 * relax.r_per_s * t.powi(5);
    let beyond_validity = t > LINEWIDTH_VALID_MAX_K;
    if beyond_validity {
        log::warn!("T = {t} K is above the {LINEWIDTH_VALID_MAX_K} K validity range of the linewidth law");
    }
    Ok(Linewidth {
        gamma,
        beyond_validity,
    })
}

impl RelaxationParams {
    /// γ_d(T) = Γ(T)/2.
    pub fn gamma_d(&self) -> Result<f64> {
        Ok(homogeneous_linewidth(self)?.gamma / 2.0)
    }

    /// Total optical coherence damping γ_d(T) + γ_e.
    pub fn optical_damping(&self) -> Result<f64> {
        Ok(self.gamma_d()? + self.gamma_e_rad_per_s)
    }

    fn validate(&self) -> Result<()> {
        let named = [
            ("relaxation.gamma_s_rad_per_s", self.gamma_s_rad_per_s),
            ("relaxation.gamma_e_rad_per_s", self.gamma_e_rad_per_s),
            ("relaxation.gamma0_rad_per_s", self.gamma0_rad_per_s),
            ("relaxation.c_per_k5", self.c_per_k5),
            ("relaxation.r_per_s", self.r_per_s),
            ("relaxation.gamma_r_rad_per_s", self.gamma_r_rad_per_s),
        ];
        for (key, v) in named {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::config(key, format!("must be a finite rate >= 0, got {v}")));
            }
        }
        homogeneous_linewidth(self).map(|_| ())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PopulationClosure {
    /// The initial ground level holds N, every other population is zero.
    #[default]
    Fixed,
    /// Reserved; rejected by validation.
    Dynamic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleParams {
    pub n: u64,
    #[serde(default)]
    pub closure: PopulationClosure,
}

/// The designated Λ: signal on `signal_ground`→`excited`, control on
/// `control_ground`→`excited`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lambda {
    pub signal_ground: u8,
    pub control_ground: u8,
    pub excited: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    pub name: String,
    /// Enables the coherences involving ground level 1.
    pub include_level1: bool,
    #[serde(default)]
    pub table_units: TableUnits,
    /// Optical coherences (ground, excited) removed from the state.
    #[serde(default)]
    pub dropped_coherences: Vec<[u8; 2]>,
    /// Free-text provenance, never interpreted.
    #[serde(default)]
    pub provenance: String,
    pub levels: LevelScheme,
    pub couplings: CouplingSet,
    pub cavity: CavityParams,
    pub relaxation: RelaxationParams,
    pub ensemble: EnsembleParams,
}

impl SystemSpec {
    pub fn validate(&self) -> Result<()> {
        self.levels.validate()?;
        let (ng, ne) = (self.levels.ground.len(), self.levels.excited.len());
        CouplingSet::check_shape(&self.couplings.g, ng, ne, "couplings.G_rad_per_s")?;
        CouplingSet::check_shape(&self.couplings.omega, ng, ne, "couplings.Omega_rad_per_s")?;
        for (key, list) in [
            ("couplings.desired_G", &self.couplings.desired_g),
            ("couplings.desired_Omega", &self.couplings.desired_omega),
            ("dropped_coherences", &self.dropped_coherences),
        ] {
            for &[j, k] in list.iter() {
                if self.levels.ground_index(j).is_none() || self.levels.excited_index(k).is_none() {
                    return Err(Error::config(key, format!("({j},{k}) is not a (ground, excited) pair")));
                }
            }
        }
        self.relaxation.validate()?;
        if self.ensemble.n < 1 {
            return Err(Error::config("ensemble.n", "must be >= 1"));
        }
        if self.ensemble.closure != PopulationClosure::Fixed {
            return Err(Error::config("ensemble.closure", "only `fixed` is implemented"));
        }
        derive_cavity(&self.cavity, self.ensemble.n, self.relaxation.gamma_r_rad_per_s)?;
        if let Ok(l) = self.lambda() {
            let d = self.levels.detuning(l.excited).unwrap_or(0.0);
            if d != 0.0 {
                return Err(Error::config(
                    "levels.detunings_rad_per_s",
                    format!("resonant level {} must have zero detuning, got {d}", l.excited),
                ));
            }
        }
        Ok(())
    }

    pub fn derived_cavity(&self) -> Result<DerivedCavity> {
        derive_cavity(&self.cavity, self.ensemble.n, self.relaxation.gamma_r_rad_per_s)
    }

    pub fn kappa(&self) -> Result<f64> {
        Ok(self.derived_cavity()?.kappa_rad_per_s)
    }

    /// Whether ground level `j` takes part in the dynamics.
    pub fn ground_active(&self, j: u8) -> bool {
        self.levels.ground_index(j).is_some() && (j != 1 || self.include_level1)
    }

    fn entry(&self, m: &[Vec<C64>], j: u8, k: u8) -> C64 {
        match (self.levels.ground_index(j), self.levels.excited_index(k)) {
            (Some(gi), Some(ki)) if self.ground_active(j) => m[gi][ki],
            _ => C64::new(0.0, 0.0),
        }
    }

    /// G_jk by label; zero for absent or disabled levels.
    pub fn g(&self, j: u8, k: u8) -> C64 {
        self.entry(&self.couplings.g, j, k)
    }

    /// Ω_jk by label; zero for absent or disabled levels.
    pub fn omega(&self, j: u8, k: u8) -> C64 {
        self.entry(&self.couplings.omega, j, k)
    }

    /// The Λ marked by the desired masks: one G and one Ω entry sharing an
    /// excited level.
    pub fn lambda(&self) -> Result<Lambda> {
        match (&self.couplings.desired_g[..], &self.couplings.desired_omega[..]) {
            ([[js, ks]], [[jc, kc]]) if ks == kc && js != jc => Ok(Lambda {
                signal_ground: *js,
                control_ground: *jc,
                excited: *ks,
            }),
            _ => Err(Error::invalid(
                "no Λ designation: need exactly one desired G and one desired Ω sharing an excited level",
            )),
        }
    }

    pub fn is_dropped(&self, j: u8, k: u8) -> bool {
        self.dropped_coherences.iter().any(|&[a, b]| a == j && b == k)
    }

    /// Copy with every coupling outside the desired masks set to zero.
    pub fn desired_only(&self) -> SystemSpec {
        let mut out = self.clone();
        let levels = &self.levels;
        let keep = |mask: &[[u8; 2]], gi: usize, ki: usize| mask.contains(&[levels.ground[gi], levels.excited[ki]]);
        for (gi, row) in out.couplings.g.iter_mut().enumerate() {
            for (ki, z) in row.iter_mut().enumerate() {
                if !keep(&self.couplings.desired_g, gi, ki) {
                    *z = C64::new(0.0, 0.0);
                }
            }
        }
        for (gi, row) in out.couplings.omega.iter_mut().enumerate() {
            for (ki, z) in row.iter_mut().enumerate() {
                if !keep(&self.couplings.desired_omega, gi, ki) {
                    *z = C64::new(0.0, 0.0);
                }
            }
        }
        out
    }
}

/// Builds G_jk = g_c·g_x(j,k) and Ω_jk = d_z·g_y(j,k)·E₂/(2ħ).
pub fn couplings_from_dipoles(
    gx: &[Vec<C64>],
    gy: &[Vec<C64>],
    dipole_moment_cm: f64,
    e2_v_per_m: f64,
    g_c: f64,
    desired_g: Vec<[u8; 2]>,
    desired_omega: Vec<[u8; 2]>,
) -> Result<CouplingSet> {
    let rows = gx.len();
    let cols = gx.first().map_or(0, |r| r.len());
    CouplingSet::check_shape(gx, rows, cols, "g_x projections")?;
    CouplingSet::check_shape(gy, rows, cols, "g_y projections")?;
    let omega_scale = dipole_moment_cm * e2_v_per_m / (2.0 * consts::HBAR);
    Ok(CouplingSet {
        g: gx.iter().map(|r| r.iter().map(|&x| x * g_c).collect()).collect(),
        omega: gy.iter().map(|r| r.iter().map(|&y| y * omega_scale).collect()).collect(),
        desired_g,
        desired_omega,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    fn relax(t: f64) -> RelaxationParams {
        RelaxationParams {
            gamma_s_rad_per_s: 0.0,
            gamma_e_rad_per_s: 1e9,
            temperature_k: t,
            gamma0_rad_per_s: 2.0 * std::f64::consts::PI * 16.2e6,
            c_per_k5: 9.2e-7,
            r_per_s: 1.0 / 12.5e-9,
            gamma_r_rad_per_s: 8e7,
        }
    }

    #[test]
    fn linewidth_at_zero_kelvin_is_gamma0() {
        let lw = homogeneous_linewidth(&relax(0.0)).unwrap();
        assert_eq!(lw.gamma, 2.0 * std::f64::consts::PI * 16.2e6);
        assert!(!lw.beyond_validity);
    }

    #[test]
    fn linewidth_hand_values() {
        let g0 = 2.0 * std::f64::consts::PI * 16.2e6;
        let lw2 = homogeneous_linewidth(&relax(2.0)).unwrap();
        assert!((lw2.gamma - g0 - 2.3552e3).abs() < 1e-6);
        let lw100 = homogeneous_linewidth(&relax(100.0)).unwrap();
        assert!(((lw100.gamma - g0) - 7.36e11).abs() / 7.36e11 < 1e-12);
        assert!(!lw100.beyond_validity);
        assert!(homogeneous_linewidth(&relax(150.0)).unwrap().beyond_validity);
    }

    #[test]
    fn negative_temperature_rejected() {
        assert!(homogeneous_linewidth(&relax(-1.0)).is_err());
    }

    fn nv_cavity() -> CavityParams {
        CavityParams {
            wavelength_m: 637e-9,
            refractive_index: 2.4,
            q_factor: 7100.0,
            volume_scale: 2.4,
            volume_m3: None,
            dipole_moment_cm: Some(5e-30),
        }
    }

    #[test]
    fn kappa_follows_half_q_convention() {
        let d = derive_cavity(&nv_cavity(), 155, 8e7).unwrap();
        let omega_c = 2.0 * std::f64::consts::PI * consts::C_LIGHT / 637e-9;
        assert!((d.omega_c_rad_per_s - omega_c).abs() / omega_c < 1e-15);
        assert!((d.kappa_rad_per_s - omega_c / 14200.0).abs() / d.kappa_rad_per_s < 1e-15);
        let v = 2.4 * (637e-9f64 / 2.4).powi(3);
        assert!((d.volume_m3 - v).abs() / v < 1e-15);
    }

    #[test]
    fn huge_q_gives_vanishing_kappa() {
        let mut c = nv_cavity();
        c.q_factor = 1e15;
        let d = derive_cavity(&c, 1, 1.0).unwrap();
        assert!((d.kappa_rad_per_s - d.omega_c_rad_per_s / 2e15).abs() < 1e-12);
    }

    #[test]
    fn unit_cooperativity() {
        let c = nv_cavity();
        let d = derive_cavity(&c, 155, 1.0).unwrap();
        let g = d.g_c_rad_per_s.unwrap();
        let gamma_r = g * g * 155.0 / d.kappa_rad_per_s;
        let d2 = derive_cavity(&c, 155, gamma_r).unwrap();
        assert!((d2.cooperativity.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cavity_scaling_laws() {
        let base = derive_cavity(&nv_cavity(), 10, 1.0).unwrap();
        let mut c = nv_cavity();
        c.q_factor *= 2.0;
        let dq = derive_cavity(&c, 10, 1.0).unwrap();
        assert!((dq.kappa_rad_per_s * 2.0 - base.kappa_rad_per_s).abs() / base.kappa_rad_per_s < 1e-15);
        let mut c = nv_cavity();
        c.volume_m3 = Some(2.0 * base.volume_m3);
        let dv = derive_cavity(&c, 10, 1.0).unwrap();
        let ratio = dv.g_c_rad_per_s.unwrap() / base.g_c_rad_per_s.unwrap();
        assert!((ratio - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn invalid_cavity_inputs() {
        for f in [
            |c: &mut CavityParams| c.q_factor = 0.0,
            |c: &mut CavityParams| c.q_factor = -3.0,
            |c: &mut CavityParams| c.volume_scale = 0.0,
            |c: &mut CavityParams| c.wavelength_m = 0.0,
        ] {
            let mut c = nv_cavity();
            f(&mut c);
            assert!(matches!(derive_cavity(&c, 1, 1.0), Err(Error::Config { .. })));
        }
    }

    fn unit_matrix(rows: usize, cols: usize, at: (usize, usize)) -> Vec<Vec<C64>> {
        let mut m = vec![vec![C64::new(0.0, 0.0); cols]; rows];
        m[at.0][at.1] = C64::new(1.0, 0.0);
        m
    }

    #[test]
    fn zero_control_field_gives_zero_rabi() {
        let gy = vec![vec![C64::new(0.3, -0.7); 6]; 3];
        let cs = couplings_from_dipoles(&gy, &gy, 1e-29, 0.0, 1e9, vec![], vec![]).unwrap();
        assert!(cs.omega.iter().flatten().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn unit_projection_gives_gc() {
        let gx = unit_matrix(3, 6, (1, 5));
        let cs = couplings_from_dipoles(&gx, &gx, 1e-29, 1.0, 3.66e9, vec![], vec![]).unwrap();
        for (j, row) in cs.g.iter().enumerate() {
            for (k, z) in row.iter().enumerate() {
                let expect = if (j, k) == (1, 5) { 3.66e9 } else { 0.0 };
                assert_eq!(*z, C64::new(expect, 0.0));
            }
        }
    }

    #[test]
    fn couplings_linear_in_field_and_gc() {
        let gx = vec![vec![C64::new(0.2, 0.1), C64::new(-0.5, 0.0)]];
        let a = couplings_from_dipoles(&gx, &gx, 2e-29, 1e5, 1e9, vec![], vec![]).unwrap();
        let b = couplings_from_dipoles(&gx, &gx, 2e-29, 3e5, 2e9, vec![], vec![]).unwrap();
        for k in 0..2 {
            assert!((b.omega[0][k] - a.omega[0][k] * 3.0).norm() <= 1e-15 * b.omega[0][k].norm());
            assert!((b.g[0][k] - a.g[0][k] * 2.0).norm() <= 1e-15 * b.g[0][k].norm());
        }
    }

    #[test]
    fn dipole_dimension_mismatch() {
        let gx = vec![vec![C64::new(1.0, 0.0); 2], vec![C64::new(1.0, 0.0); 3]];
        assert!(matches!(
            couplings_from_dipoles(&gx, &gx, 1.0, 1.0, 1.0, vec![], vec![]),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn lambda_designation() {
        let nv = presets::nv_preset();
        assert_eq!(
            nv.lambda().unwrap(),
            Lambda {
                signal_ground: 2,
                control_ground: 3,
                excited: 9
            }
        );
        let mut bad = nv.clone();
        bad.couplings.desired_omega.clear();
        assert!(bad.lambda().is_err());
    }

    #[test]
    fn level1_rows_vanish_when_disabled() {
        let mut nv = presets::nv_preset();
        assert_ne!(nv.g(1, 7), C64::new(0.0, 0.0));
        nv.include_level1 = false;
        assert_eq!(nv.g(1, 7), C64::new(0.0, 0.0));
        assert_eq!(nv.omega(1, 4), C64::new(0.0, 0.0));
    }

    #[test]
    fn validation_catches_bad_specs() {
        let mut s = presets::nv_preset();
        s.couplings.g.pop();
        assert!(matches!(s.validate(), Err(Error::Dimension { .. })));
        let mut s = presets::nv_preset();
        s.ensemble.n = 0;
        assert!(s.validate().is_err());
        let mut s = presets::nv_preset();
        s.ensemble.closure = PopulationClosure::Dynamic;
        assert!(s.validate().is_err());
        let mut s = presets::nv_preset();
        s.levels.detunings[5] = 1.0;
        assert!(s.validate().is_err());
        let mut s = presets::nv_preset();
        s.levels.excited[0] = 2;
        assert!(s.validate().is_err());
    }
}
