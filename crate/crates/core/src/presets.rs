//! Built-in systems and pulse schedules.
//!
//! * [`nv_preset`]: negatively charged NV centre, three ground spin levels and
//!   six excited levels with the full coupling table.
//! * [`four_level_preset`]: the NV Λ on levels {2, 3, 8, 9} with only the
//!   desired pair and the strongest unwanted pair, σ₃₈ removed.
//! * [`rb_preset`]: ⁸⁷Rb D1 line, F = 1, 2 ground hyperfine levels and the
//!   F' = 1, 2 excited levels, couplings built from dipole projections.

use num_complex::Complex64 as C64;

use crate::model::{
    couplings_from_dipoles, derive_cavity, CavityParams, CouplingSet, EnsembleParams, LevelScheme,
    PopulationClosure, RelaxationParams, SystemSpec, TableUnits,
};
use crate::pulse::{ControlPulse, Envelope, PulseSchedule, SignalPulse, Window};

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

fn re(x: f64) -> C64 {
    C64::new(x, 0.0)
}

fn im(x: f64) -> C64 {
    C64::new(0.0, x)
}

/// NV cavity couplings G_jk, rows j = 1, 2, 3 and columns k = 4..=9.
pub fn nv_g_table() -> Vec<Vec<C64>> {
    vec![
        vec![im(2.51), im(-14.93), im(2.23e6), re(3.66e9), re(4.21e3), re(-0.214e9)],
        vec![im(-26.78e3), im(-97.19e3), im(92.86e6), re(0.214e9), re(5.35e6), re(3.66e9)],
        vec![im(-18.34e6), im(-66.75e6), im(-0.135e6), re(-0.316e6), re(3.67e9), re(-5.34e6)],
    ]
}

/// NV control couplings Ω_jk, same layout as [`nv_g_table`].
pub fn nv_omega_table() -> Vec<Vec<C64>> {
    vec![
        vec![im(6.77e9), im(-1.64e9), re(3.34e3), re(-3.19), re(4.02e6), re(24.5)],
        vec![im(-1.64e9), im(-6.77e9), im(10.3e6), re(-21.2e3), re(-0.131e9), re(-0.258e6)],
        vec![im(2.41e6), im(9.97e9), im(6.97e9), re(-14.5e6), re(0.194e6), re(-0.176e9)],
    ]
}

/// NV ground splitting δ between levels 2 and 3 [rad/s].
pub const NV_DELTA: f64 = 6.8e6;
/// NV zero-field splitting, ω₂₂ relative to level 1 [rad/s].
pub const NV_OMEGA22: f64 = 2.87e9;
/// NV excited-level detunings Δ₄ … Δ₉ [rad/s].
pub const NV_DETUNINGS: [f64; 6] = [-244.4e9, -241.6e9, -240.0e9, -4.4e9, -1.6e9, 0.0];

fn scale_table(m: Vec<Vec<C64>>, f: f64) -> Vec<Vec<C64>> {
    if f == 1.0 {
        return m;
    }
    m.into_iter().map(|r| r.into_iter().map(|z| z * f).collect()).collect()
}

/// Full NV system with the coupling table read as angular rates.
pub fn nv_preset() -> SystemSpec {
    nv_preset_with(TableUnits::Angular)
}

/// Full NV system; `units` selects how the tabulated couplings, splittings
/// and detunings are turned into rad/s.
pub fn nv_preset_with(units: TableUnits) -> SystemSpec {
    let f = units.factor();
    SystemSpec {
        name: "nv".into(),
        include_level1: true,
        table_units: units,
        dropped_coherences: Vec::new(),
        provenance: "NV- centre at T = 2 K; external-field shifts: ground E_x = 3.4 MHz, excited \
                     E_x = 120 GHz, E_y = 0, ground B_z = 9.9 kHz and 10 kHz"
            .into(),
        levels: LevelScheme {
            ground: vec![1, 2, 3],
            excited: vec![4, 5, 6, 7, 8, 9],
            initial_ground: 2,
            delta: NV_DELTA * f,
            omega22: NV_OMEGA22 * f,
            omega33: (NV_OMEGA22 - NV_DELTA) * f,
            detunings: NV_DETUNINGS.iter().map(|d| d * f).collect(),
        },
        couplings: CouplingSet {
            g: scale_table(nv_g_table(), f),
            omega: scale_table(nv_omega_table(), f),
            desired_g: vec![[2, 9]],
            desired_omega: vec![[3, 9]],
        },
        cavity: CavityParams {
            wavelength_m: 637e-9,
            refractive_index: 2.4,
            q_factor: 7100.0,
            volume_scale: 2.4,
            volume_m3: None,
            dipole_moment_cm: None,
        },
        relaxation: RelaxationParams {
            gamma_s_rad_per_s: 0.0,
            gamma_e_rad_per_s: 1e9 * f,
            temperature_k: 2.0,
            gamma0_rad_per_s: TWO_PI * 16.2e6,
            c_per_k5: 9.2e-7,
            r_per_s: 1.0 / 12.5e-9,
            gamma_r_rad_per_s: 1.0 / 12.5e-9,
        },
        ensemble: EnsembleParams {
            n: 155,
            closure: PopulationClosure::Fixed,
        },
    }
}

/// The NV Λ reduced to ground levels {2, 3} and excited levels {8, 9}
/// with only G₂₉, Ω₃₉, G₃₈ and Ω₂₈ kept and σ₃₈ removed.
pub fn four_level_preset() -> SystemSpec {
    let nv = nv_preset();
    let mut g = vec![vec![C64::new(0.0, 0.0); 2]; 2];
    let mut omega = g.clone();
    g[0][1] = nv.g(2, 9);
    g[1][0] = nv.g(3, 8);
    omega[1][1] = nv.omega(3, 9);
    omega[0][0] = nv.omega(2, 8);
    SystemSpec {
        name: "nv-four-level".into(),
        include_level1: false,
        table_units: nv.table_units,
        dropped_coherences: vec![[3, 8]],
        provenance: "NV Λ on levels 2, 3, 8, 9 with the G38/Ω28 unwanted pair".into(),
        levels: LevelScheme {
            ground: vec![2, 3],
            excited: vec![8, 9],
            initial_ground: 2,
            delta: nv.levels.delta,
            omega22: nv.levels.omega22,
            omega33: nv.levels.omega33,
            detunings: vec![nv.levels.detuning(8).unwrap(), 0.0],
        },
        couplings: CouplingSet {
            g,
            omega,
            desired_g: vec![[2, 9]],
            desired_omega: vec![[3, 9]],
        },
        ..nv
    }
}

/// ⁸⁷Rb D1 transition dipole moment [C m].
pub const RB_DIPOLE_CM: f64 = 2.537e-29;
/// ⁸⁷Rb ground hyperfine splitting [rad/s].
pub const RB_HYPERFINE: f64 = TWO_PI * 6.834_682_611e9;
/// ⁸⁷Rb D1 excited hyperfine splitting [rad/s].
pub const RB_EXCITED_SPLITTING: f64 = TWO_PI * 814.5e6;
/// Control field amplitude E₂ for the Rb preset [V/m].
pub const RB_CONTROL_FIELD: f64 = 2.2e6;

/// Relative D1 dipole projections `g[F-1][F'-1]` between ground F and
/// excited F'.
pub fn rb_projections() -> [[f64; 2]; 2] {
    [[(1.0f64 / 6.0).sqrt(), (5.0f64 / 6.0).sqrt()], [(5.0f64 / 6.0).sqrt(), (5.0f64 / 6.0).sqrt()]]
}

/// ⁸⁷Rb Λ memory in a cavity, four levels.
///
/// The signal couples the initially populated F = 1 level (label 2) to
/// F' = 2 (label 9) and the control couples F = 2 (label 3) to F' = 2. The
/// unwanted pair is the signal on F = 2 → F' = 1 (G₃₈) and the control on
/// F = 1 → F' = 1 (Ω₂₈). The level scheme is written in the mirror frame
/// where the hyperfine splitting and the F' = 1 detuning are positive;
/// output intensities are unchanged by that reflection.
pub fn rb_preset() -> SystemSpec {
    let cavity = CavityParams {
        wavelength_m: 794.979e-9,
        refractive_index: 1.0,
        q_factor: 7100.0,
        volume_scale: 1.5,
        volume_m3: None,
        dipole_moment_cm: Some(RB_DIPOLE_CM),
    };
    let gamma = TWO_PI * 5.746e6;
    let n = 250;
    let g_c = derive_cavity(&cavity, n, gamma)
        .ok()
        .and_then(|d| d.g_c_rad_per_s)
        .expect("built-in Rb cavity is valid");
    let p = rb_projections();
    let z = C64::new(0.0, 0.0);
    // Rows: ground labels 2 (F = 1), 3 (F = 2); columns: 8 (F' = 1), 9 (F' = 2).
    let gx = vec![vec![z, re(p[0][1])], vec![re(p[1][0]), z]];
    let gy = vec![vec![re(p[0][0]), z], vec![z, re(p[1][1])]];
    let couplings = couplings_from_dipoles(&gx, &gy, RB_DIPOLE_CM, RB_CONTROL_FIELD, g_c, vec![[2, 9]], vec![[3, 9]])
        .expect("built-in Rb projections are consistent");
    SystemSpec {
        name: "rb87-d1".into(),
        include_level1: false,
        table_units: TableUnits::Angular,
        dropped_coherences: Vec::new(),
        provenance: "87Rb D1 line, mirror frame (positive hyperfine splitting and F'=1 detuning)".into(),
        levels: LevelScheme {
            ground: vec![2, 3],
            excited: vec![8, 9],
            initial_ground: 2,
            delta: RB_HYPERFINE,
            omega22: RB_HYPERFINE,
            omega33: 0.0,
            detunings: vec![RB_EXCITED_SPLITTING, 0.0],
        },
        couplings,
        cavity,
        relaxation: RelaxationParams {
            gamma_s_rad_per_s: 0.0,
            gamma_e_rad_per_s: 0.0,
            temperature_k: 0.0,
            gamma0_rad_per_s: gamma,
            c_per_k5: 0.0,
            r_per_s: 0.0,
            gamma_r_rad_per_s: gamma,
        },
        ensemble: EnsembleParams {
            n,
            closure: PopulationClosure::Fixed,
        },
    }
}

fn flat_top(amp: f64, plateau_s: f64) -> ControlPulse {
    ControlPulse {
        amp,
        envelope: Envelope::FlatTop { plateau_s, edge_s: 5e-9 },
    }
}

/// Storage and retrieval schedule for the full NV system.
pub fn nv_schedule() -> PulseSchedule {
    PulseSchedule {
        signal: SignalPulse {
            fwhm_s: 17.3e-9,
            center_s: 60e-9,
        },
        control1: flat_top(4.3, 40e-9),
        control2: flat_top(6.0, 40e-9),
        control1_center_s: 60e-9,
        storage_time_s: 455e-9,
        t_end_s: 600e-9,
        window: Window::Retrieval,
        retrieval_window_start_s: None,
    }
}

/// Schedule used with the reduced model and the four-level system.
pub fn four_level_schedule() -> PulseSchedule {
    PulseSchedule {
        control2: flat_top(1.5, 40e-9),
        ..nv_schedule()
    }
}

/// Storage and retrieval schedule for the Rb system.
pub fn rb_schedule() -> PulseSchedule {
    PulseSchedule {
        signal: SignalPulse {
            fwhm_s: 17.3e-9,
            center_s: 60e-9,
        },
        control1: flat_top(0.05, 40e-9),
        control2: flat_top(0.1, 40e-9),
        control1_center_s: 60e-9,
        storage_time_s: 91e-9,
        t_end_s: 250e-9,
        window: Window::Retrieval,
        retrieval_window_start_s: None,
    }
}

/// Looks up a built-in system by name.
pub fn by_name(name: &str) -> Option<(SystemSpec, PulseSchedule)> {
    match name {
        "nv" => Some((nv_preset(), nv_schedule())),
        "nv-desired" => {
            let mut spec = nv_preset().desired_only();
            spec.name = "nv-desired".into();
            Some((spec, nv_schedule()))
        }
        "nv-four-level" | "four-level" => Some((four_level_preset(), four_level_schedule())),
        "rb" | "rb87-d1" => Some((rb_preset(), rb_schedule())),
        _ => None,
    }
}

/// Names accepted by [`by_name`].
pub const PRESET_NAMES: [&str; 4] = ["nv", "nv-desired", "four-level", "rb"];
