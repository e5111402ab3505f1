use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use proptest::prelude::*;
use qmem::config::{Config, Overrides};
use qmem::dynamics::{IntegratorOptions, MemoryRun};
use qmem::integrator::{self, IntegratorStats, StepControl};
use qmem::metrics::{apparent_fidelity, classify_regime, efficiency, storage_time_scan};
use qmem::model::{couplings_from_dipoles, derive_cavity, homogeneous_linewidth};
use qmem::presets;
use qmem::pulse::Window;
use qmem::reduced::*;
use qmem_validation::{expm2, rel};

fn four_level_params() -> ReducedParams {
    ReducedParams::from_spec(&presets::four_level_preset(), 8).unwrap()
}

fn phasor() -> impl Strategy<Value = C64> {
    (-PI..PI).prop_map(|ph| C64::from_polar(1.0, ph))
}

/// Four-level parameters with every coupling rotated and rescaled.
fn random_params() -> impl Strategy<Value = ReducedParams> {
    (
        (phasor(), phasor(), phasor(), phasor()),
        (0.3f64..3.0, 0.3f64..3.0, 0.3f64..3.0, 0.3f64..3.0),
        (-3e9f64..3e9, 0.0f64..2e7, 10.0f64..1000.0),
    )
        .prop_map(|((p1, p2, p3, p4), (s1, s2, s3, s4), (d8, delta, n))| {
            let base = four_level_params();
            ReducedParams {
                n: n.round(),
                g29: base.g29 * p1 * s1,
                omega39: base.omega39 * p2 * s2,
                g38: base.g38 * p3 * s3,
                omega28: base.omega28 * p4 * s4,
                delta8: d8,
                delta,
                ..base
            }
        })
}

/// σ₃₂(t) of the term-8 equation from the rotating-frame pair (u, u*).
fn term8_by_expm(p: &ReducedParams, t: f64, s0: C64) -> C64 {
    let c = amplification_rate(p).unwrap() / C64::new(p.gamma(), -p.delta8);
    let d = C64::new(0.0, p.delta);
    let e = expm2([[-d, c], [c.conj(), d]], t);
    let u = e[0][0] * s0 + e[0][1] * s0.conj();
    u * C64::from_polar(1.0, p.delta * t)
}

/// Integrates the reduced equation with constant couplings and no input.
fn integrate_constant(p: &ReducedParams, mask: &TermMask, s0: C64, times: &[f64]) -> Vec<C64> {
    let sys = (1usize, |t: f64, y: &[C64], dy: &mut [C64]| {
        dy[0] = reduced_rhs(t, y[0], p, mask, 0.0);
    });
    let ctl = StepControl {
        rtol: 1e-12,
        atol: 1e-20,
        ..Default::default()
    };
    let mut out = vec![C64::new(0.0, 0.0); times.len()];
    let t_end = *times.last().unwrap();
    integrator::integrate(&sys, 0.0, &[s0], t_end, times, &ctl, |i, _, y| out[i] = y[0]).unwrap();
    out
}

fn synthetic_run(a_out: Vec<C64>, noise: bool) -> MemoryRun {
    let n = a_out.len();
    MemoryRun {
        times: (0..n).map(|i| i as f64 * 1e-9).collect(),
        a_in: vec![C64::new(0.0, 0.0); n],
        a_out,
        trajectory: None,
        state_names: Vec::new(),
        is_noise_run: noise,
        stats: IntegratorStats::default(),
        retrieval_start_s: 0.0,
        warnings: Vec::new(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn growth_exponents_satisfy_characteristic_polynomial(
        log_b in 10.0f64..18.0,
        b_phase in phasor(),
        gamma in 1e6f64..1e10,
        delta8 in -1e10f64..1e10,
        delta in 0.0f64..1e8,
    ) {
        let b = b_phase * 10f64.powf(log_b);
        let (lp, lm) = growth_exponents(b, gamma, delta8, delta);
        let c2 = b.norm_sqr() / (gamma * gamma + delta8 * delta8);
        let scale = lp.norm().max(lm.norm()).max(delta);
        prop_assert!((lp + lm - C64::new(0.0, 2.0 * delta)).norm() <= 1e-12 * scale);
        prop_assert!((lp * lm + c2).norm() <= 1e-12 * (delta * delta + c2));
        for l in [lp, lm] {
            let residual = l * l - C64::new(0.0, 2.0 * delta) * l - c2;
            let size = l.norm_sqr() + 2.0 * delta * l.norm() + c2;
            prop_assert!(residual.norm() <= 1e-12 * size);
        }
    }

    #[test]
    fn zero_detuning_exponent_is_the_bare_rate(
        log_b in 10.0f64..18.0,
        b_phase in phasor(),
        gamma in 1e6f64..1e10,
        delta8 in -1e10f64..1e10,
    ) {
        let b = b_phase * 10f64.powf(log_b);
        let (lp, _) = growth_exponents(b, gamma, delta8, 0.0);
        let expected = b.norm() / (gamma * gamma + delta8 * delta8).sqrt();
        prop_assert_eq!(lp.im, 0.0);
        prop_assert!(rel(lp.re, expected) <= 4.0 * f64::EPSILON);
    }

    #[test]
    fn growth_rate_never_increases_with_detuning(
        log_b in 14.0f64..18.0,
        gamma in 1e6f64..1e10,
        d8 in (0.0f64..1e10, 0.0f64..1e10),
        delta in (0.0f64..1e9, 0.0f64..1e9),
    ) {
        let b = C64::new(10f64.powf(log_b), 0.0);
        let (lo8, hi8) = if d8.0 <= d8.1 { d8 } else { (d8.1, d8.0) };
        let (lo, hi) = if delta.0 <= delta.1 { delta } else { (delta.1, delta.0) };
        let re = |d8: f64, d: f64| growth_exponents(b, gamma, d8, d).0.re;
        prop_assert!(re(lo8, lo) >= re(hi8, lo));
        prop_assert!(re(lo8, lo) >= re(lo8, hi));
    }

    #[test]
    fn rate_magnitude_ignores_single_conjugation(p in random_params(), which in 0usize..4) {
        let mut q = p.clone();
        match which {
            0 => q.g29 = q.g29.conj(),
            1 => q.omega39 = q.omega39.conj(),
            2 => q.g38 = q.g38.conj(),
            _ => q.omega28 = q.omega28.conj(),
        }
        let (b, bq) = (amplification_rate(&p).unwrap(), amplification_rate(&q).unwrap());
        prop_assert!(rel(b.norm(), bq.norm()) <= 1e-14);
    }

    #[test]
    fn rate_scales_with_ensemble_through_alpha(p in random_params()) {
        let mut q = p.clone();
        q.n = 2.0 * p.n;
        let ratio = amplification_rate(&q).unwrap() / amplification_rate(&p).unwrap();
        let expected = 2.0 * p.alpha() / q.alpha();
        prop_assert!((ratio - expected).norm() <= 1e-14 * expected);
    }

    #[test]
    fn closed_form_agrees_with_matrix_exponential(
        p in random_params(),
        t in 0.0f64..5e-7,
        s0 in phasor(),
    ) {
        let got = two_level_oracle(&p, t, s0 * 1e-3).unwrap();
        let want = term8_by_expm(&p, t, s0 * 1e-3);
        prop_assert!((got - want).norm() <= 1e-9 * want.norm().max(1e-3));
    }

    #[test]
    fn term8_trajectory_depends_on_the_product_only(
        p in random_params(),
        x in 0.1f64..10.0,
        s0 in phasor(),
    ) {
        let mask = TermMask::from_terms(&[8]).unwrap();
        let mut q = p.clone();
        q.g38 *= x;
        q.omega28 /= x;
        let c = amplification_rate(&p).unwrap().norm() / p.gamma().hypot(p.delta8);
        let t_max = (20.0 / c).min(4e-7);
        let times: Vec<f64> = (1..=20).map(|i| i as f64 * t_max / 20.0).collect();
        let a = integrate_constant(&p, &mask, s0 * 1e-3, &times);
        let b = integrate_constant(&q, &mask, s0 * 1e-3, &times);
        for (u, v) in a.iter().zip(&b) {
            prop_assert!(rel(u.norm(), v.norm()) <= 1e-10);
        }
    }

    #[test]
    fn cavity_scaling_laws(q in 1e2f64..1e7, v in 1e-20f64..1e-15) {
        let mut cav = presets::nv_preset().cavity;
        cav.q_factor = q;
        cav.volume_m3 = Some(v);
        cav.dipole_moment_cm = Some(1e-30);
        let base = derive_cavity(&cav, 100, 1e7).unwrap();
        cav.q_factor = 2.0 * q;
        let doubled_q = derive_cavity(&cav, 100, 1e7).unwrap();
        prop_assert_eq!(doubled_q.kappa_rad_per_s, base.kappa_rad_per_s / 2.0);
        cav.q_factor = q;
        cav.volume_m3 = Some(2.0 * v);
        let doubled_v = derive_cavity(&cav, 100, 1e7).unwrap();
        let (g1, g2) = (base.g_c_rad_per_s.unwrap(), doubled_v.g_c_rad_per_s.unwrap());
        prop_assert!(rel(g2, g1 / 2f64.sqrt()) <= 1e-12);
    }

    #[test]
    fn linewidth_grows_with_temperature(t in (0.0f64..30.0, 0.0f64..30.0)) {
        let mut relax = presets::nv_preset().relaxation;
        let (lo, hi) = if t.0 <= t.1 { t } else { (t.1, t.0) };
        relax.temperature_k = lo;
        let g_lo = homogeneous_linewidth(&relax).unwrap().gamma;
        relax.temperature_k = hi;
        let g_hi = homogeneous_linewidth(&relax).unwrap().gamma;
        prop_assert!(g_lo <= g_hi);
        relax.temperature_k = 0.0;
        prop_assert_eq!(homogeneous_linewidth(&relax).unwrap().gamma, relax.gamma0_rad_per_s);
    }

    #[test]
    fn dipole_couplings_are_linear(e2 in 1e3f64..1e7, gc in 1e6f64..1e10, s in 0.1f64..10.0) {
        let gx = vec![vec![C64::new(0.3, -0.2), C64::new(0.0, 1.0)], vec![C64::new(-0.7, 0.1), C64::new(0.5, 0.5)]];
        let gy = vec![vec![C64::new(0.1, 0.9), C64::new(1.0, 0.0)], vec![C64::new(0.2, -0.4), C64::new(-0.6, 0.3)]];
        let d = 1e-30;
        let a = couplings_from_dipoles(&gx, &gy, d, e2, gc, vec![], vec![]).unwrap();
        let b = couplings_from_dipoles(&gx, &gy, d, s * e2, s * gc, vec![], vec![]).unwrap();
        for (ra, rb) in a.omega.iter().zip(&b.omega).chain(a.g.iter().zip(&b.g)) {
            for (x, y) in ra.iter().zip(rb) {
                prop_assert!((x * s - y).norm() <= 1e-14 * y.norm());
            }
        }
    }

    #[test]
    fn efficiency_ignores_global_phase(
        samples in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 3..200),
        phase in phasor(),
    ) {
        let a: Vec<C64> = samples.iter().map(|&(re, im)| C64::new(re, im)).collect();
        let rotated: Vec<C64> = a.iter().map(|z| z * phase).collect();
        let e = efficiency(&synthetic_run(a, false), Window::Total).unwrap();
        let er = efficiency(&synthetic_run(rotated, false), Window::Total).unwrap();
        prop_assert!(rel(e, er) <= 1e-14);
    }

    #[test]
    fn fidelity_and_noise_sum_to_one(
        samples in prop::collection::vec((-1e5f64..1e5, -1e5f64..1e5), 3..200),
    ) {
        let a: Vec<C64> = samples.iter().map(|&(re, im)| C64::new(re, im)).collect();
        let f = apparent_fidelity(&synthetic_run(a, true)).unwrap();
        prop_assert!((f.unclamped + f.noise_energy - 1.0).abs() <= 2.0 * f64::EPSILON * f.noise_energy.max(1.0));
        prop_assert!((0.0..=1.0).contains(&f.fidelity));
    }

    #[test]
    fn regime_ratio_is_linear_in_rabi_frequency(omega in 1e3f64..1e12, s in 0.01f64..100.0, gamma in 1e6f64..1e10) {
        let a = classify_regime(omega, gamma).unwrap().f;
        let b = classify_regime(s * omega, gamma).unwrap().f;
        prop_assert!(rel(b, s * a) <= 1e-15);
    }

    #[test]
    fn repeated_set_equals_single_set(
        (key, typical) in prop::sample::select(vec![
            ("cavity.q_factor", 1e4),
            ("couplings.G.3.8", 1e9),
            ("couplings.Omega.2.8.scale", 1.0),
            ("levels.detuning.8", -1.6e9),
            ("schedule.storage_time_s", 455e-9),
            ("reduced.term.5", 1.0),
        ]),
        factor in 0.5f64..1.0,
    ) {
        let cfg = Config::preset("nv").unwrap();
        let assignment = format!("{key}={:e}", typical * factor);
        let once = Overrides::from_assignments(&[assignment.clone()]).unwrap();
        let twice = Overrides::from_assignments(&[assignment.clone(), assignment]).unwrap();
        prop_assert_eq!(&once, &twice);
        let a = cfg.with_overrides(&once).unwrap();
        prop_assert_eq!(&a, &cfg.with_overrides(&twice).unwrap());
        if !key.ends_with(".scale") {
            prop_assert_eq!(&a, &a.with_overrides(&once).unwrap());
        }
    }
}

#[test]
fn preset_files_round_trip_bit_exactly() {
    for name in presets::PRESET_NAMES {
        let cfg = Config::preset(name).unwrap();
        let back = Config::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
        assert_eq!(cfg, back, "{name} via TOML");
        let json = serde_json::to_string(&cfg).unwrap();
        let back: Config = serde_json::from_str(&json).unwrap();
        assert_eq!(cfg, back, "{name} via JSON");
    }
}

#[test]
fn unit_weights_leave_rate_alone() {
    let p = four_level_params();
    let zero_pair = ReducedParams {
        g38: C64::new(0.0, 0.0),
        ..p.clone()
    };
    assert_eq!(amplification_rate(&zero_pair).unwrap(), C64::new(0.0, 0.0));
    assert!(amplification_rate(&p).unwrap().norm() > 0.0);
}

#[test]
fn scan_without_two_photon_detuning_is_flat() {
    let mut spec = presets::four_level_preset();
    spec.levels.omega33 = spec.levels.omega22;
    spec.levels.delta = 0.0;
    let sched = presets::four_level_schedule();
    let times = [300e-9, 400e-9, 455e-9, 550e-9, 650e-9];
    let mut sched = sched;
    sched.t_end_s = 1100e-9;
    let scan = storage_time_scan(&spec, &sched, &times, &IntegratorOptions::default(), false).unwrap();
    let e = scan.efficiencies();
    let mean = e.iter().sum::<f64>() / e.len() as f64;
    let spread = e.iter().cloned().fold(f64::MIN, f64::max) - e.iter().cloned().fold(f64::MAX, f64::min);
    assert!(spread < 1e-3 * mean, "spread {spread:e} against mean {mean:e}");
}

#[test]
fn term8_weight_raises_reduced_efficiency() {
    let p = ReducedParams {
        gamma_s: 0.0,
        ..four_level_params()
    };
    let sched = presets::four_level_schedule();
    let opts = IntegratorOptions::default();
    let mut last = f64::NEG_INFINITY;
    for w in [0.0, 0.2, 0.4, 0.6, 0.8, 1.0] {
        let mask = TermMask::full().with_weight(8, w).unwrap();
        let e = efficiency(&reduced_protocol(&p, &sched, &mask, &opts).unwrap(), sched.window).unwrap();
        let f = apparent_fidelity(&reduced_noise_run(&p, &sched, &mask, &opts).unwrap()).unwrap();
        assert!(e > last, "E({w}) = {e} after {last}");
        assert_eq!(f.fidelity, 1.0);
        last = e;
    }
}
