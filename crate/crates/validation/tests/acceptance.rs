//! Acceptance suite: one PASS/FAIL line per criterion, exit status 1 when
//! any criterion fails. Built with `harness = false`.

use std::f64::consts::PI;
use std::process::ExitCode;

use num_complex::Complex64 as C64;
use qmem::dynamics::{noise_run, run_protocol, IntegratorOptions, MemoryRun};
use qmem::integrator::{self, StepControl};
use qmem::metrics::{apparent_fidelity, efficiency, output_energy, simpson, storage_time_scan};
use qmem::model::SystemSpec;
use qmem::presets::*;
use qmem::pulse::{PulseSchedule, Window};
use qmem::reduced::*;
use qmem::sweep::scale_coupling;
use qmem_validation::{expm2, rel, run_checks, verdict, Check, Verdict};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn zero() -> C64 {
    C64::new(0.0, 0.0)
}

fn random_phasor(rng: &mut ChaCha8Rng) -> C64 {
    C64::from_polar(1.0, rng.gen_range(-PI..PI))
}

fn uncoupled(mut spec: SystemSpec) -> SystemSpec {
    for z in spec.couplings.g.iter_mut().chain(spec.couplings.omega.iter_mut()).flatten() {
        *z = zero();
    }
    spec
}

fn full_runs(spec: &SystemSpec, sched: &PulseSchedule) -> (f64, f64, f64) {
    let opts = IntegratorOptions::default();
    let run = run_protocol(spec, sched, &opts).unwrap();
    let noise = noise_run(spec, sched, &opts).unwrap();
    let f = apparent_fidelity(&noise).unwrap();
    (efficiency(&run, sched.window).unwrap(), f.fidelity, f.noise_energy)
}

fn input_energy(run: &MemoryRun) -> f64 {
    let p: Vec<f64> = run.a_in.iter().map(|z| z.norm_sqr()).collect();
    simpson(&p, run.dt())
}

fn amplification_oracle() -> Verdict {
    let base = ReducedParams::from_spec(&four_level_preset(), 8).unwrap();
    let mask = TermMask::from_terms(&[8]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let t_end = 500e-9;
    let times: Vec<f64> = (1..=100).map(|i| i as f64 * t_end / 100.0).collect();
    let ctl = StepControl {
        rtol: 1e-12,
        atol: 1e-30,
        ..Default::default()
    };
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let mut p = ReducedParams {
            n: rng.gen_range(10.0f64..1000.0).round(),
            g29: base.g29 * random_phasor(&mut rng) * rng.gen_range(0.3..3.0),
            omega39: base.omega39 * random_phasor(&mut rng) * rng.gen_range(0.3..3.0),
            g38: base.g38 * random_phasor(&mut rng),
            omega28: base.omega28 * random_phasor(&mut rng) * rng.gen_range(0.3..3.0),
            delta8: rng.gen_range(-3e9..3e9),
            delta: rng.gen_range(0.0..3e7),
            ..base.clone()
        };
        let c = amplification_rate(&p).unwrap() / C64::new(p.gamma(), -p.delta8);
        p.g38 *= rng.gen_range(1e6..3e7) / c.norm();
        let c = amplification_rate(&p).unwrap() / C64::new(p.gamma(), -p.delta8);
        let s0 = random_phasor(&mut rng) * 1e-3;
        let sys = (1usize, |t: f64, y: &[C64], dy: &mut [C64]| {
            dy[0] = reduced_rhs(t, y[0], &p, &mask, 0.0);
        });
        let mut got = vec![zero(); times.len()];
        integrator::integrate(&sys, 0.0, &[s0], t_end, &times, &ctl, |i, _, y| got[i] = y[0]).unwrap();
        let d = C64::new(0.0, p.delta);
        let m = [[-d, c], [c.conj(), d]];
        for (t, g) in times.iter().zip(&got) {
            let e = expm2(m, *t);
            let want = (e[0][0] * s0 + e[0][1] * s0.conj()) * C64::from_polar(1.0, p.delta * t);
            worst = worst.max((g - want).norm() / want.norm());
        }
    }
    verdict(worst <= 1e-6, format!("max relative error {worst:.2e} over 50 draws (limit 1e-6)"))
}

fn growth_identities() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut sum_err, mut prod_err, mut zero_err) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..10_000 {
        let b = random_phasor(&mut rng) * 10f64.powf(rng.gen_range(10.0..18.0));
        let gamma = rng.gen_range(1e6..1e10);
        let d8 = rng.gen_range(-1e10..1e10);
        let delta = rng.gen_range(0.0..1e8);
        let (lp, lm) = growth_exponents(b, gamma, d8, delta);
        let c2 = b.norm_sqr() / (gamma * gamma + d8 * d8);
        let scale = lp.norm().max(lm.norm()).max(delta);
        sum_err = sum_err.max((lp + lm - C64::new(0.0, 2.0 * delta)).norm() / scale);
        for l in [lp, lm] {
            let residual = l * l - C64::new(0.0, 2.0 * delta) * l - c2;
            prod_err = prod_err.max(residual.norm() / (l.norm_sqr() + 2.0 * delta * l.norm() + c2));
        }
        let (l0, _) = growth_exponents(b, gamma, d8, 0.0);
        let bare = b.norm() / (gamma * gamma + d8 * d8).sqrt();
        zero_err = zero_err.max(rel(l0.re, bare).max(l0.im.abs() / bare));
    }
    let pass = sum_err <= 1e-12 && prod_err <= 1e-12 && zero_err <= 4.0 * f64::EPSILON;
    verdict(
        pass,
        format!("sum {sum_err:.1e}, characteristic polynomial {prod_err:.1e}, delta = 0 root {zero_err:.1e} (limits 1e-12, 1e-12, 4 ulp)"),
    )
}

fn empty_cavity() -> Verdict {
    let spec = uncoupled(four_level_preset());
    let mut sched = four_level_schedule();
    sched.storage_time_s = 100e-9;
    sched.t_end_s = 250e-9;
    let run = run_protocol(&spec, &sched, &IntegratorOptions::default()).unwrap();
    let (e_out, e_in) = (output_energy(&run, 0.0), input_energy(&run));
    let err = (e_out - e_in).abs() / e_in;
    verdict(err <= 1e-6, format!("output {e_out:.9} vs input {e_in:.9}, relative {err:.1e}"))
}

fn zero_noise() -> Verdict {
    let spec = four_level_preset();
    let sched = four_level_schedule();
    let noise = noise_run(&spec, &sched, &IntegratorOptions::default()).unwrap();
    let max = noise.a_out.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let f = apparent_fidelity(&noise).unwrap().fidelity;
    verdict(max < 1e-14 && f == 1.0, format!("max |a_n| = {max:.1e}, F = {f}"))
}

fn product_symmetry() -> Verdict {
    let p = ReducedParams::from_spec(&four_level_preset(), 8).unwrap();
    let sched = four_level_schedule();
    let opts = IntegratorOptions::default();
    let mut worst = 0.0f64;
    for (terms, window) in [(vec![8u8], Window::Total), (vec![3, 8], Window::Retrieval)] {
        let mask = TermMask::from_terms(&terms).unwrap();
        let e = |q: &ReducedParams| efficiency(&reduced_protocol(q, &sched, &mask, &opts).unwrap(), window).unwrap();
        let e0 = e(&p);
        for x in [0.1, 0.5, 2.0] {
            let q = ReducedParams {
                g38: p.g38 * x,
                omega28: p.omega28 / x,
                ..p.clone()
            };
            worst = worst.max(rel(e(&q), e0));
        }
    }
    verdict(worst <= 1e-6, format!("max relative change {worst:.1e} for x in {{0.1, 0.5, 2}}"))
}

fn full_nv() -> Verdict {
    let (e, f, noise) = full_runs(&nv_preset(), &nv_schedule());
    let pass = e > 1.0 && (1.5..=3.5).contains(&e) && f >= 0.99 && noise < 0.01;
    verdict(
        pass,
        format!("E = {e:.4} (need > 1 and within [1.5, 3.5]), F = {f:.4} (need >= 0.99), noise = {noise:.4e} (need < 0.01)"),
    )
}

fn ablation() -> Verdict {
    let sched = nv_schedule();
    let opts = IntegratorOptions::default();
    let spec = nv_preset();
    let mut parts = Vec::new();
    let mut pass = true;
    for (label, omega, j) in [("G38 = 0", false, 3u8), ("Omega28 = 0", true, 2u8)] {
        let s = scale_coupling(&spec, omega, j, 8, 0.0).unwrap();
        let e = efficiency(&run_protocol(&s, &sched, &opts).unwrap(), sched.window).unwrap();
        pass &= e < 1.0;
        parts.push(format!("{label}: E = {e:.4}"));
    }
    verdict(pass, format!("{} (need < 1)", parts.join(", ")))
}

fn storage_scans() -> Verdict {
    let opts = IntegratorOptions::default();
    let sched = nv_schedule();
    let mut flat = nv_preset();
    flat.levels.omega33 = flat.levels.omega22;
    flat.levels.delta = 0.0;
    let flat_times = [300e-9, 380e-9, 455e-9, 530e-9, 600e-9];
    let e = storage_time_scan(&flat, &sched, &flat_times, &opts, false).unwrap().efficiencies();
    let mean = e.iter().sum::<f64>() / e.len() as f64;
    let spread = (e.iter().cloned().fold(f64::MIN, f64::max) - e.iter().cloned().fold(f64::MAX, f64::min)) / mean;
    let flat_ok = spread < 1e-3 && (1.6..=2.6).contains(&mean);

    let spec = nv_preset();
    let times: Vec<f64> = (0..16).map(|i| 100e-9 + i as f64 * 60e-9).collect();
    let scan = storage_time_scan(&spec, &sched, &times, &opts, false).unwrap();
    let (period_ok, period_text) = match scan.period {
        Some(p) => {
            let err = rel(p.measured_s, p.pi_over_delta_s);
            (
                err <= 0.05,
                format!(
                    "period {:.4e} s vs pi/delta {:.4e} s ({:.1}% off; delta/pi = {:.4e})",
                    p.measured_s,
                    p.pi_over_delta_s,
                    100.0 * err,
                    p.delta_over_pi
                ),
            )
        }
        None => (false, "no oscillation found".to_string()),
    };
    verdict(
        flat_ok && period_ok,
        format!(
            "delta = 0: mean E = {mean:.4}, spread {spread:.1e} (need < 1e-3, mean in [1.6, 2.6]); {period_text}"
        ),
    )
}

fn reduced_terms_study() -> Verdict {
    let p = ReducedParams::from_spec(&four_level_preset(), 8).unwrap();
    let sched = four_level_schedule();
    let opts = IntegratorOptions::default();
    let mut parts = Vec::new();
    let mut pass = true;
    for (label, mask, amplifies) in [
        ("full without 8", TermMask::without(&[8]).unwrap(), false),
        ("{1,3,8}", TermMask::from_terms(&[3, 8]).unwrap(), true),
    ] {
        let e = efficiency(&reduced_protocol(&p, &sched, &mask, &opts).unwrap(), sched.window).unwrap();
        let f = apparent_fidelity(&reduced_noise_run(&p, &sched, &mask, &opts).unwrap()).unwrap().fidelity;
        pass &= (e > 1.0) == amplifies && f == 1.0;
        parts.push(format!("{label}: E = {e:.4e}, F = {f}"));
    }
    verdict(pass, parts.join("; "))
}

fn rubidium() -> Verdict {
    let spec = rb_preset();
    let sched = rb_schedule();
    let (e, f, _) = full_runs(&spec, &sched);
    let ablated = scale_coupling(&scale_coupling(&spec, false, 3, 8, 0.0).unwrap(), true, 2, 8, 0.0).unwrap();
    let (e0, _, _) = full_runs(&ablated, &sched);
    verdict(
        e > 1.0 && f == 1.0 && e0 < 1.0,
        format!("with pair: E = {e:.4}, F = {f}; pair zeroed: E = {e0:.4}"),
    )
}

fn desired_only() -> Verdict {
    let spec = nv_preset().desired_only();
    let times = [200e-9, 300e-9, 455e-9, 600e-9];
    let scan = storage_time_scan(&spec, &nv_schedule(), &times, &IntegratorOptions::default(), false).unwrap();
    let e = scan.efficiencies();
    let max = e.iter().cloned().fold(f64::MIN, f64::max);
    verdict(max < 1.0, format!("E over storage times {:?} ns: {:.4?}", [200, 300, 455, 600], e))
}

fn main() -> ExitCode {
    let criteria: [Check; 11] = [
        ("amplification equation vs matrix exponential", amplification_oracle),
        ("growth exponent identities", growth_identities),
        ("empty cavity is all-pass", empty_cavity),
        ("four-level noise is exactly zero", zero_noise),
        ("product symmetry of the unwanted pair", product_symmetry),
        ("full NV efficiency, fidelity and noise", full_nv),
        ("removing G38 or Omega28 drops E below 1", ablation),
        ("storage-time scans", storage_scans),
        ("reduced-model term study", reduced_terms_study),
        ("rubidium with and without the pair", rubidium),
        ("desired couplings only stay below unity", desired_only),
    ];
    let failed = run_checks(&criteria);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
