//! Reference computations that share no code with `qmem`, and a small
//! runner that reports named pass/fail checks.

use std::panic;
use std::time::Instant;

use num_complex::Complex64 as C64;

pub type Mat2 = [[C64; 2]; 2];

pub fn mul2(x: Mat2, y: Mat2) -> Mat2 {
    let mut r = [[C64::new(0.0, 0.0); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            r[i][j] = x[i][0] * y[0][j] + x[i][1] * y[1][j];
        }
    }
    r
}

/// exp(M t) by scaling and squaring of a 30-term Taylor series.
pub fn expm2(m: Mat2, t: f64) -> Mat2 {
    let norm = m.iter().flatten().map(|z| z.norm()).sum::<f64>() * t;
    let squarings = (norm.max(1.0).log2().ceil() as i32 + 4).max(0);
    let h = t / 2f64.powi(squarings);
    let a = [[m[0][0] * h, m[0][1] * h], [m[1][0] * h, m[1][1] * h]];
    let one = C64::new(1.0, 0.0);
    let zero = C64::new(0.0, 0.0);
    let mut sum = [[one, zero], [zero, one]];
    let mut term = sum;
    for k in 1..30 {
        term = mul2(term, a);
        for z in term.iter_mut().flatten() {
            *z /= k as f64;
        }
        for i in 0..2 {
            for j in 0..2 {
                sum[i][j] += term[i][j];
            }
        }
    }
    for _ in 0..squarings {
        sum = mul2(sum, sum);
    }
    sum
}

/// Relative difference scaled by the larger magnitude.
pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

pub struct Verdict {
    pub pass: bool,
    pub detail: String,
}

pub fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

pub type Check = (&'static str, fn() -> Verdict);

/// Runs every check, prints one numbered PASS/FAIL line each and returns
/// the number of failures. A panicking check counts as a failure.
pub fn run_checks(checks: &[Check]) -> usize {
    let hook = panic::take_hook();
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        let started = Instant::now();
        let v = panic::catch_unwind(check).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            verdict(false, format!("panicked: {msg}"))
        });
        if !v.pass {
            failed += 1;
        }
        println!(
            "criterion {:>2} {} {name}: {} [{:.1} s]",
            i + 1,
            if v.pass { "PASS" } else { "FAIL" },
            v.detail,
            started.elapsed().as_secs_f64()
        );
    }
    panic::set_hook(hook);
    println!("{} of {} criteria passed", checks.len() - failed, checks.len());
    failed
}
