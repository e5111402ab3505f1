//! Adaptive Dormand–Prince 5(4) integrator for complex-valued systems with
//! 4th-order dense output.
//!
//! Error control treats every complex component as two real components and
//! uses the usual mixed tolerance `atol + rtol·max(|y|, |y_new|)`.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub trait OdeSystem {
    fn dim(&self) -> usize;
    fn rhs(&self, t: f64, y: &[C64], dy: &mut [C64]);
}

impl<F> OdeSystem for (usize, F)
where
    F: Fn(f64, &[C64], &mut [C64]),
{
    fn dim(&self) -> usize {
        self.0
    }
    fn rhs(&self, t: f64, y: &[C64], dy: &mut [C64]) {
        (self.1)(t, y, dy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepControl {
    pub rtol: f64,
    pub atol: f64,
    pub max_step: f64,
    pub max_steps: u64,
}

impl Default for StepControl {
    fn default() -> Self {
        StepControl {
            rtol: 1e-8,
            atol: 1e-10,
            max_step: f64::INFINITY,
            max_steps: 200_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntegratorStats {
    pub steps: u64,
    pub rejected: u64,
    pub rhs_evals: u64,
}

// Dormand–Prince tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
// Dense output.
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 5.0;
const DIVERGENCE_NORM: f64 = 1e150;
const HISTORY_STRIDE: u64 = 64;

struct Work {
    k: [Vec<C64>; 7],
    ytmp: Vec<C64>,
    ynew: Vec<C64>,
    cont: [Vec<C64>; 5],
}

impl Work {
    fn new(n: usize) -> Self {
        let z = || vec![C64::new(0.0, 0.0); n];
        Work {
            k: [z(), z(), z(), z(), z(), z(), z()],
            ytmp: z(),
            ynew: z(),
            cont: [z(), z(), z(), z(), z()],
        }
    }
}

fn scaled_norm(v: &[C64], y0: &[C64], y1: &[C64], ctl: &StepControl) -> f64 {
    let mut acc = 0.0;
    for i in 0..v.len() {
        let sre = ctl.atol + ctl.rtol * y0[i].re.abs().max(y1[i].re.abs());
        let sim = ctl.atol + ctl.rtol * y0[i].im.abs().max(y1[i].im.abs());
        acc += (v[i].re / sre).powi(2) + (v[i].im / sim).powi(2);
    }
    (acc / (2 * v.len()).max(1) as f64).sqrt()
}

fn max_abs(y: &[C64]) -> f64 {
    y.iter().fold(0.0f64, |m, z| m.max(z.re.abs()).max(z.im.abs()))
}

fn ln_norm(y: &[C64]) -> f64 {
    let n = y.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if n > 0.0 {
        n.ln()
    } else {
        f64::NEG_INFINITY
    }
}

fn initial_step<S: OdeSystem>(sys: &S, t0: f64, y0: &[C64], f0: &[C64], ctl: &StepControl, span: f64) -> (f64, u64) {
    let d0 = scaled_norm(y0, y0, y0, ctl);
    let d1 = scaled_norm(f0, y0, y0, ctl);
    let mut h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 * span } else { 0.01 * d0 / d1 };
    h0 = h0.min(ctl.max_step).min(span);
    let y1: Vec<C64> = y0.iter().zip(f0).map(|(y, f)| y + f * h0).collect();
    let mut f1 = vec![C64::new(0.0, 0.0); y0.len()];
    sys.rhs(t0 + h0, &y1, &mut f1);
    let diff: Vec<C64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = scaled_norm(&diff, y0, y0, ctl) / h0;
    let dm = d1.max(d2);
    let h1 = if dm <= 1e-15 {
        (h0 * 1e-3).max(1e-6 * span)
    } else {
        (0.01 / dm).powf(0.2)
    };
    ((100.0 * h0).min(h1).min(ctl.max_step).min(span), 1)
}

/// Integrates `sys` from `t0` to `t_end`, handing the dense-output state at
/// every time in `grid` (sorted, inside `[t0, t_end]`) to `sink`.
pub fn integrate<S, F>(
    sys: &S,
    t0: f64,
    y0: &[C64],
    t_end: f64,
    grid: &[f64],
    ctl: &StepControl,
    mut sink: F,
) -> Result<(Vec<C64>, IntegratorStats)>
where
    S: OdeSystem,
    F: FnMut(usize, f64, &[C64]),
{
    if !(ctl.rtol > 0.0) || !(ctl.atol > 0.0) {
        return Err(Error::invalid("rtol and atol must be > 0"));
    }
    if !(t_end > t0) {
        return Err(Error::invalid("t_end must exceed t0"));
    }
    let n = sys.dim();
    if y0.len() != n {
        return Err(Error::Dimension {
            what: "initial state".into(),
            expected: n.to_string(),
            found: y0.len().to_string(),
        });
    }
    let mut stats = IntegratorStats::default();
    let mut w = Work::new(n);
    let mut y = y0.to_vec();
    let mut t = t0;
    let mut gi = 0usize;
    while gi < grid.len() && grid[gi] <= t0 {
        sink(gi, grid[gi], &y);
        gi += 1;
    }

    sys.rhs(t, &y, &mut w.k[0]);
    stats.rhs_evals += 1;
    let span = t_end - t0;
    let (mut h, evals) = initial_step(sys, t, &y, &w.k[0], ctl, span);
    stats.rhs_evals += evals;

    let mut history: Vec<(f64, f64)> = vec![(t, ln_norm(&y))];
    let mut last_rejected = false;

    while t < t_end {
        if stats.steps + stats.rejected >= ctl.max_steps {
            return Err(Error::Stiffness { t, h });
        }
        let mut last = false;
        if t + h >= t_end || (t_end - (t + h)) < 1e-12 * h {
            h = t_end - t;
            last = true;
        }
        if h <= 16.0 * f64::EPSILON * t.abs().max(span) {
            return Err(Error::Stiffness { t, h });
        }

        let [k1, k2, k3, k4, k5, k6, k7] = &mut w.k;
        let ytmp = &mut w.ytmp;
        for i in 0..n {
            ytmp[i] = y[i] + k1[i] * (h * A21);
        }
        sys.rhs(t + C2 * h, ytmp, k2);
        for i in 0..n {
            ytmp[i] = y[i] + (k1[i] * A31 + k2[i] * A32) * h;
        }
        sys.rhs(t + C3 * h, ytmp, k3);
        for i in 0..n {
            ytmp[i] = y[i] + (k1[i] * A41 + k2[i] * A42 + k3[i] * A43) * h;
        }
        sys.rhs(t + C4 * h, ytmp, k4);
        for i in 0..n {
            ytmp[i] = y[i] + (k1[i] * A51 + k2[i] * A52 + k3[i] * A53 + k4[i] * A54) * h;
        }
        sys.rhs(t + C5 * h, ytmp, k5);
        for i in 0..n {
            ytmp[i] = y[i] + (k1[i] * A61 + k2[i] * A62 + k3[i] * A63 + k4[i] * A64 + k5[i] * A65) * h;
        }
        sys.rhs(t + h, ytmp, k6);
        let ynew = &mut w.ynew;
        for i in 0..n {
            ynew[i] = y[i] + (k1[i] * A71 + k3[i] * A73 + k4[i] * A74 + k5[i] * A75 + k6[i] * A76) * h;
        }
        sys.rhs(t + h, ynew, k7);
        stats.rhs_evals += 6;

        for i in 0..n {
            ytmp[i] = (k1[i] * E1 + k3[i] * E3 + k4[i] * E4 + k5[i] * E5 + k6[i] * E6 + k7[i] * E7) * h;
        }
        let err = scaled_norm(ytmp, &y, ynew, ctl);

        if !err.is_finite() {
            if max_abs(&y) > DIVERGENCE_NORM.sqrt() {
                return Err(divergence(t, &history));
            }
            stats.rejected += 1;
            h *= 0.1;
            last_rejected = true;
            continue;
        }

        if err <= 1.0 {
            // Dense output coefficients for [t, t+h].
            let [r1, r2, r3, r4, r5] = &mut w.cont;
            for i in 0..n {
                let ydiff = ynew[i] - y[i];
                let bspl = k1[i] * h - ydiff;
                r1[i] = y[i];
                r2[i] = ydiff;
                r3[i] = bspl;
                r4[i] = ydiff - k7[i] * h - bspl;
                r5[i] = (k1[i] * D1 + k3[i] * D3 + k4[i] * D4 + k5[i] * D5 + k6[i] * D6 + k7[i] * D7) * h;
            }
            let t_new = if last { t_end } else { t + h };
            while gi < grid.len() && grid[gi] <= t_new {
                let theta = (grid[gi] - t) / h;
                let theta1 = 1.0 - theta;
                for i in 0..n {
                    ytmp[i] = r1[i] + (r2[i] + (r3[i] + (r4[i] + r5[i] * theta1) * theta) * theta1) * theta;
                }
                sink(gi, grid[gi], ytmp);
                gi += 1;
            }

            std::mem::swap(&mut y, ynew);
            std::mem::swap(k1, k7);
            t = t_new;
            stats.steps += 1;

            if !y.iter().all(|z| z.re.is_finite() && z.im.is_finite()) || max_abs(&y) > DIVERGENCE_NORM {
                return Err(divergence(t, &history));
            }
            if stats.steps % HISTORY_STRIDE == 0 {
                history.push((t, ln_norm(&y)));
            }

            let mut fac = SAFETY * err.max(1e-10).powf(-0.2);
            fac = fac.clamp(FAC_MIN, FAC_MAX);
            if last_rejected {
                fac = fac.min(1.0);
            }
            h = (h * fac).min(ctl.max_step);
            last_rejected = false;
        } else {
            stats.rejected += 1;
            let fac = (SAFETY * err.powf(-0.2)).max(FAC_MIN);
            h *= fac;
            last_rejected = true;
        }
    }

    while gi < grid.len() {
        sink(gi, grid[gi], &y);
        gi += 1;
    }
    Ok((y, stats))
}

fn divergence(t: f64, history: &[(f64, f64)]) -> Error {
    let growth = match history {
        [] | [_] => f64::NAN,
        _ => {
            let (t1, l1) = history[history.len() - 1];
            let (t0, l0) = history[(history.len() * 3 / 4).min(history.len() - 2)];
            if t1 > t0 && l0.is_finite() && l1.is_finite() {
                (l1 - l0) / (t1 - t0)
            } else {
                f64::NAN
            }
        }
    };
    Error::Divergence { t, growth }
}
