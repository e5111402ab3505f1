//! Signal and control pulse timing.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const FWHM_TO_SIGMA: f64 = 0.424_660_900_144_009_5; // 1 / (2 √(2 ln 2))

/// Shape of a control pulse, peak value 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Envelope {
    /// Unit plateau with raised-cosine edges of width `edge_s` on both sides.
    FlatTop { plateau_s: f64, edge_s: f64 },
    Gaussian { fwhm_s: f64 },
}

impl Envelope {
    /// Envelope value at offset `dt` from the pulse center.
    pub fn value(&self, dt: f64) -> f64 {
        match *self {
            Envelope::FlatTop { plateau_s, edge_s } => {
                let x = dt.abs() - 0.5 * plateau_s;
                if x <= 0.0 {
                    1.0
                } else if x >= edge_s {
                    0.0
                } else {
                    0.5 * (1.0 + (std::f64::consts::PI * x / edge_s).cos())
                }
            }
            Envelope::Gaussian { fwhm_s } => {
                let s = fwhm_s * FWHM_TO_SIGMA;
                (-0.5 * (dt / s).powi(2)).exp()
            }
        }
    }

    /// Offset from the center to where the pulse is considered on.
    /// Gaussians count as on within two FWHM of the peak.
    pub fn half_extent(&self) -> f64 {
        match *self {
            Envelope::FlatTop { plateau_s, edge_s } => 0.5 * plateau_s + edge_s,
            Envelope::Gaussian { fwhm_s } => 2.0 * fwhm_s,
        }
    }

    /// Shortest time scale of the envelope.
    pub fn time_scale(&self) -> f64 {
        match *self {
            Envelope::FlatTop { plateau_s, edge_s } => {
                if edge_s > 0.0 {
                    edge_s
                } else {
                    plateau_s
                }
            }
            Envelope::Gaussian { fwhm_s } => fwhm_s,
        }
    }

    fn validate(&self, key: &str) -> Result<()> {
        let ok = match *self {
            Envelope::FlatTop { plateau_s, edge_s } => {
                plateau_s >= 0.0 && edge_s >= 0.0 && plateau_s + edge_s > 0.0
            }
            Envelope::Gaussian { fwhm_s } => fwhm_s > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::config(key, "pulse widths must be > 0"))
        }
    }
}

/// Gaussian single-photon-normalized input, ∫|a_in|²dt = 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalPulse {
    pub fwhm_s: f64,
    pub center_s: f64,
}

impl SignalPulse {
    pub fn sigma(&self) -> f64 {
        self.fwhm_s * FWHM_TO_SIGMA
    }

    pub fn amplitude(&self, t: f64) -> f64 {
        let s = self.sigma();
        let norm = (s * std::f64::consts::PI.sqrt()).powf(-0.5);
        norm * (-0.5 * ((t - self.center_s) / s).powi(2)).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlPulse {
    /// Dimensionless multiplier on every Ω_jk while the pulse is on.
    pub amp: f64,
    pub envelope: Envelope,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    /// From the onset of the retrieval control pulse to the end.
    #[default]
    Retrieval,
    Total,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseSchedule {
    pub signal: SignalPulse,
    pub control1: ControlPulse,
    pub control2: ControlPulse,
    pub control1_center_s: f64,
    /// Separation between the two control-pulse centers.
    pub storage_time_s: f64,
    pub t_end_s: f64,
    #[serde(default)]
    pub window: Window,
    /// Overrides the default window start (control-2 onset).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retrieval_window_start_s: Option<f64>,
}

impl PulseSchedule {
    pub fn control2_center_s(&self) -> f64 {
        self.control1_center_s + self.storage_time_s
    }

    pub fn a_in(&self, t: f64) -> f64 {
        self.signal.amplitude(t)
    }

    /// Combined multiplier amp₁·env₁(t) + amp₂·env₂(t) applied to Ω.
    pub fn control(&self, t: f64) -> f64 {
        self.control1.amp * self.control1.envelope.value(t - self.control1_center_s)
            + self.control2.amp * self.control2.envelope.value(t - self.control2_center_s())
    }

    pub fn peak_control(&self) -> f64 {
        self.control1.amp.abs().max(self.control2.amp.abs())
    }

    pub fn retrieval_start_s(&self) -> f64 {
        self.retrieval_window_start_s
            .unwrap_or(self.control2_center_s() - self.control2.envelope.half_extent())
    }

    pub fn window_start_s(&self) -> f64 {
        match self.window {
            Window::Retrieval => self.retrieval_start_s(),
            Window::Total => 0.0,
        }
    }

    /// Total time the controls are on.
    pub fn control_duration_s(&self) -> f64 {
        2.0 * (self.control1.envelope.half_extent() + self.control2.envelope.half_extent())
    }

    /// Shortest pulse time scale, used to cap the integrator step.
    pub fn shortest_feature_s(&self) -> f64 {
        self.signal
            .fwhm_s
            .min(self.control1.envelope.time_scale())
            .min(self.control2.envelope.time_scale())
    }

    /// Copy with a new storage time; the gap between the retrieval pulse
    /// and the end of the run is kept.
    pub fn with_storage_time(&self, t_s: f64) -> PulseSchedule {
        let tail = self.t_end_s - self.control2_center_s();
        let mut s = self.clone();
        s.storage_time_s = t_s;
        s.t_end_s = s.control2_center_s() + tail;
        if let Some(w) = self.retrieval_window_start_s {
            s.retrieval_window_start_s = Some(w + (t_s - self.storage_time_s));
        }
        s
    }

    pub fn validate(&self) -> Result<()> {
        let sig = &self.signal;
        if !(sig.fwhm_s > 0.0) {
            return Err(Error::config("schedule.signal.fwhm_s", "must be > 0"));
        }
        // Keeps the truncated Gaussian normalized to 1e-9.
        if sig.center_s < 6.5 * sig.sigma() || self.t_end_s - sig.center_s < 6.5 * sig.sigma() {
            return Err(Error::config(
                "schedule.signal.center_s",
                "signal must sit at least 6.5 sigma inside [0, t_end]",
            ));
        }
        self.control1.envelope.validate("schedule.control1.envelope")?;
        self.control2.envelope.validate("schedule.control2.envelope")?;
        if !(self.storage_time_s >= 0.0) {
            return Err(Error::config("schedule.storage_time_s", "must be >= 0"));
        }
        if !(self.t_end_s > self.control2_center_s()) {
            return Err(Error::config("schedule.t_end_s", "run must extend past the retrieval pulse center"));
        }
        for (k, a) in [("schedule.control1.amp", self.control1.amp), ("schedule.control2.amp", self.control2.amp)] {
            if !a.is_finite() {
                return Err(Error::config(k, "must be finite"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_top_shape() {
        let e = Envelope::FlatTop {
            plateau_s: 10e-9,
            edge_s: 5e-9,
        };
        assert_eq!(e.value(0.0), 1.0);
        assert_eq!(e.value(5e-9), 1.0);
        assert!((e.value(7.5e-9) - 0.5).abs() < 1e-12);
        assert_eq!(e.value(10e-9), 0.0);
        assert_eq!(e.value(-11e-9), 0.0);
    }

    #[test]
    fn gaussian_half_max_at_half_fwhm() {
        let e = Envelope::Gaussian { fwhm_s: 17.3e-9 };
        assert!((e.value(8.65e-9) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn signal_unit_energy() {
        let s = SignalPulse {
            fwhm_s: 17.3e-9,
            center_s: 60e-9,
        };
        let n = 200_000;
        let dt = 120e-9 / n as f64;
        let e: f64 = (0..=n).map(|i| s.amplitude(i as f64 * dt).powi(2) * dt).sum();
        assert!((e - 1.0).abs() < 1e-9);
    }

    #[test]
    fn storage_time_shift_keeps_tail() {
        let s = PulseSchedule {
            signal: SignalPulse {
                fwhm_s: 17.3e-9,
                center_s: 60e-9,
            },
            control1: ControlPulse {
                amp: 1.0,
                envelope: Envelope::Gaussian { fwhm_s: 10e-9 },
            },
            control2: ControlPulse {
                amp: 1.0,
                envelope: Envelope::Gaussian { fwhm_s: 10e-9 },
            },
            control1_center_s: 60e-9,
            storage_time_s: 100e-9,
            t_end_s: 220e-9,
            window: Window::Retrieval,
            retrieval_window_start_s: None,
        };
        let t = s.with_storage_time(300e-9);
        assert!((t.t_end_s - 420e-9).abs() < 1e-18);
        assert!((t.control2_center_s() - 360e-9).abs() < 1e-18);
        assert!(t.validate().is_ok());
    }
}
