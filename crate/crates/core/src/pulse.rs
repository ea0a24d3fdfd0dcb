//! Probe drive: a carrier at fixed detuning with a switch-on envelope.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Default 10–90% rise time of the probe switch-on [s].
pub const DEFAULT_RISE_TIME: f64 = 850e-12;

/// Ratio of the 10–90% rise time of a raised-cosine edge to its full width:
/// `(acos(-0.8) - acos(0.8)) / π`.
pub fn raised_cosine_rise_fraction() -> f64 {
    ((-0.8f64).acos() - 0.8f64.acos()) / PI
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbePulse {
    /// Carrier detuning from the atomic resonance [rad/s].
    pub delta: f64,
    /// 10–90% rise time [s]; zero selects an ideal step.
    pub rise_time: f64,
    /// Instant at which the envelope leaves zero [s].
    pub t_on: f64,
    pub amplitude: f64,
}

impl ProbePulse {
    pub fn new(delta: f64, rise_time: f64, t_on: f64, amplitude: f64) -> Result<Self> {
        if !delta.is_finite() || !t_on.is_finite() || !amplitude.is_finite() {
            return Err(Error::domain("pulse parameters must be finite"));
        }
        if !(rise_time.is_finite() && rise_time >= 0.0) {
            return Err(Error::domain(format!("rise_time must be >= 0, got {rise_time}")));
        }
        Ok(Self {
            delta,
            rise_time,
            t_on,
            amplitude,
        })
    }

    /// Ideal unit step at `t = 0`.
    pub fn step(delta: f64) -> Self {
        Self {
            delta,
            rise_time: 0.0,
            t_on: 0.0,
            amplitude: 1.0,
        }
    }

    /// Unit-amplitude raised-cosine switch-on at `t = 0`.
    pub fn smooth(delta: f64, rise_time: f64) -> Self {
        Self {
            delta,
            rise_time,
            t_on: 0.0,
            amplitude: 1.0,
        }
    }

    pub fn is_ideal_step(&self) -> bool {
        self.rise_time == 0.0
    }

    /// Full width of the raised-cosine edge; the envelope reaches one at
    /// `t_on + edge_width()`.
    pub fn edge_width(&self) -> f64 {
        self.rise_time / raised_cosine_rise_fraction()
    }

    /// Envelope normalised to one, as a function of time since `t_on`.
    /// At a step discontinuity this returns the right limit.
    fn unit_envelope(&self, tau: f64) -> f64 {
        if tau < 0.0 {
            return 0.0;
        }
        if self.is_ideal_step() {
            return 1.0;
        }
        let width = self.edge_width();
        if tau >= width {
            1.0
        } else {
            0.5 * (1.0 - (PI * tau / width).cos())
        }
    }

    /// Right-continuous envelope value at `t`, in `[0, 1]`.
    pub fn envelope(&self, t: f64) -> f64 {
        self.unit_envelope(t - self.t_on)
    }

    /// Left limit of the envelope at `t` (differs from [`Self::envelope`]
    /// only at the ideal step).
    pub fn envelope_left(&self, t: f64) -> f64 {
        if self.is_ideal_step() && t <= self.t_on {
            0.0
        } else {
            self.envelope(t)
        }
    }

    /// Input field `E_in(t)` (right limit).
    pub fn field(&self, t: f64) -> Complex64 {
        Complex64::new(self.amplitude * self.envelope(t), 0.0)
    }

    /// Input field, left limit.
    pub fn field_left(&self, t: f64) -> Complex64 {
        Complex64::new(self.amplitude * self.envelope_left(t), 0.0)
    }

    /// Fourier transform of the envelope derivative, `∫ e'(τ) e^{iντ} dτ`,
    /// with τ measured from `t_on`. Equal to one at `ν = 0`.
    pub fn edge_spectrum(&self, nu: f64) -> Complex64 {
        if self.is_ideal_step() {
            return Complex64::new(1.0, 0.0);
        }
        let width = self.edge_width();
        let omega = PI / width;
        let half = 0.5 * width;
        // ω² e^{iνT/2} cos(νT/2) / ((ω-ν)(ω+ν)), with the removable
        // singularity at ν = ±ω folded into a sinc.
        let ratio = if nu >= 0.0 {
            half * sinc((nu - omega) * half) / (omega + nu)
        } else {
            half * sinc((nu + omega) * half) / (omega - nu)
        };
        Complex64::from_polar(omega * omega * ratio, nu * half)
    }
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

impl Default for ProbePulse {
    fn default() -> Self {
        Self::smooth(0.0, DEFAULT_RISE_TIME)
    }
}
