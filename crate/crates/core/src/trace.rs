//! Sampled model outputs: spectra and time traces.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Complex transmission amplitude sampled on a detuning grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    /// Detunings [rad/s], strictly increasing.
    pub delta: Vec<f64>,
    pub amplitude: Vec<Complex64>,
}

impl Spectrum {
    /// Samples `f` on `samples` evenly spaced detunings in `[start, stop]`.
    pub fn sample<F>(start: f64, stop: f64, samples: usize, f: F) -> Result<Self>
    where
        F: Fn(f64) -> Complex64,
    {
        if samples < 2 {
            return Err(Error::domain(format!("a spectrum needs at least 2 samples, got {samples}")));
        }
        if !(start.is_finite() && stop.is_finite() && stop > start) {
            return Err(Error::domain(format!("invalid sweep range [{start}, {stop}]")));
        }
        let step = (stop - start) / (samples - 1) as f64;
        let delta: Vec<f64> = (0..samples).map(|i| start + step * i as f64).collect();
        let amplitude = delta.iter().map(|&d| f(d)).collect();
        Ok(Self { delta, amplitude })
    }

    pub fn len(&self) -> usize {
        self.delta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.delta.is_empty()
    }

    /// Normalised transmitted power `|t|²`.
    pub fn power(&self) -> Vec<f64> {
        self.amplitude.iter().map(|a| a.norm_sqr()).collect()
    }

    /// Mean sample spacing [rad/s].
    pub fn spacing(&self) -> f64 {
        match self.delta.len() {
            0 | 1 => 0.0,
            n => (self.delta[n - 1] - self.delta[0]) / (n - 1) as f64,
        }
    }
}

/// Uniformly sampled detector and intracavity fields.
///
/// Fields are stored raw (in units of the input amplitude); the normalised
/// views divide by the probe amplitude. Sample `i` sits at `t0 + i·dt` and
/// holds the right limit of the field there.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeTrace {
    pub t0: f64,
    pub dt: f64,
    /// Probe amplitude the trace was driven with.
    pub input_amplitude: f64,
    /// Field at the detector, `E_det`.
    pub detector: Vec<Complex64>,
    /// Circulating field just before the coupler, `E_cav`.
    pub intracavity: Vec<Complex64>,
}

impl TimeTrace {
    pub fn len(&self) -> usize {
        self.detector.len()
    }

    pub fn is_empty(&self) -> bool {
        self.detector.is_empty()
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + self.dt * i as f64
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.time(i)).collect()
    }

    pub fn duration(&self) -> f64 {
        self.dt * self.len().saturating_sub(1) as f64
    }

    fn scale(&self) -> f64 {
        if self.input_amplitude == 0.0 {
            0.0
        } else {
            1.0 / self.input_amplitude
        }
    }

    /// `E_det / E_in`.
    pub fn detector_ratio(&self) -> Vec<Complex64> {
        let s = self.scale();
        self.detector.iter().map(|e| e * s).collect()
    }

    /// `|E_det|² / |E_in|²`.
    pub fn detector_power(&self) -> Vec<f64> {
        let s = self.scale();
        self.detector.iter().map(|e| (e * s).norm_sqr()).collect()
    }

    /// `E_cav / E_in`.
    pub fn intracavity_ratio(&self) -> Vec<Complex64> {
        let s = self.scale();
        self.intracavity.iter().map(|e| e * s).collect()
    }

    /// Index of the first sample at or after `t` (clamped to the trace).
    pub fn index_at(&self, t: f64) -> usize {
        let x = ((t - self.t0) / self.dt - 1e-9).ceil();
        if x <= 0.0 {
            0
        } else {
            (x as usize).min(self.len())
        }
    }
}

/// Measured or synthesised detector signal on an arbitrary time base.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedTrace {
    /// Sample times [s]; for binned counts the left edge of each bin.
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub kind: ObservedKind,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ObservedKind {
    /// Normalised detector power.
    Power,
    /// Photon counts, optionally with the known conversion to normalised power.
    Counts { counts_per_unit_power: Option<f64> },
}

impl ObservedTrace {
    pub fn power(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        Self::checked(times, values, ObservedKind::Power)
    }

    pub fn counts(times: Vec<f64>, values: Vec<f64>, counts_per_unit_power: Option<f64>) -> Result<Self> {
        Self::checked(
            times,
            values,
            ObservedKind::Counts {
                counts_per_unit_power,
            },
        )
    }

    fn checked(times: Vec<f64>, values: Vec<f64>, kind: ObservedKind) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::domain("times and values differ in length"));
        }
        if times.len() < 2 {
            return Err(Error::domain("an observed trace needs at least 2 samples"));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::domain("sample times must be strictly increasing"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("non-finite sample value"));
        }
        Ok(Self { times, values, kind })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Spacing of the first two samples.
    pub fn spacing(&self) -> f64 {
        self.times[1] - self.times[0]
    }
}

impl From<&TimeTrace> for ObservedTrace {
    fn from(trace: &TimeTrace) -> Self {
        Self {
            times: trace.times(),
            values: trace.detector_power(),
            kind: ObservedKind::Power,
        }
    }
}
