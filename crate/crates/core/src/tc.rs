//! Single-mode Tavis-Cummings model in the weak-drive (linear) regime.
//!
//! Equations of motion in the frame of the probe carrier:
//!
//! ```text
//! da/dt = (iΔ - κ) a - i g b + sqrt(2 κ_ext) s_in(t)
//! db/dt = (iΔ - γ) b - i g a
//! s_out = s_in - sqrt(2 κ_ext) a
//! ```

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::params::SystemParams;
use crate::pulse::ProbePulse;
use crate::trace::TimeTrace;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Steady-state transmission amplitude at detuning `delta`.
pub fn tc_transmission(params: &SystemParams, delta: f64) -> Complex64 {
    let g = params.coupling();
    let kappa = params.ring.kappa();
    let kappa_ext = params.ring.kappa_ext();
    let gamma = params.atom.gamma();
    let atom = Complex64::new(gamma, -delta);
    let cavity = Complex64::new(kappa, -delta);
    1.0 - 2.0 * kappa_ext * atom / (cavity * atom + g * g)
}

/// Cavity mode amplitude `a` and collective polarisation `b`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TcState {
    pub a: Complex64,
    pub b: Complex64,
}

impl std::ops::Add for TcState {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self {
            a: self.a + o.a,
            b: self.b + o.b,
        }
    }
}

impl std::ops::Mul<f64> for TcState {
    type Output = Self;
    fn mul(self, s: f64) -> Self {
        Self {
            a: self.a * s,
            b: self.b * s,
        }
    }
}

struct TcSystem {
    cavity: Complex64,
    atom: Complex64,
    g: f64,
    input_coupling: f64,
}

impl TcSystem {
    fn new(params: &SystemParams, delta: f64) -> Self {
        Self {
            cavity: Complex64::new(-params.ring.kappa(), delta),
            atom: Complex64::new(-params.atom.gamma(), delta),
            g: params.coupling(),
            input_coupling: (2.0 * params.ring.kappa_ext()).sqrt(),
        }
    }

    fn derivative(&self, s: TcState, drive: Complex64) -> TcState {
        TcState {
            a: self.cavity * s.a - I * self.g * s.b + self.input_coupling * drive,
            b: self.atom * s.b - I * self.g * s.a,
        }
    }
}

/// Step size bound: `dt · max(g, κ, γ, |Δ|)` may not exceed this.
pub const MAX_STEP_PRODUCT: f64 = 0.1;

/// Recommended step, `0.02 / max(g, κ, γ, |Δ|)`.
pub fn default_dt(params: &SystemParams, pulse: &ProbePulse) -> f64 {
    0.02 / params.max_rate().max(pulse.delta.abs())
}

/// Response to the probe switch-on, sampled at `0, dt, …, duration`.
///
/// Integrated from the empty state with classical RK4; the drive is evaluated
/// analytically at the stage times. The intracavity channel holds
/// `sqrt(2 κ_ext)·a / k`, the circulating field a ring with the same coupler
/// would show just before the coupler.
pub fn tc_time_response(params: &SystemParams, pulse: &ProbePulse, duration: f64, dt: f64) -> Result<TimeTrace> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::config("trace.dt", format!("step must be positive, got {dt}")));
    }
    if !(duration.is_finite() && duration >= 0.0) {
        return Err(Error::config("trace.duration", format!("invalid duration {duration}")));
    }
    let fastest = params.max_rate().max(pulse.delta.abs());
    if dt * fastest > MAX_STEP_PRODUCT {
        return Err(Error::config(
            "trace.dt",
            format!(
                "step {dt:e} s too coarse for the fastest rate {fastest:e} rad/s (dt·rate = {:.3} > {MAX_STEP_PRODUCT})",
                dt * fastest
            ),
        ));
    }
    let steps = (duration / dt).round() as usize;
    let system = TcSystem::new(params, pulse.delta);
    let tap = {
        let k = params.ring.coupler_cross();
        if k > 0.0 {
            system.input_coupling / k
        } else {
            1.0 / params.ring.t_rt().sqrt()
        }
    };

    let mut detector = Vec::with_capacity(steps + 1);
    let mut intracavity = Vec::with_capacity(steps + 1);
    let mut state = TcState::default();
    for n in 0..=steps {
        let t = n as f64 * dt;
        let s_in = pulse.field(t);
        detector.push(s_in - system.input_coupling * state.a);
        intracavity.push(tap * state.a);
        if n == steps {
            break;
        }
        let mid = pulse.field(t + 0.5 * dt);
        let end = pulse.field_left(t + dt);
        let k1 = system.derivative(state, s_in);
        let k2 = system.derivative(state + k1 * (0.5 * dt), mid);
        let k3 = system.derivative(state + k2 * (0.5 * dt), mid);
        let k4 = system.derivative(state + k3 * dt, end);
        state = state + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    }

    Ok(TimeTrace {
        t0: 0.0,
        dt,
        input_amplitude: pulse.amplitude,
        detector,
        intracavity,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{hz, AtomLine, EnsembleSpec, RingResonator};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn five_cm(od: f64) -> SystemParams {
        SystemParams::new(
            AtomLine::from_hz(2.62e6).unwrap(),
            RingResonator::critically_coupled(241.67e-12, hz(13.11e6)).unwrap(),
            EnsembleSpec::new(od, 32).unwrap(),
        )
    }

    #[test]
    fn empty_critical_cavity_has_full_dip() {
        let p = five_cm(0.0);
        assert!(tc_transmission(&p, 0.0).norm() < 1e-15);
    }

    #[test]
    fn far_detuned_is_transparent() {
        let p = five_cm(1.42);
        for &d in &[1e13, -1e13] {
            assert!((tc_transmission(&p, d) - 1.0).norm() < 1e-4);
        }
    }

    #[test]
    fn splitting_close_to_two_g() {
        // brute-force minima of |t|² on a fine grid
        let p = five_cm(1.42);
        let g = p.coupling();
        let n = 240_001;
        let span = hz(60e6);
        let power = |d: f64| tc_transmission(&p, d).norm_sqr();
        let grid: Vec<f64> = (0..n).map(|i| -span + 2.0 * span * i as f64 / (n - 1) as f64).collect();
        let minima: Vec<f64> = (1..n - 1)
            .filter(|&i| power(grid[i]) < power(grid[i - 1]) && power(grid[i]) <= power(grid[i + 1]))
            .map(|i| grid[i])
            .collect();
        assert_eq!(minima.len(), 2, "{minima:?}");
        let split = minima[1] - minima[0];
        assert_relative_eq!(split, 2.0 * g, max_relative = 0.05);
        // and the eigenfrequency form is the closer description
        let kappa = p.ring.kappa();
        let gamma = p.atom.gamma();
        let eig = 2.0 * (g * g - 0.25 * (kappa - gamma).powi(2)).sqrt();
        assert_relative_eq!(split, eig, max_relative = 0.02);
    }

    #[test]
    fn empty_cavity_ring_up_decays_monotonically() {
        let p = five_cm(0.0);
        let trace = tc_time_response(&p, &ProbePulse::step(0.0), 20.0 / p.ring.kappa(), 1e-11).unwrap();
        let power = trace.detector_power();
        assert_relative_eq!(power[0], 1.0, epsilon = 1e-12);
        assert!(power.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        assert!(*power.last().unwrap() < 1e-6);
    }

    #[test]
    fn zero_input_gives_zero_output() {
        let p = five_cm(1.42);
        let pulse = ProbePulse::new(0.0, 850e-12, 0.0, 0.0).unwrap();
        let trace = tc_time_response(&p, &pulse, 50e-9, 5e-12).unwrap();
        assert!(trace.detector.iter().chain(&trace.intracavity).all(|e| e.norm() == 0.0));
        assert!(trace.detector_power().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn coarse_step_rejected() {
        let p = five_cm(1.42);
        let dt = 0.2 / p.max_rate();
        assert!(matches!(
            tc_time_response(&p, &ProbePulse::step(0.0), 1e-8, dt),
            Err(Error::Config { .. })
        ));
    }

    #[test]
    fn settles_to_steady_state_transmission() {
        let p = five_cm(1.42);
        let rate = p.ring.kappa() + p.atom.gamma();
        for &delta in &[0.0, hz(20e6), hz(-34e6)] {
            let pulse = ProbePulse::smooth(delta, 850e-12);
            let dt = default_dt(&p, &pulse);
            let trace = tc_time_response(&p, &pulse, 40.0 / rate, dt).unwrap();
            let last = *trace.detector_power().last().unwrap();
            let expected = tc_transmission(&p, delta).norm_sqr();
            assert!((last - expected).abs() < 1e-6, "Δ={delta}: {last} vs {expected}");
        }
    }

    #[test]
    fn resonant_oscillation_frequency() {
        // g well above both loss rates: detrended zero crossings give the
        // eigenfrequency sqrt(g² - (κ-γ)²/4)
        let p = five_cm(40.0);
        let g = p.coupling();
        let (kappa, gamma) = (p.ring.kappa(), p.atom.gamma());
        assert!(g > 5.0 * kappa.max(gamma));
        let dt = 0.01 / g;
        let trace = tc_time_response(&p, &ProbePulse::step(0.0), 6.0 / (kappa + gamma), dt).unwrap();
        let steady = tc_transmission(&p, 0.0).norm_sqr();
        let detrended: Vec<f64> = trace.detector_power().iter().map(|x| x - steady).collect();
        let mut crossings = Vec::new();
        for i in 1..detrended.len() {
            let (a, b) = (detrended[i - 1], detrended[i]);
            if a.signum() != b.signum() && a != 0.0 {
                crossings.push(trace.time(i - 1) + dt * a / (a - b));
            }
        }
        assert!(crossings.len() >= 6, "{}", crossings.len());
        let half_periods: Vec<f64> = crossings.windows(2).map(|w| w[1] - w[0]).collect();
        let mean = half_periods.iter().sum::<f64>() / half_periods.len() as f64;
        let omega = (g * g - 0.25 * (kappa - gamma).powi(2)).sqrt();
        assert_relative_eq!(std::f64::consts::PI / mean, omega, max_relative = 0.02);
    }

    proptest! {
        #[test]
        fn passive(delta in -1e9f64..1e9, od in 0.0f64..50.0, split in 0.0f64..1.0) {
            let kappa = hz(13.11e6);
            let p = SystemParams::new(
                AtomLine::from_hz(2.62e6).unwrap(),
                RingResonator::new(241.67e-12, split * kappa + 1.0, (1.0 - split) * kappa).unwrap(),
                EnsembleSpec::new(od, 4).unwrap(),
            );
            prop_assert!(tc_transmission(&p, delta).norm() <= 1.0 + 1e-12);
        }

        #[test]
        fn linear_in_amplitude(scale in -5.0f64..5.0) {
            let p = five_cm(1.42);
            let base = tc_time_response(&p, &ProbePulse::smooth(0.0, 850e-12), 5e-9, 5e-12).unwrap();
            let pulse = ProbePulse::new(0.0, 850e-12, 0.0, scale).unwrap();
            let scaled = tc_time_response(&p, &pulse, 5e-9, 5e-12).unwrap();
            for (x, y) in base.detector.iter().zip(&scaled.detector) {
                prop_assert!((x * scale - y).norm() <= 1e-12 * (1.0 + scale.abs()));
            }
            for (x, y) in base.intracavity.iter().zip(&scaled.intracavity) {
                prop_assert!((x * scale - y).norm() <= 1e-9 * (1.0 + x.norm() * scale.abs()));
            }
        }
    }
}
