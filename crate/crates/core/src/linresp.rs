//! Fourier-domain linear response of the ring, used as an independent check
//! of the time-domain integrator.
//!
//! The transmission `t = (r - X)/(1 - rX)` is expanded in roundtrips,
//!
//! ```text
//! E_cav = k Σ_{m≥1} r^{m-1} X^m E_in,    E_det = r E_in - k E_cav,
//! X     = a_loss · T_ens(Δ) · e^{iΔ t_rt},
//! ```
//!
//! so every term is an exact delay `m·t_rt` applied to the response of
//! `T_ens^m`. That response is split into pieces handled in closed form
//! (the input itself, the leading `1/ν` tail of `T_ens^m - 1` and a two-pole
//! term carrying the remaining DC value) plus a remainder whose spectrum
//! falls off as `1/ν³` and is summed with an FFT on a half-shifted grid.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::params::SystemParams;
use crate::pulse::ProbePulse;
use crate::trace::TimeTrace;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Default span for an ideal step [rad/s].
pub const STEP_SPAN: f64 = TAU * 100e9;
/// Default span for a smooth switch-on [rad/s].
pub const SMOOTH_SPAN: f64 = TAU * 40e9;
/// Padding of the default window beyond the requested duration, in units of `1/γ`.
pub const DEFAULT_PADDING: f64 = 25.0;
/// Smallest admissible padding, in units of `1/γ`.
pub const MIN_PADDING: f64 = 20.0;
/// Minimum span in units of `max(g, κ, γ)`.
pub const MIN_SPAN_FACTOR: f64 = 40.0;

/// Uniform offset-frequency grid for the synthesis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FreqGrid {
    /// Full width of the grid [rad/s].
    pub span: f64,
    /// Sample spacing [rad/s]; `2π/resolution` is the time window.
    pub resolution: f64,
}

impl FreqGrid {
    pub fn new(span: f64, resolution: f64) -> Result<Self> {
        if !(span.is_finite() && span > 0.0) {
            return Err(Error::config("grid.span", format!("span must be positive, got {span}")));
        }
        if !(resolution.is_finite() && resolution > 0.0 && resolution < span) {
            return Err(Error::config(
                "grid.resolution",
                format!("resolution must lie in (0, span), got {resolution}"),
            ));
        }
        Ok(Self { span, resolution })
    }

    /// Default grid for a trace of the given duration.
    pub fn for_trace(params: &SystemParams, pulse: &ProbePulse, duration: f64) -> Self {
        let base = if pulse.is_ideal_step() { STEP_SPAN } else { SMOOTH_SPAN };
        let span = base.max(MIN_SPAN_FACTOR * params.max_rate()) + 2.0 * pulse.delta.abs();
        let window = duration.max(0.0) + DEFAULT_PADDING / params.atom.gamma();
        Self {
            span,
            resolution: TAU / window,
        }
    }

    /// Time window `2π / resolution`.
    pub fn window(&self) -> f64 {
        TAU / self.resolution
    }

    /// Offset frequencies `(k - n/2 + 1/2)·resolution`, `k = 0..n`, covering
    /// the span without sampling zero.
    pub fn delta_samples(&self) -> Vec<f64> {
        half_shifted(even_ceil(self.span / self.resolution), self.resolution)
    }

    /// Checks that the grid resolves the system over `duration`.
    pub fn validate(&self, params: &SystemParams, pulse: &ProbePulse, duration: f64) -> Result<()> {
        let needed_span = MIN_SPAN_FACTOR * params.max_rate() + 2.0 * pulse.delta.abs();
        if self.span < needed_span {
            return Err(Error::config(
                "grid.span",
                format!("span {:e} rad/s below the required {needed_span:e} rad/s", self.span),
            ));
        }
        let needed_window = duration + MIN_PADDING / params.atom.gamma();
        if self.window() < needed_window {
            return Err(Error::config(
                "grid.resolution",
                format!(
                    "window {:e} s shorter than duration plus padding ({needed_window:e} s)",
                    self.window()
                ),
            ));
        }
        Ok(())
    }
}

fn even_ceil(x: f64) -> usize {
    2 * ((0.5 * x).ceil() as usize).max(1)
}

/// Needs an even `n` so that zero falls between two samples.
fn half_shifted(n: usize, spacing: f64) -> Vec<f64> {
    (0..n).map(|k| (k as f64 - 0.5 * n as f64 + 0.5) * spacing).collect()
}

/// Intracavity tap transfer function `E_cav(Δ)/E_in(Δ) = kX/(1 - rX)`.
pub fn tap_transfer(params: &SystemParams, delta: f64) -> Complex64 {
    let ring = &params.ring;
    let x = ring.roundtrip_loss() * single_pass(params, &params.ensemble.atom_detunings(), delta)
        * Complex64::from_polar(1.0, delta * ring.t_rt());
    ring.coupler_cross() * x / (1.0 - ring.coupler_through() * x)
}

fn single_pass(params: &SystemParams, detunings: &[f64], delta: f64) -> Complex64 {
    let gamma = params.atom.gamma();
    let coupling = params.guided_coupling();
    detunings
        .iter()
        .map(|d| 1.0 - coupling / Complex64::new(gamma, -(delta - d)))
        .product()
}

/// `∫_0^τ e^{λ(τ-s)} u(s) ds` for the unit envelope `u` of `pulse`, with `τ`
/// measured from switch-on. Requires `Re λ < 0`.
fn pole_response(lambda: Complex64, pulse: &ProbePulse, tau: f64) -> Complex64 {
    if tau <= 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    let decay = |x: f64| (lambda * x).exp();
    if pulse.is_ideal_step() {
        return (decay(tau) - 1.0) / lambda;
    }
    let width = pulse.edge_width();
    let omega = PI / width;
    let v = tau.min(width);
    let tail = decay(tau - v);
    let flat = (decay(tau) - tail) / lambda;
    let up = (decay(tau) - tail * Complex64::from_polar(1.0, omega * v)) / (lambda - I * omega);
    let down = (decay(tau) - tail * Complex64::from_polar(1.0, -omega * v)) / (lambda + I * omega);
    let mut total = 0.5 * flat - 0.25 * (up + down);
    if tau > width {
        total += (decay(tau - width) - 1.0) / lambda;
    }
    total
}

/// Samples `(1/2π) Σ_k G_k e^{-iν_k τ_j} δν` at `τ_j = φ + j·h` for the
/// half-shifted grid of `values.len()` points with `δν·h = 2π/n`.
fn inverse_transform(planner: &mut FftPlanner<f64>, values: &[Complex64], spacing: f64, phi: f64) -> Vec<Complex64> {
    let n = values.len();
    let nus = half_shifted(n, spacing);
    let mut buffer: Vec<Complex64> = values
        .iter()
        .zip(&nus)
        .map(|(g, nu)| g * Complex64::from_polar(1.0, -nu * phi))
        .collect();
    planner.plan_fft_forward(n).process(&mut buffer);
    let scale = spacing / TAU;
    buffer
        .iter()
        .enumerate()
        .map(|(j, x)| {
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            x * Complex64::from_polar(sign * scale, -PI * j as f64 / n as f64)
        })
        .collect()
}

/// Time-domain response to `pulse`, sampled at `0, dt, …, duration`.
///
/// Returns the same channels as the time-domain integrator. The effective
/// grid is at least as fine and as wide as `grid`: the time step of the
/// transform is `dt / q` with `q` the smallest integer reaching the span.
pub fn synthesize_time_response(
    params: &SystemParams,
    pulse: &ProbePulse,
    duration: f64,
    dt: f64,
    grid: &FreqGrid,
) -> Result<TimeTrace> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::config("trace.dt", format!("step must be positive, got {dt}")));
    }
    if !(duration.is_finite() && duration >= 0.0) {
        return Err(Error::config("trace.duration", format!("invalid duration {duration}")));
    }
    grid.validate(params, pulse, duration)?;

    let steps = (duration / dt).round() as usize;
    let times: Vec<f64> = (0..=steps).map(|i| i as f64 * dt).collect();
    let ring = &params.ring;
    let (t_rt, r, k, a_loss) = (ring.t_rt(), ring.coupler_through(), ring.coupler_cross(), ring.roundtrip_loss());
    let delta = pulse.delta;
    let gamma = params.atom.gamma();
    let amplitude = pulse.amplitude;

    let q = (dt * grid.span / TAU).ceil().max(1.0);
    let h = dt / q;
    let q = q as usize;
    let n = even_ceil(grid.window() / h);
    let spacing = TAU / (n as f64 * h);
    let nus = half_shifted(n, spacing);

    let detunings = params.ensemble.atom_detunings();
    let single: Vec<Complex64> = nus.iter().map(|nu| single_pass(params, &detunings, delta + nu)).collect();
    let single_dc = single_pass(params, &detunings, delta);
    let input: Vec<Complex64> = nus
        .iter()
        .map(|&nu| amplitude * pulse.edge_spectrum(nu) / Complex64::new(0.0, -nu))
        .collect();
    let atom_pole: Vec<Complex64> = nus.iter().map(|nu| 1.0 / Complex64::new(gamma, -(delta + nu))).collect();
    let lambda_atom = Complex64::new(-gamma, delta);
    let (beta1, beta2) = (gamma, 2.0 * gamma);
    let two_pole: Vec<Complex64> = nus
        .iter()
        .map(|&nu| beta1 * beta2 / (Complex64::new(beta1, -nu) * Complex64::new(beta2, -nu)))
        .collect();
    let strength = params.ensemble.n_atoms() as f64 * params.guided_coupling();

    let mut planner = FftPlanner::new();
    let mut intracavity = vec![Complex64::new(0.0, 0.0); times.len()];
    let mut power_m = vec![Complex64::new(1.0, 0.0); n];
    let mut power_dc = Complex64::new(1.0, 0.0);
    let mut m = 0usize;
    loop {
        m += 1;
        let shift = m as f64 * t_rt;
        if shift + pulse.t_on > duration {
            break;
        }
        let weight_m = k * r.powi(m as i32 - 1) * a_loss.powi(m as i32);
        for (p, s) in power_m.iter_mut().zip(&single) {
            *p *= s;
        }
        power_dc *= single_dc;
        let c_m = m as f64 * strength;
        let r0 = power_dc - 1.0 + c_m / Complex64::new(gamma, -delta);
        let first = times.partition_point(|&t| t - shift < pulse.t_on);
        if first >= times.len() || weight_m == 0.0 {
            continue;
        }
        let phi = times[first] - shift - pulse.t_on;
        let spectrum: Vec<Complex64> = (0..n)
            .map(|i| {
                let remainder = power_m[i] - 1.0 + c_m * atom_pole[i] - r0 * two_pole[i];
                remainder * input[i]
            })
            .collect();
        let smooth = inverse_transform(&mut planner, &spectrum, spacing, phi);
        let phase = weight_m * Complex64::from_polar(1.0, m as f64 * delta * t_rt);
        for (i, t) in times.iter().enumerate().skip(first) {
            let tau = t - shift - pulse.t_on;
            let j = (i - first) * q;
            let analytic = amplitude
                * (pulse.envelope(t - shift) - c_m * pole_response(lambda_atom, pulse, tau)
                    + r0 * (beta1 * beta2 / (beta2 - beta1))
                        * (pole_response(Complex64::new(-beta1, 0.0), pulse, tau)
                            - pole_response(Complex64::new(-beta2, 0.0), pulse, tau)));
            intracavity[i] += phase * (analytic + smooth[j]);
        }
    }

    let detector = times
        .iter()
        .zip(&intracavity)
        .map(|(&t, e)| r * pulse.field(t) - k * e)
        .collect();
    Ok(TimeTrace {
        t0: 0.0,
        dt,
        input_amplitude: amplitude,
        detector,
        intracavity,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ci::{ci_time_response, ci_transmission};
    use crate::params::{hz, AtomLine, EnsembleSpec, RingResonator};
    use approx::assert_relative_eq;

    fn system(t_rt: f64, kappa_hz: f64, od: f64, n_atoms: usize) -> SystemParams {
        SystemParams::new(
            AtomLine::from_hz(2.62e6).unwrap(),
            RingResonator::critically_coupled(t_rt, hz(kappa_hz)).unwrap(),
            EnsembleSpec::new(od, n_atoms).unwrap(),
        )
    }

    fn ring45(od: f64) -> SystemParams {
        system(219.70e-9, 114.2e3, od, 32)
    }

    fn max_deviation(a: &TimeTrace, b: &TimeTrace) -> f64 {
        let fields = |t: &TimeTrace| {
            t.detector_ratio()
                .into_iter()
                .chain(t.intracavity_ratio())
                .collect::<Vec<_>>()
        };
        fields(a)
            .iter()
            .zip(&fields(b))
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max)
    }

    #[test]
    fn empty_ring_tap_is_geometric_series() {
        let p = ring45(0.0);
        let (r, k, a) = (p.ring.coupler_through(), p.ring.coupler_cross(), p.ring.roundtrip_loss());
        assert_relative_eq!(tap_transfer(&p, 0.0).re, k * a / (1.0 - r * a), max_relative = 1e-12);
        assert!(tap_transfer(&p, 0.0).im.abs() < 1e-12);
    }

    #[test]
    fn opaque_ensemble_blocks_circulation() {
        let p = ring45(400.0);
        assert!(tap_transfer(&p, 0.0).norm() < 1e-80);
    }

    #[test]
    fn tap_and_transmission_are_consistent() {
        let p = ring45(14.4);
        let r = p.ring.coupler_through();
        let k = p.ring.coupler_cross();
        for &d in &[0.0, hz(1.3e6), hz(-7e6)] {
            let t = r - k * tap_transfer(&p, d);
            assert!((t - ci_transmission(&p, d)).norm() < 1e-12);
        }
    }

    #[test]
    fn pole_response_matches_quadrature() {
        let lambda = Complex64::new(-3e7, 1e8);
        for pulse in [ProbePulse::step(0.0), ProbePulse::smooth(0.0, 850e-12)] {
            for &tau in &[1e-10, 5e-10, 1.2e-9, 4e-9] {
                let n = 200_000;
                let h = tau / n as f64;
                let acc: Complex64 = (0..n)
                    .map(|i| {
                        let s = (i as f64 + 0.5) * h;
                        (lambda * (tau - s)).exp() * pulse.envelope(s) * h
                    })
                    .sum();
                let got = pole_response(lambda, &pulse, tau);
                assert!((got - acc).norm() < 1e-8 * acc.norm().max(1e-12), "{tau}: {got} vs {acc}");
            }
        }
    }

    #[test]
    fn parseval() {
        let mut planner = FftPlanner::new();
        let n = 1000;
        let spacing = 1e6;
        let values: Vec<Complex64> = half_shifted(n, spacing)
            .iter()
            .map(|&nu| 1.0 / Complex64::new(2e7, -nu).powi(2))
            .collect();
        let samples = inverse_transform(&mut planner, &values, spacing, 3e-9);
        let h = TAU / (n as f64 * spacing);
        let time_energy: f64 = samples.iter().map(|x| x.norm_sqr()).sum::<f64>() * h;
        let freq_energy: f64 = values.iter().map(|x| x.norm_sqr()).sum::<f64>() * spacing / TAU;
        assert_relative_eq!(time_energy, freq_energy, max_relative = 1e-6);
    }

    #[test]
    fn grid_validation() {
        let p = ring45(14.4);
        let pulse = ProbePulse::default();
        let grid = FreqGrid::for_trace(&p, &pulse, 1e-6);
        assert!(grid.validate(&p, &pulse, 1e-6).is_ok());
        assert!(matches!(grid.validate(&p, &pulse, 1e-5), Err(Error::Config { .. })));
        let narrow = FreqGrid::new(10.0 * p.max_rate(), grid.resolution).unwrap();
        assert!(matches!(narrow.validate(&p, &pulse, 1e-6), Err(Error::Config { .. })));
        assert!(grid.delta_samples().iter().all(|&d| d != 0.0));
    }

    #[test]
    fn zero_amplitude_gives_zero_trace() {
        let p = ring45(14.4);
        let pulse = ProbePulse::new(0.0, 850e-12, 0.0, 0.0).unwrap();
        let dt = p.ring.t_rt() / 256.0;
        let duration = 2.5 * p.ring.t_rt();
        let grid = FreqGrid::for_trace(&p, &pulse, duration);
        let trace = synthesize_time_response(&p, &pulse, duration, dt, &grid).unwrap();
        assert!(trace.detector.iter().chain(&trace.intracavity).all(|e| e.norm() == 0.0));
    }

    #[test]
    fn empty_ring_matches_integrator() {
        let p = ring45(0.0);
        let t_rt = p.ring.t_rt();
        let dt = t_rt / 256.0;
        let pulse = ProbePulse::step(0.0);
        let duration = 5.0 * t_rt;
        let grid = FreqGrid::for_trace(&p, &pulse, duration);
        let oracle = synthesize_time_response(&p, &pulse, duration, dt, &grid).unwrap();
        let dde = ci_time_response(&p, &pulse, duration, dt).unwrap();
        assert!(max_deviation(&oracle, &dde) < 1e-10);
    }

    #[test]
    fn long_ring_matches_integrator() {
        let p = ring45(14.4);
        let t_rt = p.ring.t_rt();
        let dt = t_rt / 4096.0;
        let duration = 3.0 * t_rt;
        for pulse in [ProbePulse::step(0.0), ProbePulse::default(), ProbePulse::smooth(hz(3e6), 850e-12)] {
            let grid = FreqGrid::for_trace(&p, &pulse, duration);
            let oracle = synthesize_time_response(&p, &pulse, duration, dt, &grid).unwrap();
            let dde = ci_time_response(&p, &pulse, duration, dt).unwrap();
            let dev = max_deviation(&oracle, &dde);
            assert!(dev < 1e-4, "{pulse:?}: {dev}");
        }
    }

    #[test]
    fn steady_tap_matches_long_run() {
        let p = ring45(14.4);
        let t_rt = p.ring.t_rt();
        let dt = t_rt / 1024.0;
        let pulse = ProbePulse::smooth(0.0, 10.0 * dt);
        let trace = ci_time_response(&p, &pulse, 120.0 * t_rt, dt).unwrap();
        let last = *trace.intracavity_ratio().last().unwrap();
        assert!((last - tap_transfer(&p, 0.0)).norm() < 1e-6);
    }
}
