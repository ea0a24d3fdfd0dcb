//! Cascaded-interaction model: a chain of linear emitters inside a ring with
//! delayed coherent feedback.
//!
//! One roundtrip is modelled as
//!
//! ```text
//!   E_in ──┐                              ┌── E_det
//!          coupler {{r, -k}, {k, r}}
//!   E_loop ┘                              └── E_launch
//!   E_launch → delay t_rt → loss a_loss → atoms 1..N → tap (E_cav) → E_loop
//! ```
//!
//! so the tap just before the coupler first sees light one roundtrip after
//! switch-on. The atoms sit at one point (no inter-atom delay) and each obeys
//!
//! ```text
//! dσ_j/dt = (i(Δ - δ_j) - γ) σ_j + i sqrt(γ_wg) E_{j-1}
//! E_j     = E_{j-1} + i sqrt(γ_wg) σ_j
//! ```
//!
//! In the frequency domain the loop collapses to the all-pass formula of
//! [`ci_transmission`].
//!
//! The time-domain integrator steps on a grid with `dt = t_rt / M`. The delay
//! line stores, for every step interval, the launched field at the interval's
//! start (right limit), midpoint and end (left limit); RK4 consumes exactly
//! these three values one roundtrip later. Midpoint values of the atomic
//! state come from cubic Hermite interpolation, so the scheme stays fourth
//! order even though the drive is itself an integrator output. Ideal steps
//! are represented exactly as long as they fall on grid points.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::params::SystemParams;
use crate::pulse::ProbePulse;
use crate::trace::TimeTrace;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Steps per roundtrip used for resonators longer than [`LONG_CAVITY`].
pub const LONG_CAVITY_STEPS: usize = 4096;
/// Minimum steps per roundtrip for short resonators.
pub const SHORT_CAVITY_STEPS: usize = 64;
/// Roundtrip time above which a resonator counts as long [s].
pub const LONG_CAVITY: f64 = 1e-9;

/// Single-pass ensemble transmission `T_ens(Δ) = Π_j [1 - γ_wg / (γ - i(Δ - δ_j))]`.
pub fn ensemble_transmission(params: &SystemParams, delta: f64) -> Complex64 {
    let gamma = params.atom.gamma();
    let coupling = params.guided_coupling();
    let ensemble = &params.ensemble;
    if ensemble.detuning_spread() == 0.0 {
        let single = 1.0 - coupling / Complex64::new(gamma, -delta);
        return single.powi(ensemble.n_atoms() as i32);
    }
    ensemble
        .atom_detunings()
        .iter()
        .map(|d| 1.0 - coupling / Complex64::new(gamma, -(delta - d)))
        .product()
}

/// Field transmitted through the ensemble and the loop losses in one
/// roundtrip, including the propagation phase: `a_loss · T_ens · e^{iΔ t_rt}`.
pub fn roundtrip_factor(params: &SystemParams, delta: f64) -> Complex64 {
    let ring = &params.ring;
    ring.roundtrip_loss() * ensemble_transmission(params, delta) * Complex64::from_polar(1.0, delta * ring.t_rt())
}

/// Steady-state transmission amplitude of the ring with the ensemble in the loop.
pub fn ci_transmission(params: &SystemParams, delta: f64) -> Complex64 {
    let r = params.ring.coupler_through();
    let x = roundtrip_factor(params, delta);
    (r - x) / (1.0 - r * x)
}

/// Number of integration steps per roundtrip if none is requested.
pub fn default_steps_per_roundtrip(params: &SystemParams, pulse: &ProbePulse) -> usize {
    let t_rt = params.ring.t_rt();
    if t_rt >= LONG_CAVITY {
        return LONG_CAVITY_STEPS;
    }
    let by_coupling = (200.0 * params.coupling() * t_rt).ceil() as usize;
    let by_rise = if pulse.is_ideal_step() {
        0
    } else {
        (10.0 * t_rt / pulse.rise_time).ceil() as usize
    };
    SHORT_CAVITY_STEPS.max(by_coupling).max(by_rise)
}

/// Default step: `t_rt / default_steps_per_roundtrip`.
pub fn default_dt(params: &SystemParams, pulse: &ProbePulse) -> f64 {
    params.ring.t_rt() / default_steps_per_roundtrip(params, pulse) as f64
}

/// Steps per roundtrip implied by `dt`, or a configuration error if `dt`
/// does not divide `t_rt`.
pub fn steps_per_roundtrip(t_rt: f64, dt: f64) -> Result<usize> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::config("trace.dt", format!("step must be positive, got {dt}")));
    }
    let ratio = t_rt / dt;
    let m = ratio.round();
    if m < 1.0 || (ratio - m).abs() > 1e-9 * ratio {
        return Err(Error::config(
            "trace.dt",
            format!("dt = {dt:e} s does not divide t_rt = {t_rt:e} s (ratio {ratio})"),
        ));
    }
    Ok(m as usize)
}

/// The lumped atom chain with its coherences.
#[derive(Debug, Clone)]
pub struct Cascade {
    /// `i(Δ - δ_j) - γ`.
    poles: Vec<Complex64>,
    /// `i sqrt(γ_wg)`.
    coupling: Vec<Complex64>,
    pub sigma: Vec<Complex64>,
    scratch: [Vec<Complex64>; 5],
}

impl Cascade {
    pub fn new(params: &SystemParams, delta: f64) -> Self {
        Self::with_ensemble(params, params.ensemble.n_atoms(), params.guided_coupling(), delta)
    }

    fn with_ensemble(params: &SystemParams, n_atoms: usize, guided: f64, delta: f64) -> Self {
        let gamma = params.atom.gamma();
        let detunings = if params.ensemble.n_atoms() == n_atoms {
            params.ensemble.atom_detunings()
        } else {
            // repeat the drawn detunings when the chain is traversed several times
            let base = params.ensemble.atom_detunings();
            base.iter().cycle().take(n_atoms).copied().collect()
        };
        let poles = detunings.iter().map(|d| Complex64::new(-gamma, delta - d)).collect();
        let c = I * guided.sqrt();
        let n = n_atoms;
        Self {
            poles,
            coupling: vec![c; n],
            sigma: vec![Complex64::default(); n],
            scratch: std::array::from_fn(|_| vec![Complex64::default(); n]),
        }
    }

    pub fn len(&self) -> usize {
        self.sigma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigma.is_empty()
    }

    /// Field leaving the chain for input `input` and coherences `sigma`.
    fn output(coupling: &[Complex64], sigma: &[Complex64], input: Complex64) -> Complex64 {
        coupling.iter().zip(sigma).fold(input, |e, (c, s)| e + c * s)
    }

    fn derivative(poles: &[Complex64], coupling: &[Complex64], sigma: &[Complex64], input: Complex64, out: &mut [Complex64]) {
        let mut field = input;
        for j in 0..sigma.len() {
            out[j] = poles[j] * sigma[j] + coupling[j] * field;
            field += coupling[j] * sigma[j];
        }
    }

    /// Current output field for input `input`.
    pub fn transmit(&self, input: Complex64) -> Complex64 {
        Self::output(&self.coupling, &self.sigma, input)
    }

    /// Advances the chain by `h` under a drive with the given start (right
    /// limit), midpoint and end (left limit) values. Returns the chain output
    /// at the same three instants.
    pub fn step(&mut self, drive: [Complex64; 3], h: f64) -> [Complex64; 3] {
        let n = self.sigma.len();
        let [k1, k2, k3, k4, tmp] = &mut self.scratch;
        let (poles, coupling, sigma) = (&self.poles, &self.coupling, &mut self.sigma);

        let out_start = Self::output(coupling, sigma, drive[0]);
        Self::derivative(poles, coupling, sigma, drive[0], k1);
        for j in 0..n {
            tmp[j] = sigma[j] + k1[j] * (0.5 * h);
        }
        Self::derivative(poles, coupling, tmp, drive[1], k2);
        for j in 0..n {
            tmp[j] = sigma[j] + k2[j] * (0.5 * h);
        }
        Self::derivative(poles, coupling, tmp, drive[1], k3);
        for j in 0..n {
            tmp[j] = sigma[j] + k3[j] * h;
        }
        Self::derivative(poles, coupling, tmp, drive[2], k4);
        // tmp <- σ(t+h); k2 is free afterwards and receives σ'(t+h)
        for j in 0..n {
            tmp[j] = sigma[j] + (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]) * (h / 6.0);
        }
        Self::derivative(poles, coupling, tmp, drive[2], k2);
        // cubic Hermite midpoint, reusing k3
        for j in 0..n {
            k3[j] = 0.5 * (sigma[j] + tmp[j]) + (k1[j] - k2[j]) * (h / 8.0);
        }
        let out_mid = Self::output(coupling, k3, drive[1]);
        let out_end = Self::output(coupling, tmp, drive[2]);
        sigma.copy_from_slice(tmp);
        [out_start, out_mid, out_end]
    }
}

fn validate_grid(params: &SystemParams, pulse: &ProbePulse, duration: f64, dt: f64) -> Result<usize> {
    if !(duration.is_finite() && duration >= 0.0) {
        return Err(Error::config("trace.duration", format!("invalid duration {duration}")));
    }
    let m = steps_per_roundtrip(params.ring.t_rt(), dt)?;
    let gamma = params.atom.gamma();
    if dt > 1.0 / (50.0 * gamma) {
        return Err(Error::config(
            "trace.dt",
            format!("dt = {dt:e} s exceeds 1/(50γ) = {:e} s", 1.0 / (50.0 * gamma)),
        ));
    }
    if !pulse.is_ideal_step() && dt > pulse.rise_time / 10.0 {
        return Err(Error::config(
            "trace.dt",
            format!("dt = {dt:e} s exceeds a tenth of the rise time {:e} s", pulse.rise_time),
        ));
    }
    let collective = params.ensemble.n_atoms() as f64 * params.guided_coupling() + gamma + pulse.delta.abs();
    if dt * collective > 0.1 {
        return Err(Error::config(
            "trace.dt",
            format!("dt = {dt:e} s too coarse for the collective rate {collective:e} rad/s"),
        ));
    }
    if pulse.is_ideal_step() {
        let k = pulse.t_on / dt;
        if (k - k.round()).abs() > 1e-9 * k.abs().max(1.0) {
            return Err(Error::config("pulse.t_on", "an ideal step must switch on at a grid point"));
        }
    }
    Ok(m)
}

fn input_samples(pulse: &ProbePulse, t: f64, dt: f64) -> [Complex64; 3] {
    [pulse.field(t), pulse.field(t + 0.5 * dt), pulse.field_left(t + dt)]
}

/// Integrates the ring response to `pulse` over `[0, duration]`.
///
/// `dt` must divide `t_rt`; see [`default_dt`]. The returned trace holds
/// `E_det` and `E_cav` at every grid point.
pub fn ci_time_response(params: &SystemParams, pulse: &ProbePulse, duration: f64, dt: f64) -> Result<TimeTrace> {
    let per_roundtrip = validate_grid(params, pulse, duration, dt)?;
    let dt = params.ring.t_rt() / per_roundtrip as f64;
    let steps = (duration / dt).round() as usize;

    let r = params.ring.coupler_through();
    let k = params.ring.coupler_cross();
    let feedback = params.ring.roundtrip_loss() * Complex64::from_polar(1.0, pulse.delta * params.ring.t_rt());

    let mut cascade = Cascade::new(params, pulse.delta);
    // atom-chain input for each step interval of the last roundtrip
    let mut delay = vec![[Complex64::default(); 3]; per_roundtrip];
    let mut detector = Vec::with_capacity(steps + 1);
    let mut intracavity = Vec::with_capacity(steps + 1);

    for n in 0..=steps {
        let t = n as f64 * dt;
        let slot = n % per_roundtrip;
        let drive = delay[slot];
        let e_in = input_samples(pulse, t, dt);
        if n == steps {
            let e_cav = cascade.transmit(drive[0]);
            detector.push(r * e_in[0] - k * e_cav);
            intracavity.push(e_cav);
            break;
        }
        let e_cav = cascade.step(drive, dt);
        detector.push(r * e_in[0] - k * e_cav[0]);
        intracavity.push(e_cav[0]);
        delay[slot] = std::array::from_fn(|i| feedback * (k * e_in[i] + r * e_cav[i]));
    }

    Ok(TimeTrace {
        t0: 0.0,
        dt,
        input_amplitude: pulse.amplitude,
        detector,
        intracavity,
    })
}

/// One traversal of an ensemble of optical depth `od` (no resonator).
///
/// The chain is built with `n_atoms` emitters of the per-atom strength that
/// `params` would assign to `od`; both channels of the returned trace hold
/// the transmitted field.
pub fn single_pass_response(
    params: &SystemParams,
    od: f64,
    n_atoms: usize,
    pulse: &ProbePulse,
    duration: f64,
    dt: f64,
) -> Result<TimeTrace> {
    let single = params.with_od(od)?.with_n_atoms(n_atoms)?;
    validate_grid(&single, pulse, duration, dt)?;
    let steps = (duration / dt).round() as usize;
    let mut cascade = Cascade::with_ensemble(params, n_atoms, single.guided_coupling(), pulse.delta);
    let mut out = Vec::with_capacity(steps + 1);
    for n in 0..=steps {
        let t = n as f64 * dt;
        let e_in = input_samples(pulse, t, dt);
        if n == steps {
            out.push(cascade.transmit(e_in[0]));
        } else {
            out.push(cascade.step(e_in, dt)[0]);
        }
    }
    Ok(TimeTrace {
        t0: 0.0,
        dt,
        input_amplitude: pulse.amplitude,
        detector: out.clone(),
        intracavity: out,
    })
}

/// Intracavity field over one roundtrip window `[m·t_rt, (m+1)·t_rt)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundtripSegment {
    pub index: usize,
    /// Index of the first sample in the parent trace.
    pub start: usize,
    pub t_start: f64,
    /// `E_cav / E_in` over the window.
    pub intracavity: Vec<Complex64>,
}

/// Splits the intracavity channel into roundtrip windows `m = 0, 1, …`.
/// Only complete windows are returned.
pub fn ci_roundtrip_segments(trace: &TimeTrace, t_rt: f64) -> Result<Vec<RoundtripSegment>> {
    if !(t_rt > 0.0) {
        return Err(Error::domain("t_rt must be positive"));
    }
    let end = trace.t0 + trace.duration();
    if end + 1e-9 * trace.dt < trace.t0 + 2.0 * t_rt {
        return Err(Error::domain(format!(
            "trace covers {:e} s, fewer than two roundtrips of {t_rt:e} s",
            trace.duration()
        )));
    }
    let ratio = trace.intracavity_ratio();
    let mut segments = Vec::new();
    let mut m = 0usize;
    loop {
        let t_start = trace.t0 + m as f64 * t_rt;
        let t_end = t_start + t_rt;
        let start = trace.index_at(t_start);
        let stop = trace.index_at(t_end);
        if stop >= trace.len() {
            break;
        }
        segments.push(RoundtripSegment {
            index: m,
            start,
            t_start,
            intracavity: ratio[start..stop].to_vec(),
        });
        m += 1;
    }
    Ok(segments)
}
