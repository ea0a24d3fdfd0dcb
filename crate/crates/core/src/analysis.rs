//! Feature extraction from spectra and traces, and the one-parameter OD fit.

use num_complex::Complex64;
use serde::Serialize;

use crate::ci::ci_time_response;
use crate::error::{Error, Result};
use crate::params::SystemParams;
use crate::pulse::ProbePulse;
use crate::trace::{ObservedKind, ObservedTrace, Spectrum, TimeTrace};

/// Default prominence threshold as a fraction of the spectrum's power range.
pub const DEFAULT_PROMINENCE: f64 = 0.05;

/// A transmission dip.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Resonance {
    /// Refined position [rad/s].
    pub delta: f64,
    /// Topographic prominence of the dip in power units.
    pub depth: f64,
    /// Refined minimum power.
    pub power: f64,
}

/// Dips of `|t|²` with prominence of at least 5% of the power range.
pub fn find_resonances(spec: &Spectrum) -> Vec<Resonance> {
    find_resonances_with(spec, DEFAULT_PROMINENCE)
}

/// Dips whose prominence is at least `threshold` times the power range,
/// ordered by detuning. Positions and minima are refined with a parabola
/// through the three nearest samples.
pub fn find_resonances_with(spec: &Spectrum, threshold: f64) -> Vec<Resonance> {
    let p = spec.power();
    let n = p.len();
    if n < 3 {
        return Vec::new();
    }
    let (lo, hi) = p.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    let range = hi - lo;
    if !(range > 0.0) {
        return Vec::new();
    }
    let mut found = Vec::new();
    for i in 1..n - 1 {
        if !(p[i] < p[i - 1] && p[i] <= p[i + 1]) {
            continue;
        }
        let depth = prominence(&p, i, 1e-9 * range);
        if depth < threshold * range {
            continue;
        }
        let (a, b, c) = (p[i - 1], p[i], p[i + 1]);
        let curvature = a - 2.0 * b + c;
        let offset = if curvature > 0.0 { 0.5 * (a - c) / curvature } else { 0.0 };
        let step = if offset >= 0.0 {
            spec.delta[i + 1] - spec.delta[i]
        } else {
            spec.delta[i] - spec.delta[i - 1]
        };
        found.push(Resonance {
            delta: spec.delta[i] + offset * step,
            depth,
            power: b - 0.25 * (a - c) * offset,
        });
    }
    found
}

/// Height of the lowest barrier separating minimum `i` from lower ground
/// (or from the edge of the data). Samples within `tie` of `p[i]` do not
/// count as lower, so mirror-image dips get equal prominence.
fn prominence(p: &[f64], i: usize, tie: f64) -> f64 {
    let side = |iter: &mut dyn Iterator<Item = usize>| {
        let mut highest = p[i];
        for j in iter {
            if p[j] < p[i] - tie {
                break;
            }
            highest = highest.max(p[j]);
        }
        highest
    };
    let left = side(&mut (0..i).rev());
    let right = side(&mut (i + 1..p.len()));
    left.min(right) - p[i]
}

/// Separation of the nearest dips on either side of zero detuning, or `None`
/// if one side has none. Dips within one sample of zero do not count.
pub fn rabi_splitting(spec: &Spectrum) -> Option<f64> {
    let step = spec.spacing();
    let res = find_resonances(spec);
    let below = res.iter().filter(|r| r.delta < -step).map(|r| r.delta).fold(None, |m: Option<f64>, d| {
        Some(m.map_or(d, |m| m.max(d)))
    })?;
    let above = res.iter().filter(|r| r.delta > step).map(|r| r.delta).fold(None, |m: Option<f64>, d| {
        Some(m.map_or(d, |m| m.min(d)))
    })?;
    Some(above - below)
}

/// Outward shift of ring mode `mode_index` (signed: negative indices are
/// the modes below the carrier) between a coupled and an empty spectrum.
///
/// The empty-ring dips on the chosen side are numbered outward from the
/// first one away from zero. Coupled dips are numbered the same way,
/// counting only those no closer to zero than three quarters of the first
/// empty mode, so the inner partner of a split central mode is skipped.
/// Returns `|coupled| - |empty|`.
pub fn mode_pulling(coupled: &Spectrum, empty: &Spectrum, mode_index: i32) -> Result<f64> {
    if mode_index == 0 {
        return Err(Error::domain("mode_index must be non-zero"));
    }
    let sign = f64::from(mode_index.signum());
    let m = mode_index.unsigned_abs() as usize;
    let side = |spec: &Spectrum| -> Vec<f64> {
        let step = spec.spacing();
        let mut d: Vec<f64> = find_resonances(spec)
            .iter()
            .map(|r| r.delta * sign)
            .filter(|&d| d > step)
            .collect();
        d.sort_by(f64::total_cmp);
        d
    };
    let empty_side = side(empty);
    let first = *empty_side
        .first()
        .ok_or_else(|| Error::domain("no empty-ring resonance on the requested side"))?;
    let e = *empty_side
        .get(m - 1)
        .ok_or_else(|| Error::domain(format!("empty spectrum does not reach mode {mode_index}")))?;
    let c = *side(coupled)
        .iter()
        .filter(|&&d| d >= 0.75 * first)
        .nth(m - 1)
        .ok_or_else(|| Error::domain(format!("coupled spectrum does not reach mode {mode_index}")))?;
    Ok(c - e)
}

/// Initial decay rate of the intracavity field after the first arrival.
///
/// Fits `ln|E_cav|` against time over
/// `[t_on + t_rt + 2·rise, t_on + t_rt + min(0.25/γ, 0.8·t_rt)]` by least
/// squares and returns the negative slope. The field is projected on its
/// phase at the window start; the window ends before the first sample whose
/// projection is not positive.
pub fn initial_decay_rate(trace: &TimeTrace, params: &SystemParams, pulse: &ProbePulse) -> Result<f64> {
    let t_rt = params.ring.t_rt();
    let arrival = pulse.t_on + t_rt;
    let start = arrival + 2.0 * pulse.rise_time;
    let stop = arrival + (0.25 / params.atom.gamma()).min(0.8 * t_rt);
    if stop <= start {
        return Err(Error::domain("the rise time leaves no room for a decay window"));
    }
    if trace.time(trace.len().saturating_sub(1)) < stop {
        return Err(Error::domain("trace ends before the decay window"));
    }
    let field = trace.intracavity_ratio();
    let i0 = trace.index_at(start);
    let i1 = trace.index_at(stop).min(field.len() - 1);
    let reference = field[i0];
    if reference.norm() == 0.0 {
        return Err(Error::domain("no intracavity field at the start of the decay window"));
    }
    let unit = reference.conj() / reference.norm();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for i in i0..=i1 {
        let projected = (field[i] * unit).re;
        if projected <= 0.0 {
            break;
        }
        xs.push(trace.time(i));
        ys.push(projected.ln());
    }
    if xs.len() < 3 {
        return Err(Error::domain("fewer than 3 positive samples in the decay window"));
    }
    Ok(-linear_slope(&xs, &ys))
}

fn linear_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Outcome of a bounded scalar minimisation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FitResult {
    pub od_hat: f64,
    /// RMS misfit in normalised power.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Iteration cap of the golden-section search.
pub const MAX_ITERATIONS: usize = 60;
/// Relative bracket tolerance of the golden-section search.
pub const RELATIVE_TOLERANCE: f64 = 1e-3;
/// Evenly spaced OD candidates scanned to bracket the global minimum.
pub const SCAN_POINTS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Minimum {
    pub x: f64,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Golden-section search for the minimum of `f` on `[lo, hi]`.
///
/// Stops when the bracket is narrower than `1e-3·max(|x|, 1e-3)` or after
/// [`MAX_ITERATIONS`] reductions; the best point evaluated is returned.
pub fn golden_section<F>(mut f: F, lo: f64, hi: f64) -> Result<Minimum>
where
    F: FnMut(f64) -> Result<f64>,
{
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::domain(format!("invalid bracket [{lo}, {hi}]")));
    }
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (lo, hi);
    let mut x1 = b - ratio * (b - a);
    let mut x2 = a + ratio * (b - a);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    let mut best = if f1 <= f2 { (x1, f1) } else { (x2, f2) };
    let mut iterations = 0;
    let mut converged = false;
    while iterations < MAX_ITERATIONS {
        if b - a <= RELATIVE_TOLERANCE * best.0.abs().max(1e-3) {
            converged = true;
            break;
        }
        iterations += 1;
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - ratio * (b - a);
            f1 = f(x1)?;
            if f1 < best.1 {
                best = (x1, f1);
            }
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + ratio * (b - a);
            f2 = f(x2)?;
            if f2 < best.1 {
                best = (x2, f2);
            }
        }
    }
    if !converged && b - a <= RELATIVE_TOLERANCE * best.0.abs().max(1e-3) {
        converged = true;
    }
    Ok(Minimum {
        x: best.0,
        value: best.1,
        iterations,
        converged,
    })
}

/// Fits the optical depth by matching `data` to the cascaded model.
///
/// A scan of [`SCAN_POINTS`] candidates across `bounds` selects the bracket
/// handed to [`golden_section`].
/// Each candidate reruns [`ci_time_response`] on the grid `dt` with the
/// coupling re-derived from the candidate OD. Power data are compared with
/// the model interpolated linearly to the sample times. Count data are
/// compared bin by bin (bins start at the sample times and span the sample
/// spacing) after converting with the stated counts per unit power, or
/// with the least-squares scale if none is stated.
pub fn fit_od(
    data: &ObservedTrace,
    template: &SystemParams,
    pulse: &ProbePulse,
    dt: f64,
    bounds: (f64, f64),
) -> Result<FitResult> {
    let (od_min, od_max) = bounds;
    if !(od_min.is_finite() && od_max.is_finite() && 0.0 <= od_min && od_min < od_max) {
        return Err(Error::domain(format!("invalid OD bounds [{od_min}, {od_max}]")));
    }
    let duration = match data.kind {
        ObservedKind::Power => *data.times.last().expect("validated trace"),
        ObservedKind::Counts { .. } => *data.times.last().expect("validated trace") + data.spacing(),
    };
    let duration = (duration / dt).ceil() * dt;
    let objective = |od: f64| -> Result<f64> {
        let params = template.with_od(od)?;
        let model = ci_time_response(&params, pulse, duration, dt)?;
        misfit(data, &model)
    };
    // the misfit is not unimodal over wide bounds: scan, then refine locally
    let grid: Vec<f64> = (0..SCAN_POINTS)
        .map(|i| od_min + (od_max - od_min) * i as f64 / (SCAN_POINTS - 1) as f64)
        .collect();
    let values = grid.iter().map(|&od| objective(od)).collect::<Result<Vec<f64>>>()?;
    let i = (0..SCAN_POINTS)
        .min_by(|&a, &b| values[a].total_cmp(&values[b]))
        .expect("non-empty scan");
    let mut best = golden_section(objective, grid[i.saturating_sub(1)], grid[(i + 1).min(SCAN_POINTS - 1)])?;
    if values[i] < best.value {
        best.x = grid[i];
        best.value = values[i];
    }
    Ok(FitResult {
        od_hat: best.x,
        residual: best.value,
        iterations: best.iterations,
        converged: best.converged,
    })
}

/// RMS misfit between observed data and a model trace, in normalised power.
pub fn misfit(data: &ObservedTrace, model: &TimeTrace) -> Result<f64> {
    let power = model.detector_power();
    match data.kind {
        ObservedKind::Power => {
            let mut acc = 0.0;
            for (&t, &y) in data.times.iter().zip(&data.values) {
                acc += (interpolate(model, &power, t)? - y).powi(2);
            }
            Ok((acc / data.len() as f64).sqrt())
        }
        ObservedKind::Counts { counts_per_unit_power } => {
            let width = data.spacing();
            let expected: Vec<f64> = data
                .times
                .iter()
                .map(|&t| bin_mean(model, &power, t, width))
                .collect::<Result<_>>()?;
            let scale = match counts_per_unit_power {
                Some(s) => s,
                None => {
                    let num: f64 = expected.iter().zip(&data.values).map(|(p, c)| p * c).sum();
                    let den: f64 = expected.iter().map(|p| p * p).sum();
                    if den > 0.0 {
                        num / den
                    } else {
                        1.0
                    }
                }
            };
            if !(scale > 0.0) {
                return Err(Error::domain("counts per unit power must be positive"));
            }
            let acc: f64 = expected
                .iter()
                .zip(&data.values)
                .map(|(p, c)| (c / scale - p).powi(2))
                .sum();
            Ok((acc / data.len() as f64).sqrt())
        }
    }
}

fn interpolate(model: &TimeTrace, power: &[f64], t: f64) -> Result<f64> {
    let x = (t - model.t0) / model.dt;
    let last = power.len() - 1;
    if x < -1e-9 || x > last as f64 + 1e-9 {
        return Err(Error::domain(format!("sample time {t:e} s outside the model trace")));
    }
    let x = x.clamp(0.0, last as f64);
    let i = (x.floor() as usize).min(last.saturating_sub(1));
    let w = x - i as f64;
    Ok(power[i] * (1.0 - w) + power[(i + 1).min(last)] * w)
}

/// Mean model power over `[t, t + width)`; exact box average when the bin
/// is aligned with the model grid, trapezoidal otherwise.
fn bin_mean(model: &TimeTrace, power: &[f64], t: f64, width: f64) -> Result<f64> {
    let start = (t - model.t0) / model.dt;
    let len = width / model.dt;
    let aligned = (start - start.round()).abs() < 1e-6 && (len - len.round()).abs() < 1e-6 && len.round() >= 1.0;
    if aligned {
        let (s, l) = (start.round() as usize, len.round() as usize);
        if s + l > power.len() {
            return Err(Error::domain(format!("bin at {t:e} s outside the model trace")));
        }
        return Ok(power[s..s + l].iter().sum::<f64>() / l as f64);
    }
    let n = 16;
    let h = width / n as f64;
    let mut acc = 0.5 * (interpolate(model, power, t)? + interpolate(model, power, t + width)?);
    for j in 1..n {
        acc += interpolate(model, power, t + j as f64 * h)?;
    }
    Ok(acc / n as f64)
}

/// Mean of `|z|` over the samples in `[from, to)`.
pub fn mean_magnitude(trace: &[Complex64], t0: f64, dt: f64, from: f64, to: f64) -> f64 {
    let i0 = ((from - t0) / dt).ceil().max(0.0) as usize;
    let i1 = (((to - t0) / dt).ceil().max(0.0) as usize).min(trace.len());
    if i1 <= i0 {
        return f64::NAN;
    }
    trace[i0..i1].iter().map(|z| z.norm()).sum::<f64>() / (i1 - i0) as f64
}
