//! Ideal photon-counting noise on a detector trace.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use crate::error::{Error, Result};
use crate::trace::{ObservedTrace, TimeTrace};

/// Samples per counting bin if none is requested.
pub const DEFAULT_BIN_SAMPLES: usize = 16;

/// Mean detector power per bin of `bin_samples` consecutive samples, with the
/// bin start times. A trailing partial bin is dropped.
pub fn bin_power(trace: &TimeTrace, bin_samples: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if bin_samples == 0 {
        return Err(Error::config("noise.bin_samples", "bins need at least one sample"));
    }
    let power = trace.detector_power();
    let bins = power.len() / bin_samples;
    if bins < 2 {
        return Err(Error::config(
            "noise.bin_samples",
            format!("{} samples give fewer than 2 bins of {bin_samples}", power.len()),
        ));
    }
    let times = (0..bins).map(|b| trace.time(b * bin_samples)).collect();
    let means = power
        .chunks_exact(bin_samples)
        .map(|c| c.iter().sum::<f64>() / bin_samples as f64)
        .collect();
    Ok((times, means))
}

/// Poisson counts per bin, scaled so that the expected total is
/// `counts_total`. The result records the counts per unit power.
pub fn synthesize_counts(trace: &TimeTrace, counts_total: f64, bin_samples: usize, seed: u64) -> Result<ObservedTrace> {
    if !(counts_total.is_finite() && counts_total >= 1.0) {
        return Err(Error::config(
            "noise.counts_total",
            format!("expected total counts must be at least 1, got {counts_total}"),
        ));
    }
    let (times, means) = bin_power(trace, bin_samples)?;
    let total: f64 = means.iter().sum();
    if !(total > 0.0) {
        return Err(Error::domain("the trace carries no power to count"));
    }
    let scale = counts_total / total;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let counts = means
        .iter()
        .map(|&p| {
            let lambda = scale * p;
            if lambda > 0.0 {
                Poisson::new(lambda)
                    .map(|d| d.sample(&mut rng))
                    .map_err(|e| Error::domain(format!("invalid Poisson mean {lambda}: {e}")))
            } else {
                Ok(0.0)
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    ObservedTrace::counts(times, counts, Some(scale))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ci::ci_time_response;
    use crate::params::{hz, AtomLine, EnsembleSpec, RingResonator, SystemParams};
    use crate::pulse::ProbePulse;
    use crate::trace::ObservedKind;

    fn trace45() -> TimeTrace {
        let p = SystemParams::new(
            AtomLine::from_hz(2.62e6).unwrap(),
            RingResonator::critically_coupled(219.70e-9, hz(114.2e3)).unwrap(),
            EnsembleSpec::new(14.4, 32).unwrap(),
        );
        ci_time_response(&p, &ProbePulse::default(), 5.0 * p.ring.t_rt(), p.ring.t_rt() / 4096.0).unwrap()
    }

    #[test]
    fn rejects_invalid_requests() {
        let t = trace45();
        assert!(matches!(synthesize_counts(&t, 0.0, 16, 1), Err(Error::Config { .. })));
        assert!(matches!(synthesize_counts(&t, 1e5, 0, 1), Err(Error::Config { .. })));
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let t = trace45();
        let a = synthesize_counts(&t, 1e5, 16, 7).unwrap();
        let b = synthesize_counts(&t, 1e5, 16, 7).unwrap();
        let c = synthesize_counts(&t, 1e5, 16, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.values, c.values);
    }

    #[test]
    fn counts_are_poisson() {
        // Pearson dispersion over 20 seeds: Σ (c - λ)²/λ is χ² with one
        // degree of freedom per bin and seed
        let t = trace45();
        let (_, means) = bin_power(&t, 16).unwrap();
        let data = synthesize_counts(&t, 1e5, 16, 0).unwrap();
        let ObservedKind::Counts {
            counts_per_unit_power: Some(scale),
        } = data.kind
        else {
            panic!("counts expected")
        };
        let mut chi2 = 0.0;
        let mut dof = 0.0;
        let mut total = 0.0;
        for seed in 0..20 {
            let d = synthesize_counts(&t, 1e5, 16, seed).unwrap();
            for (c, p) in d.values.iter().zip(&means) {
                let lambda = scale * p;
                if lambda > 0.0 {
                    chi2 += (c - lambda).powi(2) / lambda;
                    dof += 1.0;
                }
            }
            total += d.values.iter().sum::<f64>();
        }
        let z = (chi2 - dof) / (2.0 * dof).sqrt();
        assert!(z.abs() < 4.0, "chi2 = {chi2}, dof = {dof}");
        assert!((total / 20.0 - 1e5).abs() < 5.0 * (1e5f64 / 20.0).sqrt());
    }
}
