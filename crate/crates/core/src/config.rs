//! Run configuration files.
//!
//! A configuration is TOML with the sections `[atom]`, `[ring]`,
//! `[ensemble]`, `[pulse]`, `[sweep]`, `[trace]`, `[noise]`, `[fit]` and
//! `[output]`, an optional top-level `seed`, and any number of `[[check]]`
//! entries for the parameter cross-check. Rates and detunings are given in
//! Hz (cycles per second) and converted to angular units on load; times are
//! in seconds.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::ci;
use crate::error::{Error, Result};
use crate::params::{hz, AtomLine, EnsembleSpec, RingResonator, SystemParams, SPEED_OF_LIGHT};
use crate::pulse::{ProbePulse, DEFAULT_RISE_TIME};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct AtomSection {
    gamma: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RingSection {
    t_rt: Option<f64>,
    kappa: Option<f64>,
    kappa_ext: Option<f64>,
    kappa_0: Option<f64>,
    #[serde(rename = "L_cav")]
    l_cav: Option<f64>,
    n_group: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct EnsembleSection {
    od: Option<f64>,
    g: Option<f64>,
    #[serde(default = "default_atoms")]
    n_atoms: usize,
    #[serde(default)]
    detuning_spread: f64,
    rng_seed: Option<u64>,
}

fn default_atoms() -> usize {
    32
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PulseSection {
    #[serde(default)]
    delta: f64,
    rise_time: Option<f64>,
    #[serde(default)]
    t_on: f64,
    amplitude: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepSection {
    start: f64,
    stop: f64,
    samples: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct TraceSection {
    duration: Option<f64>,
    roundtrips: Option<f64>,
    dt: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct NoiseSection {
    counts_total: Option<f64>,
    bin_samples: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct FitSection {
    od_min: Option<f64>,
    od_max: Option<f64>,
}

/// File names written under the output directory.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub spectrum: String,
    pub timetrace: String,
    pub noise: String,
    pub fit: String,
    pub check_report: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            spectrum: "spectrum".into(),
            timetrace: "timetrace".into(),
            noise: "counts".into(),
            fit: "fit.json".into(),
            check_report: "check_report.json".into(),
        }
    }
}

/// One column of the parameter table: measured inputs and the derived
/// values they should reproduce. Rates in Hz.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckEntry {
    pub name: String,
    pub t_rt: f64,
    pub kappa: f64,
    pub od: f64,
    pub g: f64,
    pub nu_fsr: f64,
    #[serde(rename = "C")]
    pub cooperativity: f64,
    #[serde(rename = "L_cav")]
    pub l_cav: Option<f64>,
    pub n_group: Option<f64>,
    pub tau_at: Option<f64>,
    pub r: Option<f64>,
    pub a_loss: Option<f64>,
}

/// Detuning sweep in angular units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sweep {
    pub start: f64,
    pub stop: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceSettings {
    pub duration: f64,
    /// Integration step; `None` selects the model default.
    pub dt: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSettings {
    pub counts_total: Option<f64>,
    pub bin_samples: usize,
}

/// A fully validated run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub params: Option<SystemParams>,
    pub pulse: ProbePulse,
    pub sweep: Option<Sweep>,
    pub trace: Option<TraceSettings>,
    pub noise: NoiseSettings,
    pub fit_bounds: (f64, f64),
    pub output: OutputConfig,
    pub checks: Vec<CheckEntry>,
    pub gamma: Option<f64>,
    pub seed: u64,
    /// Lower-case hex SHA-256 of the file contents.
    pub sha256: String,
}

fn section<T: DeserializeOwned>(table: &toml::Table, name: &str) -> Result<Option<T>> {
    match table.get(name) {
        None => Ok(None),
        Some(value) => value
            .clone()
            .try_into()
            .map(Some)
            .map_err(|e: toml::de::Error| Error::config(name, e.message().to_string())),
    }
}

fn at(key: &str) -> impl Fn(Error) -> Error + '_ {
    move |e| match e {
        Error::Domain(message) => Error::config(key, message),
        other => other,
    }
}

const SECTIONS: [&str; 11] = [
    "seed", "atom", "ring", "ensemble", "pulse", "sweep", "trace", "noise", "fit", "output", "check",
];

impl RunConfig {
    /// Reads a file; `seed` replaces the top-level seed if given.
    pub fn from_path(path: &Path, seed: Option<u64>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, seed)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn from_str(text: &str) -> Result<Self> {
        Self::parse(text, None)
    }

    pub fn parse(text: &str, seed_override: Option<u64>) -> Result<Self> {
        let sha256 = Sha256::digest(text.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect::<String>();
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::config("file", e.message().to_string()))?;
        if let Some(key) = table.keys().find(|k| !SECTIONS.contains(&k.as_str())) {
            return Err(Error::config(key.as_str(), "unknown section or key"));
        }
        let seed = match table.get("seed") {
            None => 0,
            Some(v) => v
                .as_integer()
                .and_then(|i| u64::try_from(i).ok())
                .ok_or_else(|| Error::config("seed", "expected a non-negative integer"))?,
        };
        let seed = seed_override.unwrap_or(seed);

        let atom: Option<AtomSection> = section(&table, "atom")?;
        let ring: Option<RingSection> = section(&table, "ring")?;
        let ensemble: Option<EnsembleSection> = section(&table, "ensemble")?;
        let pulse: PulseSection = section(&table, "pulse")?.unwrap_or_default();
        let sweep: Option<SweepSection> = section(&table, "sweep")?;
        let trace: Option<TraceSection> = section(&table, "trace")?;
        let noise: Option<NoiseSection> = section(&table, "noise")?;
        let fit: Option<FitSection> = section(&table, "fit")?;
        let output: OutputConfig = section(&table, "output")?.unwrap_or_default();
        let checks: Vec<CheckEntry> = section(&table, "check")?.unwrap_or_default();

        let gamma = match &atom {
            Some(a) => Some(AtomLine::from_hz(a.gamma).map_err(at("atom.gamma"))?.gamma()),
            None => None,
        };

        let params = match (&atom, &ring, &ensemble) {
            (_, None, None) => None,
            (Some(a), Some(r), Some(e)) => Some(build_params(a, r, e, seed)?),
            (None, _, _) => return Err(Error::config("atom", "section missing")),
            (_, None, _) => return Err(Error::config("ring", "section missing")),
            (_, _, None) => return Err(Error::config("ensemble", "section missing")),
        };

        let pulse = ProbePulse::new(
            hz(pulse.delta),
            pulse.rise_time.unwrap_or(DEFAULT_RISE_TIME),
            pulse.t_on,
            pulse.amplitude.unwrap_or(1.0),
        )
        .map_err(at("pulse"))?;

        let sweep = match sweep {
            None => None,
            Some(s) => {
                if s.samples < 2 {
                    return Err(Error::config("sweep.samples", format!("need at least 2 samples, got {}", s.samples)));
                }
                if !(s.start.is_finite() && s.stop.is_finite() && s.stop > s.start) {
                    return Err(Error::config("sweep.stop", "stop must exceed start"));
                }
                Some(Sweep {
                    start: hz(s.start),
                    stop: hz(s.stop),
                    samples: s.samples,
                })
            }
        };

        let trace = match trace {
            None => None,
            Some(t) => {
                let duration = match (t.duration, t.roundtrips) {
                    (Some(d), None) => d,
                    (None, Some(n)) => {
                        let p = params
                            .as_ref()
                            .ok_or_else(|| Error::config("trace.roundtrips", "needs a [ring] section"))?;
                        n * p.ring.t_rt()
                    }
                    (Some(_), Some(_)) => {
                        return Err(Error::config("trace.duration", "give either duration or roundtrips, not both"))
                    }
                    (None, None) => return Err(Error::config("trace.duration", "missing duration or roundtrips")),
                };
                if !(duration.is_finite() && duration > 0.0) {
                    return Err(Error::config("trace.duration", format!("must be positive, got {duration}")));
                }
                if let Some(dt) = t.dt {
                    if !(dt.is_finite() && dt > 0.0) {
                        return Err(Error::config("trace.dt", format!("must be positive, got {dt}")));
                    }
                    if let Some(p) = &params {
                        ci::steps_per_roundtrip(p.ring.t_rt(), dt)?;
                    }
                }
                Some(TraceSettings { duration, dt: t.dt })
            }
        };

        let noise = NoiseSettings {
            counts_total: noise.as_ref().and_then(|n| n.counts_total),
            bin_samples: noise
                .as_ref()
                .and_then(|n| n.bin_samples)
                .unwrap_or(crate::noise::DEFAULT_BIN_SAMPLES),
        };
        if noise.bin_samples == 0 {
            return Err(Error::config("noise.bin_samples", "must be at least 1"));
        }

        let fit_bounds = (
            fit.as_ref().and_then(|f| f.od_min).unwrap_or(0.0),
            fit.as_ref().and_then(|f| f.od_max).unwrap_or(30.0),
        );
        if !(fit_bounds.0 >= 0.0 && fit_bounds.1 > fit_bounds.0 && fit_bounds.1.is_finite()) {
            return Err(Error::config(
                "fit.od_max",
                format!("bounds must satisfy 0 <= od_min < od_max, got {fit_bounds:?}"),
            ));
        }

        Ok(Self {
            params,
            pulse,
            sweep,
            trace,
            noise,
            fit_bounds,
            output,
            checks,
            gamma,
            seed,
            sha256,
        })
    }

    /// The physical system, or a configuration error if the sections are absent.
    pub fn system(&self) -> Result<&SystemParams> {
        self.params
            .as_ref()
            .ok_or_else(|| Error::config("ring", "the [atom], [ring] and [ensemble] sections are required"))
    }

    pub fn require_sweep(&self) -> Result<Sweep> {
        self.sweep.ok_or_else(|| Error::config("sweep", "section missing"))
    }

    pub fn require_trace(&self) -> Result<TraceSettings> {
        self.trace.ok_or_else(|| Error::config("trace", "section missing"))
    }

    /// Integration step for the cascaded model: the configured one, or the
    /// model default.
    pub fn ci_dt(&self) -> Result<f64> {
        let params = self.system()?;
        Ok(self
            .require_trace()?
            .dt
            .unwrap_or_else(|| ci::default_dt(params, &self.pulse)))
    }
}

fn build_params(atom: &AtomSection, ring: &RingSection, ens: &EnsembleSection, seed: u64) -> Result<SystemParams> {
    let atom = AtomLine::from_hz(atom.gamma).map_err(at("atom.gamma"))?;
    let t_rt = match (ring.t_rt, ring.l_cav, ring.n_group) {
        (Some(t), _, _) => t,
        (None, Some(l), Some(n)) => n * l / SPEED_OF_LIGHT,
        (None, Some(_), None) => return Err(Error::config("ring.n_group", "needed to derive t_rt from L_cav")),
        (None, None, _) => return Err(Error::config("ring.t_rt", "missing (or give L_cav and n_group)")),
    };
    let mut resonator = match (ring.kappa, ring.kappa_ext, ring.kappa_0) {
        (Some(k), None, None) => RingResonator::critically_coupled(t_rt, hz(k)).map_err(at("ring.kappa"))?,
        (None, Some(e), Some(z)) => RingResonator::new(t_rt, hz(e), hz(z)).map_err(at("ring.kappa_ext"))?,
        (Some(k), Some(e), None) => RingResonator::new(t_rt, hz(e), hz(k - e)).map_err(at("ring.kappa_ext"))?,
        (Some(k), None, Some(z)) => RingResonator::new(t_rt, hz(k - z), hz(z)).map_err(at("ring.kappa_0"))?,
        (Some(_), Some(_), Some(_)) => {
            return Err(Error::config("ring.kappa", "give at most two of kappa, kappa_ext, kappa_0"))
        }
        _ => return Err(Error::config("ring.kappa", "missing loss rate")),
    };
    if let (Some(l), Some(n)) = (ring.l_cav, ring.n_group) {
        resonator = resonator.with_geometry(l, n).map_err(at("ring.L_cav"))?;
    }
    let od = match (ens.od, ens.g) {
        (Some(od), None) => od,
        (None, Some(g)) => {
            crate::params::derive_od_from_coupling(hz(g), t_rt, atom.gamma()).map_err(at("ensemble.g"))?
        }
        (Some(_), Some(_)) => return Err(Error::config("ensemble.od", "give either od or g, not both")),
        (None, None) => return Err(Error::config("ensemble.od", "missing")),
    };
    let ensemble = EnsembleSpec::new(od, ens.n_atoms)
        .map_err(at("ensemble.od"))?
        .with_detuning_spread(hz(ens.detuning_spread), ens.rng_seed.unwrap_or(seed))
        .map_err(at("ensemble.detuning_spread"))?;
    Ok(SystemParams::new(atom, resonator, ensemble))
}
