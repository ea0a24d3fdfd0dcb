//! System parameters and the closed-form algebra linking them.
//!
//! Every rate (`gamma`, `kappa_ext`, `kappa_0`, `g`, detunings) is an angular
//! frequency in rad/s and an *amplitude* decay rate. Configuration files carry
//! ordinary frequencies in Hz; [`hz`] is the single conversion point.
//!
//! The ensemble is characterised by its resonant single-pass optical depth.
//! The collective coupling rate follows from
//!
//! ```text
//! od = 2 g² t_rt / γ        <=>        g = sqrt(od γ / (2 t_rt))
//! ```
//!
//! i.e. the amplitude absorbed per roundtrip in the short-cavity limit,
//! `g² t_rt / γ`, equals `od / 2`. This relation is derived, not quoted; it
//! reproduces the three measured resonator configurations to better than 1%
//! (see the `table1` tests).

use std::f64::consts::TAU;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// Speed of light in vacuum [m/s].
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Maximum relative mismatch tolerated between `t_rt` and `n_group·L_cav/c`.
pub const GEOMETRY_TOLERANCE: f64 = 0.01;

/// Converts an ordinary frequency in Hz to an angular frequency in rad/s.
#[inline]
pub fn hz(f: f64) -> f64 {
    TAU * f
}

/// Converts an angular frequency in rad/s back to Hz.
#[inline]
pub fn to_hz(omega: f64) -> f64 {
    omega / TAU
}

fn require_positive(name: &str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} must be positive and finite, got {value}")))
    }
}

fn require_non_negative(name: &str, value: f64) -> Result<()> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} must be non-negative and finite, got {value}")))
    }
}

/// Cooperativity `C = g² / (2 κ γ)`.
pub fn derive_cooperativity(g: f64, kappa: f64, gamma: f64) -> Result<f64> {
    require_positive("g", g)?;
    require_positive("kappa", kappa)?;
    require_positive("gamma", gamma)?;
    Ok(g * g / (2.0 * kappa * gamma))
}

/// Collective coupling rate for an ensemble of optical depth `od`.
pub fn derive_coupling_from_od(od: f64, t_rt: f64, gamma: f64) -> Result<f64> {
    require_non_negative("od", od)?;
    require_positive("t_rt", t_rt)?;
    require_positive("gamma", gamma)?;
    Ok((od * gamma / (2.0 * t_rt)).sqrt())
}

/// Inverse of [`derive_coupling_from_od`].
pub fn derive_od_from_coupling(g: f64, t_rt: f64, gamma: f64) -> Result<f64> {
    require_non_negative("g", g)?;
    require_positive("t_rt", t_rt)?;
    require_positive("gamma", gamma)?;
    Ok(2.0 * g * g * t_rt / gamma)
}

/// The two-level transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AtomLine {
    gamma: f64,
}

impl AtomLine {
    /// `gamma` is the amplitude decay rate in rad/s.
    pub fn new(gamma: f64) -> Result<Self> {
        require_positive("gamma", gamma)?;
        Ok(Self { gamma })
    }

    pub fn from_hz(gamma_hz: f64) -> Result<Self> {
        Self::new(hz(gamma_hz))
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Excited-state lifetime `1 / (2γ)`.
    pub fn tau_at(&self) -> f64 {
        1.0 / (2.0 * self.gamma)
    }
}

/// A single-coupler ring. The coupler and the intrinsic loss are each
/// described by an amplitude decay rate; over one roundtrip they map to the
/// through-amplitude `r = exp(-kappa_ext t_rt)` and the loss amplitude
/// `a_loss = exp(-kappa_0 t_rt)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RingResonator {
    t_rt: f64,
    kappa_ext: f64,
    kappa_0: f64,
    l_cav: Option<f64>,
    n_group: Option<f64>,
}

impl RingResonator {
    pub fn new(t_rt: f64, kappa_ext: f64, kappa_0: f64) -> Result<Self> {
        require_positive("t_rt", t_rt)?;
        require_non_negative("kappa_ext", kappa_ext)?;
        require_non_negative("kappa_0", kappa_0)?;
        if kappa_ext + kappa_0 <= 0.0 {
            return Err(Error::domain("kappa_ext + kappa_0 must be positive"));
        }
        Ok(Self {
            t_rt,
            kappa_ext,
            kappa_0,
            l_cav: None,
            n_group: None,
        })
    }

    /// Splits a total loss rate evenly between coupler and intrinsic loss,
    /// which puts the empty ring at critical coupling.
    pub fn critically_coupled(t_rt: f64, kappa: f64) -> Result<Self> {
        require_positive("kappa", kappa)?;
        Self::new(t_rt, 0.5 * kappa, 0.5 * kappa)
    }

    /// Attaches the (informational) geometry and checks it against `t_rt`.
    pub fn with_geometry(mut self, l_cav: f64, n_group: f64) -> Result<Self> {
        require_positive("L_cav", l_cav)?;
        require_positive("n_group", n_group)?;
        let expected = n_group * l_cav / SPEED_OF_LIGHT;
        let mismatch = (self.t_rt - expected).abs() / self.t_rt;
        if mismatch >= GEOMETRY_TOLERANCE {
            return Err(Error::domain(format!(
                "t_rt = {:e} s inconsistent with n_group·L_cav/c = {:e} s ({:.2}% off)",
                self.t_rt,
                expected,
                100.0 * mismatch
            )));
        }
        self.l_cav = Some(l_cav);
        self.n_group = Some(n_group);
        Ok(self)
    }

    pub fn t_rt(&self) -> f64 {
        self.t_rt
    }

    pub fn kappa_ext(&self) -> f64 {
        self.kappa_ext
    }

    pub fn kappa_0(&self) -> f64 {
        self.kappa_0
    }

    pub fn kappa(&self) -> f64 {
        self.kappa_ext + self.kappa_0
    }

    pub fn l_cav(&self) -> Option<f64> {
        self.l_cav
    }

    pub fn n_group(&self) -> Option<f64> {
        self.n_group
    }

    /// Free spectral range in Hz.
    pub fn nu_fsr(&self) -> f64 {
        1.0 / self.t_rt
    }

    /// Coupler through-amplitude `r`.
    pub fn coupler_through(&self) -> f64 {
        (-self.kappa_ext * self.t_rt).exp()
    }

    /// Coupler cross-amplitude `k = sqrt(1 - r²)`.
    pub fn coupler_cross(&self) -> f64 {
        // -expm1(-2x) is 1 - r² without cancellation for weak coupling
        (-(-2.0 * self.kappa_ext * self.t_rt).exp_m1()).sqrt()
    }

    /// Roundtrip loss amplitude `a_loss`.
    pub fn roundtrip_loss(&self) -> f64 {
        (-self.kappa_0 * self.t_rt).exp()
    }
}

/// The atomic ensemble, discretised into `n_atoms` identical-strength
/// emitters for the cascaded model.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSpec {
    od: f64,
    n_atoms: usize,
    detuning_spread: f64,
    rng_seed: u64,
}

impl EnsembleSpec {
    pub fn new(od: f64, n_atoms: usize) -> Result<Self> {
        require_non_negative("od", od)?;
        if n_atoms == 0 {
            return Err(Error::domain("n_atoms must be at least 1"));
        }
        Ok(Self {
            od,
            n_atoms,
            detuning_spread: 0.0,
            rng_seed: 0,
        })
    }

    /// Gaussian inhomogeneous broadening with standard deviation `spread`
    /// [rad/s]; the per-atom detunings are drawn from `seed`.
    pub fn with_detuning_spread(mut self, spread: f64, seed: u64) -> Result<Self> {
        require_non_negative("detuning_spread", spread)?;
        self.detuning_spread = spread;
        self.rng_seed = seed;
        Ok(self)
    }

    pub fn with_od(&self, od: f64) -> Result<Self> {
        require_non_negative("od", od)?;
        Ok(Self { od, ..self.clone() })
    }

    pub fn with_n_atoms(&self, n_atoms: usize) -> Result<Self> {
        if n_atoms == 0 {
            return Err(Error::domain("n_atoms must be at least 1"));
        }
        Ok(Self {
            n_atoms,
            ..self.clone()
        })
    }

    pub fn od(&self) -> f64 {
        self.od
    }

    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    pub fn detuning_spread(&self) -> f64 {
        self.detuning_spread
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    /// Resonant power transmission of a single discretised atom.
    pub fn per_atom_transmission(&self) -> f64 {
        (-self.od / self.n_atoms as f64).exp()
    }

    /// Per-atom coupling to the guided mode, `γ (1 - exp(-od / 2N))`, chosen
    /// so that the resonant single-pass amplitude is exactly `exp(-od/2)`.
    pub fn guided_coupling(&self, gamma: f64) -> f64 {
        -gamma * (-self.od / (2.0 * self.n_atoms as f64)).exp_m1()
    }

    /// Per-atom detunings from the line centre [rad/s]; all zero without
    /// broadening.
    pub fn atom_detunings(&self) -> Vec<f64> {
        if self.detuning_spread == 0.0 {
            return vec![0.0; self.n_atoms];
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.rng_seed);
        let normal = Normal::new(0.0, self.detuning_spread).expect("validated spread");
        (0..self.n_atoms).map(|_| normal.sample(&mut rng)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lifetimes {
    pub tau_at: f64,
    pub t_rt: f64,
    pub nu_fsr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemParams {
    pub atom: AtomLine,
    pub ring: RingResonator,
    pub ensemble: EnsembleSpec,
}

impl SystemParams {
    pub fn new(atom: AtomLine, ring: RingResonator, ensemble: EnsembleSpec) -> Self {
        Self {
            atom,
            ring,
            ensemble,
        }
    }

    /// Same system with a different optical depth (and hence coupling rate).
    pub fn with_od(&self, od: f64) -> Result<Self> {
        Ok(Self {
            ensemble: self.ensemble.with_od(od)?,
            ..self.clone()
        })
    }

    pub fn with_n_atoms(&self, n_atoms: usize) -> Result<Self> {
        Ok(Self {
            ensemble: self.ensemble.with_n_atoms(n_atoms)?,
            ..self.clone()
        })
    }

    /// Collective coupling rate `g` [rad/s].
    pub fn coupling(&self) -> f64 {
        derive_coupling_from_od(self.ensemble.od, self.ring.t_rt, self.atom.gamma)
            .expect("validated parameters")
    }

    /// Cooperativity; zero for an empty ensemble.
    pub fn cooperativity(&self) -> f64 {
        let g = self.coupling();
        g * g / (2.0 * self.ring.kappa() * self.atom.gamma)
    }

    /// Per-atom guided-mode coupling rate [rad/s].
    pub fn guided_coupling(&self) -> f64 {
        self.ensemble.guided_coupling(self.atom.gamma)
    }

    /// Largest of the three rates `g`, `κ`, `γ`.
    pub fn max_rate(&self) -> f64 {
        self.coupling().max(self.ring.kappa()).max(self.atom.gamma)
    }
}

pub fn derive_lifetimes(params: &SystemParams) -> Lifetimes {
    Lifetimes {
        tau_at: params.atom.tau_at(),
        t_rt: params.ring.t_rt(),
        nu_fsr: params.ring.nu_fsr(),
    }
}
