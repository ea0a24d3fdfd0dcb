//! Simulation of an ensemble of two-level emitters coupled to a ring
//! resonator whose roundtrip time ranges from much shorter to much longer
//! than the emitter lifetime.
//!
//! Two models are provided:
//!
//! * [`tc`]: the single-mode Tavis-Cummings model (linear regime).
//! * [`ci`]: the cascaded-interaction model, which keeps every resonator
//!   mode by treating the ring as a delay line with coherent feedback.
//!
//! [`linresp`] is an independent Fourier-domain route to the same time
//! traces, [`analysis`] extracts spectral and temporal features and fits the
//! optical depth, and [`config`] / [`cli`] expose it all on the command line.

pub mod analysis;
pub mod ci;
pub mod cli;
pub mod config;
pub mod error;
pub mod linresp;
pub mod noise;
pub mod params;
pub mod pulse;
pub mod tc;
pub mod trace;

pub use error::{Error, Result};
pub use params::{AtomLine, EnsembleSpec, RingResonator, SystemParams};
pub use pulse::ProbePulse;
pub use trace::{ObservedKind, ObservedTrace, Spectrum, TimeTrace};
