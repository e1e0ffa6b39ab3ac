//! Two-stage emission kinetics for an initially entangled pair of identical
//! unstable atoms.
//!
//! The pair decays as a unit with rate `gamma_f` (the disentanglement rate),
//! leaving one unstable atom in a product state that decays with rate
//! `gamma_s`. This crate provides:
//!
//! * [`model`]: closed-form populations and cumulative photon counts, with an
//!   RK4 oracle for validation.
//! * [`lifetime`]: the single-atom lifetime, i.e. the time at which the
//!   unstable population of one atom type falls to `n0 / e`.
//! * [`monte_carlo`]: reproducible per-pair event generation with an optional
//!   detector and formation-time model.
//! * [`estimation`]: rate recovery from event data and the end-to-end
//!   lifetime pipeline.
//! * [`io`]: CSV/JSON schemas shared with the command-line tool.
//!
//! All rates are in units of the free-atom rate `gamma_0` and all times in
//! units of `tau_0 = 1 / gamma_0`.

pub mod error;
pub mod estimation;
pub mod io;
pub mod lifetime;
pub mod model;
pub mod monte_carlo;
mod numeric;

pub use error::{Error, Result};
pub use estimation::{FitMethod, FitResult, Histogram, PipelineResult};
pub use lifetime::{Branch, LifetimeSolution};
pub use model::{PhotonDistributions, PopulationState, RateParameters};
pub use monte_carlo::{AtomType, DecayEvent, DetectorModel, EventSet, FormationProfile};
