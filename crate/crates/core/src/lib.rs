//! Semi-classical simulation of cavity-enhanced Λ-system ensemble memories
//! with every desired and unwanted dipole coupling kept.
//!
//! The crate is organised bottom-up:
//!
//! * [`model`] holds the physical description of a system and its derived
//!   cavity and relaxation rates, with built-in systems in [`presets`].
//! * [`pulse`] describes the signal and control pulses.
//! * [`dynamics`] builds and integrates the full equations of motion.
//! * [`metrics`] turns runs into efficiency, apparent fidelity and scans.
//! * [`reduced`] is the adiabatically eliminated two-coherence model with
//!   per-term switches, growth rates and the coupling audit.
//! * [`config`] and [`sweep`] provide the file formats and the parallel
//!   parameter-sweep engine.

pub mod config;
pub mod dynamics;
pub mod error;
pub mod integrator;
pub mod metrics;
pub mod model;
pub mod presets;
pub mod pulse;
pub mod reduced;
pub mod serde_complex;
pub mod sweep;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
