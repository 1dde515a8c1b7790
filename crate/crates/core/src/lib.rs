//! Stability analysis of grid-connected multi-inverter photovoltaic plants
//! whose inverters carry a digital control delay.
//!
//! The crate is layered bottom-up:
//!
//! - [`tf`]: real polynomials, rational transfer functions, Padé delay and
//!   companion-matrix root finding.
//! - [`inverter`]: single-inverter LCL current loop with PR control and
//!   capacitor-current active damping, its Norton equivalent behind the
//!   split-winding transformer, and the single-inverter delay margin.
//! - [`system`]: grid impedance, groups of identical inverters, closed-loop
//!   channels and the characteristic polynomial.
//! - [`stability`]: pole classification, inverter-count sweeps, stable
//!   ranges and root-locus traces.
//! - [`sim`]: time-domain validation (state-space Padé model and a
//!   sampled-data model with a genuine computation delay).

pub mod error;
pub mod inverter;
pub mod sim;
pub mod stability;
pub mod system;
pub mod tf;

pub use error::{Error, Result};
