//! Coherent polarization self-rotation (CPSR) spectroscopy in dense alkali vapors.
//!
//! The crate is organised bottom-up:
//!
//! * [`params`] turns a cell/beam description into every derived rate.
//! * [`analytic`] evaluates the closed-form two-photon spectrum.
//! * [`bloch`] integrates the spin/Stokes equations in time and demodulates
//!   the transmitted signal quadrature.
//! * [`lineshape`] fits CPSR lines and one-photon absorption profiles.
//! * [`scenarios`] bundles the reference parameter sets and batch sweeps.
//! * [`config`] and [`report`] implement the flat key/value file formats.
//!
//! Internally every rate and frequency is an angular frequency in rad/s.
//! Values labelled "Hz" at the I/O boundary use the convention
//! `1 Hz = 2π s⁻¹`; see [`units`].

// `!(x > 0.0)` is used on purpose so that NaN fails the guard.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod bloch;
pub mod config;
pub mod error;
pub mod lineshape;
mod lm;
pub mod params;
pub mod report;
pub mod scenarios;
pub mod units;

pub use analytic::{Spectrum, SpectrumPoint};
pub use bloch::{DriveWaveform, SimulationSettings, SpatialMode, SpinLightState};
pub use error::{Error, Result};
pub use lineshape::{AbsorptionFit, CpsrFit, HyperfineLineList, LineMetrics};
pub use params::{BeamConfig, CellConfig, DerivedRates, Species};
pub use scenarios::Scenario;

pub use num_complex::Complex64;
