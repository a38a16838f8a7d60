//! Unit conventions.
//!
//! Rates and frequencies are stored as angular frequencies (rad/s). The
//! user-facing "Hz" is the spectroscopic convention `1 Hz = 2π s⁻¹`, so a
//! decay rate quoted as 10 Hz is `e^{-2π·10·t}`.
//!
//! Optical detunings and linewidths stay in GHz (ordinary cycles); only
//! their ratios enter the spin dynamics, and the absorption cross-section
//! uses the linewidth in cycles per second.

use std::f64::consts::TAU;

pub const RAD_PER_HZ: f64 = TAU;

pub const ZERO_CELSIUS: f64 = 273.15;

#[inline]
pub fn hz_to_rad(hz: f64) -> f64 {
    hz * RAD_PER_HZ
}

#[inline]
pub fn rad_to_hz(rad: f64) -> f64 {
    rad / RAD_PER_HZ
}

pub fn celsius_to_kelvin(c: f64) -> f64 {
    c + ZERO_CELSIUS
}

pub fn kelvin_to_celsius(k: f64) -> f64 {
    k - ZERO_CELSIUS
}
