//! Physical rates derived from a vapor-cell and beam configuration.
//!
//! Every rate in [`DerivedRates`] is an angular frequency (rad/s); see
//! [`crate::units`] for the conversion used at the I/O boundary.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use log::warn;

use crate::error::{Error, Result};
use crate::units;

/// Oscillator strength of the alkali D1 line.
pub const D1_OSCILLATOR_STRENGTH: f64 = 0.34;

/// Alkali-alkali spin-exchange cross-section, cm².
pub const SPIN_EXCHANGE_CROSS_SECTION: f64 = 1.8e-14;

const SPEED_OF_LIGHT_CM: f64 = 2.997_924_58e10;
const SPEED_OF_LIGHT_M: f64 = 2.997_924_58e8;
const ELECTRON_RADIUS_CM: f64 = 2.817_940_326_2e-13;
const BOLTZMANN_ERG: f64 = 1.380_649e-16;
const PLANCK_J: f64 = 6.626_070_15e-34;

/// Natural abundance weight of the I = 5/2 isotope in the composite Rb spin.
const RB85_FRACTION: f64 = 0.722;
const RB87_FRACTION: f64 = 0.278;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Species {
    /// Rubidium at natural isotopic abundance, treated as one composite spin.
    RbNatural,
    /// Potassium (nuclear spin 3/2).
    K,
}

impl Species {
    pub const ALL: [Species; 2] = [Species::RbNatural, Species::K];

    pub fn name(self) -> &'static str {
        match self {
            Species::RbNatural => "rb_natural",
            Species::K => "k",
        }
    }

    /// Reduced mass of a colliding alkali pair, grams.
    pub fn reduced_mass_g(self) -> f64 {
        match self {
            Species::RbNatural => 7.1e-23,
            Species::K => 3.25e-23,
        }
    }

    fn vapor_pressure_coefficients(self) -> (f64, f64) {
        match self {
            Species::RbNatural => (26.178, 4040.0),
            Species::K => (26.268, 4453.0),
        }
    }
}

impl fmt::Display for Species {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Species {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "rb_natural" | "rb" | "rbnatural" => Ok(Species::RbNatural),
            "k" | "potassium" => Ok(Species::K),
            other => Err(Error::Config(format!(
                "unknown species `{other}` (expected rb_natural or k)"
            ))),
        }
    }
}

/// The vapor cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellConfig {
    pub species: Species,
    pub temperature_k: f64,
    pub length_cm: f64,
    pub area_cm2: f64,
    /// Half width at half maximum of the pressure-broadened D1 line, GHz.
    pub gamma_opt_ghz: f64,
    pub wavelength_nm: f64,
    pub oscillator_strength: f64,
    pub spin_exchange_cross_section_cm2: f64,
}

impl CellConfig {
    pub fn new(
        species: Species,
        temperature_k: f64,
        length_cm: f64,
        area_cm2: f64,
        gamma_opt_ghz: f64,
        wavelength_nm: f64,
    ) -> Self {
        CellConfig {
            species,
            temperature_k,
            length_cm,
            area_cm2,
            gamma_opt_ghz,
            wavelength_nm,
            oscillator_strength: D1_OSCILLATOR_STRENGTH,
            spin_exchange_cross_section_cm2: SPIN_EXCHANGE_CROSS_SECTION,
        }
    }

    pub fn validate(&self) -> Result<()> {
        positive("temperature", self.temperature_k)?;
        positive("cell length", self.length_cm)?;
        positive("cross-sectional area", self.area_cm2)?;
        positive("optical half-width", self.gamma_opt_ghz)?;
        positive("wavelength", self.wavelength_nm)?;
        positive("oscillator strength", self.oscillator_strength)?;
        positive("spin-exchange cross-section", self.spin_exchange_cross_section_cm2)
    }

    /// Absorption cross-section at `detuning_ghz` from the D1 line, cm².
    ///
    /// The linewidth enters in cycles per second.
    pub fn cross_section(&self, detuning_ghz: f64) -> f64 {
        let peak = SPEED_OF_LIGHT_CM * ELECTRON_RADIUS_CM * self.oscillator_strength / (self.gamma_opt_ghz * 1e9);
        let x = detuning_ghz / self.gamma_opt_ghz;
        peak / (1.0 + x * x)
    }

    /// Photon energy at the configured wavelength, joules.
    pub fn photon_energy_j(&self) -> f64 {
        PLANCK_J * SPEED_OF_LIGHT_M / (self.wavelength_nm * 1e-9)
    }
}

/// The optical drive and the externally set spin parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamConfig {
    pub p_control_mw: f64,
    pub p_signal_mw: f64,
    /// Signed probe detuning from D1, GHz (positive = blue).
    pub delta_ghz: f64,
    pub p_pump_mw: f64,
    pub delta_pump_ghz: f64,
    /// Larmor frequency, rad/s.
    pub omega_a: f64,
    /// Spin-destruction rate, rad/s.
    pub r_sd: f64,
}

impl BeamConfig {
    pub fn validate(&self) -> Result<()> {
        positive("control power", self.p_control_mw)?;
        non_negative("signal power", self.p_signal_mw)?;
        non_negative("pump power", self.p_pump_mw)?;
        non_negative("spin-destruction rate", self.r_sd)?;
        finite("probe detuning", self.delta_ghz)?;
        finite("pump detuning", self.delta_pump_ghz)?;
        finite("Larmor frequency", self.omega_a)
    }
}

fn finite(what: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{what} must be finite, got {v}")))
    }
}

fn positive(what: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("{what} must be > 0, got {v}")))
    }
}

fn non_negative(what: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("{what} must be >= 0, got {v}")))
    }
}

/// Saturated alkali number density at temperature `t_k`, cm⁻³.
pub fn vapor_density(species: Species, t_k: f64) -> Result<f64> {
    if !(t_k.is_finite() && t_k > 0.0) {
        return Err(Error::Domain(format!("temperature must be > 0 K, got {t_k}")));
    }
    if !(300.0..=600.0).contains(&t_k) {
        warn!("vapor density fit used outside 300-600 K (T = {t_k} K)");
    }
    let (a, b) = species.vapor_pressure_coefficients();
    Ok(10f64.powf(a - b / t_k) / t_k)
}

/// Slowing-down factor for spin-temperature populations with polarization `p`.
pub fn slowing_down_factor(species: Species, p: f64) -> Result<f64> {
    if !(p.is_finite() && p.abs() <= 1.0) {
        return Err(Error::Domain(format!("polarization must lie in [-1, 1], got {p}")));
    }
    Ok(q_factor(species, p))
}

/// Unchecked slowing-down factor; `p` is assumed to be in [-1, 1].
#[inline]
pub(crate) fn q_factor(species: Species, p: f64) -> f64 {
    let p2 = p * p;
    let q32 = (6.0 + 2.0 * p2) / (1.0 + p2);
    match species {
        Species::K => q32,
        Species::RbNatural => {
            let q52 = (38.0 + 52.0 * p2 + 6.0 * p2 * p2) / (3.0 + 10.0 * p2 + 3.0 * p2 * p2);
            RB85_FRACTION * q52 + RB87_FRACTION * q32
        }
    }
}

/// SERF-regime spin-exchange broadening γ_se, in the units of `omega_a`.
pub fn serf_broadening(omega_a: f64, r_se: f64, species: Species, p_a: f64) -> Result<f64> {
    if !(r_se.is_finite() && r_se > 0.0) {
        return Err(Error::Domain(format!("spin-exchange rate must be > 0, got {r_se}")));
    }
    if r_se < 10.0 * omega_a.abs() {
        warn!(
            "outside the SERF regime: R_se = {r_se:.4e} < 10 ω_a = {:.4e}",
            10.0 * omega_a.abs()
        );
    }
    let q = slowing_down_factor(species, p_a)?;
    Ok(gamma_se_unchecked(species, q, omega_a, r_se))
}

#[inline]
pub(crate) fn gamma_se_unchecked(species: Species, q: f64, omega_a: f64, r_se: f64) -> f64 {
    let q_full = q_factor(species, 1.0);
    (q * q - q_full * q_full) * omega_a * omega_a / (2.0 * q * r_se)
}

/// Mean relative thermal speed of colliding alkali atoms, cm/s.
pub fn thermal_velocity(species: Species, t_k: f64) -> f64 {
    (8.0 * BOLTZMANN_ERG * t_k / (PI * species.reduced_mass_g())).sqrt()
}

/// `(1 - e^{-d})/d`, continuous at `d = 0`.
pub fn mean_attenuation(d: f64) -> f64 {
    if d.abs() < 1e-12 {
        1.0 - d / 2.0
    } else {
        -(-d).exp_m1() / d
    }
}

/// Every derived quantity of the model for one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivedRates {
    pub species: Species,
    /// Alkali density, cm⁻³.
    pub n_a: f64,
    /// Peak and detuned cross-sections, cm².
    pub sigma_0: f64,
    pub sigma_delta: f64,
    pub sigma_pump: f64,
    /// On-resonance and detuned optical depths.
    pub d_0: f64,
    pub d_delta: f64,
    /// Slowing-down factor at the steady-state polarization.
    pub q: f64,
    pub p_a: f64,
    pub r_se: f64,
    pub r_pump: f64,
    pub r_sd: f64,
    /// Spin relaxation by absorption of the control light.
    pub r_c: f64,
    pub gamma_se: f64,
    pub gamma_1: f64,
    pub gamma: f64,
    /// Control photon flux S1 and signal amplitude S⊥, photons/s.
    pub s1_in: f64,
    pub s_perp_in: f64,
    /// Light→spin coupling (dimensionless) and spin→light coupling (rad/s).
    pub k_la: f64,
    pub k_al: f64,
    /// Spin-light coupling rate Ω = k_la·k_al, rad/s.
    pub coupling: f64,
    pub omega_a: f64,
    /// Signed Δ/Γ of the probe.
    pub delta_over_gamma: f64,
    pub length_cm: f64,
    pub area_cm2: f64,
}

impl DerivedRates {
    /// Two-photon resonance √(ω_a² + γ²).
    pub fn resonance_frequency(&self) -> f64 {
        self.omega_a.hypot(self.gamma)
    }

    /// Probe intensity transmission factor e^{-d(Δ)}.
    pub fn attenuation(&self) -> f64 {
        (-self.d_delta).exp()
    }

    pub fn r_pump_over_q(&self) -> f64 {
        self.r_pump / self.q
    }

    /// Steady axial spin density q·n_a·p_a/2, cm⁻³.
    pub fn axial_spin_density(&self) -> f64 {
        self.q * self.n_a * self.p_a / 2.0
    }

    /// Model-regime diagnostics. Empty when every guard holds.
    pub fn validity_warnings(&self, beam: &BeamConfig) -> Vec<String> {
        let mut out = Vec::new();
        if beam.p_signal_mw > 0.1 * beam.p_control_mw {
            out.push(format!(
                "signal power {} mW exceeds 10% of control power {} mW",
                beam.p_signal_mw, beam.p_control_mw
            ));
        }
        if self.r_se < 10.0 * self.omega_a.abs() {
            out.push(format!("SERF guard violated: R_se = {:.4e} rad/s < 10 ω_a", self.r_se));
        }
        if self.delta_over_gamma.abs() < 3.0 {
            out.push(format!(
                "probe detuning |Δ/Γ| = {:.3} is not large",
                self.delta_over_gamma.abs()
            ));
        }
        if self.d_delta > 0.5 {
            out.push(format!("detuned optical depth d(Δ) = {:.3} is not small", self.d_delta));
        }
        out
    }
}

/// Evaluate every derived rate for a cell/beam pair.
pub fn derive_all(cell: &CellConfig, beam: &BeamConfig) -> Result<DerivedRates> {
    cell.validate()?;
    beam.validate()?;
    let species = cell.species;

    let n_a = vapor_density(species, cell.temperature_k)?;
    let sigma_0 = cell.cross_section(0.0);
    let sigma_delta = cell.cross_section(beam.delta_ghz);
    let sigma_pump = cell.cross_section(beam.delta_pump_ghz);
    let d_0 = n_a * sigma_0 * cell.length_cm;
    let d_delta = n_a * sigma_delta * cell.length_cm;

    let r_se = n_a * cell.spin_exchange_cross_section_cm2 * thermal_velocity(species, cell.temperature_k);

    let photon = cell.photon_energy_j();
    let r_pump = sigma_pump * (beam.p_pump_mw * 1e-3) / (cell.area_cm2 * photon);
    let s1_in = (beam.p_control_mw * 1e-3) / (2.0 * photon);
    let s_perp_in = (beam.p_control_mw * beam.p_signal_mw).sqrt() * 1e-3 / photon;
    let r_c = 2.0 * sigma_delta * s1_in / cell.area_cm2;

    // In steady state q cancels: p_a = (R_pump/q)/((R_pump + R_sd)/q).
    let r_sd = beam.r_sd;
    let p_a = if r_pump + r_sd > 0.0 {
        r_pump / (r_pump + r_sd)
    } else {
        0.0
    };
    let q = q_factor(species, p_a);
    let gamma_1 = (r_sd + r_pump) / q;
    let gamma_se = serf_broadening(beam.omega_a, r_se, species, p_a)?;
    let gamma = gamma_1 + gamma_se;

    let delta_over_gamma = beam.delta_ghz / cell.gamma_opt_ghz;
    let faraday = 2.0 * delta_over_gamma * sigma_delta / (q * cell.area_cm2);
    let n_atoms = n_a * cell.area_cm2 * cell.length_cm;
    let axial = q * n_atoms * p_a / 2.0;
    let k_la = mean_attenuation(d_delta) * faraday * axial;
    let k_al = faraday * s1_in;

    Ok(DerivedRates {
        species,
        n_a,
        sigma_0,
        sigma_delta,
        sigma_pump,
        d_0,
        d_delta,
        q,
        p_a,
        r_se,
        r_pump,
        r_sd,
        r_c,
        gamma_se,
        gamma_1,
        gamma,
        s1_in,
        s_perp_in,
        k_la,
        k_al,
        coupling: k_la * k_al,
        omega_a: beam.omega_a,
        delta_over_gamma,
        length_cm: cell.length_cm,
        area_cm2: cell.area_cm2,
    })
}

/// Convenience: `Hz` (2π s⁻¹) value of an internal rate.
pub fn in_hz(rate: f64) -> f64 {
    units::rad_to_hz(rate)
}
