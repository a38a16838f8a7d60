//! Human-readable parameter report that can be read back.
//!
//! The report is a configuration file followed by a `[derived]` section of
//! `name = value  # unit` lines. The configuration part alone reproduces the
//! derived block.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::config;
use crate::error::{Error, Result};
use crate::params::{BeamConfig, CellConfig, DerivedRates};
use crate::units::rad_to_hz;

pub const DERIVED_HEADER: &str = "[derived]";

/// Format with 9 significant digits.
pub fn sig9(v: f64) -> String {
    format!("{v:.8e}")
}

/// (name, value, unit) for every derived quantity, rates in Hz (2π s⁻¹).
pub fn derived_fields(r: &DerivedRates) -> Vec<(&'static str, f64, &'static str)> {
    vec![
        ("n_a", r.n_a, "cm^-3"),
        ("sigma_0", r.sigma_0, "cm^2"),
        ("sigma_delta", r.sigma_delta, "cm^2"),
        ("sigma_pump", r.sigma_pump, "cm^2"),
        ("d_0", r.d_0, "1"),
        ("d_delta", r.d_delta, "1"),
        ("q", r.q, "1"),
        ("p_a", r.p_a, "1"),
        ("r_se", rad_to_hz(r.r_se), "Hz"),
        ("r_pump", rad_to_hz(r.r_pump), "Hz"),
        ("r_sd", rad_to_hz(r.r_sd), "Hz"),
        ("r_c", rad_to_hz(r.r_c), "Hz"),
        ("r_pump_over_q", rad_to_hz(r.r_pump_over_q()), "Hz"),
        ("gamma_se", rad_to_hz(r.gamma_se), "Hz"),
        ("gamma_1", rad_to_hz(r.gamma_1), "Hz"),
        ("gamma", rad_to_hz(r.gamma), "Hz"),
        ("s1_in", r.s1_in, "photons/s"),
        ("s_perp_in", r.s_perp_in, "photons/s"),
        ("k_la", r.k_la, "1"),
        ("k_al", rad_to_hz(r.k_al), "Hz"),
        ("coupling", rad_to_hz(r.coupling), "Hz"),
        ("omega_a", rad_to_hz(r.omega_a), "Hz"),
        ("delta_over_gamma", r.delta_over_gamma, "1"),
        ("length", r.length_cm, "cm"),
        ("area", r.area_cm2, "cm^2"),
        ("resonance", rad_to_hz(r.resonance_frequency()), "Hz"),
        ("fwhm", rad_to_hz(2.0 * r.gamma), "Hz"),
        ("contrast", (r.coupling / (2.0 * r.gamma)).abs(), "1"),
    ]
}

pub fn params_report(cell: &CellConfig, beam: &BeamConfig, rates: &DerivedRates) -> Result<String> {
    let mut out = String::new();
    let _ = writeln!(out, "# CPSR parameter report");
    let _ = writeln!(out, "# Frequencies labelled Hz are angular: 1 Hz = 2*pi s^-1.");
    out.push_str(&config::to_config_text(cell, beam)?);
    let _ = writeln!(out);
    let _ = writeln!(out, "{DERIVED_HEADER}");
    let _ = writeln!(out, "species = {}", rates.species);
    for (name, value, unit) in derived_fields(rates) {
        let _ = writeln!(out, "{name} = {}  # {unit}", sig9(value));
    }
    Ok(out)
}

/// Parsed report: the configuration and the derived values by name.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedReport {
    pub cell: CellConfig,
    pub beam: BeamConfig,
    pub derived: BTreeMap<String, f64>,
}

pub fn parse_params_report(text: &str) -> Result<ParsedReport> {
    let (config_part, derived_part) = match text.find(DERIVED_HEADER) {
        Some(pos) => (&text[..pos], &text[pos + DERIVED_HEADER.len()..]),
        None => return Err(Error::Config(format!("report has no `{DERIVED_HEADER}` section"))),
    };
    let (cell, beam) = config::parse_config(config_part)?;
    let first_line = config_part.lines().count() + 1;
    let mut derived = BTreeMap::new();
    for (idx, raw) in derived_part.lines().enumerate() {
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let line = first_line + idx;
        let (key, value) = content.split_once('=').ok_or_else(|| Error::Parse {
            line,
            message: format!("expected `name = value`, got `{content}`"),
        })?;
        let key = key.trim();
        if key == "species" {
            continue;
        }
        let value: f64 = value.trim().parse().map_err(|_| Error::Parse {
            line,
            message: format!("`{key}` is not a number"),
        })?;
        derived.insert(key.to_string(), value);
    }
    Ok(ParsedReport { cell, beam, derived })
}
