//! Flat `key = value` configuration files.
//!
//! Units are part of the key name. Frequencies labelled `_hz` use
//! 1 Hz = 2π s⁻¹ and are stored in rad/s.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::params::{self, BeamConfig, CellConfig, Species};
use crate::units;

/// Every accepted key, in output order.
pub const KEYS: &[&str] = &[
    "species",
    "temperature_c",
    "length_cm",
    "area_cm2",
    "gamma_opt_ghz",
    "wavelength_nm",
    "f_osc",
    "sigma_se_cm2",
    "p_control_mw",
    "p_signal_uw",
    "delta_ghz",
    "p_pump_mw",
    "delta_pump_ghz",
    "omega_a_hz",
    "r_sd_hz",
];

const OPTIONAL: &[&str] = &["f_osc", "sigma_se_cm2"];

/// Numeric keys that may be swept.
pub fn numeric_keys() -> impl Iterator<Item = &'static str> {
    KEYS.iter().copied().filter(|k| *k != "species")
}

/// Parse a configuration file into validated cell and beam settings.
pub fn parse_config(text: &str) -> Result<(CellConfig, BeamConfig)> {
    let mut values: BTreeMap<&str, (usize, &str)> = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| Error::Parse {
            line,
            message: format!("expected `key = value`, got `{content}`"),
        })?;
        let key = key.trim();
        let Some(&known) = KEYS.iter().find(|k| **k == key) else {
            return Err(Error::Config(format!("unknown key `{key}` on line {line}")));
        };
        if values.insert(known, (line, value.trim())).is_some() {
            return Err(Error::Config(format!("duplicate key `{key}` on line {line}")));
        }
    }

    let species: Species = match values.get("species") {
        Some((_, v)) => v.parse()?,
        None => return Err(Error::MissingKey("species".into())),
    };
    let mut cell = CellConfig::new(species, 0.0, 0.0, 0.0, 0.0, 0.0);
    let mut beam = BeamConfig {
        p_control_mw: 0.0,
        p_signal_mw: 0.0,
        delta_ghz: 0.0,
        p_pump_mw: 0.0,
        delta_pump_ghz: 0.0,
        omega_a: 0.0,
        r_sd: 0.0,
    };
    for key in numeric_keys() {
        match values.get(key) {
            Some(&(line, text)) => {
                let v: f64 = text.parse().map_err(|_| Error::Parse {
                    line,
                    message: format!("`{key}`: `{text}` is not a number"),
                })?;
                if !v.is_finite() {
                    return Err(Error::Parse {
                        line,
                        message: format!("`{key}` must be finite"),
                    });
                }
                set_key(&mut cell, &mut beam, key, v)?;
            }
            None if OPTIONAL.contains(&key) => {}
            None => return Err(Error::MissingKey(key.to_string())),
        }
    }
    cell.validate()?;
    beam.validate()?;
    Ok((cell, beam))
}

/// Set a numeric key, given in the file's units.
pub fn set_key(cell: &mut CellConfig, beam: &mut BeamConfig, key: &str, value: f64) -> Result<()> {
    match key {
        "temperature_c" => cell.temperature_k = units::celsius_to_kelvin(value),
        "length_cm" => cell.length_cm = value,
        "area_cm2" => cell.area_cm2 = value,
        "gamma_opt_ghz" => cell.gamma_opt_ghz = value,
        "wavelength_nm" => cell.wavelength_nm = value,
        "f_osc" => cell.oscillator_strength = value,
        "sigma_se_cm2" => cell.spin_exchange_cross_section_cm2 = value,
        "p_control_mw" => beam.p_control_mw = value,
        "p_signal_uw" => beam.p_signal_mw = value / 1e3,
        "delta_ghz" => beam.delta_ghz = value,
        "p_pump_mw" => beam.p_pump_mw = value,
        "delta_pump_ghz" => beam.delta_pump_ghz = value,
        "omega_a_hz" => beam.omega_a = units::hz_to_rad(value),
        "r_sd_hz" => beam.r_sd = units::hz_to_rad(value),
        other => {
            return Err(Error::Config(format!(
                "unknown numeric key `{other}` (valid: {})",
                numeric_keys().collect::<Vec<_>>().join(", ")
            )))
        }
    }
    Ok(())
}

/// Read a numeric key back in the file's units.
pub fn get_key(cell: &CellConfig, beam: &BeamConfig, key: &str) -> Result<f64> {
    Ok(match key {
        "temperature_c" => units::kelvin_to_celsius(cell.temperature_k),
        "length_cm" => cell.length_cm,
        "area_cm2" => cell.area_cm2,
        "gamma_opt_ghz" => cell.gamma_opt_ghz,
        "wavelength_nm" => cell.wavelength_nm,
        "f_osc" => cell.oscillator_strength,
        "sigma_se_cm2" => cell.spin_exchange_cross_section_cm2,
        "p_control_mw" => beam.p_control_mw,
        "p_signal_uw" => beam.p_signal_mw * 1e3,
        "delta_ghz" => beam.delta_ghz,
        "p_pump_mw" => beam.p_pump_mw,
        "delta_pump_ghz" => beam.delta_pump_ghz,
        "omega_a_hz" => units::rad_to_hz(beam.omega_a),
        "r_sd_hz" => units::rad_to_hz(beam.r_sd),
        other => return Err(Error::Config(format!("unknown numeric key `{other}`"))),
    })
}

/// Shortest decimal for `key` that parses back to exactly the stored value.
fn encode(cell: &CellConfig, beam: &BeamConfig, key: &str) -> Result<String> {
    let target = get_key(cell, beam, key)?;
    let reproduces = |text: &str| -> bool {
        let Ok(v) = text.parse::<f64>() else { return false };
        let (mut c, mut b) = (cell.clone(), beam.clone());
        set_key(&mut c, &mut b, key, v).is_ok() && c == *cell && b == *beam
    };
    for digits in 1..=17 {
        let text = format_decimal(target, digits);
        if reproduces(&text) {
            return Ok(text);
        }
    }
    // The unit conversion is not injective here; search neighbouring doubles.
    let (mut up, mut down) = (target, target);
    for _ in 0..64 {
        up = up.next_up();
        down = down.next_down();
        for candidate in [up, down] {
            let text = format!("{candidate:e}");
            if reproduces(&text) {
                return Ok(text);
            }
        }
    }
    log::warn!("`{key}` does not round-trip exactly through its file unit");
    Ok(format!("{target:e}"))
}

fn format_decimal(v: f64, digits: usize) -> String {
    let text = format!("{:.*e}", digits - 1, v);
    let parsed: f64 = text.parse().unwrap_or(v);
    let plain = format!("{parsed}");
    if plain.len() <= text.len() + 2 {
        plain
    } else {
        text
    }
}

/// Serialize to the configuration format; `parse_config` inverts it exactly.
pub fn to_config_text(cell: &CellConfig, beam: &BeamConfig) -> Result<String> {
    let mut out = String::new();
    let _ = writeln!(out, "species = {}", cell.species);
    for key in numeric_keys() {
        let _ = writeln!(out, "{key} = {}", encode(cell, beam, key)?);
    }
    Ok(out)
}

/// Convenience for callers that only need the derived rates of a file.
pub fn derive_from_text(text: &str) -> Result<params::DerivedRates> {
    let (cell, beam) = parse_config(text)?;
    params::derive_all(&cell, &beam)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios;
    use proptest::prelude::*;

    fn rb_text() -> String {
        let s = scenarios::builtin("rb_fig2").unwrap();
        to_config_text(&s.cell, &s.beam).unwrap()
    }

    #[test]
    fn builtin_round_trips_bit_exactly() {
        for name in scenarios::NAMES {
            let s = scenarios::builtin(name).unwrap();
            let text = to_config_text(&s.cell, &s.beam).unwrap();
            let (cell, beam) = parse_config(&text).unwrap();
            assert_eq!(cell, s.cell, "{name}");
            assert_eq!(beam, s.beam, "{name}");
        }
    }

    #[test]
    fn written_values_are_human_readable() {
        let text = rb_text();
        assert!(text.contains("temperature_c = 154\n"), "{text}");
        assert!(text.contains("omega_a_hz = 268\n"), "{text}");
        assert!(text.contains("p_signal_uw = 20\n"), "{text}");
        assert!(text.contains("delta_ghz = 89\n"), "{text}");
    }

    #[test]
    fn missing_key_is_named() {
        let text: String = rb_text()
            .lines()
            .filter(|l| !l.starts_with("delta_ghz"))
            .map(|l| format!("{l}\n"))
            .collect();
        let err = parse_config(&text).unwrap_err();
        assert_eq!(err.to_string(), "missing key: delta_ghz");
    }

    #[test]
    fn malformed_number_reports_line() {
        let text = rb_text().replace("length_cm = 1", "length_cm = one");
        let line = text.lines().position(|l| l.starts_with("length_cm")).unwrap() + 1;
        match parse_config(&text).unwrap_err() {
            Error::Parse { line: l, .. } => assert_eq!(l, line),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unphysical_temperature_is_a_domain_error() {
        let text = rb_text().replace("temperature_c = 154", "temperature_c = -300");
        assert!(matches!(parse_config(&text), Err(Error::Domain(_))));
    }

    #[test]
    fn unknown_and_duplicate_keys_are_rejected() {
        let text = format!("{}magnetic_field_g = 1\n", rb_text());
        assert!(matches!(parse_config(&text), Err(Error::Config(_))));
        let text = format!("{}delta_ghz = 90\n", rb_text());
        assert!(matches!(parse_config(&text), Err(Error::Config(_))));
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let text = rb_text().replace("delta_ghz = 89", "\n# probe\ndelta_ghz = 89   # blue of D1\n");
        let (_, beam) = parse_config(&text).unwrap();
        assert_eq!(beam.delta_ghz, 89.0);
    }

    proptest! {
        #[test]
        fn arbitrary_configs_round_trip(
            t in 20.0f64..300.0,
            omega_hz in -2000.0f64..2000.0,
            ps in 0.0f64..500.0,
            delta in -500.0f64..500.0,
            rsd in 0.0f64..1000.0,
        ) {
            let mut s = scenarios::builtin("rb_fig2").unwrap();
            set_key(&mut s.cell, &mut s.beam, "temperature_c", t).unwrap();
            set_key(&mut s.cell, &mut s.beam, "omega_a_hz", omega_hz).unwrap();
            set_key(&mut s.cell, &mut s.beam, "p_signal_uw", ps).unwrap();
            set_key(&mut s.cell, &mut s.beam, "delta_ghz", delta).unwrap();
            set_key(&mut s.cell, &mut s.beam, "r_sd_hz", rsd).unwrap();
            let text = to_config_text(&s.cell, &s.beam).unwrap();
            let (cell, beam) = parse_config(&text).unwrap();
            prop_assert_eq!(cell, s.cell);
            prop_assert_eq!(beam, s.beam);
        }
    }
}
