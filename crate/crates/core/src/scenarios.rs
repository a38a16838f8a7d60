//! Reference parameter sets and batch experiments built on them.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::analytic::{self, Spectrum};
use crate::bloch::{self, SimulationSettings};
use crate::config;
use crate::error::{Error, Result};
use crate::lineshape::{self, CpsrFit};
use crate::params::{self, BeamConfig, CellConfig, DerivedRates, Species};
use crate::units::{celsius_to_kelvin, hz_to_rad, rad_to_hz};

pub const NAMES: [&str; 4] = ["rb_fig2", "rb_serf_sweep", "rb_pump_sweep", "k_fig4"];

/// Which transmission model to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Model {
    Analytic,
    Detailed,
}

impl Model {
    pub fn name(self) -> &'static str {
        match self {
            Model::Analytic => "analytic",
            Model::Detailed => "detailed",
        }
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Model {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "analytic" => Ok(Model::Analytic),
            "detailed" => Ok(Model::Detailed),
            other => Err(Error::Config(format!(
                "unknown model `{other}` (expected analytic or detailed)"
            ))),
        }
    }
}

/// Products a scenario is meant to produce.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Output {
    Spectrum,
    Metrics,
    Comparison,
}

/// One swept configuration key, values in the key's file units.
#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub key: String,
    pub values: Vec<f64>,
}

/// Larmor frequency interpolated linearly in pump power (rad/s).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LarmorRamp {
    pub p_pump_start_mw: f64,
    pub p_pump_end_mw: f64,
    pub omega_a_start: f64,
    pub omega_a_end: f64,
}

impl LarmorRamp {
    pub fn omega_a(&self, p_pump_mw: f64) -> f64 {
        let t = (p_pump_mw - self.p_pump_start_mw) / (self.p_pump_end_mw - self.p_pump_start_mw);
        self.omega_a_start + t * (self.omega_a_end - self.omega_a_start)
    }
}

/// Two-photon detuning grid in Hz: (min, max, points).
pub type GridHz = (f64, f64, usize);

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub cell: CellConfig,
    pub beam: BeamConfig,
    pub sweep: Option<Sweep>,
    pub outputs: Vec<Output>,
    pub grid_hz: Option<GridHz>,
    pub larmor_ramp: Option<LarmorRamp>,
}

impl Scenario {
    pub fn derive(&self) -> Result<DerivedRates> {
        params::derive_all(&self.cell, &self.beam)
    }

    /// Cell and beam with the sweep key set to `value` (file units).
    pub fn config_at(&self, key: &str, value: f64) -> Result<(CellConfig, BeamConfig)> {
        let (mut cell, mut beam) = (self.cell.clone(), self.beam.clone());
        config::set_key(&mut cell, &mut beam, key, value)?;
        if let Some(ramp) = &self.larmor_ramp {
            beam.omega_a = ramp.omega_a(beam.p_pump_mw);
        }
        Ok((cell, beam))
    }

    /// The scenario's detuning grid in rad/s, or a grid sized to the lines.
    pub fn grid(&self) -> Result<Vec<f64>> {
        match self.grid_hz {
            Some((min, max, n)) => Ok(analytic::linspace(hz_to_rad(min), hz_to_rad(max), n)),
            None => Ok(default_grid(&self.derive()?)),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.cell.validate()?;
        self.beam.validate()?;
        if let Some(sweep) = &self.sweep {
            if !config::numeric_keys().any(|k| k == sweep.key) {
                return Err(Error::Config(format!("sweep key `{}` is not a config key", sweep.key)));
            }
        }
        Ok(())
    }
}

/// Look up a bundled scenario.
pub fn builtin(name: &str) -> Result<Scenario> {
    let rb_cell = CellConfig::new(Species::RbNatural, celsius_to_kelvin(154.0), 1.0, 1.0, 2.6, 795.0);
    let rb_beam = BeamConfig {
        p_control_mw: 15.2,
        p_signal_mw: 20.0 / 1e3,
        delta_ghz: 89.0,
        p_pump_mw: 60.0,
        delta_pump_ghz: 45.0,
        omega_a: hz_to_rad(268.0),
        r_sd: hz_to_rad(98.0),
    };
    let scenario = match name {
        "rb_fig2" => Scenario {
            name: name.into(),
            cell: rb_cell,
            beam: rb_beam,
            sweep: None,
            outputs: vec![Output::Spectrum, Output::Metrics, Output::Comparison],
            grid_hz: Some((-600.0, 600.0, 201)),
            larmor_ramp: None,
        },
        "rb_serf_sweep" => Scenario {
            name: name.into(),
            cell: rb_cell,
            beam: rb_beam,
            sweep: Some(Sweep {
                key: "omega_a_hz".into(),
                values: (0..=10).map(|k| 100.0 + 50.0 * k as f64).collect(),
            }),
            outputs: vec![Output::Metrics],
            grid_hz: None,
            larmor_ramp: None,
        },
        "rb_pump_sweep" => Scenario {
            name: name.into(),
            cell: rb_cell,
            beam: BeamConfig {
                delta_ghz: 116.0,
                r_sd: hz_to_rad(94.0),
                p_pump_mw: 0.0,
                omega_a: hz_to_rad(290.0),
                ..rb_beam
            },
            sweep: Some(Sweep {
                key: "p_pump_mw".into(),
                values: (0..=40).map(|k| 2.5 * k as f64).collect(),
            }),
            outputs: vec![Output::Metrics],
            grid_hz: None,
            larmor_ramp: Some(LarmorRamp {
                p_pump_start_mw: 0.0,
                p_pump_end_mw: 100.0,
                omega_a_start: hz_to_rad(290.0),
                omega_a_end: hz_to_rad(400.0),
            }),
        },
        "k_fig4" => Scenario {
            name: name.into(),
            cell: CellConfig::new(Species::K, celsius_to_kelvin(185.0), 1.0, 1.5, 12.0, 770.0),
            beam: BeamConfig {
                p_control_mw: 25.0,
                p_signal_mw: 35.0 / 1e3,
                delta_ghz: 215.0,
                p_pump_mw: 1.6,
                delta_pump_ghz: 100.0,
                omega_a: hz_to_rad(29.0),
                r_sd: hz_to_rad(27.0),
            },
            sweep: None,
            outputs: vec![Output::Spectrum, Output::Metrics, Output::Comparison],
            grid_hz: Some((-60.0, 60.0, 201)),
            larmor_ramp: None,
        },
        _ => {
            return Err(Error::UnknownScenario {
                name: name.into(),
                valid: NAMES.join(", "),
            })
        }
    };
    Ok(scenario)
}

/// Grid covering both lines with ≥ 10 points per FWHM, symmetric about zero.
pub fn default_grid(rates: &DerivedRates) -> Vec<f64> {
    let gamma = rates.gamma.max(f64::MIN_POSITIVE);
    let half_span = (2.0 * rates.omega_a.abs()).max(rates.omega_a.abs() + 10.0 * gamma);
    let intervals = (2.0 * half_span / (gamma / 5.0)).ceil() as usize;
    // An even number of intervals puts a point at ω = 0.
    let intervals = (intervals + intervals % 2).clamp(40, 20_000);
    analytic::linspace(-half_span, half_span, intervals + 1)
}

/// Spectrum of `rates` on `grid` with the chosen model.
pub fn model_spectrum(
    rates: &DerivedRates,
    grid: &[f64],
    model: Model,
    settings: &SimulationSettings,
) -> Result<Spectrum> {
    match model {
        Model::Analytic => analytic::spectrum(grid, rates),
        Model::Detailed => bloch::simulate_spectrum_for(rates, grid, settings),
    }
}

/// One ω_a value of a SERF sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SerfRow {
    pub omega_a: f64,
    pub rates: DerivedRates,
    pub fit: Result<CpsrFit>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SerfSweep {
    pub model: Model,
    pub rows: Vec<SerfRow>,
    /// FWHM ≈ a·ω_a² + b over the successful rows (rad/s units).
    pub quadratic: Option<(f64, f64)>,
}

impl SerfSweep {
    /// Quadratic coefficient expected from the spin-exchange broadening alone,
    /// [q² − q(1)²]/(q·R_se), at the sweep's polarization.
    pub fn predicted_quadratic(&self) -> Option<f64> {
        let r = &self.rows.first()?.rates;
        let q_full = params::q_factor(r.species, 1.0);
        Some((r.q * r.q - q_full * q_full) / (r.q * r.r_se))
    }
}

/// Fit the CPSR lines at each Larmor frequency (rad/s).
pub fn run_serf_sweep(
    base: &Scenario,
    omega_a: &[f64],
    model: Model,
    settings: &SimulationSettings,
) -> Result<SerfSweep> {
    if omega_a.is_empty() {
        return Err(Error::Domain("SERF sweep needs at least one Larmor frequency".into()));
    }
    let rates: Vec<DerivedRates> = omega_a
        .iter()
        .map(|&w| {
            let (cell, beam) = base.config_at("omega_a_hz", rad_to_hz(w))?;
            params::derive_all(&cell, &beam)
        })
        .collect::<Result<_>>()?;
    let rows: Vec<SerfRow> = rates
        .into_par_iter()
        .zip(omega_a.par_iter())
        .map(|(rates, &w)| {
            let fit = model_spectrum(&rates, &default_grid(&rates), model, settings)
                .and_then(|s| lineshape::fit_cpsr_line(&s));
            if let Err(e) = &fit {
                log::warn!("SERF sweep row ω_a = {:.3} Hz failed: {e}", rad_to_hz(w));
            }
            SerfRow { omega_a: w, rates, fit }
        })
        .collect();
    let points: Vec<(f64, f64)> = rows
        .iter()
        .filter_map(|r| r.fit.as_ref().ok().map(|f| (r.omega_a * r.omega_a, 2.0 * f.gamma)))
        .collect();
    let quadratic = straight_line(&points);
    Ok(SerfSweep { model, rows, quadratic })
}

/// Least-squares y = a·x + b.
fn straight_line(points: &[(f64, f64)]) -> Option<(f64, f64)> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return None;
    }
    let a = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / sxx;
    Some((a, my - a * mx))
}

/// One pump power of a pump sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct PumpRow {
    pub p_pump_mw: f64,
    pub rates: DerivedRates,
    /// |T| − 1 at the gain (anti-resonance) extremum.
    pub amplification: f64,
    /// Where the amplification was evaluated, rad/s.
    pub omega: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PumpSweep {
    pub model: Model,
    pub rows: Vec<PumpRow>,
    /// (R_pump/q in rad/s, amplification) at the interpolated maximum.
    pub optimum: Option<(f64, f64)>,
}

/// Location of the analytic gain extremum, rad/s.
pub fn gain_extremum(rates: &DerivedRates) -> f64 {
    let resonance = rates.resonance_frequency();
    if rates.coupling == 0.0 {
        return -resonance;
    }
    let side = if rates.coupling > 0.0 { -1.0 } else { 1.0 };
    let magnitude = |w: f64| {
        analytic::transmission(w, rates.coupling, rates.omega_a, rates.gamma)
            .map(|t| t.norm())
            .unwrap_or(f64::NAN)
    };
    // Golden-section search for the maximum of |T| around the anti-resonance.
    let (mut a, mut b) = (
        side * resonance - 2.0 * rates.gamma,
        side * resonance + 2.0 * rates.gamma,
    );
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut c, mut d) = (b - g * (b - a), a + g * (b - a));
    let (mut fc, mut fd) = (magnitude(c), magnitude(d));
    for _ in 0..200 {
        if (b - a).abs() <= 1e-12 * resonance.max(1.0) {
            break;
        }
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = magnitude(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = magnitude(d);
        }
    }
    0.5 * (a + b)
}

/// Amplification |T| − 1 at the gain extremum for each pump power (mW).
pub fn run_pump_sweep(
    base: &Scenario,
    p_pump_mw: &[f64],
    model: Model,
    settings: &SimulationSettings,
) -> Result<PumpSweep> {
    if p_pump_mw.is_empty() {
        return Err(Error::Domain("pump sweep needs at least one power".into()));
    }
    let rows = p_pump_mw
        .par_iter()
        .map(|&p| {
            let (cell, beam) = base.config_at("p_pump_mw", p)?;
            let rates = params::derive_all(&cell, &beam)?;
            let omega = gain_extremum(&rates);
            let t = match model {
                Model::Analytic => analytic::transmission(omega, rates.coupling, rates.omega_a, rates.gamma)?,
                Model::Detailed => bloch::simulate_point(&rates, omega, settings)?.transmission,
            };
            Ok(PumpRow {
                p_pump_mw: p,
                amplification: t.norm() - 1.0,
                omega,
                rates,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let optimum = refine_maximum(
        &rows
            .iter()
            .map(|r| (r.rates.r_pump_over_q(), r.amplification))
            .collect::<Vec<_>>(),
    );
    Ok(PumpSweep { model, rows, optimum })
}

/// Vertex of the parabola through the largest sample and its neighbours
/// (sorted by x); the sample itself at the ends of the range.
fn refine_maximum(points: &[(f64, f64)]) -> Option<(f64, f64)> {
    let mut sorted: Vec<(f64, f64)> = points
        .iter()
        .copied()
        .filter(|p| p.0.is_finite() && p.1.is_finite())
        .collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let best = (0..sorted.len()).max_by(|&i, &j| sorted[i].1.total_cmp(&sorted[j].1))?;
    if best == 0 || best + 1 == sorted.len() {
        return Some(sorted[best]);
    }
    let ((x0, y0), (x1, y1), (x2, y2)) = (sorted[best - 1], sorted[best], sorted[best + 1]);
    let denom = (x0 - x1) * (x0 - x2) * (x1 - x2);
    let a = (x2 * (y1 - y0) + x1 * (y0 - y2) + x0 * (y2 - y1)) / denom;
    let b = (x2 * x2 * (y0 - y1) + x1 * x1 * (y2 - y0) + x0 * x0 * (y1 - y2)) / denom;
    if !(a < 0.0) {
        return Some(sorted[best]);
    }
    let x = -b / (2.0 * a);
    let c = y1 - a * x1 * x1 - b * x1;
    Some((x, a * x * x + b * x + c))
}

/// Analytic and detailed transmission at one detuning.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComparisonRow {
    pub omega: f64,
    pub analytic: Complex64,
    pub detailed: Complex64,
    pub difference: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
    pub max_deviation: f64,
    pub rms_deviation: f64,
    /// max |1 − T| of the analytic curve, the scale for the deviations.
    pub peak_contrast: f64,
}

pub fn compare_models(rates: &DerivedRates, grid: &[f64], settings: &SimulationSettings) -> Result<Comparison> {
    let a = analytic::spectrum(grid, rates)?;
    let d = bloch::simulate_spectrum_for(rates, grid, settings)?;
    let rows: Vec<ComparisonRow> = a
        .points()
        .iter()
        .zip(d.points())
        .map(|(pa, pd)| ComparisonRow {
            omega: pa.omega,
            analytic: pa.transmission,
            detailed: pd.transmission,
            difference: (pa.transmission - pd.transmission).norm(),
        })
        .collect();
    let max_deviation = rows.iter().map(|r| r.difference).fold(0.0, f64::max);
    let rms_deviation = (rows.iter().map(|r| r.difference.powi(2)).sum::<f64>() / rows.len() as f64).sqrt();
    let peak_contrast = rows
        .iter()
        .map(|r| (Complex64::new(1.0, 0.0) - r.analytic).norm())
        .fold(0.0, f64::max);
    Ok(Comparison {
        rows,
        max_deviation,
        rms_deviation,
        peak_contrast,
    })
}
