//! Time-domain spin/Stokes integration with lock-in readout.
//!
//! The spin density `f` obeys damped Larmor precession, pumping, relaxation,
//! the vector light shift of the circular Stokes component `s3`, and optical
//! pumping by `s3` itself. The light sees the spin through Faraday rotation
//! of `(s1, s2)` and is attenuated by off-resonant absorption.
//!
//! Light propagation is treated as instantaneous: at every time step the
//! Stokes vector is re-propagated through the frozen spin field. Spin
//! dynamics use a fixed-step classical RK4 whose step divides the modulation
//! period exactly, so the demodulation windows are phase-exact.

use std::f64::consts::TAU;

use nalgebra::Vector3;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::analytic::{Spectrum, SpectrumPoint};
use crate::error::{Error, Result};
use crate::params::{self, BeamConfig, CellConfig, DerivedRates, Species};

/// Largest Faraday rotation tolerated inside one spatial cell, rad.
pub const MAX_CELL_ROTATION: f64 = 0.1;

/// Drives slower than this fraction of the fastest spin rate are treated as static.
const QUASI_STATIC: f64 = 1e-6;

const FIXED_POINT_TOL: f64 = 1e-10;
const FIXED_POINT_MAX_ITER: usize = 50;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum SpatialMode {
    /// One spatially uniform spin, closed-form light propagation.
    #[default]
    Uniform,
    /// `cells` slabs along the beam, each with its own spin.
    Spatial { cells: usize },
}

impl SpatialMode {
    pub const DEFAULT_CELLS: usize = 64;

    pub fn cells(self) -> usize {
        match self {
            SpatialMode::Uniform => 1,
            SpatialMode::Spatial { cells } => cells,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationSettings {
    pub mode: SpatialMode,
    /// dt = `dt_fraction` · min(1/|ω|, 1/ω_a, 1/γ, 1/light-shift rate), rounded
    /// down so that it divides the modulation period.
    pub dt_fraction: f64,
    /// Demodulation window length in modulation periods.
    pub demod_periods: usize,
    /// Largest accepted change of the normalized response between windows.
    pub drift_tolerance: f64,
    pub max_windows: usize,
    /// Settling time is max(`settle_decay_times`/γ, `settle_periods`·2π/|ω|).
    pub settle_decay_times: f64,
    pub settle_periods: f64,
    /// Include optical pumping of f_x by the probe's circular component.
    pub probe_pumping: bool,
    /// Cell-count doublings allowed after a refinement error.
    pub max_refinements: usize,
}

impl Default for SimulationSettings {
    fn default() -> Self {
        SimulationSettings {
            mode: SpatialMode::Uniform,
            dt_fraction: 0.05,
            demod_periods: 8,
            drift_tolerance: 5e-3,
            max_windows: 64,
            settle_decay_times: 10.0,
            settle_periods: 20.0,
            probe_pumping: true,
            max_refinements: 4,
        }
    }
}

impl SimulationSettings {
    pub fn spatial(cells: usize) -> Self {
        SimulationSettings {
            mode: SpatialMode::Spatial { cells },
            ..Default::default()
        }
    }
}

/// Polarization-modulated probe: s2 = s⊥ cos(ωt + φ), s3 = −s⊥ sin(ωt + φ).
///
/// This is the real part of s2 = s⊥e^{i(ωt+φ)}, s3 = i·s⊥e^{i(ωt+φ)}.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriveWaveform {
    pub omega: f64,
    /// Control and signal flux densities, photons/(s·cm²).
    pub s1_in: f64,
    pub s_perp_in: f64,
    pub phase: f64,
}

impl DriveWaveform {
    pub fn new(omega: f64, s1_in: f64, s_perp_in: f64) -> Result<Self> {
        if !(s_perp_in >= 0.0 && s_perp_in <= s1_in) {
            return Err(Error::Domain(format!(
                "modulation depth s⊥ = {s_perp_in:e} must lie in [0, s1 = {s1_in:e}]"
            )));
        }
        Ok(DriveWaveform {
            omega,
            s1_in,
            s_perp_in,
            phase: 0.0,
        })
    }

    pub fn from_rates(rates: &DerivedRates, omega: f64) -> Result<Self> {
        DriveWaveform::new(omega, rates.s1_in / rates.area_cm2, rates.s_perp_in / rates.area_cm2)
    }

    pub fn with_phase(mut self, phase: f64) -> Self {
        self.phase = phase;
        self
    }

    #[inline]
    pub fn s2(&self, t: f64) -> f64 {
        self.s_perp_in * (self.omega * t + self.phase).cos()
    }

    #[inline]
    pub fn s3(&self, t: f64) -> f64 {
        -self.s_perp_in * (self.omega * t + self.phase).sin()
    }

    pub fn stokes(&self, t: f64) -> Vector3<f64> {
        Vector3::new(self.s1_in, self.s2(t), self.s3(t))
    }
}

/// Spin density and Stokes fields on the spatial grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinLightState {
    /// Cell centers, cm.
    pub grid_x: Vec<f64>,
    /// Spin density per cell, cm⁻³.
    pub f: Vec<Vector3<f64>>,
    /// Stokes vector leaving each cell, photons/(s·cm²).
    pub s: Vec<Vector3<f64>>,
    /// Polarization consistent with each cell's f_z.
    pub p_a: Vec<f64>,
    pub t: f64,
}

impl SpinLightState {
    pub fn cells(&self) -> usize {
        self.f.len()
    }

    pub fn mean_spin(&self) -> Vector3<f64> {
        self.f.iter().sum::<Vector3<f64>>() / self.f.len() as f64
    }
}

/// Relaxation coefficients for the current axial polarization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpinCoefficients {
    pub p_a: f64,
    pub q: f64,
    pub gamma_1: f64,
    pub gamma: f64,
}

/// The spin/light equations for one configuration.
#[derive(Debug, Clone)]
pub struct BlochModel {
    species: Species,
    n_a: f64,
    sigma: f64,
    delta_over_gamma: f64,
    length: f64,
    r_pump: f64,
    r_sd: f64,
    r_se: f64,
    omega_a: f64,
    s1_in: f64,
    s_perp_in: f64,
    d_delta: f64,
    probe_pumping: bool,
    dx: f64,
    /// Cell-averaged s3 attenuation, one entry per cell.
    s3_weights: Vec<f64>,
    cell_transmission: f64,
    uniform: bool,
}

impl BlochModel {
    pub fn new(rates: &DerivedRates, mode: SpatialMode, probe_pumping: bool) -> Result<Self> {
        let cells = mode.cells();
        if cells == 0 {
            return Err(Error::Domain("spatial grid needs at least one cell".into()));
        }
        let kappa = rates.n_a * rates.sigma_delta;
        let dx = rates.length_cm / cells as f64;
        let uniform = matches!(mode, SpatialMode::Uniform);
        let s3_weights = if uniform {
            vec![params::mean_attenuation(rates.d_delta)]
        } else {
            let cell_avg = params::mean_attenuation(kappa * dx);
            (0..cells).map(|i| (-kappa * dx * i as f64).exp() * cell_avg).collect()
        };
        Ok(BlochModel {
            species: rates.species,
            n_a: rates.n_a,
            sigma: rates.sigma_delta,
            delta_over_gamma: rates.delta_over_gamma,
            length: rates.length_cm,
            r_pump: rates.r_pump,
            r_sd: rates.r_sd,
            r_se: rates.r_se,
            omega_a: rates.omega_a,
            s1_in: rates.s1_in / rates.area_cm2,
            s_perp_in: rates.s_perp_in / rates.area_cm2,
            d_delta: rates.d_delta,
            probe_pumping,
            dx,
            s3_weights,
            cell_transmission: (-kappa * dx).exp(),
            uniform,
        })
    }

    pub fn cells(&self) -> usize {
        self.s3_weights.len()
    }

    /// Drive at two-photon detuning `omega` with this model's beam.
    pub fn drive(&self, omega: f64) -> Result<DriveWaveform> {
        DriveWaveform::new(omega, self.s1_in, self.s_perp_in)
    }

    /// Solve p = 2f_z / (q(p)·n_a) by fixed-point iteration from `guess`.
    pub fn polarization(&self, f_z: f64, guess: f64) -> Result<f64> {
        let target = 2.0 * f_z / self.n_a;
        if !target.is_finite() {
            return Err(Error::Integration {
                t: f64::NAN,
                message: format!("non-finite axial spin {f_z}"),
            });
        }
        let q_full = params::q_factor(self.species, 1.0);
        if target.abs() >= q_full {
            return Ok(target.signum());
        }
        let mut p = guess.clamp(-1.0, 1.0);
        for _ in 0..FIXED_POINT_MAX_ITER {
            let next = (target / params::q_factor(self.species, p)).clamp(-1.0, 1.0);
            if (next - p).abs() <= FIXED_POINT_TOL * next.abs() + 1e-300 {
                return Ok(next);
            }
            p = next;
        }
        // p·q(p) is strictly increasing on [-1, 1]; finish by bisection.
        let (mut lo, mut hi) = (-1.0f64, 1.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid * params::q_factor(self.species, mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= FIXED_POINT_TOL * mid.abs().max(1e-300) {
                break;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    pub fn coefficients(&self, p_a: f64) -> SpinCoefficients {
        let q = params::q_factor(self.species, p_a);
        let gamma_1 = (self.r_sd + self.r_pump) / q;
        let gamma_se = params::gamma_se_unchecked(self.species, q, self.omega_a, self.r_se);
        SpinCoefficients {
            p_a,
            q,
            gamma_1,
            gamma: gamma_1 + gamma_se,
        }
    }

    /// Steady state with the probe's transverse modulation switched off.
    pub fn steady_state(&self) -> Result<SpinLightState> {
        let total = self.r_pump + self.r_sd;
        let p = if total > 0.0 { self.r_pump / total } else { 0.0 };
        let f_z = self.n_a * params::q_factor(self.species, p) * p / 2.0;
        Ok(self.state_with_spin(Vector3::new(0.0, 0.0, f_z), p))
    }

    /// A state with the same spin vector in every cell.
    pub fn state_with_spin(&self, f: Vector3<f64>, p_a: f64) -> SpinLightState {
        let n = self.cells();
        let grid_x = (0..n).map(|i| (i as f64 + 0.5) * self.dx).collect();
        let s_in = Vector3::new(self.s1_in, 0.0, 0.0);
        let s = (0..n)
            .map(|i| s_in * self.cell_transmission.powi(i as i32 + 1))
            .collect();
        SpinLightState {
            grid_x,
            f: vec![f; n],
            s,
            p_a: vec![p_a; n],
            t: 0.0,
        }
    }

    /// Light-shift rate (2/q)(Δ/Γ)σ·s3 for unit s3 at polarization p.
    fn lightshift_per_flux(&self, q: f64) -> f64 {
        2.0 / q * self.delta_over_gamma * self.sigma
    }

    #[inline]
    fn derivative(&self, f: &Vector3<f64>, s3: f64, c: &SpinCoefficients) -> Vector3<f64> {
        let ls = self.lightshift_per_flux(c.q) * s3;
        let pump_x = if self.probe_pumping {
            self.n_a * self.sigma * s3
        } else {
            0.0
        };
        Vector3::new(
            -c.gamma * f.x + self.omega_a * f.y + pump_x,
            -self.omega_a * f.x - c.gamma * f.y - ls * f.z,
            -c.gamma_1 * f.z + ls * f.y + self.n_a * self.r_pump / 2.0,
        )
    }

    /// Advance every cell's spin by one RK4 step of length `dt`.
    ///
    /// Relaxation coefficients are taken from the polarization at the start of
    /// the step and refreshed at its end.
    pub fn step_spin(&self, state: &mut SpinLightState, drive: &DriveWaveform, dt: f64) -> Result<()> {
        let t = state.t;
        let s3_0 = drive.s3(t);
        let s3_h = drive.s3(t + 0.5 * dt);
        let s3_1 = drive.s3(t + dt);
        for i in 0..state.f.len() {
            let c = self.coefficients(state.p_a[i]);
            let w = self.s3_weights[i];
            let f = state.f[i];
            let k1 = self.derivative(&f, w * s3_0, &c);
            let k2 = self.derivative(&(f + k1 * (0.5 * dt)), w * s3_h, &c);
            let k3 = self.derivative(&(f + k2 * (0.5 * dt)), w * s3_h, &c);
            let k4 = self.derivative(&(f + k3 * dt), w * s3_1, &c);
            let next = f + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
            if !(next.x.is_finite() && next.y.is_finite() && next.z.is_finite()) {
                return Err(Error::Integration {
                    t: t + dt,
                    message: format!("non-finite spin in cell {i}: {next:?} (from {f:?})"),
                });
            }
            state.f[i] = next;
            state.p_a[i] = self
                .polarization(next.z, state.p_a[i])
                .map_err(|_| Error::Integration {
                    t: t + dt,
                    message: format!("cannot solve polarization in cell {i}"),
                })?;
        }
        state.t = t + dt;
        Ok(())
    }

    /// Propagate `s_in` through the frozen spin field; returns the Stokes
    /// vector after each cell (the last entry is the cell output).
    pub fn propagate_light(&self, state: &SpinLightState, s_in: Vector3<f64>) -> Result<Vec<Vector3<f64>>> {
        let scale = self.delta_over_gamma * self.sigma;
        if self.uniform {
            let q = params::q_factor(self.species, state.p_a[0]);
            let theta = scale * self.length * state.f[0].x / q;
            let (sin, cos) = (2.0 * theta).sin_cos();
            let att = (-self.d_delta).exp();
            let out = Vector3::new(
                att * (cos * s_in.x - sin * s_in.y),
                att * (cos * s_in.y + sin * s_in.x),
                att * s_in.z,
            );
            return Ok(vec![out]);
        }
        let mut s = s_in;
        let mut out = Vec::with_capacity(state.f.len());
        for (f, &p) in state.f.iter().zip(&state.p_a) {
            let q = params::q_factor(self.species, p);
            let rotation = 2.0 * scale * self.dx * f.x / q;
            if rotation.abs() > MAX_CELL_ROTATION {
                return Err(Error::Refinement { rotation });
            }
            let (sin, cos) = rotation.sin_cos();
            s = Vector3::new(cos * s.x - sin * s.y, cos * s.y + sin * s.x, s.z) * self.cell_transmission;
            out.push(s);
        }
        Ok(out)
    }

    fn output(&self, state: &SpinLightState, s_in: Vector3<f64>) -> Result<Vector3<f64>> {
        let s = self.propagate_light(state, s_in)?;
        Ok(*s.last().expect("at least one cell"))
    }

    /// Largest step allowed at drive frequency `omega`.
    pub fn max_step(&self, omega: f64, fraction: f64) -> Result<f64> {
        let state = self.steady_state()?;
        let c = self.coefficients(state.p_a[0]);
        let lightshift = (self.lightshift_per_flux(c.q) * self.s_perp_in).abs();
        let fastest = [omega.abs(), self.omega_a.abs(), c.gamma, c.gamma_1, lightshift]
            .into_iter()
            .fold(0.0f64, f64::max);
        if !(fastest > 0.0) {
            return Err(Error::Domain("no finite time scale to set the step".into()));
        }
        Ok(fraction / fastest)
    }

    /// Steady-state response at one modulation frequency.
    pub fn simulate_point(&self, omega: f64, settings: &SimulationSettings) -> Result<PointResponse> {
        self.simulate_point_shifted(omega, settings, 0)
    }

    /// As [`simulate_point`](Self::simulate_point), with the drive (and the
    /// lock-in reference) delayed by `shift_periods` whole modulation periods.
    pub fn simulate_point_shifted(
        &self,
        omega: f64,
        settings: &SimulationSettings,
        shift_periods: u32,
    ) -> Result<PointResponse> {
        if !omega.is_finite() {
            return Err(Error::Domain(format!(
                "modulation frequency must be finite, got {omega}"
            )));
        }
        let gamma = self.coefficients(self.steady_state()?.p_a[0]).gamma;
        if !(gamma > 0.0) {
            return Err(Error::Singularity("spin decoherence rate is zero".into()));
        }
        let dt_max = self.max_step(omega, settings.dt_fraction)?;
        let settle_decay = settings.settle_decay_times / gamma;
        let norm = (-self.d_delta).exp() * self.s_perp_in;
        if self.s_perp_in == 0.0 {
            return Err(Error::Domain("signal power is zero; nothing to demodulate".into()));
        }

        if omega.abs() <= QUASI_STATIC * gamma.max(self.omega_a.abs()) {
            // A static drive has no lock-in reference; resolve the complex
            // response from the in-phase (s2) and quadrature (s3) static drives.
            let larmor = if self.omega_a != 0.0 {
                TAU / self.omega_a.abs()
            } else {
                1.0 / gamma
            };
            let window = (settings.demod_periods as f64 * larmor / dt_max).ceil() as usize;
            let settle = (settle_decay / dt_max).ceil() as usize;
            let drive = self.drive(0.0)?;
            let re = self.run_static(&drive, dt_max, settle, window, settings)?;
            let im = self.run_static(&drive.with_phase(-TAU / 4.0), dt_max, settle, window, settings)?;
            let transmission = Complex64::new(re.s2 / norm, im.s2 / norm);
            let s3_transmission = Complex64::new(im.s3 / self.s_perp_in, 0.0);
            return Ok(PointResponse {
                omega,
                transmission,
                s3_transmission,
                windows: re.windows.max(im.windows),
                drift: re.drift.max(im.drift),
            });
        }

        let period = TAU / omega.abs();
        let per_period = (period / dt_max).ceil().max(1.0) as usize;
        let dt = period / per_period as f64;
        let settle_periods = (settle_decay / period).max(settings.settle_periods).ceil() as usize;
        let window = settings.demod_periods.max(1) * per_period;

        let drive = self.drive(omega)?;
        let mut state = self.steady_state()?;
        state.t = shift_periods as f64 * period;
        for _ in 0..settle_periods * per_period {
            self.step_spin(&mut state, &drive, dt)?;
        }

        let mut previous: Option<Complex64> = None;
        let mut drift = f64::INFINITY;
        for windows in 1..=settings.max_windows.max(2) {
            let (mut c2, mut s2, mut c3, mut s3) = (0.0, 0.0, 0.0, 0.0);
            for _ in 0..window {
                self.step_spin(&mut state, &drive, dt)?;
                let out = self.output(&state, drive.stokes(state.t))?;
                let (sn, cs) = (omega * state.t).sin_cos();
                c2 += out.y * cs;
                s2 += out.y * sn;
                c3 += out.z * cs;
                s3 += out.z * sn;
            }
            let scale = 2.0 / window as f64;
            let a2 = Complex64::new(c2 * scale, -s2 * scale);
            let a3 = Complex64::new(c3 * scale, -s3 * scale);
            let t = a2 / norm;
            if let Some(prev) = previous {
                drift = (t - prev).norm() / t.norm().max(1.0);
                if drift <= settings.drift_tolerance {
                    return Ok(PointResponse {
                        omega,
                        transmission: t,
                        s3_transmission: a3 / Complex64::new(0.0, self.s_perp_in),
                        windows,
                        drift,
                    });
                }
            }
            previous = Some(t);
        }
        Err(Error::Convergence {
            drift,
            windows: settings.max_windows,
        })
    }

    fn run_static(
        &self,
        drive: &DriveWaveform,
        dt: f64,
        settle: usize,
        window: usize,
        settings: &SimulationSettings,
    ) -> Result<StaticResponse> {
        let mut state = self.steady_state()?;
        for _ in 0..settle {
            self.step_spin(&mut state, drive, dt)?;
        }
        let norm = (-self.d_delta).exp() * self.s_perp_in;
        let mut previous: Option<f64> = None;
        let mut drift = f64::INFINITY;
        for windows in 1..=settings.max_windows.max(2) {
            let (mut a2, mut a3) = (0.0, 0.0);
            for _ in 0..window {
                self.step_spin(&mut state, drive, dt)?;
                let out = self.output(&state, drive.stokes(state.t))?;
                a2 += out.y;
                a3 += out.z;
            }
            let (a2, a3) = (a2 / window as f64, a3 / window as f64);
            if let Some(prev) = previous {
                drift = (a2 - prev).abs() / norm / (a2.abs() / norm).max(1.0);
                if drift <= settings.drift_tolerance {
                    return Ok(StaticResponse {
                        s2: a2,
                        s3: a3,
                        windows,
                        drift,
                    });
                }
            }
            previous = Some(a2);
        }
        Err(Error::Convergence {
            drift,
            windows: settings.max_windows,
        })
    }
}

struct StaticResponse {
    s2: f64,
    s3: f64,
    windows: usize,
    drift: f64,
}

/// Demodulated response at one modulation frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointResponse {
    pub omega: f64,
    /// S2_out / (e^{-d(Δ)} S2_in).
    pub transmission: Complex64,
    /// S3_out / S3_in without normalization; its modulus is e^{-d(Δ)}.
    pub s3_transmission: Complex64,
    pub windows: usize,
    pub drift: f64,
}

/// Simulate one point, doubling the spatial grid on refinement errors.
pub fn simulate_point(rates: &DerivedRates, omega: f64, settings: &SimulationSettings) -> Result<PointResponse> {
    let mut mode = settings.mode;
    let mut attempt = 0;
    loop {
        let model = BlochModel::new(rates, mode, settings.probe_pumping)?;
        match model.simulate_point(omega, settings) {
            Err(Error::Refinement { rotation }) => {
                if attempt >= settings.max_refinements {
                    return Err(Error::Refinement { rotation });
                }
                attempt += 1;
                mode = match mode {
                    SpatialMode::Spatial { cells } => SpatialMode::Spatial { cells: cells * 2 },
                    SpatialMode::Uniform => return Err(Error::Refinement { rotation }),
                };
                log::debug!("refining spatial grid to {} cells at ω = {omega}", mode.cells());
            }
            other => return other,
        }
    }
}

/// Transmission spectrum of the time-domain model on `grid` (rad/s).
pub fn simulate_spectrum_for(rates: &DerivedRates, grid: &[f64], settings: &SimulationSettings) -> Result<Spectrum> {
    let points = grid
        .par_iter()
        .map(|&omega| {
            simulate_point(rates, omega, settings).map(|r| SpectrumPoint {
                omega,
                transmission: r.transmission,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Spectrum::new(points, Some(rates.clone()))
}

pub fn simulate_spectrum(
    cell: &CellConfig,
    beam: &BeamConfig,
    grid: &[f64],
    settings: &SimulationSettings,
) -> Result<Spectrum> {
    let rates = params::derive_all(cell, beam)?;
    simulate_spectrum_for(&rates, grid, settings)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic;
    use crate::scenarios;
    use crate::units::hz_to_rad;
    use approx::assert_relative_eq;
    use nalgebra::{Matrix3, Vector3};

    fn rb_rates() -> DerivedRates {
        scenarios::builtin("rb_fig2").unwrap().derive().unwrap()
    }

    #[test]
    fn no_transverse_spin_means_pure_attenuation() {
        let r = rb_rates();
        let m = BlochModel::new(&r, SpatialMode::Uniform, true).unwrap();
        let state = m.steady_state().unwrap();
        let s_in = Vector3::new(3.0, 1.0, -2.0);
        let out = m.propagate_light(&state, s_in).unwrap()[0];
        assert_relative_eq!(out, s_in * r.attenuation(), max_relative = 1e-14);

        let m = BlochModel::new(&r, SpatialMode::Spatial { cells: 32 }, true).unwrap();
        let state = m.steady_state().unwrap();
        let out = *m.propagate_light(&state, s_in).unwrap().last().unwrap();
        assert_relative_eq!(out, s_in * r.attenuation(), max_relative = 1e-12);
    }

    #[test]
    fn small_rotation_matches_first_order_expansion() {
        let r = rb_rates();
        let m = BlochModel::new(&r, SpatialMode::Uniform, true).unwrap();
        let mut state = m.steady_state().unwrap();
        let q = params::q_factor(r.species, state.p_a[0]);
        // Choose f_x so that θ = 1e-5.
        let theta = 1e-5;
        state.f[0].x = theta * q / (r.delta_over_gamma * r.sigma_delta * r.length_cm);
        let s_in = Vector3::new(1.0, 0.01, 0.02);
        let out = m.propagate_light(&state, s_in).unwrap()[0];
        let first_order = r.attenuation() * (s_in.y + 2.0 * theta * s_in.x);
        assert_relative_eq!(out.y, first_order, max_relative = 1e-8);
        assert_relative_eq!(out.z, r.attenuation() * s_in.z, max_relative = 1e-14);
        // The same spin spread over 16 cells rotates identically.
        let ms = BlochModel::new(&r, SpatialMode::Spatial { cells: 16 }, true).unwrap();
        let mut ss = ms.steady_state().unwrap();
        for f in &mut ss.f {
            f.x = state.f[0].x;
        }
        let outs = *ms.propagate_light(&ss, s_in).unwrap().last().unwrap();
        assert_relative_eq!(outs, out, max_relative = 1e-12);
    }

    #[test]
    fn coarse_grid_is_refused() {
        let r = rb_rates();
        let m = BlochModel::new(&r, SpatialMode::Spatial { cells: 2 }, true).unwrap();
        let mut state = m.steady_state().unwrap();
        let q = params::q_factor(r.species, state.p_a[0]);
        for f in &mut state.f {
            f.x = 0.2 * q / (r.delta_over_gamma * r.sigma_delta * r.length_cm);
        }
        let err = m.propagate_light(&state, Vector3::new(1.0, 0.0, 0.0)).unwrap_err();
        assert!(matches!(err, Error::Refinement { .. }));
    }

    fn quiet_rates() -> DerivedRates {
        let mut r = rb_rates();
        r.r_pump = 0.0;
        r
    }

    #[test]
    fn damped_larmor_precession() {
        let r = quiet_rates();
        let m = BlochModel::new(&r, SpatialMode::Uniform, true).unwrap();
        let f0 = 1e10;
        let mut state = m.state_with_spin(Vector3::new(f0, 0.0, 0.0), 0.0);
        let drive = DriveWaveform::new(1.0, 1.0, 0.0).unwrap();
        let c = m.coefficients(0.0);
        let dt = 1e-6;
        for _ in 0..5000 {
            m.step_spin(&mut state, &drive, dt).unwrap();
        }
        let t = state.t;
        let envelope = f0 * (-c.gamma * t).exp();
        assert_relative_eq!(state.f[0].x, envelope * (r.omega_a * t).cos(), epsilon = 1e-9 * f0);
        assert_relative_eq!(state.f[0].y, -envelope * (r.omega_a * t).sin(), epsilon = 1e-9 * f0);
    }

    #[test]
    fn pumping_reaches_spin_temperature_polarization() {
        let r = rb_rates();
        let m = BlochModel::new(&r, SpatialMode::Uniform, true).unwrap();
        let mut state = m.state_with_spin(Vector3::zeros(), 0.0);
        let drive = DriveWaveform::new(1.0, 1.0, 0.0).unwrap();
        let dt = 2e-5;
        for _ in 0..50_000 {
            m.step_spin(&mut state, &drive, dt).unwrap();
        }
        let p = r.r_pump / (r.r_pump + r.r_sd);
        let expected = r.n_a * params::q_factor(r.species, p) * p / 2.0;
        assert_relative_eq!(state.f[0].z, expected, max_relative = 1e-8);
        assert_relative_eq!(state.p_a[0], p, max_relative = 1e-8);
    }

    #[test]
    fn probe_alone_builds_transverse_spin() {
        let r = quiet_rates();
        let m = BlochModel::new(&r, SpatialMode::Uniform, true).unwrap();
        let drive = m.drive(0.0).unwrap().with_phase(-TAU / 4.0);
        let s3 = drive.s3(0.0) * params::mean_attenuation(r.d_delta);
        assert!(s3 > 0.0);
        let mut state = m.state_with_spin(Vector3::zeros(), 0.0);
        for _ in 0..400_000 {
            m.step_spin(&mut state, &drive, 2e-5).unwrap();
        }

        // Algebraic steady state of the spin equation with constant s3,
        // iterating q(p) to self-consistency.
        let mut f = Vector3::zeros();
        for _ in 0..100 {
            let p = m.polarization(f.z, 0.0).unwrap();
            let q = params::q_factor(r.species, p);
            let g1 = r.r_sd / q;
            let g = g1 + params::gamma_se_unchecked(r.species, q, r.omega_a, r.r_se);
            let ls = 2.0 / q * r.delta_over_gamma * r.sigma_delta * s3;
            let a = Matrix3::new(-g, r.omega_a, 0.0, -r.omega_a, -g, -ls, 0.0, ls, -g1);
            let b = Vector3::new(-r.n_a * r.sigma_delta * s3, 0.0, 0.0);
            f = a.lu().solve(&b).unwrap();
        }
        assert!(f.x.abs() > 0.0);
        assert_relative_eq!(state.f[0], f, max_relative = 1e-6);
    }

    #[test]
    fn spin_decays_without_drive() {
        let r = quiet_rates();
        let m = BlochModel::new(&r, SpatialMode::Uniform, true).unwrap();
        let mut state = m.state_with_spin(Vector3::new(3e11, -1e11, 2e11), 0.0);
        state.p_a[0] = m.polarization(2e11, 0.0).unwrap();
        let drive = DriveWaveform::new(1.0, 1.0, 0.0).unwrap();
        let mut last = state.f[0].norm();
        for _ in 0..20_000 {
            m.step_spin(&mut state, &drive, 2e-5).unwrap();
            let now = state.f[0].norm();
            assert!(now < last);
            last = now;
        }
    }

    #[test]
    fn fixed_point_polarization_is_consistent() {
        let r = rb_rates();
        let m = BlochModel::new(&r, SpatialMode::Uniform, true).unwrap();
        for p in [0.0, 0.1, 0.52, 0.9, 0.999, -0.4] {
            let f_z = r.n_a * params::q_factor(r.species, p) * p / 2.0;
            let solved = m.polarization(f_z, 0.0).unwrap();
            assert_relative_eq!(solved, p, epsilon = 1e-9);
        }
    }

    fn weak_rates() -> DerivedRates {
        let mut scenario = scenarios::builtin("rb_fig2").unwrap();
        // Lower the alkali density until Ω ≈ 0.1γ.
        scenario.cell.temperature_k = 365.0;
        scenario.beam.p_pump_mw = 60.0;
        scenario.derive().unwrap()
    }

    #[test]
    fn weak_coupling_matches_closed_form() {
        let r = weak_rates();
        assert!(r.coupling < 0.15 * r.gamma, "Ω/γ = {}", r.coupling / r.gamma);
        let s = SimulationSettings {
            probe_pumping: false,
            ..Default::default()
        };
        for w_hz in [-400.0, -268.0, -100.0, 0.0, 150.0, 268.0, 300.0] {
            let w = hz_to_rad(w_hz);
            let sim = simulate_point(&r, w, &s).unwrap().transmission;
            let exact = analytic::transmission(w, r.coupling, r.omega_a, r.gamma).unwrap();
            assert!(
                (sim - exact).norm() <= 0.01 * exact.norm(),
                "ω = {w_hz}: {sim} vs {exact}"
            );
        }
    }

    #[test]
    fn s3_is_only_attenuated() {
        let r = rb_rates();
        let s = SimulationSettings::default();
        for w_hz in [-268.0, 0.0, 268.0] {
            let p = simulate_point(&r, hz_to_rad(w_hz), &s).unwrap();
            assert_relative_eq!(p.s3_transmission.norm(), r.attenuation(), max_relative = 1e-9);
        }
    }

    #[test]
    fn whole_period_time_shift_is_invisible() {
        let r = rb_rates();
        let m = BlochModel::new(&r, SpatialMode::Uniform, true).unwrap();
        let s = SimulationSettings::default();
        let w = hz_to_rad(250.0);
        let a = m.simulate_point_shifted(w, &s, 0).unwrap().transmission;
        let b = m.simulate_point_shifted(w, &s, 7).unwrap().transmission;
        assert!((a - b).norm() < 1e-6, "{a} vs {b}");
    }

    #[test]
    fn uniform_and_spatial_agree_for_thin_media() {
        let mut scenario = scenarios::builtin("rb_fig2").unwrap();
        scenario.beam.delta_ghz = 250.0;
        let r = scenario.derive().unwrap();
        assert!(r.d_delta <= 0.05);
        let u = SimulationSettings::default();
        let sp = SimulationSettings::spatial(16);
        for w_hz in [-268.0, 268.0] {
            let a = simulate_point(&r, hz_to_rad(w_hz), &u).unwrap().transmission;
            let b = simulate_point(&r, hz_to_rad(w_hz), &sp).unwrap().transmission;
            assert!((a - b).norm() <= 0.01 * a.norm(), "{a} vs {b}");
        }
    }

    #[test]
    fn drive_rejects_overmodulation() {
        assert!(DriveWaveform::new(1.0, 1.0, 2.0).is_err());
        let d = DriveWaveform::new(2.0, 5.0, 1.0).unwrap();
        assert_relative_eq!(d.s2(0.0), 1.0);
        assert_relative_eq!(d.s3(TAU / 8.0), -1.0, epsilon = 1e-15);
    }
}
