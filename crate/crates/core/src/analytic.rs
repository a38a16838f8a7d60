//! Closed-form CPSR spectrum of the linearised spin-light model.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::lineshape::{LineMetrics, LinePair};
use crate::params::DerivedRates;

/// One sample of a complex transmission spectrum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumPoint {
    /// Signed two-photon detuning ω, rad/s.
    pub omega: f64,
    /// S2_out / (e^{-d(Δ)} S2_in), unless built with [`Normalization::Absolute`].
    pub transmission: Complex64,
}

/// Transmission samples on a strictly increasing ω grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    points: Vec<SpectrumPoint>,
    rates: Option<DerivedRates>,
}

impl Spectrum {
    pub fn new(points: Vec<SpectrumPoint>, rates: Option<DerivedRates>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Domain("spectrum needs at least one point".into()));
        }
        if let Some(w) = points.windows(2).find(|w| !(w[1].omega > w[0].omega)) {
            return Err(Error::Domain(format!(
                "spectrum frequencies must be strictly increasing ({} then {})",
                w[0].omega, w[1].omega
            )));
        }
        if points.iter().any(|p| !p.omega.is_finite()) {
            return Err(Error::Domain("non-finite frequency in spectrum".into()));
        }
        Ok(Spectrum { points, rates })
    }

    pub fn points(&self) -> &[SpectrumPoint] {
        &self.points
    }

    pub fn rates(&self) -> Option<&DerivedRates> {
        self.rates.as_ref()
    }

    pub fn omegas(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p.omega)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Whether transmission is divided by the off-resonant attenuation e^{-d(Δ)}.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Normalization {
    #[default]
    Normalized,
    Absolute,
}

/// Complex contrast 𝒞(ω) = iΩω_a / (ω_a² − (ω − iγ)²).
pub fn complex_contrast(omega: f64, coupling: f64, omega_a: f64, gamma: f64) -> Result<Complex64> {
    if !(gamma > 0.0) {
        return Err(Error::Singularity(format!(
            "spin decoherence rate must be > 0 (got {gamma}); 𝒞 diverges at ω = ±ω_a"
        )));
    }
    let shifted = Complex64::new(omega, -gamma);
    let denom = omega_a * omega_a - shifted * shifted;
    Ok(Complex64::new(0.0, coupling * omega_a) / denom)
}

/// Normalized transmission 1 − 𝒞(ω).
pub fn transmission(omega: f64, coupling: f64, omega_a: f64, gamma: f64) -> Result<Complex64> {
    Ok(Complex64::new(1.0, 0.0) - complex_contrast(omega, coupling, omega_a, gamma)?)
}

pub fn spectrum(grid: &[f64], rates: &DerivedRates) -> Result<Spectrum> {
    spectrum_with(grid, rates, Normalization::Normalized)
}

pub fn spectrum_with(grid: &[f64], rates: &DerivedRates, norm: Normalization) -> Result<Spectrum> {
    let scale = match norm {
        Normalization::Normalized => 1.0,
        Normalization::Absolute => rates.attenuation(),
    };
    let points = grid
        .iter()
        .map(|&omega| {
            let t = transmission(omega, rates.coupling, rates.omega_a, rates.gamma)?;
            Ok(SpectrumPoint {
                omega,
                transmission: t * scale,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Spectrum::new(points, Some(rates.clone()))
}

/// `n` evenly spaced points from `min` to `max` inclusive.
pub fn linspace(min: f64, max: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![min],
        _ => {
            let step = (max - min) / (n - 1) as f64;
            (0..n)
                .map(|i| if i == n - 1 { max } else { min + step * i as f64 })
                // Keep an exact zero when the grid straddles it.
                .map(|v| if v.abs() < 1e-9 * step.abs() { 0.0 } else { v })
                .collect()
        }
    }
}

/// Weak-absorption estimate Ω ≈ d(0)·p_a·R_c/q.
pub fn approx_coupling(d0: f64, p_a: f64, r_c: f64, q: f64) -> f64 {
    d0 * p_a * r_c / q
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingEstimate {
    pub approximate: f64,
    pub exact: f64,
    pub d_delta: f64,
    /// d(Δ) small enough for the estimate to be meaningful.
    pub weak_absorption: bool,
}

pub fn approx_coupling_for(rates: &DerivedRates) -> CouplingEstimate {
    CouplingEstimate {
        approximate: approx_coupling(rates.d_0, rates.p_a, rates.r_c, rates.q),
        exact: rates.coupling,
        d_delta: rates.d_delta,
        weak_absorption: rates.d_delta < 0.1,
    }
}

/// Line positions, widths and contrast predicted without fitting.
///
/// `narrow` reports whether γ ≪ ω_a holds (γ < ω_a/5).
pub fn closed_form_metrics(rates: &DerivedRates) -> (LinePair, bool) {
    let gamma = rates.gamma;
    let resonance = rates.resonance_frequency();
    let contrast = rates.coupling / (2.0 * gamma);
    let exact = if resonance > 0.0 {
        rates.coupling * rates.omega_a / (2.0 * gamma * resonance)
    } else {
        0.0
    };
    let sign = if rates.coupling >= 0.0 { 1.0 } else { -1.0 };
    let line = |center: f64, is_gain: bool| LineMetrics {
        center,
        fwhm: 2.0 * gamma,
        contrast: contrast.abs(),
        extremum_contrast: exact.abs(),
        raw_fwhm: None,
        is_gain,
        fit_residual: 0.0,
    };
    let pair = LinePair {
        absorption: line(sign * resonance, false),
        gain: line(-sign * resonance, true),
    };
    (pair, gamma < rates.omega_a.abs() / 5.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn zero_coupling_is_transparent() {
        for w in [-500.0, -1.0, 0.0, 3.0, 1e6] {
            let t = transmission(w, 0.0, 100.0, 5.0).unwrap();
            assert_eq!(t, Complex64::new(1.0, 0.0));
        }
    }

    #[test]
    fn full_absorption_at_critical_coupling() {
        let (gamma, omega_a) = (1.0, 100.0);
        let w_r = f64::hypot(omega_a, gamma);
        let coupling = 2.0 * gamma * w_r / omega_a;
        let t = transmission(w_r, coupling, omega_a, gamma).unwrap();
        assert!(t.norm() < 1e-12, "|T| = {}", t.norm());
    }

    #[test]
    fn gain_at_anti_resonance_is_exact() {
        let (gamma, omega_a, coupling) = (7.0, 120.0, 9.0);
        let w_r = f64::hypot(omega_a, gamma);
        let g = coupling * omega_a / (2.0 * gamma * w_r);
        let minus = transmission(-w_r, coupling, omega_a, gamma).unwrap();
        let plus = transmission(w_r, coupling, omega_a, gamma).unwrap();
        assert_relative_eq!(minus.norm(), 1.0 + g, max_relative = 1e-13);
        assert_relative_eq!(plus.norm(), (1.0 - g).abs(), max_relative = 1e-13);
        assert!(plus.norm() < 1.0 && minus.norm() > 1.0);
    }

    #[test]
    fn far_detuning_is_transparent() {
        let t = transmission(1e9, 50.0, 100.0, 5.0).unwrap();
        assert!((t - 1.0).norm() < 1e-12);
        let t = transmission(-1e9, 50.0, 100.0, 5.0).unwrap();
        assert!((t - 1.0).norm() < 1e-12);
    }

    #[test]
    fn non_positive_gamma_is_singular() {
        assert!(matches!(
            complex_contrast(100.0, 1.0, 100.0, 0.0),
            Err(Error::Singularity(_))
        ));
        assert!(complex_contrast(10.0, 1.0, 100.0, -1.0).is_err());
    }

    #[test]
    fn approximate_coupling_limits() {
        assert_eq!(approx_coupling(130.0, 0.0, 57.0, 7.4), 0.0);
        assert_relative_eq!(approx_coupling(100.0, 0.5, 10.0, 5.0), 100.0);
    }

    #[test]
    fn closed_form_examples() {
        let mut r = crate::scenarios::builtin("rb_fig2").unwrap().derive().unwrap();
        r.gamma = 50.0;
        r.coupling = 100.0;
        let (pair, _) = closed_form_metrics(&r);
        assert_relative_eq!(pair.absorption.contrast, 1.0);
        assert_relative_eq!(pair.gain.fwhm, 100.0);
        assert_relative_eq!(pair.absorption.center, r.omega_a.hypot(50.0));
        assert_relative_eq!(pair.gain.center, -r.omega_a.hypot(50.0));
    }

    #[test]
    fn spectrum_rejects_unsorted_grid() {
        let r = crate::scenarios::builtin("rb_fig2").unwrap().derive().unwrap();
        assert!(spectrum(&[1.0, 0.5], &r).is_err());
        assert!(spectrum(&[], &r).is_err());
    }

    #[test]
    fn absolute_normalization_applies_attenuation() {
        let r = crate::scenarios::builtin("rb_fig2").unwrap().derive().unwrap();
        let grid = [-100.0, 0.0, 2000.0];
        let a = spectrum(&grid, &r).unwrap();
        let b = spectrum_with(&grid, &r, Normalization::Absolute).unwrap();
        for (p, q) in a.points().iter().zip(b.points()) {
            assert_relative_eq!((p.transmission * r.attenuation()).re, q.transmission.re);
        }
    }

    #[test]
    fn dense_grid_minimum_sits_on_resonance() {
        let (gamma, omega_a, coupling) = (30.0, 1700.0, 55.0);
        let grid = linspace(0.0, 4000.0, 40001);
        let step = grid[1] - grid[0];
        let best = grid
            .iter()
            .copied()
            .min_by(|a, b| {
                let ta = transmission(*a, coupling, omega_a, gamma).unwrap().norm();
                let tb = transmission(*b, coupling, omega_a, gamma).unwrap().norm();
                ta.total_cmp(&tb)
            })
            .unwrap();
        assert!((best - omega_a.hypot(gamma)).abs() <= step);
    }

    proptest! {
        #[test]
        fn resonance_and_antiresonance_identity(
            gamma in 0.1f64..100.0, omega_a in 1.0f64..5000.0, coupling in -300.0f64..300.0,
        ) {
            let w_r = omega_a.hypot(gamma);
            let g = coupling * omega_a / (2.0 * gamma * w_r);
            let plus = transmission(w_r, coupling, omega_a, gamma).unwrap().norm();
            let minus = transmission(-w_r, coupling, omega_a, gamma).unwrap().norm();
            prop_assert!((plus - (1.0 - g).abs()).abs() < 1e-9 * (1.0 + g.abs()));
            prop_assert!((minus - (1.0 + g).abs()).abs() < 1e-9 * (1.0 + g.abs()));
        }

        #[test]
        fn common_rescaling_leaves_curve_invariant(
            scale in 1e-3f64..1e3, omega in -500.0f64..500.0,
            gamma in 0.5f64..50.0, omega_a in 10.0f64..300.0, coupling in 0.0f64..100.0,
        ) {
            let a = transmission(omega, coupling, omega_a, gamma).unwrap();
            let b = transmission(omega * scale, coupling * scale, omega_a * scale, gamma * scale).unwrap();
            prop_assert!((a - b).norm() < 1e-10);
        }

        #[test]
        fn zero_coupling_identity(omega in -1e4f64..1e4, gamma in 1e-3f64..1e3, omega_a in 0.0f64..1e4) {
            prop_assert_eq!(transmission(omega, 0.0, omega_a, gamma).unwrap(), Complex64::new(1.0, 0.0));
        }
    }
}
