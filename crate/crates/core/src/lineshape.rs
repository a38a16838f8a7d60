//! Line metrics: CPSR two-photon line fits and one-photon absorption fits.

use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::analytic::Spectrum;
use crate::error::{Error, Result};
use crate::lm;
use crate::params::Species;

const RB_NATURAL_D1: &str = include_str!("../data/rb_natural_d1.lines");
const K_D1: &str = include_str!("../data/k_d1.lines");

/// One transmission line. Frequencies in rad/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineMetrics {
    pub center: f64,
    /// Full width at half maximum, 2γ for fitted lines.
    pub fwhm: f64,
    /// |𝒞| of the line.
    pub contrast: f64,
    /// |1 − T| read directly off the data at the extremum.
    pub extremum_contrast: f64,
    /// Half-prominence width measured directly on the data, when resolvable.
    pub raw_fwhm: Option<f64>,
    pub is_gain: bool,
    /// RMS residual of the fit over the whole spectrum.
    pub fit_residual: f64,
}

/// The absorption line and its mirror-image gain line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinePair {
    pub absorption: LineMetrics,
    pub gain: LineMetrics,
}

/// Result of fitting |1 − 𝒞(ω)| + b to a transmission magnitude.
#[derive(Debug, Clone, PartialEq)]
pub struct CpsrFit {
    pub coupling: f64,
    pub omega_a: f64,
    pub gamma: f64,
    pub baseline: f64,
    /// One-sigma uncertainties of (Ω, ω_a, γ, baseline) from the residual scatter.
    pub std_errors: [f64; 4],
    /// RMS residual.
    pub residual: f64,
    pub iterations: usize,
    pub absorption: LineMetrics,
    pub gain: LineMetrics,
}

impl CpsrFit {
    pub fn lines(&self) -> LinePair {
        LinePair {
            absorption: self.absorption,
            gain: self.gain,
        }
    }

    pub fn resonance_frequency(&self) -> f64 {
        self.omega_a.hypot(self.gamma)
    }

    /// Model magnitude |1 − 𝒞(ω)| + b at the fitted parameters.
    pub fn model(&self, omega: f64) -> f64 {
        let (z, _) = magnitude_terms(omega, self.coupling, self.omega_a, self.gamma);
        z.norm() + self.baseline
    }
}

/// Fit the CPSR lineshape to the transmission magnitude of `spectrum`.
pub fn fit_cpsr_line(spectrum: &Spectrum) -> Result<CpsrFit> {
    let omegas: Vec<f64> = spectrum.omegas().collect();
    let values: Vec<Complex64> = spectrum.points().iter().map(|p| p.transmission).collect();
    fit_cpsr(
        &omegas,
        &values.iter().map(|t| t.norm()).collect::<Vec<_>>(),
        Some(&values),
    )
}

/// Fit the CPSR lineshape to magnitude-only data (ω in rad/s, |T|).
pub fn fit_cpsr_magnitude(omegas: &[f64], magnitudes: &[f64]) -> Result<CpsrFit> {
    fit_cpsr(omegas, magnitudes, None)
}

/// 1 − 𝒞 and its derivatives with respect to (Ω, ω_a, γ).
fn magnitude_terms(omega: f64, coupling: f64, omega_a: f64, gamma: f64) -> (Complex64, [Complex64; 3]) {
    let i = Complex64::i();
    let w = Complex64::new(omega, -gamma);
    let d = omega_a * omega_a - w * w;
    let c = i * coupling * omega_a / d;
    let d2 = d * d;
    let dc = [
        i * omega_a / d,
        i * coupling * (d - 2.0 * omega_a * omega_a) / d2,
        2.0 * coupling * omega_a * w / d2,
    ];
    (1.0 - c, [-dc[0], -dc[1], -dc[2]])
}

fn fit_cpsr(omegas: &[f64], y: &[f64], complex: Option<&[Complex64]>) -> Result<CpsrFit> {
    if omegas.len() != y.len() {
        return Err(Error::Data("frequency and magnitude columns differ in length".into()));
    }
    if omegas.len() < 5 {
        return Err(Error::Data(format!("need at least 5 points, got {}", omegas.len())));
    }
    if y.iter().chain(omegas).any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite value in spectrum".into()));
    }
    let n = y.len();
    let guess = initial_guess(omegas, y)?;

    let sol = lm::minimize(&[guess.coupling, guess.omega_a, guess.gamma, guess.baseline], |p| {
        let (coupling, omega_a, gamma, base) = (p[0], p[1], p[2], p[3]);
        if !(gamma > 0.0) {
            return None;
        }
        let mut r = DVector::zeros(n);
        let mut j = DMatrix::zeros(n, 4);
        for k in 0..n {
            let (z, dz) = magnitude_terms(omegas[k], coupling, omega_a, gamma);
            let mag = z.norm().max(1e-300);
            r[k] = mag + base - y[k];
            for (col, dzk) in dz.iter().enumerate() {
                j[(k, col)] = (z.conj() * dzk).re / mag;
            }
            j[(k, 3)] = 1.0;
        }
        r.iter().all(|v| v.is_finite()).then_some((r, j))
    })?;

    let (mut coupling, mut omega_a) = (sol.params[0], sol.params[1]);
    let (gamma, baseline) = (sol.params[2], sol.params[3]);
    // 𝒞 is invariant under (Ω, ω_a) → (−Ω, −ω_a).
    if omega_a < 0.0 {
        coupling = -coupling;
        omega_a = -omega_a;
    }
    let residual = (sol.cost / n as f64).sqrt();
    let std_errors = standard_errors::<4>(&sol);
    let resonance = omega_a.hypot(gamma);
    let contrast = (coupling * omega_a / (2.0 * gamma * resonance)).abs();
    let sign = if coupling >= 0.0 { 1.0 } else { -1.0 };

    let line = |is_gain: bool| {
        let center = if is_gain { -sign * resonance } else { sign * resonance };
        let (extremum_contrast, raw_fwhm) = measure_extremum(omegas, y, complex, center, 1.0 + baseline, is_gain);
        LineMetrics {
            center,
            fwhm: 2.0 * gamma,
            contrast,
            extremum_contrast,
            raw_fwhm,
            is_gain,
            fit_residual: residual,
        }
    };
    Ok(CpsrFit {
        coupling,
        omega_a,
        gamma,
        baseline,
        std_errors,
        residual,
        iterations: sol.iterations,
        absorption: line(false),
        gain: line(true),
    })
}

/// √diag((JᵀJ)⁻¹·s²) with s² the residual variance; NaN when singular.
fn standard_errors<const N: usize>(sol: &lm::LmSolution) -> [f64; N] {
    let dof = sol.residuals.saturating_sub(N).max(1) as f64;
    let variance = sol.cost / dof;
    let mut out = [f64::NAN; N];
    if let Some(inv) = sol.jtj.clone().try_inverse() {
        for (k, v) in out.iter_mut().enumerate() {
            *v = (inv[(k, k)] * variance).max(0.0).sqrt();
        }
    }
    out
}

#[derive(Debug, Clone, Copy)]
struct Guess {
    coupling: f64,
    omega_a: f64,
    gamma: f64,
    baseline: f64,
}

fn argmin(y: &[f64]) -> usize {
    (0..y.len()).fold(0, |best, k| if y[k] < y[best] { k } else { best })
}

fn argmax(y: &[f64]) -> usize {
    (0..y.len()).fold(0, |best, k| if y[k] > y[best] { k } else { best })
}

fn edge_level(y: &[f64]) -> f64 {
    let m = (y.len() / 20).max(1);
    let head = y[..m].iter().sum::<f64>() / m as f64;
    let tail = y[y.len() - m..].iter().sum::<f64>() / m as f64;
    0.5 * (head + tail)
}

/// Width of the feature at `peak` where it falls to half its prominence
/// above/below `level`; `None` if a side never crosses.
fn half_prominence_width(omegas: &[f64], y: &[f64], peak: usize, level: f64) -> Option<f64> {
    let half = 0.5 * (y[peak] + level);
    let above = y[peak] > level;
    let crosses = |v: f64| if above { v <= half } else { v >= half };
    let interp = |a: usize, b: usize| {
        let t = (half - y[a]) / (y[b] - y[a]);
        omegas[a] + t * (omegas[b] - omegas[a])
    };
    let right = (peak + 1..y.len()).find(|&k| crosses(y[k])).map(|k| interp(k - 1, k))?;
    let left = (0..peak).rev().find(|&k| crosses(y[k])).map(|k| interp(k + 1, k))?;
    Some(right - left)
}

fn initial_guess(omegas: &[f64], y: &[f64]) -> Result<Guess> {
    let level = edge_level(y);
    let (lo, hi) = (argmin(y), argmax(y));
    let dip = level - y[lo];
    let bump = y[hi] - level;
    let scale = level.abs().max(1.0);
    let last = y.len() - 1;
    let interior = |k: usize| k != 0 && k != last;
    if dip.max(bump) <= 1e-9 * scale || !(interior(lo) || interior(hi)) {
        return Err(Error::NoExtremum);
    }

    let positions: Vec<f64> = [lo, hi]
        .into_iter()
        .filter(|&k| interior(k))
        .map(|k| omegas[k].abs())
        .collect();
    let omega_a = positions.iter().sum::<f64>() / positions.len() as f64;
    if !(omega_a > 0.0) {
        return Err(Error::NoExtremum);
    }

    let (peak, depth, sign) = if bump >= dip && interior(hi) {
        // Gain on the negative side means Ω > 0.
        (hi, bump, if omegas[hi] < 0.0 { 1.0 } else { -1.0 })
    } else {
        (lo, dip, if omegas[lo] > 0.0 { 1.0 } else { -1.0 })
    };
    let gamma = half_prominence_width(omegas, y, peak, level)
        .map(|w| 0.5 * w)
        .filter(|g| *g > 0.0)
        .unwrap_or(omega_a / 10.0);
    let resonance = omega_a.hypot(gamma);
    Ok(Guess {
        coupling: sign * 2.0 * gamma * depth * resonance / omega_a,
        omega_a,
        gamma,
        baseline: level - 1.0,
    })
}

/// Model-free contrast and half-prominence width around the data extremum
/// nearest `center`.
fn measure_extremum(
    omegas: &[f64],
    y: &[f64],
    complex: Option<&[Complex64]>,
    center: f64,
    level: f64,
    is_gain: bool,
) -> (f64, Option<f64>) {
    // Search within half the separation to the mirror line.
    let half_span = center.abs().max(f64::MIN_POSITIVE);
    let candidates: Vec<usize> = (0..omegas.len())
        .filter(|&k| (omegas[k] - center).abs() < half_span)
        .collect();
    let Some(&first) = candidates.first() else {
        return (f64::NAN, None);
    };
    let peak = candidates.iter().copied().fold(first, |best, k| {
        let better = if is_gain { y[k] > y[best] } else { y[k] < y[best] };
        if better {
            k
        } else {
            best
        }
    });
    let contrast = match complex {
        Some(t) => (Complex64::new(1.0, 0.0) - t[peak]).norm(),
        None => (1.0 - y[peak]).abs(),
    };
    (contrast, half_prominence_width(omegas, y, peak, level))
}

/// Fixed hyperfine components of a one-photon line.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperfineLineList {
    /// (offset in GHz, relative strength), strengths summing to one.
    lines: Vec<(f64, f64)>,
}

impl HyperfineLineList {
    pub fn new(lines: Vec<(f64, f64)>) -> Result<Self> {
        if lines.is_empty() {
            return Err(Error::Domain("hyperfine line list is empty".into()));
        }
        for &(offset, strength) in &lines {
            if !offset.is_finite() {
                return Err(Error::Domain(format!("line offset {offset} is not finite")));
            }
            if !(strength > 0.0 && strength.is_finite()) {
                return Err(Error::Domain(format!("line strength {strength} must be positive")));
            }
        }
        let total: f64 = lines.iter().map(|l| l.1).sum();
        Ok(HyperfineLineList {
            lines: lines.into_iter().map(|(o, s)| (o, s / total)).collect(),
        })
    }

    pub fn lines(&self) -> &[(f64, f64)] {
        &self.lines
    }

    pub fn for_species(species: Species) -> Self {
        match species {
            Species::RbNatural => Self::rb_natural_d1(),
            Species::K => Self::k_d1(),
        }
    }

    pub fn rb_natural_d1() -> Self {
        RB_NATURAL_D1.parse().expect("bundled Rb line list is valid")
    }

    pub fn k_d1() -> Self {
        K_D1.parse().expect("bundled K line list is valid")
    }
}

impl FromStr for HyperfineLineList {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut lines = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let parse = |field: Option<&str>, what: &str| -> Result<f64> {
                let field = field.ok_or_else(|| Error::Parse {
                    line: idx + 1,
                    message: format!("missing {what}"),
                })?;
                field.parse().map_err(|_| Error::Parse {
                    line: idx + 1,
                    message: format!("invalid {what} '{field}'"),
                })
            };
            let mut fields = content.split_whitespace();
            let offset = parse(fields.next(), "offset")?;
            let strength = parse(fields.next(), "strength")?;
            if let Some(extra) = fields.next() {
                return Err(Error::Parse {
                    line: idx + 1,
                    message: format!("unexpected field '{extra}'"),
                });
            }
            lines.push((offset, strength));
        }
        HyperfineLineList::new(lines)
    }
}

/// d(ν) = od·Σ_k w_k / (1 + ((ν − ν_k)/Γ)²), with ν and Γ in GHz.
pub fn one_photon_model(nu: &[f64], od: f64, gamma_opt: f64, lines: &HyperfineLineList) -> Result<Vec<f64>> {
    if !(gamma_opt > 0.0) {
        return Err(Error::Domain(format!(
            "optical half-width must be positive, got {gamma_opt}"
        )));
    }
    Ok(nu.iter().map(|&v| od * profile(v, gamma_opt, lines).0).collect())
}

/// Σ w_k L_k(ν) and its derivative with respect to Γ.
fn profile(nu: f64, gamma: f64, lines: &HyperfineLineList) -> (f64, f64) {
    lines.lines.iter().fold((0.0, 0.0), |(s, ds), &(offset, w)| {
        let x = (nu - offset) / gamma;
        let l = 1.0 / (1.0 + x * x);
        (s + w * l, ds + w * 2.0 * x * x * l * l / gamma)
    })
}

/// Result of a one-photon absorption fit.
#[derive(Debug, Clone, PartialEq)]
pub struct AbsorptionFit {
    pub od: f64,
    /// Optical half-width Γ, GHz.
    pub gamma_opt: f64,
    /// Fitted off-resonant reference power, in the data's units.
    pub p_ref: f64,
    /// Covariance of (od, Γ).
    pub covariance: [[f64; 2]; 2],
    /// RMS residual in optical depth.
    pub residual: f64,
    pub iterations: usize,
}

/// Fit od and Γ to (ν in GHz, transmitted power) pairs, with the reference
/// power as a nuisance parameter.
pub fn fit_one_photon(data: &[(f64, f64)], lines: &HyperfineLineList) -> Result<AbsorptionFit> {
    if data.len() < 10 {
        return Err(Error::Data(format!("need at least 10 points, got {}", data.len())));
    }
    if let Some(&(nu, p)) = data.iter().find(|(_, p)| !(*p > 0.0 && p.is_finite())) {
        return Err(Error::Data(format!(
            "non-positive transmitted power {p} at ν = {nu} GHz"
        )));
    }
    if data.iter().any(|(nu, _)| !nu.is_finite()) {
        return Err(Error::Data("non-finite frequency".into()));
    }
    let nu: Vec<f64> = data.iter().map(|d| d.0).collect();
    let y: Vec<f64> = data.iter().map(|d| -d.1.ln()).collect();
    let n = nu.len();
    let span = nu.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - nu.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(span > 0.0) {
        return Err(Error::Data("frequency grid has zero span".into()));
    }

    // Start from the best linear (od, c) fit on a log-spaced grid of Γ.
    let mut start = None;
    for k in 0..=60 {
        let gamma = span * 1e-3 * 10f64.powf(k as f64 * 3.0 / 60.0);
        let shapes: Vec<f64> = nu.iter().map(|&v| profile(v, gamma, lines).0).collect();
        if let Some((od, c, cost)) = linear_fit(&shapes, &y) {
            if od > 0.0 && start.is_none_or(|(_, _, _, best)| cost < best) {
                start = Some((od, gamma, c, cost));
            }
        }
    }
    let (od0, gamma0, c0, _) = start.ok_or_else(|| Error::Fit("no absorption feature in the data".into()))?;

    let sol = lm::minimize(&[od0, gamma0, c0], |p| {
        let (od, gamma, c) = (p[0], p[1], p[2]);
        if !(gamma > 0.0) {
            return None;
        }
        let mut r = DVector::zeros(n);
        let mut j = DMatrix::zeros(n, 3);
        for k in 0..n {
            let (s, ds) = profile(nu[k], gamma, lines);
            r[k] = od * s + c - y[k];
            j[(k, 0)] = s;
            j[(k, 1)] = od * ds;
            j[(k, 2)] = 1.0;
        }
        Some((r, j))
    })?;
    let (od, gamma_opt, c) = (sol.params[0], sol.params[1], sol.params[2]);
    if !(od > 0.0 && gamma_opt > 0.0) {
        return Err(Error::Fit(format!("unphysical fit: od = {od}, Γ = {gamma_opt}")));
    }
    let dof = (sol.residuals.saturating_sub(3)).max(1) as f64;
    let variance = sol.cost / dof;
    let cov = sol
        .jtj
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Fit("singular normal matrix; od and Γ are not separable".into()))?
        * variance;
    Ok(AbsorptionFit {
        od,
        gamma_opt,
        p_ref: (-c).exp(),
        covariance: [[cov[(0, 0)], cov[(0, 1)]], [cov[(1, 0)], cov[(1, 1)]]],
        residual: (sol.cost / n as f64).sqrt(),
        iterations: sol.iterations,
    })
}

/// Least squares y ≈ a·x + c; returns (a, c, cost).
fn linear_fit(x: &[f64], y: &[f64]) -> Option<(f64, f64, f64)> {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let a = sxy / sxx;
    let c = my - a * mx;
    let cost = x.iter().zip(y).map(|(a_, b)| (a * a_ + c - b).powi(2)).sum();
    Some((a, c, cost))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::{self, linspace};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn single(offset: f64) -> HyperfineLineList {
        HyperfineLineList::new(vec![(offset, 1.0)]).unwrap()
    }

    #[test]
    fn lorentzian_peak_and_half_width() {
        let lines = single(0.7);
        let d = one_photon_model(&[0.7, 0.7 + 2.6, 0.7 - 2.6], 3.0, 2.6, &lines).unwrap();
        assert_relative_eq!(d[0], 3.0);
        assert_relative_eq!(d[1], 1.5, max_relative = 1e-14);
        assert_relative_eq!(d[2], 1.5, max_relative = 1e-14);
    }

    #[test]
    fn resolved_doublet() {
        let lines = HyperfineLineList::new(vec![(-5.0, 1.0), (5.0, 1.0)]).unwrap();
        let d = one_photon_model(&[-5.0, 0.0, 5.0], 2.0, 1.0, &lines).unwrap();
        // Each peak carries half the strength plus the other line's far wing.
        assert_relative_eq!(d[0], 1.0 + 1.0 / 101.0, max_relative = 1e-12);
        assert_relative_eq!(d[2], d[0], max_relative = 1e-12);
        assert!(d[1] < 0.1 * d[0]);
    }

    #[test]
    fn empty_and_invalid_line_lists() {
        assert!(matches!(HyperfineLineList::new(vec![]), Err(Error::Domain(_))));
        assert!(HyperfineLineList::new(vec![(0.0, -1.0)]).is_err());
        assert!(HyperfineLineList::new(vec![(f64::NAN, 1.0)]).is_err());
        assert!(one_photon_model(&[0.0], 1.0, 0.0, &single(0.0)).is_err());
        let err = "1.0 0.5\n2.0 x\n".parse::<HyperfineLineList>().unwrap_err();
        assert_eq!(
            err,
            Error::Parse {
                line: 2,
                message: "invalid strength 'x'".into()
            }
        );
        assert!("# only a comment\n".parse::<HyperfineLineList>().is_err());
    }

    #[test]
    fn bundled_lists_are_normalized() {
        for list in [HyperfineLineList::rb_natural_d1(), HyperfineLineList::k_d1()] {
            let total: f64 = list.lines().iter().map(|l| l.1).sum();
            assert_relative_eq!(total, 1.0, max_relative = 1e-12);
            let centroid: f64 = list.lines().iter().map(|l| l.0 * l.1).sum();
            assert!(centroid.abs() < 1e-3, "centroid {centroid}");
        }
        assert_eq!(HyperfineLineList::rb_natural_d1().lines().len(), 8);
        assert_eq!(HyperfineLineList::k_d1().lines().len(), 4);
    }

    #[test]
    fn one_photon_round_trip() {
        let lines = HyperfineLineList::rb_natural_d1();
        let nu = linspace(-30.0, 30.0, 121);
        let od = one_photon_model(&nu, 4.0, 2.6, &lines).unwrap();
        let data: Vec<(f64, f64)> = nu.iter().zip(&od).map(|(&v, &d)| (v, 0.8 * (-d).exp())).collect();
        let fit = fit_one_photon(&data, &lines).unwrap();
        assert_relative_eq!(fit.gamma_opt, 2.6, max_relative = 1e-6);
        assert_relative_eq!(fit.od, 4.0, max_relative = 1e-6);
        assert_relative_eq!(fit.p_ref, 0.8, max_relative = 1e-6);
        assert!(fit.residual < 1e-8);
    }

    #[test]
    fn one_photon_rejects_bad_power() {
        let lines = single(0.0);
        let mut data: Vec<(f64, f64)> = (0..20).map(|k| (k as f64 - 10.0, 0.5)).collect();
        data[3].1 = 0.0;
        assert!(matches!(fit_one_photon(&data, &lines), Err(Error::Data(_))));
        assert!(matches!(fit_one_photon(&data[..5], &lines), Err(Error::Data(_))));
    }

    fn synthetic(coupling: f64, omega_a: f64, gamma: f64) -> Spectrum {
        let grid = linspace(-3.0 * omega_a, 3.0 * omega_a, 601);
        let points = grid
            .iter()
            .map(|&w| crate::analytic::SpectrumPoint {
                omega: w,
                transmission: analytic::transmission(w, coupling, omega_a, gamma).unwrap(),
            })
            .collect();
        Spectrum::new(points, None).unwrap()
    }

    #[test]
    fn cpsr_round_trip_at_critical_coupling() {
        let (omega_a, gamma) = (1000.0, 60.0);
        let fit = fit_cpsr_line(&synthetic(2.0 * gamma, omega_a, gamma)).unwrap();
        assert_relative_eq!(fit.coupling, 2.0 * gamma, max_relative = 1e-6);
        assert_relative_eq!(fit.omega_a, omega_a, max_relative = 1e-6);
        assert_relative_eq!(fit.gamma, gamma, max_relative = 1e-6);
        assert!(fit.baseline.abs() < 1e-8);
        assert!(!fit.absorption.is_gain && fit.gain.is_gain);
        assert_relative_eq!(fit.absorption.center, omega_a.hypot(gamma), max_relative = 1e-6);
        assert_relative_eq!(fit.gain.center, -omega_a.hypot(gamma), max_relative = 1e-6);
        assert_relative_eq!(fit.absorption.fwhm, 2.0 * gamma, max_relative = 1e-6);
        assert!(fit.absorption.extremum_contrast > 0.99);
    }

    #[test]
    fn cpsr_negative_coupling_swaps_lines() {
        let fit = fit_cpsr_line(&synthetic(-50.0, 800.0, 40.0)).unwrap();
        assert_relative_eq!(fit.coupling, -50.0, max_relative = 1e-6);
        assert!(fit.absorption.center < 0.0 && fit.gain.center > 0.0);
    }

    #[test]
    fn flat_spectrum_has_no_extremum() {
        let err = fit_cpsr_line(&synthetic(0.0, 500.0, 20.0)).unwrap_err();
        assert_eq!(err, Error::NoExtremum);
        assert_eq!(err.to_string(), "no extremum found");
    }

    #[test]
    fn raw_width_tracks_fitted_width_for_narrow_lines() {
        let fit = fit_cpsr_line(&synthetic(8.0, 1000.0, 20.0)).unwrap();
        let raw = fit.absorption.raw_fwhm.unwrap();
        assert_relative_eq!(raw, fit.absorption.fwhm, max_relative = 0.05);
    }

    #[test]
    fn cpsr_fit_is_deterministic() {
        let s = synthetic(70.0, 900.0, 45.0);
        assert_eq!(fit_cpsr_line(&s).unwrap(), fit_cpsr_line(&s).unwrap());
    }

    proptest! {
        #[test]
        fn one_photon_model_is_linear_in_od(od in 0.01f64..50.0, gamma in 0.1f64..20.0, nu in -40.0f64..40.0) {
            let lines = HyperfineLineList::rb_natural_d1();
            let a = one_photon_model(&[nu], od, gamma, &lines).unwrap()[0];
            let b = one_photon_model(&[nu], 2.0 * od, gamma, &lines).unwrap()[0];
            prop_assert!((b - 2.0 * a).abs() <= 1e-12 * b.abs());
        }

        #[test]
        fn cpsr_round_trip(ratio in 0.2f64..2.5, omega_a in 200.0f64..3000.0, width in 0.02f64..0.1) {
            let gamma = width * omega_a;
            let coupling = ratio * gamma;
            let fit = fit_cpsr_line(&synthetic(coupling, omega_a, gamma)).unwrap();
            prop_assert!((fit.coupling / coupling - 1.0).abs() < 1e-3);
            prop_assert!((fit.omega_a / omega_a - 1.0).abs() < 1e-3);
            prop_assert!((fit.gamma / gamma - 1.0).abs() < 1e-3);
        }
    }
}
