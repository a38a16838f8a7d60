use approx::assert_relative_eq;
use cpsr::analytic::{self, linspace};
use cpsr::lineshape::{self, fit_cpsr_magnitude};
use cpsr::params::{self, slowing_down_factor, Species};
use cpsr::scenarios;
use cpsr::units::hz_to_rad;
use cpsr::Complex64;
use proptest::prelude::*;

fn species() -> impl Strategy<Value = Species> {
    prop_oneof![Just(Species::RbNatural), Just(Species::K)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn slowing_down_is_even_and_bounded(s in species(), p in 0.0f64..1.0) {
        let q = slowing_down_factor(s, p).unwrap();
        prop_assert_eq!(q, slowing_down_factor(s, -p).unwrap());
        prop_assert!(q <= slowing_down_factor(s, 0.0).unwrap());
        prop_assert!(q >= slowing_down_factor(s, 1.0).unwrap());
    }

    #[test]
    fn slowing_down_decreases_with_polarization(s in species(), p in 0.0f64..0.99, dp in 1e-3f64..0.01) {
        prop_assert!(slowing_down_factor(s, p + dp).unwrap() < slowing_down_factor(s, p).unwrap());
    }

    #[test]
    fn serf_broadening_is_exactly_quadratic(w1 in 10.0f64..5e3, w2 in 10.0f64..5e3, p in 0.0f64..0.99) {
        let r_se = 2e5;
        let g1 = params::serf_broadening(w1, r_se, Species::RbNatural, p).unwrap() / (w1 * w1);
        let g2 = params::serf_broadening(w2, r_se, Species::RbNatural, p).unwrap() / (w2 * w2);
        prop_assert!((g1 - g2).abs() <= 1e-12 * g1.abs().max(f64::MIN_POSITIVE));
    }

    #[test]
    fn polarization_is_the_rate_ratio(p_pump in 0.0f64..200.0, r_sd_hz in 1.0f64..500.0) {
        let mut s = scenarios::builtin("rb_fig2").unwrap();
        s.beam.p_pump_mw = p_pump;
        s.beam.r_sd = hz_to_rad(r_sd_hz);
        let r = s.derive().unwrap();
        prop_assert!((0.0..1.0).contains(&r.p_a));
        let expected = r.r_pump / (r.r_pump + r.r_sd);
        prop_assert!((r.p_a - expected).abs() <= 4.0 * f64::EPSILON);
    }

    #[test]
    fn transmission_is_scale_invariant(
        coupling in -200.0f64..200.0,
        omega_a in 1.0f64..1e3,
        gamma in 0.5f64..200.0,
        omega in -2e3f64..2e3,
        scale in 1e-3f64..1e3,
    ) {
        let a = analytic::transmission(omega, coupling, omega_a, gamma).unwrap();
        let b = analytic::transmission(scale * omega, scale * coupling, scale * omega_a, scale * gamma).unwrap();
        prop_assert!((a - b).norm() <= 1e-12 * a.norm().max(1.0), "{} vs {}", a, b);
    }

    #[test]
    fn zero_coupling_is_unit_transmission(omega in -1e4f64..1e4, omega_a in 0.0f64..1e3, gamma in 0.1f64..100.0) {
        prop_assert_eq!(analytic::transmission(omega, 0.0, omega_a, gamma).unwrap(), Complex64::new(1.0, 0.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn cpsr_fit_recovers_generator(
        coupling_hz in 20.0f64..250.0,
        omega_a_hz in 150.0f64..400.0,
        gamma_hz in 20.0f64..60.0,
    ) {
        let (c, w, g) = (hz_to_rad(coupling_hz), hz_to_rad(omega_a_hz), hz_to_rad(gamma_hz));
        let grid = linspace(hz_to_rad(-900.0), hz_to_rad(900.0), 241);
        let mags: Vec<f64> = grid.iter().map(|&x| analytic::transmission(x, c, w, g).unwrap().norm()).collect();
        let fit = fit_cpsr_magnitude(&grid, &mags).unwrap();
        prop_assert!((fit.coupling / c - 1.0).abs() < 1e-3);
        prop_assert!((fit.omega_a / w - 1.0).abs() < 1e-3);
        prop_assert!((fit.gamma / g - 1.0).abs() < 1e-3);
    }
}

#[test]
fn derived_rates_are_bit_reproducible() {
    for name in scenarios::NAMES {
        let s = scenarios::builtin(name).unwrap();
        assert_eq!(s.derive().unwrap(), s.derive().unwrap());
    }
}

#[test]
fn fits_are_deterministic() {
    let s = scenarios::builtin("rb_fig2").unwrap();
    let r = s.derive().unwrap();
    let spectrum = analytic::spectrum(&s.grid().unwrap(), &r).unwrap();
    let a = lineshape::fit_cpsr_line(&spectrum).unwrap();
    let b = lineshape::fit_cpsr_line(&spectrum).unwrap();
    assert_eq!(a, b);
    assert_relative_eq!(a.gamma, r.gamma, max_relative = 1e-6);
}
