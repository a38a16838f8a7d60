//! Shared fixtures for the benchmarks.

use cpsr::{scenarios, DerivedRates};

/// Derived rates of a bundled scenario.
pub fn rates(name: &str) -> DerivedRates {
    scenarios::builtin(name)
        .and_then(|s| s.derive())
        .expect("bundled scenario derives")
}
