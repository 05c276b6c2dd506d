//! Internal natural units and SI conversion.
//!
//! Inside the simulator the reduced Planck constant and the atom mass are
//! both 1. A [`UnitSystem`] fixes the SI length scale; the time and energy
//! scales follow from it. Conversion happens only at config and report
//! boundaries.

use serde::{Deserialize, Serialize};

/// Reduced Planck constant in internal units.
pub const HBAR: f64 = 1.0;
/// Atom mass in internal units.
pub const MASS: f64 = 1.0;

pub const HBAR_SI: f64 = 1.054_571_817e-34;
pub const KB_SI: f64 = 1.380_649e-23;
/// Rb-87 atomic mass (standard atomic data).
pub const RB87_MASS_SI: f64 = 1.443_160_648e-25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitSystem {
    pub hbar: f64,
    pub mass: f64,
    /// Internal energy units per kelvin.
    pub kb: f64,
    pub si_length: f64,
    pub si_time: f64,
    pub mass_si: f64,
}

impl UnitSystem {
    /// Unit system for an atom of `mass_si` kilograms with `si_length` meters
    /// per internal length unit.
    pub fn new(mass_si: f64, si_length: f64) -> Self {
        let si_time = mass_si * si_length * si_length / HBAR_SI;
        let energy_si = HBAR_SI / si_time;
        Self {
            hbar: HBAR,
            mass: MASS,
            kb: KB_SI / energy_si,
            si_length,
            si_time,
            mass_si,
        }
    }

    /// Rb-87 with one micron per internal length unit.
    pub fn rb87() -> Self {
        Self::new(RB87_MASS_SI, 1e-6)
    }

    /// Joules per internal energy unit.
    pub fn si_energy(&self) -> f64 {
        HBAR_SI / self.si_time
    }

    pub fn energy_from_kelvin(&self, t: f64) -> f64 {
        self.kb * t
    }

    pub fn energy_to_kelvin(&self, e: f64) -> f64 {
        e / self.kb
    }

    pub fn energy_from_joules(&self, j: f64) -> f64 {
        j / self.si_energy()
    }

    pub fn length_from_meters(&self, m: f64) -> f64 {
        m / self.si_length
    }

    pub fn length_to_meters(&self, l: f64) -> f64 {
        l * self.si_length
    }

    pub fn time_from_seconds(&self, s: f64) -> f64 {
        s / self.si_time
    }

    pub fn time_to_seconds(&self, t: f64) -> f64 {
        t * self.si_time
    }

    /// Inverse internal lengths to inverse meters.
    pub fn wavenumber_to_si(&self, k: f64) -> f64 {
        k / self.si_length
    }

    pub fn velocity_from_si(&self, v: f64) -> f64 {
        v * self.si_time / self.si_length
    }

    pub fn velocity_to_si(&self, v: f64) -> f64 {
        v * self.si_length / self.si_time
    }
}

impl Default for UnitSystem {
    fn default() -> Self {
        Self::rb87()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_time_unit_is_consistent() {
        for &l in &[1e-7, 1e-6, 5e-6, 1e-3] {
            let u = UnitSystem::new(RB87_MASS_SI, l);
            let expected = RB87_MASS_SI * l * l / HBAR_SI;
            assert!(((u.si_time - expected) / expected).abs() < 1e-12);
            assert_eq!(u.hbar, 1.0);
        }
    }

    #[test]
    fn temperature_round_trip() {
        let u = UnitSystem::rb87();
        let e = u.energy_from_kelvin(6e-6);
        assert!((u.energy_to_kelvin(e) - 6e-6).abs() < 1e-18);
        // k_B * T in joules divided by the energy unit
        let expected = KB_SI * 6e-6 / u.si_energy();
        assert!((e - expected).abs() / expected < 1e-12);
    }
}
