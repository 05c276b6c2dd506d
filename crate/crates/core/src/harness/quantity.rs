//! Quantity strings such as `"2.5 um"` or `"6 uK"`, converted to internal
//! units according to the dimension their key implies.

use std::fmt;

use crate::units::{UnitSystem, KB_SI};

/// Exponents of length, time and energy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dim {
    pub length: i8,
    pub time: i8,
    pub energy: i8,
}

impl Dim {
    const fn new(length: i8, time: i8, energy: i8) -> Self {
        Self { length, time, energy }
    }

    fn mul(self, o: Dim, sign: i8) -> Dim {
        Dim::new(self.length + sign * o.length, self.time + sign * o.time, self.energy + sign * o.energy)
    }
}

pub const NONE: Dim = Dim::new(0, 0, 0);
pub const LENGTH: Dim = Dim::new(1, 0, 0);
pub const TIME: Dim = Dim::new(0, 1, 0);
pub const ENERGY: Dim = Dim::new(0, 0, 1);
pub const RATE: Dim = Dim::new(0, -1, 0);
pub const VELOCITY: Dim = Dim::new(1, -1, 0);
pub const FORCE: Dim = Dim::new(-1, 0, 1);

impl fmt::Display for Dim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match *self {
            NONE => "dimensionless",
            LENGTH => "length",
            TIME => "time",
            ENERGY => "energy",
            RATE => "rate",
            VELOCITY => "velocity",
            FORCE => "energy/length",
            d => return write!(f, "L^{} T^{} E^{}", d.length, d.time, d.energy),
        };
        f.write_str(name)
    }
}

/// Expected dimension for a config key, or `None` if the key takes no
/// quantity strings.
pub fn key_dimension(key: &str) -> Option<(Dim, bool)> {
    let d = match key {
        "x_min" | "x_max" | "width" | "center" | "waist" | "x_left" | "x_right" | "x0" | "sigma" | "sigma_x"
        | "delta_l" | "edge" | "pitch" | "span" | "control_span" => LENGTH,
        "v0" | "u0" | "e" | "kt" | "height" | "energies" | "temperature" => ENERGY,
        "dt" | "t_max" | "duration" | "pulse_duration" | "t_free" | "t" | "schedule" | "window" | "sample_every" => TIME,
        "p0" | "sigma_v" => VELOCITY,
        "rate" | "strength" => RATE,
        "omega" => return Some((RATE, true)),
        "gradient" | "slope" => FORCE,
        _ => return None,
    };
    Some((d, false))
}

/// `(dimension, SI factor)`; energies are expressed in joules.
fn base_unit(u: &str) -> Option<(Dim, f64)> {
    let u = u.replace('µ', "u");
    let (prefix, stem) = match u.as_str() {
        "m" | "s" | "K" | "J" | "Hz" | "rad" => ("", u.as_str()),
        _ if u.len() > 1 => u.split_at(1),
        _ => return None,
    };
    let scale = match prefix {
        "" => 1.0,
        "c" => 1e-2,
        "m" => 1e-3,
        "u" => 1e-6,
        "n" => 1e-9,
        "k" => 1e3,
        "M" => 1e6,
        _ => return None,
    };
    let (dim, f) = match stem {
        "m" => (LENGTH, 1.0),
        "s" => (TIME, 1.0),
        "K" => (ENERGY, KB_SI),
        "J" => (ENERGY, 1.0),
        "Hz" => (RATE, 1.0),
        "rad" if prefix.is_empty() => (NONE, 1.0),
        _ => return None,
    };
    Some((dim, f * scale))
}

fn parse_unit(unit: &str) -> Option<(Dim, f64, bool)> {
    let mut parts = unit.split('/');
    let num = parts.next()?.trim();
    let (mut dim, mut f, hz) = match num {
        "1" => (NONE, 1.0, false),
        n => {
            let (d, f) = base_unit(n)?;
            (d, f, n.ends_with("Hz"))
        }
    };
    for den in parts {
        let (d, g) = base_unit(den.trim())?;
        dim = dim.mul(d, -1);
        f /= g;
    }
    Some((dim, f, hz))
}

#[derive(Debug, Clone, PartialEq)]
pub enum QuantityError {
    Syntax(String),
    UnknownUnit(String),
    Mismatch { expected: Dim, found: Dim, unit: String },
    NoUnits,
}

impl fmt::Display for QuantityError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Syntax(s) => write!(f, "cannot read {s:?} as `<number> <unit>`"),
            Self::UnknownUnit(u) => write!(f, "unknown unit {u:?}"),
            Self::Mismatch { expected, found, unit } => {
                write!(f, "unit mismatch: expected {expected}, got {found} ({unit})")
            }
            Self::NoUnits => f.write_str("quantity strings need a physical units profile"),
        }
    }
}

/// Convert `"<number> <unit>"` to internal units.
pub fn convert(text: &str, expected: Dim, angular: bool, units: Option<&UnitSystem>) -> Result<f64, QuantityError> {
    let t = text.trim();
    let split = t.find(|c: char| c.is_whitespace()).ok_or_else(|| QuantityError::Syntax(t.into()))?;
    let (num, unit) = t.split_at(split);
    let unit = unit.trim();
    let value: f64 = num.parse().map_err(|_| QuantityError::Syntax(t.into()))?;
    let (dim, factor, hz) = parse_unit(unit).ok_or_else(|| QuantityError::UnknownUnit(unit.into()))?;
    if dim != expected {
        return Err(QuantityError::Mismatch { expected, found: dim, unit: unit.into() });
    }
    let us = units.ok_or(QuantityError::NoUnits)?;
    let mut si = value * factor;
    if angular && hz {
        si *= 2.0 * std::f64::consts::PI;
    }
    let scale = us.si_length.powi(dim.length as i32)
        * us.si_time.powi(dim.time as i32)
        * us.si_energy().powi(dim.energy as i32);
    Ok(si / scale)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conversions() {
        let u = UnitSystem::rb87();
        assert!((convert("1 um", LENGTH, false, Some(&u)).unwrap() - 1.0).abs() < 1e-12);
        assert!((convert("2.5 mm", LENGTH, false, Some(&u)).unwrap() - 2500.0).abs() < 1e-9);
        let t = convert("1 ms", TIME, false, Some(&u)).unwrap();
        assert!((t * u.si_time - 1e-3).abs() < 1e-15);
        let e = convert("6 uK", ENERGY, false, Some(&u)).unwrap();
        assert!((e - u.energy_from_kelvin(6e-6)).abs() < 1e-9 * e);
        let v = convert("3 mm/s", VELOCITY, false, Some(&u)).unwrap();
        assert!((u.velocity_to_si(v) - 3e-3).abs() < 1e-15);
        let w = convert("100 Hz", RATE, true, Some(&u)).unwrap();
        let w2 = convert("628.3185307179587 rad/s", RATE, true, Some(&u)).unwrap();
        assert!((w - w2).abs() < 1e-12 * w);
        let r = convert("100 Hz", RATE, false, Some(&u)).unwrap();
        assert!((w / r - 2.0 * std::f64::consts::PI).abs() < 1e-12);
        let g = convert("1 uK/um", FORCE, false, Some(&u)).unwrap();
        assert!((g - u.energy_from_kelvin(1e-6)).abs() < 1e-9 * g);
    }

    #[test]
    fn rejections() {
        let u = UnitSystem::rb87();
        assert!(matches!(convert("1 ms", LENGTH, false, Some(&u)), Err(QuantityError::Mismatch { .. })));
        assert!(matches!(convert("1 parsec", LENGTH, false, Some(&u)), Err(QuantityError::UnknownUnit(_))));
        assert!(matches!(convert("1um", LENGTH, false, Some(&u)), Err(QuantityError::Syntax(_))));
        assert!(matches!(convert("1 um", LENGTH, false, None), Err(QuantityError::NoUnits)));
    }
}
