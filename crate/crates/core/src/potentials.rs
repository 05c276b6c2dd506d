//! Declarative potentials, including time-averaged scanned dipole barriers.
//!
//! Repulsive optical potentials are proportional to the local intensity, so
//! a focused beam gives `u0 * exp(-2 (x - c)^2 / w^2)` and a rapidly scanned
//! focus gives the dwell-weighted average of such profiles.

use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid1D;
use crate::units::{UnitSystem, MASS};

/// Tolerance on the dwell weight normalization.
pub const DWELL_WEIGHT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialSpec {
    Rectangular {
        v0: f64,
        width: f64,
        center: f64,
    },
    GaussianBeam {
        u0: f64,
        waist: f64,
        center: f64,
    },
    /// Dwell list of `(position, weight)` pairs; weights sum to one.
    ScannedBeam {
        u0: f64,
        waist: f64,
        dwell: Vec<(f64, f64)>,
    },
    /// Uniform scan of `points` dwell positions across `[x_left, x_right]`.
    FlatTopScan {
        u0: f64,
        waist: f64,
        x_left: f64,
        x_right: f64,
        points: usize,
    },
    Harmonic {
        omega: f64,
        #[serde(default)]
        center: f64,
    },
    Linear {
        slope: f64,
    },
    /// `inner` restricted to `x_left < x < x_right`, zero elsewhere.
    Windowed {
        inner: Box<PotentialSpec>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        x_left: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        x_right: Option<f64>,
    },
    Composite {
        parts: Vec<PotentialSpec>,
    },
}

/// The classically forbidden span of a barrier, `x_left < x < x_right`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BarrierRegion {
    pub x_left: f64,
    pub x_right: f64,
}

impl BarrierRegion {
    pub fn new(x_left: f64, x_right: f64) -> Result<Self> {
        if !(x_left < x_right) {
            return Err(Error::Potential(format!(
                "region needs x_left < x_right, got [{x_left}, {x_right}]"
            )));
        }
        Ok(Self { x_left, x_right })
    }

    pub fn centered(center: f64, width: f64) -> Result<Self> {
        Self::new(center - width / 2.0, center + width / 2.0)
    }

    pub fn width(&self) -> f64 {
        self.x_right - self.x_left
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.x_left + self.x_right)
    }

    /// Open-interval membership.
    pub fn contains(&self, x: f64) -> bool {
        x > self.x_left && x < self.x_right
    }

    pub fn check_on(&self, grid: &Grid1D) -> Result<()> {
        if !(grid.contains(self.x_left) && grid.contains(self.x_right)) {
            return Err(Error::Potential(format!(
                "region [{}, {}] lies outside grid [{}, {}]",
                self.x_left,
                self.x_right,
                grid.x_min(),
                grid.x_max()
            )));
        }
        Ok(())
    }
}

/// Sampled potential plus any non-fatal diagnostics raised while building it.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialArray {
    pub values: Vec<f64>,
    pub warnings: Vec<String>,
}

impl Deref for PotentialArray {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.values
    }
}

/// Midpoint-sampled indicator of `x_left < x < x_right`: points exactly on
/// an edge get 1/2.
fn window_weight(x: f64, x_left: f64, x_right: f64, tol: f64) -> f64 {
    let edge = |e: f64| (x - e).abs() <= tol;
    if edge(x_left) || edge(x_right) {
        0.5
    } else if x > x_left && x < x_right {
        1.0
    } else {
        0.0
    }
}

fn beam(u0: f64, waist: f64, center: f64, x: f64) -> f64 {
    let d = x - center;
    u0 * (-2.0 * d * d / (waist * waist)).exp()
}

/// Uniform dwell list over `[x_left, x_right]`.
pub fn flat_top_dwell(x_left: f64, x_right: f64, points: usize) -> Result<Vec<(f64, f64)>> {
    if points == 0 || !(x_right >= x_left) {
        return Err(Error::Potential("flat-top scan needs points > 0 and x_right >= x_left".into()));
    }
    if points == 1 {
        return Ok(vec![(0.5 * (x_left + x_right), 1.0)]);
    }
    let w = 1.0 / points as f64;
    let step = (x_right - x_left) / (points - 1) as f64;
    Ok((0..points).map(|i| (x_left + i as f64 * step, w)).collect())
}

fn check_dwell(dwell: &[(f64, f64)]) -> Result<()> {
    if dwell.is_empty() {
        return Err(Error::Potential("dwell list is empty".into()));
    }
    if let Some(&(p, w)) = dwell.iter().find(|(p, w)| !(*w >= 0.0) || !p.is_finite()) {
        return Err(Error::Potential(format!("bad dwell entry ({p}, {w})")));
    }
    let total: f64 = dwell.iter().map(|d| d.1).sum();
    if (total - 1.0).abs() > DWELL_WEIGHT_TOL {
        return Err(Error::Potential(format!("dwell weights sum to {total}, not 1")));
    }
    Ok(())
}

impl PotentialSpec {
    pub fn validate(&self) -> Result<()> {
        let nonneg = |name: &str, v: f64| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Potential(format!("{name} must be a finite value >= 0, got {v}")))
            }
        };
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Potential(format!("{name} must be > 0, got {v}")))
            }
        };
        match self {
            PotentialSpec::Rectangular { v0, width, .. } => {
                nonneg("v0", *v0)?;
                nonneg("width", *width)
            }
            PotentialSpec::GaussianBeam { u0, waist, .. } => {
                nonneg("u0", *u0)?;
                positive("waist", *waist)
            }
            PotentialSpec::ScannedBeam { u0, waist, dwell } => {
                nonneg("u0", *u0)?;
                positive("waist", *waist)?;
                check_dwell(dwell)
            }
            PotentialSpec::FlatTopScan {
                u0,
                waist,
                x_left,
                x_right,
                points,
            } => {
                nonneg("u0", *u0)?;
                positive("waist", *waist)?;
                flat_top_dwell(*x_left, *x_right, *points).map(|_| ())
            }
            PotentialSpec::Harmonic { omega, .. } => nonneg("omega", *omega),
            PotentialSpec::Linear { slope } => {
                if slope.is_finite() {
                    Ok(())
                } else {
                    Err(Error::Potential("slope must be finite".into()))
                }
            }
            PotentialSpec::Windowed {
                inner,
                x_left,
                x_right,
            } => {
                if let (Some(l), Some(r)) = (x_left, x_right) {
                    if !(l < r) {
                        return Err(Error::Potential(format!("window [{l}, {r}] is empty")));
                    }
                }
                inner.validate()
            }
            PotentialSpec::Composite { parts } => parts.iter().try_for_each(|p| p.validate()),
        }
    }

    /// Whether every part is repulsive by construction (no harmonic or linear terms).
    pub fn is_repulsive(&self) -> bool {
        match self {
            PotentialSpec::Rectangular { .. }
            | PotentialSpec::GaussianBeam { .. }
            | PotentialSpec::ScannedBeam { .. }
            | PotentialSpec::FlatTopScan { .. } => true,
            PotentialSpec::Harmonic { .. } => true,
            PotentialSpec::Linear { slope } => *slope == 0.0,
            PotentialSpec::Windowed { inner, .. } => inner.is_repulsive(),
            PotentialSpec::Composite { parts } => parts.iter().all(|p| p.is_repulsive()),
        }
    }

    /// Value at a single point. `tol` is the edge tolerance for midpoint sampling.
    pub fn value_at(&self, x: f64, tol: f64) -> f64 {
        match self {
            PotentialSpec::Rectangular { v0, width, center } => {
                v0 * window_weight(x, center - width / 2.0, center + width / 2.0, tol)
            }
            PotentialSpec::GaussianBeam { u0, waist, center } => beam(*u0, *waist, *center, x),
            PotentialSpec::ScannedBeam { u0, waist, dwell } => dwell
                .iter()
                .map(|&(c, w)| w * beam(*u0, *waist, c, x))
                .sum(),
            PotentialSpec::FlatTopScan {
                u0,
                waist,
                x_left,
                x_right,
                points,
            } => flat_top_dwell(*x_left, *x_right, *points)
                .map(|d| d.iter().map(|&(c, w)| w * beam(*u0, *waist, c, x)).sum())
                .unwrap_or(0.0),
            PotentialSpec::Harmonic { omega, center } => {
                let d = x - center;
                0.5 * MASS * omega * omega * d * d
            }
            PotentialSpec::Linear { slope } => slope * x,
            PotentialSpec::Windowed {
                inner,
                x_left,
                x_right,
            } => {
                let w = window_weight(
                    x,
                    x_left.unwrap_or(f64::NEG_INFINITY),
                    x_right.unwrap_or(f64::INFINITY),
                    tol,
                );
                if w == 0.0 {
                    0.0
                } else {
                    w * inner.value_at(x, tol)
                }
            }
            PotentialSpec::Composite { parts } => parts.iter().map(|p| p.value_at(x, tol)).sum(),
        }
    }

    /// Spans that should lie on the grid for the potential to be unclipped.
    fn supports(&self, out: &mut Vec<(f64, f64, &'static str)>) {
        match self {
            PotentialSpec::Rectangular { width, center, .. } => {
                out.push((center - width / 2.0, center + width / 2.0, "rectangular"))
            }
            PotentialSpec::GaussianBeam { waist, center, .. } => {
                out.push((center - 2.0 * waist, center + 2.0 * waist, "gaussian_beam"))
            }
            PotentialSpec::ScannedBeam { waist, dwell, .. } => {
                let lo = dwell.iter().map(|d| d.0).fold(f64::INFINITY, f64::min);
                let hi = dwell.iter().map(|d| d.0).fold(f64::NEG_INFINITY, f64::max);
                out.push((lo - 2.0 * waist, hi + 2.0 * waist, "scanned_beam"))
            }
            PotentialSpec::FlatTopScan {
                waist,
                x_left,
                x_right,
                ..
            } => out.push((x_left - 2.0 * waist, x_right + 2.0 * waist, "flat_top_scan")),
            PotentialSpec::Windowed { inner, .. } => inner.supports(out),
            PotentialSpec::Composite { parts } => parts.iter().for_each(|p| p.supports(out)),
            PotentialSpec::Harmonic { .. } | PotentialSpec::Linear { .. } => {}
        }
    }
}

/// Sample `spec` on `grid`. Supports clipped by the grid yield warnings.
pub fn eval_potential(spec: &PotentialSpec, grid: &Grid1D) -> Result<PotentialArray> {
    spec.validate()?;
    let tol = 1e-9 * grid.dx();
    let values: Vec<f64> = grid.xs().map(|x| spec.value_at(x, tol)).collect();
    let mut spans = Vec::new();
    spec.supports(&mut spans);
    let warnings = spans
        .into_iter()
        .filter(|(lo, hi, _)| *lo < grid.x_min() || *hi > grid.x_max() - grid.dx())
        .map(|(lo, hi, name)| {
            format!(
                "{name} support [{lo}, {hi}] is clipped by grid [{}, {}]",
                grid.x_min(),
                grid.x_max()
            )
        })
        .collect();
    Ok(PotentialArray { values, warnings })
}

/// Time-averaged intensity of a focus that dwells at each `(position, weight)`.
pub fn time_averaged_scan(
    grid: &Grid1D,
    u0: f64,
    waist: f64,
    dwell: &[(f64, f64)],
) -> Result<Vec<f64>> {
    let spec = PotentialSpec::ScannedBeam {
        u0,
        waist,
        dwell: dwell.to_vec(),
    };
    Ok(eval_potential(&spec, grid)?.values)
}

/// Barrier height equal to `k_B * t_barrier` in internal energy units.
pub fn barrier_from_temperature(units: &UnitSystem, t_barrier: f64) -> Result<f64> {
    if !(t_barrier >= 0.0) {
        return Err(Error::Potential(format!("temperature must be >= 0, got {t_barrier}")));
    }
    Ok(units.energy_from_kelvin(t_barrier))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;
    use crate::units::KB_SI;
    use proptest::prelude::*;

    #[test]
    fn rectangular_midpoint_edges() {
        let g = make_grid(-2.0, 2.0, 64).unwrap();
        let v = eval_potential(
            &PotentialSpec::Rectangular {
                v0: 1.0,
                width: 1.0,
                center: 0.0,
            },
            &g,
        )
        .unwrap();
        assert!(v.warnings.is_empty());
        for (x, &val) in g.xs().zip(v.iter()) {
            let expected = if x.abs() < 0.5 {
                1.0
            } else if x.abs() == 0.5 {
                0.5
            } else {
                0.0
            };
            assert_eq!(val, expected, "x = {x}");
        }
    }

    #[test]
    fn gaussian_beam_profile() {
        let g = make_grid(-4.0, 4.0, 128).unwrap();
        let v = eval_potential(
            &PotentialSpec::GaussianBeam {
                u0: 3.0,
                waist: 1.2,
                center: 0.0,
            },
            &g,
        )
        .unwrap();
        let i0 = g.index_of(0.0);
        assert_eq!(v[i0], 3.0);
        for (x, &val) in g.xs().zip(v.iter()) {
            assert!((val - 3.0 * (-2.0 * x * x / 1.44f64).exp()).abs() < 1e-15);
        }
    }

    #[test]
    fn harmonic_plus_linear_is_shifted_parabola() {
        let g = make_grid(-8.0, 8.0, 256).unwrap();
        let (omega, slope) = (1.0, 0.7);
        let v = eval_potential(
            &PotentialSpec::Composite {
                parts: vec![
                    PotentialSpec::Harmonic { omega, center: 0.0 },
                    PotentialSpec::Linear { slope },
                ],
            },
            &g,
        )
        .unwrap();
        // completed square: (w^2/2)(x + g/w^2)^2 - g^2/(2 w^2)
        let shift = slope / (omega * omega);
        for (x, &val) in g.xs().zip(v.iter()) {
            let expected = 0.5 * omega * omega * (x + shift).powi(2) - slope * slope / (2.0 * omega * omega);
            assert!((val - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn single_dwell_equals_beam() {
        let g = make_grid(-5.0, 5.0, 256).unwrap();
        let scan = time_averaged_scan(&g, 2.0, 0.8, &[(0.3, 1.0)]).unwrap();
        let beam = eval_potential(
            &PotentialSpec::GaussianBeam {
                u0: 2.0,
                waist: 0.8,
                center: 0.3,
            },
            &g,
        )
        .unwrap();
        assert_eq!(scan, beam.values);
    }

    #[test]
    fn two_dwell_midpoint() {
        let w = 1.0;
        let g = make_grid(-8.0, 8.0, 512).unwrap();
        let u0 = 1.5;
        let v = time_averaged_scan(&g, u0, w, &[(-2.0 * w, 0.5), (2.0 * w, 0.5)]).unwrap();
        // each hump contributes 0.5 u0 exp(-2 (2w)^2 / w^2)
        let expected = 2.0 * 0.5 * u0 * (-8.0f64).exp();
        let mid = v[g.index_of(0.0)];
        assert!((mid - expected).abs() < 1e-15);
        assert!(v[g.index_of(-2.0)] > 100.0 * mid);
    }

    #[test]
    fn flat_top_scan_is_flat() {
        let w = 1.0;
        let g = make_grid(-10.0, 10.0, 2048).unwrap();
        let dwell = flat_top_dwell(-5.0 * w, 5.0 * w, 101).unwrap();
        let v = time_averaged_scan(&g, 1.0, w, &dwell).unwrap();
        // quadrature oracle: a dwell density of 100 / (101 * 10w) per unit length
        let oracle = |x: f64| {
            let m = 20_000;
            let h = 10.0 * w / m as f64;
            let s: f64 = (0..=m)
                .map(|i| {
                    let c = -5.0 * w + i as f64 * h;
                    let wt = if i == 0 || i == m { 0.5 } else { 1.0 };
                    wt * (-2.0 * (x - c).powi(2) / (w * w)).exp()
                })
                .sum();
            s * h * 100.0 / (101.0 * 10.0 * w)
        };
        let center = v[g.index_of(0.0)];
        assert!((center / oracle(0.0) - 1.0).abs() < 1e-6);
        assert!((oracle(3.0 * w) / oracle(0.0) - 1.0).abs() < 0.02);
        for (x, &val) in g.xs().zip(v.iter()) {
            if x.abs() <= 3.0 * w {
                assert!((val / center - 1.0).abs() < 0.02, "x = {x}");
            }
        }
        assert!(v.iter().cloned().fold(0.0, f64::max) <= 1.0);
    }

    #[test]
    fn dwell_validation() {
        let g = make_grid(-5.0, 5.0, 64).unwrap();
        assert!(time_averaged_scan(&g, 1.0, 1.0, &[]).is_err());
        assert!(time_averaged_scan(&g, 1.0, 1.0, &[(0.0, 1.5), (1.0, -0.5)]).is_err());
        assert!(time_averaged_scan(&g, 1.0, 1.0, &[(0.0, 0.5)]).is_err());
    }

    #[test]
    fn clipped_support_warns() {
        let g = make_grid(-2.0, 2.0, 64).unwrap();
        let v = eval_potential(
            &PotentialSpec::Rectangular {
                v0: 1.0,
                width: 1.0,
                center: 1.8,
            },
            &g,
        )
        .unwrap();
        assert_eq!(v.warnings.len(), 1);
    }

    #[test]
    fn barrier_temperatures() {
        let u = UnitSystem::rb87();
        assert_eq!(barrier_from_temperature(&u, 0.0).unwrap(), 0.0);
        let doppler = barrier_from_temperature(&u, 146e-6).unwrap();
        assert!((doppler * u.si_energy() - KB_SI * 146e-6).abs() < 1e-12 * KB_SI * 146e-6);
        let molasses = barrier_from_temperature(&u, 6e-6).unwrap();
        assert!((molasses * u.si_energy() - KB_SI * 6e-6).abs() < 1e-12 * KB_SI * 6e-6);
        assert!(barrier_from_temperature(&u, -1.0).is_err());
    }

    fn normalized(raw: &[(f64, f64)]) -> Vec<(f64, f64)> {
        let s: f64 = raw.iter().map(|d| d.1).sum();
        let mut out: Vec<(f64, f64)> = raw.iter().map(|&(p, w)| (p, w / s)).collect();
        let rest: f64 = out[1..].iter().map(|d| d.1).sum();
        out[0].1 = 1.0 - rest;
        out
    }

    proptest! {
        #[test]
        fn repulsive_specs_are_nonnegative(v0 in 0.0..10.0f64, u0 in 0.0..10.0f64, w in 0.2..3.0f64, c in -3.0..3.0f64) {
            let g = make_grid(-10.0, 10.0, 128).unwrap();
            let spec = PotentialSpec::Composite { parts: vec![
                PotentialSpec::Rectangular { v0, width: w, center: c },
                PotentialSpec::GaussianBeam { u0, waist: w, center: -c },
            ]};
            prop_assert!(eval_potential(&spec, &g).unwrap().iter().all(|&v| v >= 0.0));
        }

        #[test]
        fn scan_average_is_linear(
            a in prop::collection::vec((-4.0..4.0f64, 0.05..1.0f64), 1..6),
            b in prop::collection::vec((-4.0..4.0f64, 0.05..1.0f64), 1..6),
            alpha in 0.05..0.95f64,
        ) {
            let g = make_grid(-8.0, 8.0, 128).unwrap();
            let (da, db) = (normalized(&a), normalized(&b));
            let va = time_averaged_scan(&g, 2.0, 1.0, &da).unwrap();
            let vb = time_averaged_scan(&g, 2.0, 1.0, &db).unwrap();
            let mut joint: Vec<(f64, f64)> = da.iter().map(|&(p, w)| (p, alpha * w)).collect();
            joint.extend(db.iter().map(|&(p, w)| (p, (1.0 - alpha) * w)));
            let total: f64 = joint.iter().map(|d| d.1).sum();
            prop_assume!((total - 1.0).abs() <= DWELL_WEIGHT_TOL);
            let vj = time_averaged_scan(&g, 2.0, 1.0, &joint).unwrap();
            for i in 0..g.len() {
                prop_assert!((vj[i] - (alpha * va[i] + (1.0 - alpha) * vb[i])).abs() < 1e-12);
                prop_assert!(vj[i] <= 2.0 + 1e-12);
            }
        }
    }
}
