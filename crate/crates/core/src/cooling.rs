//! Delta-kick cooling and velocity-selective transfer.
//!
//! After free expansion each particle sits near `x = v t`, so a
//! restoring impulse `v -> v - s x` with `s ~ 1/t` removes most of the
//! velocity. The quantum version is the phase imprint
//! `exp(-i m s (x - c)^2 / (2 hbar))`.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::parallel::{self, Execution};
use crate::potentials::{eval_potential, BarrierRegion, PotentialSpec};
use crate::propagator::{imaginary_time_ground, lowest_states, Propagation, PropagatorConfig};
use crate::units::{HBAR, MASS};
use crate::wavefn::WaveFn;

#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalEnsemble {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub mass: f64,
}

fn mean(a: &[f64]) -> f64 {
    a.iter().sum::<f64>() / a.len() as f64
}

fn cov(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / a.len() as f64
}

impl ClassicalEnsemble {
    pub fn new(x: Vec<f64>, v: Vec<f64>, mass: f64) -> Result<Self> {
        if x.is_empty() || x.len() != v.len() {
            return Err(Error::Invalid(format!(
                "ensemble needs matching nonempty x and v (got {} and {})",
                x.len(),
                v.len()
            )));
        }
        if x.iter().chain(&v).any(|a| !a.is_finite()) || !(mass > 0.0) {
            return Err(Error::Invalid("ensemble entries and mass must be finite, mass > 0".into()));
        }
        Ok(Self { x, v, mass })
    }

    /// Uncorrelated Gaussian cloud at rest on average.
    pub fn thermal(n: usize, sigma_x: f64, sigma_v: f64, seed: u64) -> Result<Self> {
        if !(sigma_x >= 0.0 && sigma_v >= 0.0) {
            return Err(Error::Invalid("widths must be >= 0".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let nx = Normal::new(0.0, sigma_x).map_err(|e| Error::Invalid(e.to_string()))?;
        let nv = Normal::new(0.0, sigma_v).map_err(|e| Error::Invalid(e.to_string()))?;
        let mut x = Vec::with_capacity(n);
        let mut v = Vec::with_capacity(n);
        for _ in 0..n {
            x.push(nx.sample(&mut rng));
            v.push(nv.sample(&mut rng));
        }
        Self::new(x, v, MASS)
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn var_x(&self) -> f64 {
        cov(&self.x, &self.x)
    }

    pub fn var_v(&self) -> f64 {
        cov(&self.v, &self.v)
    }

    /// `m var(v)`, a temperature in energy units (`k_B T`).
    pub fn temperature(&self) -> f64 {
        self.mass * self.var_v()
    }

    /// Position-velocity correlation coefficient.
    pub fn correlation(&self) -> f64 {
        let d = (self.var_x() * self.var_v()).sqrt();
        if d == 0.0 {
            0.0
        } else {
            cov(&self.x, &self.v) / d
        }
    }

    /// Kick strength `cov(x, v) / var(x)` that minimizes the final velocity
    /// variance for this ensemble.
    pub fn optimal_strength(&self) -> f64 {
        let vx = self.var_x();
        if vx == 0.0 {
            0.0
        } else {
            cov(&self.x, &self.v) / vx
        }
    }
}

pub fn free_expand(ens: &ClassicalEnsemble, t: f64) -> Result<ClassicalEnsemble> {
    if !(t >= 0.0) {
        return Err(Error::Invalid(format!("expansion time must be >= 0, got {t}")));
    }
    Ok(ClassicalEnsemble {
        x: ens.x.iter().zip(&ens.v).map(|(x, v)| x + v * t).collect(),
        v: ens.v.clone(),
        mass: ens.mass,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum KickShape {
    /// `V = m omega^2 (x - c)^2 / 2`.
    Harmonic { omega: f64 },
    /// `V = gradient |x - c|`.
    Quadrupole { gradient: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KickSpec {
    pub shape: KickShape,
    pub duration: f64,
    #[serde(default = "yes")]
    pub impulsive: bool,
    #[serde(default)]
    pub center: f64,
}

fn yes() -> bool {
    true
}

impl KickSpec {
    /// Impulsive harmonic kick with `omega^2 tau = strength`.
    pub fn impulse(strength: f64) -> Self {
        Self {
            shape: KickShape::Harmonic { omega: strength.abs().sqrt() },
            duration: if strength == 0.0 { 0.0 } else { strength.signum() },
            impulsive: true,
            center: 0.0,
        }
    }

    /// `omega^2 tau = 1 / t_free`, exact for an expansion from a point.
    pub fn matched(t_free: f64) -> Result<Self> {
        if !(t_free > 0.0) {
            return Err(Error::Invalid(format!("t_free must be > 0, got {t_free}")));
        }
        Ok(Self::impulse(1.0 / t_free))
    }

    /// Velocity change per unit displacement, `omega^2 tau`; harmonic only.
    pub fn strength(&self) -> Option<f64> {
        match self.shape {
            KickShape::Harmonic { omega } => Some(omega * omega * self.duration),
            KickShape::Quadrupole { .. } => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.impulsive && !(self.duration > 0.0) {
            return Err(Error::Invalid("non-impulsive kicks need duration > 0".into()));
        }
        match self.shape {
            KickShape::Harmonic { omega } if !(omega >= 0.0 && omega.is_finite()) => {
                Err(Error::Invalid(format!("omega must be >= 0, got {omega}")))
            }
            KickShape::Quadrupole { gradient } if !gradient.is_finite() => {
                Err(Error::Invalid("gradient must be finite".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Steps per unit of `omega * duration` for the quadrupole integrator.
const QUADRUPOLE_STEPS: usize = 2000;

pub fn delta_kick(ens: &ClassicalEnsemble, kick: &KickSpec) -> Result<ClassicalEnsemble> {
    kick.validate()?;
    let c = kick.center;
    let m = ens.mass;
    let mut out = ens.clone();
    match (kick.shape, kick.impulsive) {
        (KickShape::Harmonic { omega }, true) => {
            let s = omega * omega * kick.duration;
            for (x, v) in out.x.iter().zip(out.v.iter_mut()) {
                *v -= s * (x - c);
            }
        }
        (KickShape::Harmonic { omega }, false) => {
            let (sn, cs) = (omega * kick.duration).sin_cos();
            for (x, v) in out.x.iter_mut().zip(out.v.iter_mut()) {
                let u = *x - c;
                let nu = if omega == 0.0 { u + *v * kick.duration } else { u * cs + *v / omega * sn };
                *v = -u * omega * sn + *v * cs;
                *x = c + nu;
            }
        }
        (KickShape::Quadrupole { gradient }, true) => {
            let dv = gradient / m * kick.duration;
            for (x, v) in out.x.iter().zip(out.v.iter_mut()) {
                *v -= dv * (x - c).signum();
            }
        }
        (KickShape::Quadrupole { gradient }, false) => {
            let a = gradient / m;
            let n = QUADRUPOLE_STEPS;
            let h = kick.duration / n as f64;
            for (x, v) in out.x.iter_mut().zip(out.v.iter_mut()) {
                for _ in 0..n {
                    *v -= 0.5 * h * a * (*x - c).signum();
                    *x += h * *v;
                    *v -= 0.5 * h * a * (*x - c).signum();
                }
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoolingReport {
    pub temperature_initial: f64,
    pub temperature_expanded: f64,
    pub temperature_final: f64,
    pub ratio: f64,
    /// `sigma_x0^2 / (sigma_x0^2 + sigma_v0^2 t^2)` from the initial moments.
    pub predicted_ratio: f64,
    pub strength: f64,
    pub correlation_expanded: f64,
}

impl CoolingReport {
    pub const CSV_HEADER: &'static str =
        "temperature_initial,temperature_expanded,temperature_final,ratio,predicted_ratio,strength,correlation_expanded";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.temperature_initial,
            self.temperature_expanded,
            self.temperature_final,
            self.ratio,
            self.predicted_ratio,
            self.strength,
            self.correlation_expanded
        )
    }
}

/// Expand for `t_free`, then apply `kick` or the ensemble's optimal impulse.
pub fn kick_cool(ens: &ClassicalEnsemble, t_free: f64, kick: Option<&KickSpec>) -> Result<(ClassicalEnsemble, CoolingReport)> {
    let expanded = free_expand(ens, t_free)?;
    let spec = match kick {
        Some(k) => *k,
        None => KickSpec::impulse(expanded.optimal_strength()),
    };
    let cooled = delta_kick(&expanded, &spec)?;
    let (vx, vv) = (ens.var_x(), ens.var_v());
    let report = CoolingReport {
        temperature_initial: ens.temperature(),
        temperature_expanded: expanded.temperature(),
        temperature_final: cooled.temperature(),
        ratio: cooled.temperature() / ens.temperature(),
        predicted_ratio: vx / (vx + vv * t_free * t_free),
        strength: spec.strength().unwrap_or(f64::NAN),
        correlation_expanded: expanded.correlation(),
    };
    Ok((cooled, report))
}

/// Phase imprint of an impulsive kick.
pub fn delta_kick_quantum(psi: &WaveFn, kick: &KickSpec) -> Result<WaveFn> {
    kick.validate()?;
    if !kick.impulsive {
        return Err(Error::Invalid(
            "only impulsive kicks are phase imprints; propagate finite kicks instead".into(),
        ));
    }
    if psi.representation() != crate::wavefn::Representation::Position {
        return Err(Error::Representation("momentum"));
    }
    let c = kick.center;
    let phase: Box<dyn Fn(f64) -> f64> = match kick.shape {
        KickShape::Harmonic { omega } => {
            let s = omega * omega * kick.duration;
            Box::new(move |x| -MASS * s * (x - c) * (x - c) / (2.0 * HBAR))
        }
        KickShape::Quadrupole { gradient } => Box::new(move |x| -gradient * kick.duration * (x - c).abs() / HBAR),
    };
    let amps = psi
        .amps()
        .iter()
        .zip(psi.grid().xs())
        .map(|(a, x)| a * Complex64::from_polar(1.0, phase(x)))
        .collect();
    WaveFn::from_amplitudes(psi.grid(), amps)
}

// ---------------------------------------------------------------------------
// Velocity selection

/// Moving element `height * exp(-2 (x - center)^2 / width^2)` held from the
/// previous row's time up to `t`. Negative heights are wells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSegment {
    pub t: f64,
    pub center: f64,
    pub width: f64,
    pub height: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub segments: Vec<SweepSegment>,
    /// Where transferred atoms are counted.
    pub aux_region: BarrierRegion,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub transferred: f64,
    pub ground_fraction: f64,
    pub remainder: f64,
    pub absorbed: f64,
    #[serde(skip)]
    pub final_state: WaveFn,
}

impl SweepResult {
    pub const CSV_HEADER: &'static str = "transferred,ground_fraction,remainder,absorbed";

    pub fn csv_row(&self) -> String {
        format!("{},{},{},{}", self.transferred, self.ground_fraction, self.remainder, self.absorbed)
    }
}

fn element(grid: &crate::grid::Grid1D, seg: &SweepSegment) -> Vec<f64> {
    grid.xs()
        .map(|x| {
            let d = x - seg.center;
            seg.height * (-2.0 * d * d / (seg.width * seg.width)).exp()
        })
        .collect()
}

fn segment_potential(trap: &[f64], grid: &crate::grid::Grid1D, seg: Option<&SweepSegment>) -> Vec<f64> {
    match seg {
        None => trap.to_vec(),
        Some(s) => trap.iter().zip(element(grid, s)).map(|(a, b)| a + b).collect(),
    }
}

/// Ground state of the final configuration, used as the transfer target.
fn target_ground(trap: &[f64], grid: &crate::grid::Grid1D, spec: &SweepSpec) -> Result<WaveFn> {
    let v = segment_potential(trap, grid, spec.segments.last());
    // confine to the auxiliary region so the reference is the local well
    let wall = 10.0 * v.iter().cloned().fold(1.0, |a: f64, b: f64| a.max(b.abs()));
    let confined: Vec<f64> = grid
        .xs()
        .zip(&v)
        .map(|(x, &vv)| if spec.aux_region.contains(x) { vv } else { vv.max(0.0) + wall })
        .collect();
    Ok(imaginary_time_ground(&confined, grid, 1e-7)?.state)
}

/// Propagate through piecewise-static sweep segments.
pub fn velocity_select_sweep(
    psi: &WaveFn,
    trap: &PotentialSpec,
    sweep: &SweepSpec,
    config: &PropagatorConfig,
) -> Result<SweepResult> {
    let grid = psi.grid();
    let trap_v = eval_potential(trap, grid)?.values;
    sweep_with(psi, &trap_v, sweep, config, &target_ground(&trap_v, grid, sweep)?)
}

fn sweep_with(
    psi: &WaveFn,
    trap_v: &[f64],
    sweep: &SweepSpec,
    config: &PropagatorConfig,
    target: &WaveFn,
) -> Result<SweepResult> {
    let grid = psi.grid();
    sweep.aux_region.check_on(grid)?;
    for w in sweep.segments.windows(2) {
        if !(w[1].t >= w[0].t) {
            return Err(Error::Invalid("sweep rows must have nondecreasing t".into()));
        }
    }
    if sweep.segments.iter().any(|s| !(s.width > 0.0) || !(s.t >= 0.0)) {
        return Err(Error::Invalid("sweep rows need width > 0 and t >= 0".into()));
    }
    let dt = config.dt;
    let mut state = psi.clone();
    let (mut absorbed, mut t_prev) = (0.0, 0.0);
    for seg in &sweep.segments {
        let n = ((seg.t - t_prev) / dt).round() as usize;
        t_prev = seg.t;
        if n == 0 {
            continue;
        }
        let v = segment_potential(trap_v, grid, Some(seg));
        let cfg = PropagatorConfig { dt, n_steps: n, absorber: config.absorber };
        let mut prop = Propagation::new(&state, &v, &cfg)?;
        for _ in 0..n {
            prop.step();
        }
        let (l, r) = prop.absorbed();
        absorbed += l + r;
        state = prop.psi().clone();
    }
    let transferred = state.probability_in(&sweep.aux_region);
    let norm = state.norm_sq();
    let ground_fraction = target.inner(&state)?.norm_sqr();
    Ok(SweepResult {
        transferred,
        ground_fraction,
        remainder: norm - transferred,
        absorbed,
        final_state: state,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThermalSweep {
    pub transferred: f64,
    pub ground_fraction: f64,
    /// Boltzmann-weighted spread of the per-state transferred fractions.
    pub transferred_spread: f64,
    /// Weight of states above the highest one included, relative to the
    /// included ones (estimated from the last level).
    pub truncated_weight: f64,
    pub n_states: usize,
}

impl ThermalSweep {
    pub const CSV_HEADER: &'static str = "transferred,ground_fraction,transferred_spread,truncated_weight,n_states";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.transferred, self.ground_fraction, self.transferred_spread, self.truncated_weight, self.n_states
        )
    }
}

/// Sweep each of the lowest `n_states` eigenstates of the initial trap and
/// combine with Boltzmann weights at temperature `kt` (energy units).
pub fn thermal_sweep(
    grid: &crate::grid::Grid1D,
    trap: &PotentialSpec,
    sweep: &SweepSpec,
    config: &PropagatorConfig,
    kt: f64,
    n_states: usize,
    exec: Execution,
) -> Result<ThermalSweep> {
    if !(kt > 0.0) || n_states == 0 {
        return Err(Error::Invalid("thermal sweep needs kT > 0 and at least one state".into()));
    }
    let trap_v = eval_potential(trap, grid)?.values;
    let initial = segment_potential(&trap_v, grid, sweep.segments.first());
    let states = lowest_states(&initial, grid, n_states, 1e-6)?;
    let target = target_ground(&trap_v, grid, sweep)?;
    let e0 = states[0].energy;
    let w: Vec<f64> = states.iter().map(|s| (-(s.energy - e0) / kt).exp()).collect();
    let z: f64 = w.iter().sum();
    let results: Vec<SweepResult> = parallel::map(exec, &states, |_, s| sweep_with(&s.state, &trap_v, sweep, config, &target))
        .into_iter()
        .collect::<Result<_>>()?;
    let tr: f64 = results.iter().zip(&w).map(|(r, w)| r.transferred * w).sum::<f64>() / z;
    let gf: f64 = results.iter().zip(&w).map(|(r, w)| r.ground_fraction * w).sum::<f64>() / z;
    let spread = (results.iter().zip(&w).map(|(r, w)| w * (r.transferred - tr).powi(2)).sum::<f64>() / z).sqrt();
    let last = *w.last().expect("nonempty");
    let gap = if states.len() > 1 {
        states[states.len() - 1].energy - states[states.len() - 2].energy
    } else {
        kt
    };
    // geometric tail beyond the last level with the last spacing
    let q = (-gap / kt).exp();
    let truncated_weight = if q < 1.0 { last * q / (1.0 - q) / z } else { f64::INFINITY };
    Ok(ThermalSweep {
        transferred: tr,
        ground_fraction: gf,
        transferred_spread: spread,
        truncated_weight,
        n_states: states.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;
    use crate::propagator::split_step;
    use crate::wavefn::gaussian_packet;
    use proptest::prelude::*;

    #[test]
    fn expansion_identity_and_point_source() {
        let e = ClassicalEnsemble::thermal(1000, 1.0, 0.5, 1).unwrap();
        assert_eq!(free_expand(&e, 0.0).unwrap(), e);
        let point = ClassicalEnsemble::new(vec![0.0; 100], (0..100).map(|i| i as f64 * 0.1 - 5.0).collect(), 1.0).unwrap();
        let p = free_expand(&point, 3.0).unwrap();
        assert!((p.correlation() - 1.0).abs() < 1e-12);
        assert!(free_expand(&e, -1.0).is_err());
    }

    #[test]
    fn expansion_correlation_matches_gaussian_moments() {
        let (sx, sv, t) = (1.0, 0.7, 2.0);
        let e = ClassicalEnsemble::thermal(200_000, sx, sv, 2).unwrap();
        let r = free_expand(&e, t).unwrap().correlation();
        let expected = sv * t / (sx * sx + sv * sv * t * t).sqrt();
        assert!((r - expected).abs() < 5e-3, "{r} vs {expected}");
    }

    #[test]
    fn correlated_ensemble_cools_to_zero() {
        let t = 4.0;
        let v: Vec<f64> = (0..1000).map(|i| (i as f64 - 500.0) * 1e-3).collect();
        let x: Vec<f64> = v.iter().map(|v| v * t).collect();
        let e = ClassicalEnsemble::new(x, v, 1.0).unwrap();
        let cooled = delta_kick(&e, &KickSpec::matched(t).unwrap()).unwrap();
        assert!(cooled.temperature() < 1e-28);
    }

    #[test]
    fn optimal_kick_law() {
        let (sx, sv, t) = (1.0, 1.0, 0.5);
        let e = ClassicalEnsemble::thermal(100_000, sx, sv, 11).unwrap();
        let (_, r) = kick_cool(&e, t, None).unwrap();
        let law = sx * sx / (sx * sx + sv * sv * t * t);
        assert!((r.ratio / law - 1.0).abs() < 0.01, "{} vs {law}", r.ratio);
    }

    #[test]
    fn matched_kick_point_source_limit() {
        // matched impulse leaves sigma_x0^2 / t^2 of velocity variance
        let (sx, sv, t) = (0.01, 1.0, 10.0);
        let e = ClassicalEnsemble::thermal(50_000, sx, sv, 3).unwrap();
        let expanded = free_expand(&e, t).unwrap();
        let cooled = delta_kick(&expanded, &KickSpec::matched(t).unwrap()).unwrap();
        let expected = e.var_x() / (t * t);
        assert!((cooled.var_v() / expected - 1.0).abs() < 1e-9);
    }

    #[test]
    fn zero_kick_is_identity() {
        let e = ClassicalEnsemble::thermal(100, 1.0, 1.0, 4).unwrap();
        assert_eq!(delta_kick(&e, &KickSpec::impulse(0.0)).unwrap(), e);
    }

    #[test]
    fn finite_harmonic_kick_is_a_rotation() {
        let e = ClassicalEnsemble::new(vec![1.0], vec![0.0], 1.0).unwrap();
        let k = KickSpec {
            shape: KickShape::Harmonic { omega: 2.0 },
            duration: std::f64::consts::PI / 4.0,
            impulsive: false,
            center: 0.0,
        };
        let out = delta_kick(&e, &k).unwrap();
        assert!(out.x[0].abs() < 1e-12 && (out.v[0] + 2.0).abs() < 1e-12);
        let bad = KickSpec { duration: 0.0, ..k };
        assert!(delta_kick(&e, &bad).is_err());
    }

    #[test]
    fn quadrupole_kicks() {
        let e = ClassicalEnsemble::new(vec![-2.0, 3.0], vec![0.0, 0.0], 1.0).unwrap();
        let k = KickSpec { shape: KickShape::Quadrupole { gradient: 0.5 }, duration: 2.0, impulsive: true, center: 0.0 };
        let out = delta_kick(&e, &k).unwrap();
        assert_eq!(out.v, vec![1.0, -1.0]);
        let slow = KickSpec { impulsive: false, duration: 1.0, ..k };
        let out = delta_kick(&e, &slow).unwrap();
        // constant force while the particles stay on their side
        assert!((out.x[1] - (3.0 - 0.25)).abs() < 1e-9);
        assert!((out.v[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn quantum_kick_restores_minimum_momentum_width() {
        let g = make_grid(-60.0, 60.0, 512).unwrap();
        let s0 = 1.5;
        let psi = gaussian_packet(&g, 0.0, 0.0, s0).unwrap();
        let t = 6.0;
        let cfg = PropagatorConfig::new(0.005, 1200);
        let expanded = split_step(&psi, &vec![0.0; g.len()], &cfg).unwrap().psi;
        let tau = t / (2.0 * s0 * s0);
        let st2 = s0 * s0 * (1.0 + tau * tau);
        let kicked = delta_kick_quantum(&expanded, &KickSpec::impulse(t / (4.0 * s0 * s0 * st2))).unwrap();
        let expected = 1.0 / (2.0 * st2.sqrt());
        assert!((kicked.momentum_width() / expected - 1.0).abs() < 1e-6);
        assert!(kicked.kinetic_energy() < expanded.kinetic_energy());
        for (a, b) in kicked.amps().iter().zip(expanded.amps()) {
            assert!((a.norm_sqr() - b.norm_sqr()).abs() < 1e-12);
        }
    }

    #[test]
    fn quantum_kick_algebra() {
        let g = make_grid(-20.0, 20.0, 256).unwrap();
        let psi = gaussian_packet(&g, 1.0, 0.3, 2.0).unwrap();
        let zero = delta_kick_quantum(&psi, &KickSpec::impulse(0.0)).unwrap();
        assert_eq!(zero, psi);
        let twice = delta_kick_quantum(&delta_kick_quantum(&psi, &KickSpec::impulse(0.2)).unwrap(), &KickSpec::impulse(0.3)).unwrap();
        let once = delta_kick_quantum(&psi, &KickSpec::impulse(0.5)).unwrap();
        for (a, b) in twice.amps().iter().zip(once.amps()) {
            assert!((a - b).norm() < 1e-12);
        }
        let slow = KickSpec { impulsive: false, ..KickSpec::impulse(0.5) };
        assert!(delta_kick_quantum(&psi, &slow).is_err());
    }

    fn well_sweep(segments: Vec<SweepSegment>, aux: BarrierRegion) -> SweepSpec {
        SweepSpec { segments, aux_region: aux }
    }

    #[test]
    fn no_sweep_keeps_initial_overlap() {
        let g = make_grid(-20.0, 20.0, 256).unwrap();
        let psi = gaussian_packet(&g, 0.0, 0.0, 1.0).unwrap();
        let aux = BarrierRegion::new(0.5, 10.0).unwrap();
        let spec = well_sweep(vec![], aux);
        let trap = PotentialSpec::Harmonic { omega: 0.5, center: 0.0 };
        let r = velocity_select_sweep(&psi, &trap, &spec, &PropagatorConfig::new(0.01, 0)).unwrap();
        assert!((r.transferred - psi.probability_in(&aux)).abs() < 1e-15);
        assert!((r.transferred + r.remainder + r.absorbed - 1.0).abs() < 1e-9);
    }

    #[test]
    fn adiabatic_sweep_keeps_ground_state() {
        let g = make_grid(-16.0, 16.0, 128).unwrap();
        let depth = -20.0;
        let n = 400;
        let segments: Vec<SweepSegment> = (0..=n)
            .map(|i| SweepSegment { t: i as f64 * 0.1, center: -2.0 + 4.0 * i as f64 / n as f64, width: 1.5, height: depth })
            .collect();
        let initial = segment_potential(&vec![0.0; g.len()], &g, segments.first());
        let ground = imaginary_time_ground(&initial, &g, 1e-8).unwrap().state;
        let spec = well_sweep(segments, BarrierRegion::new(0.0, 4.0).unwrap());
        let trap = PotentialSpec::Linear { slope: 0.0 };
        let cfg = PropagatorConfig::new(0.005, 0).with_absorber(3.0, 1.0);
        let r = velocity_select_sweep(&ground, &trap, &spec, &cfg).unwrap();
        assert!(r.ground_fraction >= 0.99, "{}", r.ground_fraction);
        assert!((r.transferred + r.remainder + r.absorbed - 1.0).abs() < 1e-9);
    }

    #[test]
    fn thermal_mixture_reports_spread() {
        let g = make_grid(-16.0, 16.0, 128).unwrap();
        let segments: Vec<SweepSegment> = (0..=10)
            .map(|i| SweepSegment { t: i as f64, center: 4.0 - 0.3 * i as f64, width: 1.0, height: -3.0 })
            .collect();
        let spec = well_sweep(segments, BarrierRegion::new(0.0, 6.0).unwrap());
        let trap = PotentialSpec::Harmonic { omega: 0.5, center: 0.0 };
        let cfg = PropagatorConfig::new(0.005, 0).with_absorber(3.0, 1.0);
        let r = thermal_sweep(&g, &trap, &spec, &cfg, 0.5, 4, Execution::Parallel).unwrap();
        assert!(r.transferred > 0.0 && r.transferred < 1.0);
        assert!(r.transferred_spread >= 0.0 && r.truncated_weight > 0.0);
        assert_eq!(r.n_states, 4);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn maps_invert(t in 0.0..5.0f64, s in -2.0..2.0f64, seed in 0u64..100) {
            let e = ClassicalEnsemble::thermal(64, 1.0, 1.0, seed).unwrap();
            let fwd = delta_kick(&free_expand(&e, t).unwrap(), &KickSpec::impulse(s)).unwrap();
            let back_kick = delta_kick(&fwd, &KickSpec::impulse(-s)).unwrap();
            let back = free_expand(&ClassicalEnsemble { v: back_kick.v.iter().map(|v| -v).collect(), ..back_kick }, t).unwrap();
            prop_assert_eq!(back.len(), e.len());
            for (a, b) in back.x.iter().zip(&e.x) {
                prop_assert!((a - b).abs() < 1e-9);
            }
            for (a, b) in back.v.iter().zip(&e.v) {
                prop_assert!((a + b).abs() < 1e-9);
            }
        }

        #[test]
        fn quantum_kick_is_pure_phase(s in -3.0..3.0f64, c in -2.0..2.0f64) {
            let g = make_grid(-20.0, 20.0, 256).unwrap();
            let psi = gaussian_packet(&g, 0.5, 0.2, 2.0).unwrap();
            let k = KickSpec { center: c, ..KickSpec::impulse(s) };
            let out = delta_kick_quantum(&psi, &k).unwrap();
            prop_assert!((out.norm_sq() - psi.norm_sq()).abs() < 1e-12);
            for (a, b) in out.amps().iter().zip(psi.amps()) {
                prop_assert!((a.norm_sqr() - b.norm_sqr()).abs() < 1e-12);
            }
        }
    }
}
