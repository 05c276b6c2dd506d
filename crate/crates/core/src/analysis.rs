//! Closed-form tunneling oracles and bound calculators.
//!
//! The inequality chain for imaging a particle inside a barrier:
//! resolution `dl < 1/kappa`, momentum spread `hbar / (2 dl)`, residence
//! time `2 m dl^2 / hbar`, and the energy spread `hbar / t` that a probe
//! must carry. At `dl = 1/kappa` that spread is exactly `V0 - E`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::Grid1D;
use crate::potentials::BarrierRegion;
use crate::units::{HBAR, MASS};
use crate::wavefn::WaveFn;

/// Fits with `r^2` below this are flagged.
pub const MIN_FIT_R2: f64 = 0.9;

/// Evanescent decay constant, `sqrt(2 m (v0 - e)) / hbar`.
pub fn kappa(v0: f64, e: f64) -> Result<f64> {
    if !(e >= 0.0) || !(v0 > e) {
        return Err(Error::NotTunneling { v0, e });
    }
    Ok((2.0 * MASS * (v0 - e)).sqrt() / HBAR)
}

/// Residence-time limit `2 m / (hbar kappa^2)` at resolution `1/kappa`.
pub fn critical_pulse_duration(v0: f64, e: f64) -> Result<f64> {
    let k = kappa(v0, e)?;
    Ok(2.0 * MASS / (HBAR * k * k))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundReport {
    pub v0: f64,
    pub e: f64,
    pub delta_l: f64,
    pub kappa: f64,
    /// `1/kappa`, also the resolution threshold.
    pub decay_length: f64,
    pub resolution_limit: f64,
    /// `delta_l < 1/kappa`.
    pub resolution_ok: bool,
    /// `hbar / (2 delta_l)`.
    pub momentum_uncertainty: f64,
    /// `2 m delta_l^2 / hbar`.
    pub dwell_time: f64,
    /// `2 m / (hbar kappa^2)`.
    pub dwell_time_limit: f64,
    /// `hbar / dwell_time`.
    pub energy_uncertainty_floor: f64,
    /// `hbar / dwell_time_limit`, equal to `hbar^2 kappa^2 / 2m`.
    pub critical_energy_floor: f64,
    /// `v0 - e`.
    pub barrier_deficit: f64,
    /// `energy_uncertainty_floor / barrier_deficit`.
    pub margin: f64,
    /// `dwell_time < dwell_time_limit` implies `floor > deficit`.
    pub chain_holds: bool,
}

impl BoundReport {
    pub const CSV_HEADER: &'static str = "v0,e,delta_l,kappa,decay_length,resolution_limit,resolution_ok,momentum_uncertainty,dwell_time,dwell_time_limit,energy_uncertainty_floor,critical_energy_floor,barrier_deficit,margin,chain_holds";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.v0,
            self.e,
            self.delta_l,
            self.kappa,
            self.decay_length,
            self.resolution_limit,
            self.resolution_ok,
            self.momentum_uncertainty,
            self.dwell_time,
            self.dwell_time_limit,
            self.energy_uncertainty_floor,
            self.critical_energy_floor,
            self.barrier_deficit,
            self.margin,
            self.chain_holds
        )
    }
}

pub fn bound_chain(v0: f64, e: f64, delta_l: f64) -> Result<BoundReport> {
    if !(delta_l > 0.0) {
        return Err(Error::Invalid(format!("delta_l must be > 0, got {delta_l}")));
    }
    let k = kappa(v0, e)?;
    let decay_length = 1.0 / k;
    let dwell_time = 2.0 * MASS * delta_l * delta_l / HBAR;
    let dwell_time_limit = 2.0 * MASS / (HBAR * k * k);
    let floor = HBAR / dwell_time;
    let deficit = v0 - e;
    let chain_holds = if dwell_time < dwell_time_limit {
        floor > HBAR * HBAR * k * k / (2.0 * MASS)
    } else {
        true
    };
    Ok(BoundReport {
        v0,
        e,
        delta_l,
        kappa: k,
        decay_length,
        resolution_limit: decay_length,
        resolution_ok: delta_l < decay_length,
        momentum_uncertainty: HBAR / (2.0 * delta_l),
        dwell_time,
        dwell_time_limit,
        energy_uncertainty_floor: floor,
        critical_energy_floor: HBAR / dwell_time_limit,
        barrier_deficit: deficit,
        margin: floor / deficit,
        chain_holds,
    })
}

/// Plane-wave transmission through a rectangular barrier of height `v0`
/// and width `d` at energy `e`.
pub fn rect_transmission_analytic(e: f64, v0: f64, d: f64) -> Result<f64> {
    if !(e > 0.0) || !(v0 >= 0.0) || !(d >= 0.0) {
        return Err(Error::Invalid(format!(
            "need e > 0, v0 >= 0, d >= 0 (got e={e}, v0={v0}, d={d})"
        )));
    }
    if d == 0.0 || v0 == 0.0 {
        return Ok(1.0);
    }
    let t = if e < v0 {
        let k = (2.0 * MASS * (v0 - e)).sqrt() / HBAR;
        let s = (k * d).sinh();
        1.0 / (1.0 + v0 * v0 * s * s / (4.0 * e * (v0 - e)))
    } else if e > v0 {
        let k = (2.0 * MASS * (e - v0)).sqrt() / HBAR;
        let s = (k * d).sin();
        1.0 / (1.0 + v0 * v0 * s * s / (4.0 * e * (e - v0)))
    } else {
        1.0 / (1.0 + MASS * v0 * d * d / (2.0 * HBAR * HBAR))
    };
    Ok(t)
}

/// Analytic transmission averaged over the right-moving momentum components
/// of `psi`.
pub fn packet_transmission_analytic(psi: &WaveFn, v0: f64, d: f64) -> Result<f64> {
    let phi = psi.to_momentum()?;
    let (mut w, mut wt) = (0.0, 0.0);
    for (a, &k) in phi.amps().iter().zip(psi.grid().k_values()) {
        if k > 0.0 {
            let p = a.norm_sqr();
            w += p;
            wt += p * rect_transmission_analytic(HBAR * HBAR * k * k / (2.0 * MASS), v0, d)?;
        }
    }
    if w == 0.0 {
        return Err(Error::State("no right-moving components".into()));
    }
    Ok(wt / w)
}

/// Mean energy and relative energy spread of `psi` in free space.
pub fn energy_spread(psi: &WaveFn) -> Result<(f64, f64)> {
    let phi = psi.to_momentum()?;
    let (mut w, mut m1, mut m2) = (0.0, 0.0, 0.0);
    for (a, &k) in phi.amps().iter().zip(psi.grid().k_values()) {
        let p = a.norm_sqr();
        let e = HBAR * HBAR * k * k / (2.0 * MASS);
        w += p;
        m1 += p * e;
        m2 += p * e * e;
    }
    let mean = m1 / w;
    Ok((mean, (m2 / w - mean * mean).max(0.0).sqrt() / mean))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WkbEstimate {
    /// `omega / 2pi * exp(-2 action)` summed over escape sides.
    pub rate: f64,
    pub omega: f64,
    /// `integral of kappa dx` over the dominant forbidden span.
    pub action: f64,
    pub turning_points: (f64, f64),
}

impl WkbEstimate {
    pub fn loss_per_period(&self) -> f64 {
        self.rate * 2.0 * std::f64::consts::PI / self.omega
    }
}

/// Least-squares parabola through the points of the well with `V <= e`.
fn harmonic_fit(xs: &[f64], vs: &[f64]) -> Result<f64> {
    if xs.len() < 3 {
        return Err(Error::Analysis("well too narrow for a harmonic fit".into()));
    }
    let n = xs.len() as f64;
    let xm = xs.iter().sum::<f64>() / n;
    // normal equations for v = a + b u + c u^2 with u = x - xm
    let mut s = [0.0f64; 5];
    let mut t = [0.0f64; 3];
    for (&x, &v) in xs.iter().zip(vs) {
        let u = x - xm;
        let mut p = 1.0;
        for item in s.iter_mut() {
            *item += p;
            p *= u;
        }
        t[0] += v;
        t[1] += v * u;
        t[2] += v * u * u;
    }
    let m = [[s[0], s[1], s[2]], [s[1], s[2], s[3]], [s[2], s[3], s[4]]];
    let det3 = |m: &[[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det3(&m);
    let mut mc = m;
    for r in 0..3 {
        mc[r][2] = t[r];
    }
    let c = det3(&mc) / d;
    if !(c > 0.0) {
        return Err(Error::Analysis("well curvature is not positive".into()));
    }
    Ok((2.0 * c / MASS).sqrt())
}

/// Integral of `kappa` between consecutive indices where `V > e`, with
/// linear interpolation of the turning points. Returns `(action, a, b)`.
fn forbidden_action(grid: &Grid1D, v: &[f64], e: f64, from: usize, step: isize) -> Option<(f64, f64, f64)> {
    let n = v.len() as isize;
    let k = |vv: f64| (2.0 * MASS * (vv - e).max(0.0)).sqrt() / HBAR;
    let mut i = from as isize;
    while i >= 0 && i < n && v[i as usize] <= e {
        i += step;
    }
    if i < 0 || i >= n {
        return None;
    }
    let prev = (i - step) as usize;
    let cur = i as usize;
    let frac = (e - v[prev]) / (v[cur] - v[prev]);
    let a = grid.x(prev) + step as f64 * frac * grid.dx();
    let mut action = 0.5 * k(v[cur]) * (grid.x(cur) - a).abs();
    while i >= 0 && i < n && v[i as usize] > e {
        let nxt = i + step;
        if nxt < 0 || nxt >= n {
            return None;
        }
        let (x0, x1) = (grid.x(i as usize), grid.x(nxt as usize));
        if v[nxt as usize] > e {
            action += 0.5 * (k(v[i as usize]) + k(v[nxt as usize])) * (x1 - x0).abs();
        } else {
            let f = (v[i as usize] - e) / (v[i as usize] - v[nxt as usize]);
            action += 0.5 * k(v[i as usize]) * f * grid.dx();
            let b = x0 + step as f64 * f * grid.dx();
            return Some((action, a.min(b), a.max(b)));
        }
        i = nxt;
    }
    None
}

/// Attempt-frequency WKB decay rate of a metastable well at energy `e`.
pub fn wkb_decay_rate(grid: &Grid1D, potential: &[f64], e: f64, trap: &BarrierRegion) -> Result<WkbEstimate> {
    if potential.len() != grid.len() {
        return Err(Error::GridMismatch);
    }
    let (lo, hi) = (grid.index_of(trap.x_left), grid.index_of(trap.x_right));
    let imin = (lo..=hi)
        .min_by(|&a, &b| potential[a].total_cmp(&potential[b]))
        .ok_or_else(|| Error::Analysis("empty trap region".into()))?;
    if potential[imin] >= e {
        return Err(Error::Analysis(format!("energy {e} lies below the well bottom")));
    }
    let mut l = imin;
    while l > 0 && potential[l - 1] <= e {
        l -= 1;
    }
    let mut r = imin;
    while r + 1 < potential.len() && potential[r + 1] <= e {
        r += 1;
    }
    let xs: Vec<f64> = (l..=r).map(|i| grid.x(i)).collect();
    let omega = harmonic_fit(&xs, &potential[l..=r])?;
    let sides = [
        forbidden_action(grid, potential, e, imin, 1),
        forbidden_action(grid, potential, e, imin, -1),
    ];
    let found: Vec<(f64, f64, f64)> = sides.into_iter().flatten().collect();
    if found.is_empty() {
        return Err(Error::Analysis(format!(
            "no classically forbidden span with an escape route at energy {e}"
        )));
    }
    let rate = found
        .iter()
        .map(|(s, _, _)| omega / (2.0 * std::f64::consts::PI) * (-2.0 * s).exp())
        .sum();
    let dominant = found
        .iter()
        .cloned()
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .expect("nonempty");
    Ok(WkbEstimate {
        rate,
        omega,
        action: dominant.0,
        turning_points: (dominant.1, dominant.2),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayFit {
    pub rate: f64,
    pub amplitude: f64,
    pub r_squared: f64,
    pub window: (f64, f64),
    /// `rate > 0` and `r_squared >= MIN_FIT_R2`.
    pub accepted: bool,
}

impl DecayFit {
    pub const CSV_HEADER: &'static str = "rate,amplitude,r_squared,t_start,t_end,accepted";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.rate, self.amplitude, self.r_squared, self.window.0, self.window.1, self.accepted
        )
    }
}

/// Fit `P = A exp(-rate t)` skipping the first 10% of samples.
pub fn fit_exponential_decay(survival: &[(f64, f64)]) -> Result<DecayFit> {
    fit_exponential_decay_window(survival, 0.1, survival.len())
}

/// Fit over samples `[skip_fraction * len, end)`.
pub fn fit_exponential_decay_window(survival: &[(f64, f64)], skip_fraction: f64, end: usize) -> Result<DecayFit> {
    if survival.len() < 8 {
        return Err(Error::Analysis(format!("need at least 8 samples, got {}", survival.len())));
    }
    if let Some(&(t, p)) = survival.iter().find(|(_, p)| !(*p > 0.0 && *p <= 1.0)) {
        return Err(Error::Analysis(format!("survival {p} at t = {t} is outside (0, 1]")));
    }
    let start = ((skip_fraction.clamp(0.0, 0.9)) * survival.len() as f64).floor() as usize;
    let end = end.min(survival.len());
    let window = &survival[start..end];
    if window.len() < 3 {
        return Err(Error::Analysis("fit window holds fewer than 3 samples".into()));
    }
    let n = window.len() as f64;
    let tm = window.iter().map(|s| s.0).sum::<f64>() / n;
    let ym = window.iter().map(|s| s.1.ln()).sum::<f64>() / n;
    let (mut stt, mut sty, mut syy) = (0.0, 0.0, 0.0);
    for &(t, p) in window {
        let (dt, dy) = (t - tm, p.ln() - ym);
        stt += dt * dt;
        sty += dt * dy;
        syy += dy * dy;
    }
    let slope = sty / stt;
    let intercept = ym - slope * tm;
    let r_squared = if syy == 0.0 { 1.0 } else { sty * sty / (stt * syy) };
    let rate = -slope;
    Ok(DecayFit {
        rate,
        amplitude: intercept.exp(),
        r_squared,
        window: (window[0].0, window[window.len() - 1].0),
        accepted: rate > 0.0 && r_squared >= MIN_FIT_R2,
    })
}
