//! Split-operator time evolution.
//!
//! Real time uses the symmetric (Strang) splitting
//! `exp(-iV dt/2) exp(-iT dt) exp(-iV dt/2)` with an optional cos^2 absorbing
//! mask at both grid edges. Imaginary time uses the same splitting with real
//! exponents, followed by a preconditioned Rayleigh-Ritz polish so the final
//! state satisfies the requested residual.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid1D;
use crate::potentials::BarrierRegion;
use crate::units::{HBAR, MASS};
use crate::wavefn::{Representation, WaveFn};

/// Upper bound on `dt * max|V|` and `dt * max(k^2 / 2m)`.
pub const STABILITY_LIMIT: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Absorber {
    pub width: f64,
    pub strength: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropagatorConfig {
    pub dt: f64,
    pub n_steps: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub absorber: Option<Absorber>,
}

impl PropagatorConfig {
    pub fn new(dt: f64, n_steps: usize) -> Self {
        Self {
            dt,
            n_steps,
            absorber: None,
        }
    }

    pub fn with_absorber(mut self, width: f64, strength: f64) -> Self {
        self.absorber = Some(Absorber { width, strength });
        self
    }
}

/// Reject `dt` values that under-resolve the potential or kinetic phases.
pub fn check_stability(grid: &Grid1D, potential: &[f64], dt: f64) -> Result<()> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Stability {
            reason: format!("dt must be positive, got {dt}"),
            suggested_dt: 1e-3,
        });
    }
    let v_max = potential.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let t_max = HBAR * HBAR * grid.k_max().powi(2) / (2.0 * MASS);
    let limit = 0.9 * STABILITY_LIMIT / v_max.max(t_max) * HBAR;
    if dt * v_max / HBAR >= STABILITY_LIMIT {
        return Err(Error::Stability {
            reason: format!("dt * max|V| = {:.3} >= {STABILITY_LIMIT}", dt * v_max),
            suggested_dt: limit,
        });
    }
    if dt * t_max / HBAR >= STABILITY_LIMIT {
        return Err(Error::Stability {
            reason: format!("dt * max(k^2/2m) = {:.3} >= {STABILITY_LIMIT}", dt * t_max),
            suggested_dt: limit,
        });
    }
    Ok(())
}

/// Absorption rate profile `strength * cos^2(pi/2 * d / width)` where `d`
/// is the distance from the outermost grid point; zero in the interior.
pub fn absorber_profile(grid: &Grid1D, width: f64, strength: f64) -> Result<Vec<f64>> {
    if !(width >= 8.0 * grid.dx()) {
        return Err(Error::Invalid(format!(
            "absorber width {width} must be at least 8 dx = {}",
            8.0 * grid.dx()
        )));
    }
    if width > 0.25 * grid.length() {
        return Err(Error::Invalid(format!(
            "absorber width {width} exceeds a quarter of the grid length {}",
            grid.length()
        )));
    }
    if !(strength >= 0.0) {
        return Err(Error::Invalid(format!("absorber strength must be >= 0, got {strength}")));
    }
    let last = grid.x(grid.len() - 1);
    Ok(grid
        .xs()
        .map(|x| {
            let d = (x - grid.x_min()).min(last - x);
            if d < width {
                let c = (std::f64::consts::FRAC_PI_2 * d / width).cos();
                strength * c * c
            } else {
                0.0
            }
        })
        .collect())
}

/// Per-step amplitude mask `exp(-rate(x) dt)`; exactly 1 in the interior.
pub fn make_absorber(grid: &Grid1D, width: f64, strength: f64, dt: f64) -> Result<Vec<f64>> {
    Ok(absorber_profile(grid, width, strength)?
        .into_iter()
        .map(|r| if r == 0.0 { 1.0 } else { (-r * dt).exp() })
        .collect())
}

/// Reusable real-time stepper for a static potential.
#[derive(Debug, Clone)]
pub struct SplitOperator {
    grid: Grid1D,
    dt: f64,
    half_potential: Vec<Complex64>,
    kinetic: Vec<Complex64>,
    mask: Option<Vec<f64>>,
}

impl SplitOperator {
    pub fn new(grid: &Grid1D, potential: &[f64], config: &PropagatorConfig) -> Result<Self> {
        if potential.len() != grid.len() {
            return Err(Error::GridMismatch);
        }
        check_stability(grid, potential, config.dt)?;
        let dt = config.dt;
        let half_potential = potential
            .iter()
            .map(|v| Complex64::from_polar(1.0, -v * dt / (2.0 * HBAR)))
            .collect();
        let inv_n = 1.0 / grid.len() as f64;
        let kinetic = grid
            .k_values()
            .iter()
            .map(|k| Complex64::from_polar(inv_n, -HBAR * k * k * dt / (2.0 * MASS)))
            .collect();
        let mask = match config.absorber {
            Some(a) => Some(make_absorber(grid, a.width, a.strength, dt)?),
            None => None,
        };
        Ok(Self {
            grid: grid.clone(),
            dt,
            half_potential,
            kinetic,
            mask,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn mask(&self) -> Option<&[f64]> {
        self.mask.as_deref()
    }

    /// One Strang step in place. Returns the probability removed by the
    /// absorber on the left and right halves of the grid.
    pub fn step(&self, amps: &mut [Complex64]) -> (f64, f64) {
        for (a, p) in amps.iter_mut().zip(&self.half_potential) {
            *a *= p;
        }
        self.grid.fft_forward(amps);
        for (a, p) in amps.iter_mut().zip(&self.kinetic) {
            *a *= p;
        }
        self.grid.fft_inverse(amps);
        match &self.mask {
            None => {
                for (a, p) in amps.iter_mut().zip(&self.half_potential) {
                    *a *= p;
                }
                (0.0, 0.0)
            }
            Some(mask) => {
                let half = amps.len() / 2;
                let (mut left, mut right) = (0.0, 0.0);
                for (i, ((a, p), &m)) in amps.iter_mut().zip(&self.half_potential).zip(mask).enumerate() {
                    *a *= p;
                    if m != 1.0 {
                        let lost = a.norm_sqr() * (1.0 - m * m);
                        if i < half {
                            left += lost;
                        } else {
                            right += lost;
                        }
                        *a *= m;
                    }
                }
                let dx = self.grid.dx();
                (left * dx, right * dx)
            }
        }
    }
}

/// Result of [`split_step`].
#[derive(Debug, Clone, PartialEq)]
pub struct Evolution {
    pub psi: WaveFn,
    pub absorbed_left: f64,
    pub absorbed_right: f64,
}

impl Evolution {
    pub fn absorbed(&self) -> f64 {
        self.absorbed_left + self.absorbed_right
    }
}

/// Evolve `psi` for `config.n_steps` steps of size `config.dt` in a static potential.
pub fn split_step(psi: &WaveFn, potential: &[f64], config: &PropagatorConfig) -> Result<Evolution> {
    if psi.representation() != Representation::Position {
        return Err(Error::Representation("momentum"));
    }
    let op = SplitOperator::new(psi.grid(), potential, config)?;
    let mut out = psi.clone();
    let (mut left, mut right) = (0.0, 0.0);
    for _ in 0..config.n_steps {
        let (l, r) = op.step(out.amps_mut());
        left += l;
        right += r;
    }
    Ok(Evolution {
        psi: out,
        absorbed_left: left,
        absorbed_right: right,
    })
}

// ---------------------------------------------------------------------------
// Imaginary time

#[derive(Debug, Clone, PartialEq)]
pub struct GroundStateResult {
    pub energy: f64,
    pub state: WaveFn,
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundStateOptions {
    pub initial_dtau: f64,
    pub max_steps: usize,
    /// Number of imaginary-time steps between residual checks.
    pub check_every: usize,
}

impl Default for GroundStateOptions {
    fn default() -> Self {
        Self {
            initial_dtau: 0.05,
            max_steps: 400_000,
            check_every: 25,
        }
    }
}

/// `H psi` with the spectral kinetic operator.
fn apply_hamiltonian(grid: &Grid1D, potential: &[f64], psi: &[Complex64]) -> Vec<Complex64> {
    let mut buf = psi.to_vec();
    grid.fft_forward(&mut buf);
    let inv_n = 1.0 / grid.len() as f64;
    for (a, k) in buf.iter_mut().zip(grid.k_values()) {
        *a *= HBAR * HBAR * k * k / (2.0 * MASS) * inv_n;
    }
    grid.fft_inverse(&mut buf);
    for ((h, p), v) in buf.iter_mut().zip(psi).zip(potential) {
        *h += p * v;
    }
    buf
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[Complex64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

fn normalize_vec(a: &mut [Complex64]) {
    let n = norm(a);
    a.iter_mut().for_each(|x| *x /= n);
}

/// Remove components along the (unit-norm, lattice-dot) vectors in `basis`.
fn project_out(a: &mut [Complex64], basis: &[Vec<Complex64>]) {
    for b in basis {
        let c = dot(b, a);
        a.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
    }
}

/// Rayleigh quotient and residual norm for a unit vector.
fn rayleigh(grid: &Grid1D, potential: &[f64], psi: &[Complex64]) -> (f64, f64, Vec<Complex64>) {
    let h = apply_hamiltonian(grid, potential, psi);
    let e = dot(psi, &h).re;
    let r: Vec<Complex64> = h.iter().zip(psi).map(|(h, p)| h - p * e).collect();
    (e, norm(&r), r)
}

fn lowest_state(
    grid: &Grid1D,
    potential: &[f64],
    tol: f64,
    lower: &[Vec<Complex64>],
    opts: &GroundStateOptions,
) -> Result<(f64, Vec<Complex64>, f64)> {
    let v_min = potential.iter().cloned().fold(f64::INFINITY, f64::min);
    // start from a smooth bump over the low-potential region
    let mut psi: Vec<Complex64> = potential
        .iter()
        .zip(grid.xs())
        .map(|(v, x)| {
            let w = (-(v - v_min).min(50.0)).exp();
            Complex64::new(w * (1.0 + 0.1 * (x / grid.length()).sin()), 0.0)
        })
        .collect();
    project_out(&mut psi, lower);
    normalize_vec(&mut psi);

    let mut steps = 0usize;
    let mut best = f64::INFINITY;
    let mut dtau = opts.initial_dtau;
    let inv_n = 1.0 / grid.len() as f64;
    let min_dtau = opts.initial_dtau / 256.0;

    // stage 1: imaginary-time relaxation with dtau halving on stall
    'outer: while dtau >= min_dtau {
        let half_v: Vec<f64> = potential
            .iter()
            .map(|v| (-(v - v_min) * dtau / (2.0 * HBAR)).exp())
            .collect();
        let kin: Vec<f64> = grid
            .k_values()
            .iter()
            .map(|k| (-HBAR * k * k * dtau / (2.0 * MASS)).exp() * inv_n)
            .collect();
        let mut last = f64::INFINITY;
        loop {
            for _ in 0..opts.check_every {
                psi.iter_mut().zip(&half_v).for_each(|(a, w)| *a *= w);
                grid.fft_forward(&mut psi);
                psi.iter_mut().zip(&kin).for_each(|(a, w)| *a *= w);
                grid.fft_inverse(&mut psi);
                psi.iter_mut().zip(&half_v).for_each(|(a, w)| *a *= w);
                project_out(&mut psi, lower);
                normalize_vec(&mut psi);
            }
            steps += opts.check_every;
            let (_, res, _) = rayleigh(grid, potential, &psi);
            best = best.min(res);
            if res <= tol {
                break 'outer;
            }
            if steps >= opts.max_steps / 2 {
                break 'outer;
            }
            if res > 0.99 * last {
                break;
            }
            last = res;
        }
        dtau *= 0.5;
    }

    // stage 2: preconditioned Rayleigh-Ritz on span{psi, P r}
    let mut prev_dir: Option<Vec<Complex64>> = None;
    loop {
        let (e, res, r) = rayleigh(grid, potential, &psi);
        best = best.min(res);
        if res <= tol {
            return Ok((e, psi, res));
        }
        if steps >= opts.max_steps || !res.is_finite() {
            return Err(Error::NonConvergence {
                steps,
                best_residual: best,
            });
        }
        steps += 1;
        let shift = (e - v_min).abs() + 1.0;
        let mut w = r;
        grid.fft_forward(&mut w);
        for (a, k) in w.iter_mut().zip(grid.k_values()) {
            *a *= inv_n / (HBAR * HBAR * k * k / (2.0 * MASS) + shift);
        }
        grid.fft_inverse(&mut w);
        let mut basis = vec![psi.clone()];
        let mut dirs = vec![w];
        if let Some(p) = prev_dir.take() {
            dirs.push(p);
        }
        for mut d in dirs {
            project_out(&mut d, lower);
            project_out(&mut d, &basis);
            project_out(&mut d, &basis);
            let n = norm(&d);
            if n > 1e-14 {
                d.iter_mut().for_each(|x| *x /= n);
                basis.push(d);
            }
        }
        let hb: Vec<Vec<Complex64>> = basis
            .iter()
            .map(|b| apply_hamiltonian(grid, potential, b))
            .collect();
        let m = basis.len();
        let mut hm = vec![vec![Complex64::new(0.0, 0.0); m]; m];
        for i in 0..m {
            for j in 0..m {
                hm[i][j] = dot(&basis[i], &hb[j]);
            }
        }
        let coeffs = lowest_eigvec(&hm);
        let mut next = vec![Complex64::new(0.0, 0.0); psi.len()];
        for (c, b) in coeffs.iter().zip(&basis) {
            next.iter_mut().zip(b).for_each(|(x, y)| *x += c * y);
        }
        normalize_vec(&mut next);
        let dir: Vec<Complex64> = next.iter().zip(&psi).map(|(a, b)| a - b).collect();
        if norm(&dir) > 1e-15 {
            prev_dir = Some(dir);
        }
        psi = next;
    }
}

/// Lowest eigenvector of a small Hermitian matrix by shifted inverse-free
/// power iteration on `(s I - H)`, refined with Rayleigh quotients.
#[allow(clippy::needless_range_loop)]
fn lowest_eigvec(h: &[Vec<Complex64>]) -> Vec<Complex64> {
    let m = h.len();
    if m == 1 {
        return vec![Complex64::new(1.0, 0.0)];
    }
    // Jacobi rotations for Hermitian matrices
    let mut a: Vec<Vec<Complex64>> = h.to_vec();
    let mut v: Vec<Vec<Complex64>> = (0..m)
        .map(|i| {
            (0..m)
                .map(|j| Complex64::new(if i == j { 1.0 } else { 0.0 }, 0.0))
                .collect()
        })
        .collect();
    for _sweep in 0..50 {
        let mut off = 0.0;
        for p in 0..m {
            for q in (p + 1)..m {
                off += a[p][q].norm_sqr();
            }
        }
        if off < 1e-30 {
            break;
        }
        for p in 0..m {
            for q in (p + 1)..m {
                let apq = a[p][q];
                if apq.norm() < 1e-300 {
                    continue;
                }
                let app = a[p][p].re;
                let aqq = a[q][q].re;
                let phase = apq / apq.norm();
                let theta = 0.5 * (2.0 * apq.norm()).atan2(aqq - app);
                let (c, s) = (theta.cos(), theta.sin());
                // rotation G with columns p, q
                let gpp = Complex64::new(c, 0.0);
                let gpq = phase * s;
                let gqp = -phase.conj() * s;
                let gqq = Complex64::new(c, 0.0);
                // A <- G^H A G
                for k in 0..m {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = akp * gpp + akq * gqp;
                    a[k][q] = akp * gpq + akq * gqq;
                }
                for k in 0..m {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = gpp.conj() * apk + gqp.conj() * aqk;
                    a[q][k] = gpq.conj() * apk + gqq.conj() * aqk;
                }
                for row in v.iter_mut() {
                    let vp = row[p];
                    let vq = row[q];
                    row[p] = vp * gpp + vq * gqp;
                    row[q] = vp * gpq + vq * gqq;
                }
            }
        }
    }
    let mut best = 0;
    for i in 1..m {
        if a[i][i].re < a[best][best].re {
            best = i;
        }
    }
    (0..m).map(|i| v[i][best]).collect()
}

fn to_wavefn(grid: &Grid1D, mut amps: Vec<Complex64>) -> Result<WaveFn> {
    // fix the global phase so the largest amplitude is real and positive
    if let Some(big) = amps
        .iter()
        .cloned()
        .max_by(|a, b| a.norm_sqr().total_cmp(&b.norm_sqr()))
    {
        let ph = big.conj() / big.norm();
        amps.iter_mut().for_each(|a| *a *= ph);
    }
    let mut psi = WaveFn::from_amplitudes(grid, amps)?;
    psi.normalize()?;
    Ok(psi)
}

/// Ground state of `potential` with `||H psi - E psi|| / ||psi|| <= tol`.
pub fn imaginary_time_ground(potential: &[f64], grid: &Grid1D, tol: f64) -> Result<GroundStateResult> {
    imaginary_time_ground_with(potential, grid, tol, &GroundStateOptions::default())
}

pub fn imaginary_time_ground_with(
    potential: &[f64],
    grid: &Grid1D,
    tol: f64,
    opts: &GroundStateOptions,
) -> Result<GroundStateResult> {
    Ok(lowest_states_with(potential, grid, 1, tol, opts)?.remove(0))
}

/// The `count` lowest eigenstates, found one at a time with deflation.
pub fn lowest_states(
    potential: &[f64],
    grid: &Grid1D,
    count: usize,
    tol: f64,
) -> Result<Vec<GroundStateResult>> {
    lowest_states_with(potential, grid, count, tol, &GroundStateOptions::default())
}

pub fn lowest_states_with(
    potential: &[f64],
    grid: &Grid1D,
    count: usize,
    tol: f64,
    opts: &GroundStateOptions,
) -> Result<Vec<GroundStateResult>> {
    if potential.len() != grid.len() {
        return Err(Error::GridMismatch);
    }
    if !(tol >= 1e-12) {
        return Err(Error::Invalid(format!("tolerance {tol} is below 1e-12")));
    }
    let mut found: Vec<Vec<Complex64>> = Vec::with_capacity(count);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let (energy, amps, residual) = lowest_state(grid, potential, tol, &found, opts)?;
        found.push(amps.clone());
        out.push(GroundStateResult {
            energy,
            state: to_wavefn(grid, amps)?,
            residual,
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Scattering

/// Probability partition about a barrier region at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FluxSample {
    pub time: f64,
    /// `x <= x_left` plus left-absorbed.
    pub reflected: f64,
    /// `x_left < x < x_right`.
    pub inside: f64,
    /// `x >= x_right` plus right-absorbed.
    pub transmitted: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScatteringRecord {
    pub transmitted: f64,
    pub reflected: f64,
    /// Probability still inside the barrier region at the end of the run.
    pub in_flight: f64,
    pub absorbed_left: f64,
    pub absorbed_right: f64,
    pub steps: usize,
    pub time: f64,
    pub flux_history: Vec<FluxSample>,
    pub final_state: WaveFn,
}

impl ScatteringRecord {
    pub fn total(&self) -> f64 {
        self.transmitted + self.reflected + self.in_flight
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScatterOptions {
    /// Stop once the probability on points where the absorber mask is 1
    /// drops below this.
    pub residual_tol: f64,
    /// Steps between flux-history samples (0 disables the history).
    pub record_every: usize,
}

impl Default for ScatterOptions {
    fn default() -> Self {
        Self {
            residual_tol: 1e-4,
            record_every: 100,
        }
    }
}

/// A running propagation with absorbed-probability bookkeeping.
#[derive(Debug, Clone)]
pub struct Propagation {
    op: SplitOperator,
    psi: WaveFn,
    absorbed_left: f64,
    absorbed_right: f64,
    steps: usize,
}

impl Propagation {
    pub fn new(psi: &WaveFn, potential: &[f64], config: &PropagatorConfig) -> Result<Self> {
        if psi.representation() != Representation::Position {
            return Err(Error::Representation("momentum"));
        }
        Ok(Self {
            op: SplitOperator::new(psi.grid(), potential, config)?,
            psi: psi.clone(),
            absorbed_left: 0.0,
            absorbed_right: 0.0,
            steps: 0,
        })
    }

    pub fn step(&mut self) {
        let (l, r) = self.op.step(self.psi.amps_mut());
        self.absorbed_left += l;
        self.absorbed_right += r;
        self.steps += 1;
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn time(&self) -> f64 {
        self.steps as f64 * self.op.dt()
    }

    pub fn dt(&self) -> f64 {
        self.op.dt()
    }

    pub fn psi(&self) -> &WaveFn {
        &self.psi
    }

    /// Replace the state (after a measurement); its norm should match the
    /// norm of the state it replaces so the absorbed tallies stay consistent.
    pub fn set_psi(&mut self, psi: WaveFn) {
        self.psi = psi;
    }

    pub fn absorbed(&self) -> (f64, f64) {
        (self.absorbed_left, self.absorbed_right)
    }

    /// Probability on points not touched by the absorber.
    pub fn interior_probability(&self) -> f64 {
        let dx = self.psi.grid().dx();
        match self.op.mask() {
            None => self.psi.norm_sq(),
            Some(mask) => {
                self.psi
                    .amps()
                    .iter()
                    .zip(mask)
                    .filter(|(_, &m)| m == 1.0)
                    .map(|(a, _)| a.norm_sqr())
                    .sum::<f64>()
                    * dx
            }
        }
    }

    pub fn tally(&self, region: &BarrierRegion) -> FluxSample {
        let grid = self.psi.grid();
        let (mut l, mut i, mut r) = (0.0, 0.0, 0.0);
        for (a, x) in self.psi.amps().iter().zip(grid.xs()) {
            let d = a.norm_sqr();
            if x <= region.x_left {
                l += d;
            } else if x < region.x_right {
                i += d;
            } else {
                r += d;
            }
        }
        let dx = grid.dx();
        FluxSample {
            time: self.time(),
            reflected: l * dx + self.absorbed_left,
            inside: i * dx,
            transmitted: r * dx + self.absorbed_right,
        }
    }

    pub fn into_record(self, region: &BarrierRegion, flux_history: Vec<FluxSample>) -> ScatteringRecord {
        let t = self.tally(region);
        ScatteringRecord {
            transmitted: t.transmitted,
            reflected: t.reflected,
            in_flight: t.inside,
            absorbed_left: self.absorbed_left,
            absorbed_right: self.absorbed_right,
            steps: self.steps,
            time: self.time(),
            flux_history,
            final_state: self.psi,
        }
    }
}

/// Check that a packet starts cleanly to the left of `region`, moving right.
pub fn check_incident(packet: &WaveFn, potential: &[f64], region: &BarrierRegion) -> Result<()> {
    region.check_on(packet.grid())?;
    let overlap = packet.probability_between(region.x_left - packet.grid().dx() * 0.5, f64::INFINITY);
    if overlap > 1e-6 {
        return Err(Error::State(format!(
            "packet overlaps the barrier region or beyond with probability {overlap:.3e}"
        )));
    }
    let obs = packet.observables(potential)?;
    if !(obs.mean_p > 0.0) {
        return Err(Error::State(format!("packet momentum {} is not incident", obs.mean_p)));
    }
    Ok(())
}

pub fn scattering_run(
    packet: &WaveFn,
    potential: &[f64],
    region: &BarrierRegion,
    config: &PropagatorConfig,
) -> Result<ScatteringRecord> {
    scattering_run_with(packet, potential, region, config, &ScatterOptions::default())
}

pub fn scattering_run_with(
    packet: &WaveFn,
    potential: &[f64],
    region: &BarrierRegion,
    config: &PropagatorConfig,
    opts: &ScatterOptions,
) -> Result<ScatteringRecord> {
    if config.absorber.is_none() {
        return Err(Error::Invalid("scattering runs need an absorber".into()));
    }
    check_incident(packet, potential, region)?;
    let mut prop = Propagation::new(packet, potential, config)?;
    let mut history = Vec::new();
    let check = opts.record_every.clamp(1, 50);
    while prop.steps() < config.n_steps {
        prop.step();
        if opts.record_every > 0 && prop.steps() % opts.record_every == 0 {
            history.push(prop.tally(region));
        }
        if prop.steps() % check == 0 && prop.interior_probability() < opts.residual_tol {
            break;
        }
    }
    Ok(prop.into_record(region, history))
}
