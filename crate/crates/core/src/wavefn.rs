use std::f64::consts::PI;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::Grid1D;
use crate::potentials::BarrierRegion;
use crate::units::{HBAR, MASS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Representation {
    Position,
    Momentum,
}

impl Representation {
    fn name(self) -> &'static str {
        match self {
            Representation::Position => "position",
            Representation::Momentum => "momentum",
        }
    }
}

/// Complex amplitudes on a [`Grid1D`].
///
/// In the momentum representation the amplitudes sit on the FFT-ordered
/// lattice of [`Grid1D::k_values`] and are scaled so that
/// `sum |phi|^2 dk == sum |psi|^2 dx`.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveFn {
    grid: Grid1D,
    amps: Vec<Complex64>,
    representation: Representation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Observables {
    pub norm: f64,
    pub mean_x: f64,
    pub mean_p: f64,
    pub kinetic: f64,
    pub potential: f64,
    pub total: f64,
}

impl WaveFn {
    pub fn from_amplitudes(grid: &Grid1D, amps: Vec<Complex64>) -> Result<Self> {
        if amps.len() != grid.len() {
            return Err(Error::GridMismatch);
        }
        if amps.iter().any(|a| !(a.re.is_finite() && a.im.is_finite())) {
            return Err(Error::State("non-finite amplitude".into()));
        }
        Ok(Self {
            grid: grid.clone(),
            amps,
            representation: Representation::Position,
        })
    }

    pub fn from_fn(grid: &Grid1D, f: impl Fn(f64) -> Complex64) -> Result<Self> {
        let amps = grid.xs().map(f).collect();
        Self::from_amplitudes(grid, amps)
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn amps(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn amps_mut(&mut self) -> &mut [Complex64] {
        &mut self.amps
    }

    pub fn into_amps(self) -> Vec<Complex64> {
        self.amps
    }

    pub fn representation(&self) -> Representation {
        self.representation
    }

    fn measure(&self) -> f64 {
        match self.representation {
            Representation::Position => self.grid.dx(),
            Representation::Momentum => self.grid.dk(),
        }
    }

    /// `sum |amps|^2` times the lattice measure of the current representation.
    pub fn norm_sq(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>() * self.measure()
    }

    pub fn normalize(&mut self) -> Result<()> {
        let n = self.norm_sq();
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::State(format!("cannot normalize state with norm^2 {n}")));
        }
        let s = 1.0 / n.sqrt();
        self.amps.iter_mut().for_each(|a| *a *= s);
        Ok(())
    }

    pub fn scale(&mut self, s: f64) {
        self.amps.iter_mut().for_each(|a| *a *= s);
    }

    pub fn density(&self) -> Vec<f64> {
        self.amps.iter().map(|a| a.norm_sqr()).collect()
    }

    /// Probability (unnormalized, position space) on the points with
    /// `x_left < x < x_right`.
    pub fn probability_between(&self, x_left: f64, x_right: f64) -> f64 {
        debug_assert_eq!(self.representation, Representation::Position);
        self.grid
            .xs()
            .zip(&self.amps)
            .filter(|(x, _)| *x > x_left && *x < x_right)
            .map(|(_, a)| a.norm_sqr())
            .sum::<f64>()
            * self.grid.dx()
    }

    pub fn probability_in(&self, region: &BarrierRegion) -> f64 {
        self.probability_between(region.x_left, region.x_right)
    }

    pub fn probability_left_of(&self, x: f64) -> f64 {
        self.probability_between(f64::NEG_INFINITY, x)
    }

    pub fn probability_right_of(&self, x: f64) -> f64 {
        self.probability_between(x, f64::INFINITY)
    }

    /// `<self|other>` in position space.
    pub fn inner(&self, other: &WaveFn) -> Result<Complex64> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        if self.representation != other.representation {
            return Err(Error::Representation(self.representation.name()));
        }
        let s: Complex64 = self
            .amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum();
        Ok(s * self.measure())
    }

    pub fn to_momentum(&self) -> Result<WaveFn> {
        if self.representation == Representation::Momentum {
            return Err(Error::Representation("momentum"));
        }
        let mut buf = self.amps.clone();
        self.grid.fft_forward(&mut buf);
        let scale = self.grid.dx() / (2.0 * PI).sqrt();
        let x0 = self.grid.x_min();
        for (a, &k) in buf.iter_mut().zip(self.grid.k_values()) {
            *a *= Complex64::from_polar(scale, -k * x0);
        }
        Ok(WaveFn {
            grid: self.grid.clone(),
            amps: buf,
            representation: Representation::Momentum,
        })
    }

    pub fn to_position(&self) -> Result<WaveFn> {
        if self.representation == Representation::Position {
            return Err(Error::Representation("position"));
        }
        let scale = self.grid.dk() / (2.0 * PI).sqrt();
        let x0 = self.grid.x_min();
        let mut buf: Vec<Complex64> = self
            .amps
            .iter()
            .zip(self.grid.k_values())
            .map(|(a, &k)| a * Complex64::from_polar(scale, k * x0))
            .collect();
        self.grid.fft_inverse(&mut buf);
        Ok(WaveFn {
            grid: self.grid.clone(),
            amps: buf,
            representation: Representation::Position,
        })
    }

    /// Spectral kinetic energy and mean momentum per unit norm.
    fn momentum_moments(&self) -> (f64, f64) {
        let mut buf = self.amps.clone();
        self.grid.fft_forward(&mut buf);
        let k = self.grid.k_values();
        let (mut w, mut p, mut p2) = (0.0, 0.0, 0.0);
        for (a, &kj) in buf.iter().zip(k) {
            let d = a.norm_sqr();
            w += d;
            p += d * kj;
            p2 += d * kj * kj;
        }
        (HBAR * p / w, HBAR * HBAR * p2 / (2.0 * MASS * w))
    }

    pub fn kinetic_energy(&self) -> f64 {
        self.momentum_moments().1
    }

    /// Observables per unit norm; the stored `norm` is `sum |psi|^2 dx`.
    pub fn observables(&self, potential: &[f64]) -> Result<Observables> {
        if self.representation != Representation::Position {
            return Err(Error::Representation("momentum"));
        }
        if potential.len() != self.grid.len() {
            return Err(Error::GridMismatch);
        }
        let (mut w, mut wx, mut wv) = (0.0, 0.0, 0.0);
        for ((a, x), &v) in self.amps.iter().zip(self.grid.xs()).zip(potential) {
            let d = a.norm_sqr();
            w += d;
            wx += d * x;
            wv += d * v;
        }
        if w <= 0.0 {
            return Err(Error::State("zero state".into()));
        }
        let (mean_p, kinetic) = self.momentum_moments();
        let potential = wv / w;
        Ok(Observables {
            norm: w * self.grid.dx(),
            mean_x: wx / w,
            mean_p,
            kinetic,
            potential,
            total: kinetic + potential,
        })
    }

    /// Position-space standard deviation per unit norm.
    pub fn width(&self) -> f64 {
        let (mut w, mut wx, mut wx2) = (0.0, 0.0, 0.0);
        for (a, x) in self.amps.iter().zip(self.grid.xs()) {
            let d = a.norm_sqr();
            w += d;
            wx += d * x;
            wx2 += d * x * x;
        }
        let m = wx / w;
        (wx2 / w - m * m).max(0.0).sqrt()
    }

    /// Momentum-space standard deviation per unit norm.
    pub fn momentum_width(&self) -> f64 {
        let (mean_p, kinetic) = self.momentum_moments();
        let p2 = 2.0 * MASS * kinetic;
        (p2 - mean_p * mean_p).max(0.0).sqrt()
    }
}

/// Free function form of [`WaveFn::to_momentum`].
pub fn to_momentum(psi: &WaveFn) -> Result<WaveFn> {
    psi.to_momentum()
}

/// Free function form of [`WaveFn::to_position`].
pub fn to_position(psi: &WaveFn) -> Result<WaveFn> {
    psi.to_position()
}

pub fn observables(psi: &WaveFn, potential: &[f64]) -> Result<Observables> {
    psi.observables(potential)
}

/// Normalized minimum-uncertainty packet with position spread `sigma`.
pub fn gaussian_packet(grid: &Grid1D, x0: f64, p0: f64, sigma: f64) -> Result<WaveFn> {
    if !(sigma > 3.0 * grid.dx()) {
        return Err(Error::State(format!(
            "sigma {sigma} must exceed 3 dx = {}",
            3.0 * grid.dx()
        )));
    }
    if x0 - 5.0 * sigma < grid.x_min() || x0 + 5.0 * sigma > grid.x_max() - grid.dx() {
        return Err(Error::State(format!(
            "packet at {x0} with sigma {sigma} is clipped by the grid edges"
        )));
    }
    if p0.abs() + 5.0 / (2.0 * sigma) > grid.k_max() {
        return Err(Error::State(format!(
            "momentum {p0} is not resolved by the lattice cutoff {}",
            grid.k_max()
        )));
    }
    let mut psi = WaveFn::from_fn(grid, |x| {
        let d = x - x0;
        Complex64::from_polar((-d * d / (4.0 * sigma * sigma)).exp(), p0 * (x - x0) / HBAR)
    })?;
    psi.normalize()?;
    Ok(psi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_state(grid: &Grid1D, rng: &mut ChaCha8Rng) -> WaveFn {
        let amps = (0..grid.len())
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let mut psi = WaveFn::from_amplitudes(grid, amps).unwrap();
        psi.normalize().unwrap();
        psi
    }

    #[test]
    fn gaussian_moments() {
        let g = make_grid(-20.0, 20.0, 1024).unwrap();
        let zero = vec![0.0; g.len()];
        let psi = gaussian_packet(&g, 0.0, 0.0, 1.0).unwrap();
        let obs = psi.observables(&zero).unwrap();
        // <T> = hbar^2 / (8 m sigma^2)
        assert!((obs.kinetic - 0.125).abs() < 1e-10);
        assert!((obs.norm - 1.0).abs() < 1e-12);

        let moving = gaussian_packet(&g, 1.5, 2.0, 1.0).unwrap();
        let obs2 = moving.observables(&zero).unwrap();
        assert!((obs2.kinetic - obs.kinetic - 2.0).abs() < 1e-10);
        assert!((obs2.mean_x - 1.5).abs() < 1e-8);
        assert!((obs2.mean_p - 2.0).abs() < 1e-8);
    }

    #[test]
    fn packet_mean_position_tracks_x0() {
        let g = make_grid(-20.0, 20.0, 512).unwrap();
        let zero = vec![0.0; g.len()];
        for &x0 in &[-10.0, -3.3, 0.0, 4.25, 9.0] {
            let psi = gaussian_packet(&g, x0, 0.7, 1.5).unwrap();
            let o = psi.observables(&zero).unwrap();
            assert!((o.mean_x - x0).abs() < 1e-8, "{x0}: {}", o.mean_x);
        }
    }

    #[test]
    fn packet_preconditions() {
        let g = make_grid(-10.0, 10.0, 256).unwrap();
        assert!(gaussian_packet(&g, 0.0, 0.0, 0.1).is_err());
        assert!(gaussian_packet(&g, 8.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn transform_round_trip_and_parseval() {
        let g = make_grid(-7.0, 9.0, 256).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let psi = random_state(&g, &mut rng);
            let phi = psi.to_momentum().unwrap();
            assert!((phi.norm_sq() - psi.norm_sq()).abs() < 1e-12);
            let back = phi.to_position().unwrap();
            let err: f64 = back
                .amps()
                .iter()
                .zip(psi.amps())
                .map(|(a, b)| (a - b).norm_sqr())
                .sum::<f64>()
                .sqrt();
            assert!(err < 1e-12, "{err}");
        }
    }

    #[test]
    fn double_transform_rejected() {
        let g = make_grid(-5.0, 5.0, 64).unwrap();
        let psi = gaussian_packet(&g, 0.0, 0.0, 0.8).unwrap();
        assert!(psi.to_position().is_err());
        let phi = psi.to_momentum().unwrap();
        assert!(phi.to_momentum().is_err());
        assert!(phi.observables(&vec![0.0; 64]).is_err());
    }

    #[test]
    fn gaussian_momentum_width() {
        let g = make_grid(-30.0, 30.0, 1024).unwrap();
        let sigma = 1.7;
        let psi = gaussian_packet(&g, 0.0, 1.0, sigma).unwrap();
        let phi = psi.to_momentum().unwrap();
        // analytic: |phi(k)|^2 is Gaussian with std hbar / (2 sigma) about p0
        let dk = g.dk();
        let (mut w, mut m, mut m2) = (0.0, 0.0, 0.0);
        for (a, &k) in phi.amps().iter().zip(g.k_values()) {
            let d = a.norm_sqr() * dk;
            w += d;
            m += d * k;
            m2 += d * k * k;
        }
        let sd = (m2 / w - (m / w).powi(2)).sqrt();
        assert!((sd - 1.0 / (2.0 * sigma)).abs() < 1e-10);
        assert!((psi.momentum_width() - 1.0 / (2.0 * sigma)).abs() < 1e-10);
        // pointwise against the closed form
        let norm = (2.0 * sigma * sigma / PI).powf(0.25);
        for (a, &k) in phi.amps().iter().zip(g.k_values()) {
            let expect = norm * (-(k - 1.0).powi(2) * sigma * sigma).exp();
            assert!((a.norm() - expect).abs() < 1e-10);
        }
    }

    #[test]
    fn lattice_plane_wave_is_a_delta() {
        let g = make_grid(0.0, 16.0, 64).unwrap();
        let j = 5;
        let k = g.k_values()[j];
        let mut psi = WaveFn::from_fn(&g, |x| Complex64::from_polar(1.0, k * x)).unwrap();
        psi.normalize().unwrap();
        let phi = psi.to_momentum().unwrap();
        let peak = phi.amps()[j].norm_sqr() * g.dk();
        assert!((peak - 1.0).abs() < 1e-12);
        let rest: f64 = phi
            .amps()
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != j)
            .map(|(_, a)| a.norm_sqr())
            .sum();
        assert!(rest < 1e-24);
    }

    #[test]
    fn flat_potential_and_linearity() {
        let g = make_grid(-10.0, 10.0, 256).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let psi = random_state(&g, &mut rng);
        let flat = vec![2.5; g.len()];
        let o = psi.observables(&flat).unwrap();
        assert!((o.potential - 2.5).abs() < 1e-14);
        assert!(o.kinetic >= 0.0);
        assert!(((o.kinetic + o.potential) - o.total).abs() <= 1e-10 * o.total.abs());

        let v1: Vec<f64> = g.xs().map(|x| x.sin()).collect();
        let v2: Vec<f64> = g.xs().map(|x| 0.1 * x * x).collect();
        let sum: Vec<f64> = v1.iter().zip(&v2).map(|(a, b)| a + b).collect();
        let p1 = psi.observables(&v1).unwrap().potential;
        let p2 = psi.observables(&v2).unwrap().potential;
        let ps = psi.observables(&sum).unwrap().potential;
        assert!((ps - p1 - p2).abs() < 1e-12);
    }

    #[test]
    fn mismatched_potential_rejected() {
        let g = make_grid(-10.0, 10.0, 256).unwrap();
        let psi = gaussian_packet(&g, 0.0, 0.0, 1.0).unwrap();
        assert_eq!(psi.observables(&[0.0; 10]), Err(Error::GridMismatch));
    }
}
