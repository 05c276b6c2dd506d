use std::f64::consts::PI;
use std::cell::RefCell;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Smallest accepted lattice size.
pub const MIN_POINTS: usize = 4;

struct FftPlans {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

/// Uniform periodic lattice on `[x_min, x_max)` with its FFT-ordered
/// momentum lattice.
#[derive(Clone)]
pub struct Grid1D {
    x_min: f64,
    x_max: f64,
    n: usize,
    dx: f64,
    k: Arc<[f64]>,
    plans: Arc<FftPlans>,
}

impl fmt::Debug for Grid1D {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid1D")
            .field("x_min", &self.x_min)
            .field("x_max", &self.x_max)
            .field("n", &self.n)
            .finish()
    }
}

impl PartialEq for Grid1D {
    fn eq(&self, other: &Self) -> bool {
        self.x_min == other.x_min && self.x_max == other.x_max && self.n == other.n
    }
}

impl Grid1D {
    pub fn new(x_min: f64, x_max: f64, n: usize) -> Result<Self> {
        if !(x_min.is_finite() && x_max.is_finite()) || x_max <= x_min {
            return Err(Error::Grid(format!(
                "degenerate extent [{x_min}, {x_max}]"
            )));
        }
        if !n.is_power_of_two() || n < MIN_POINTS {
            return Err(Error::Grid(format!(
                "point count {n} must be a power of two >= {MIN_POINTS}"
            )));
        }
        let dx = (x_max - x_min) / n as f64;
        let dk = 2.0 * PI / (n as f64 * dx);
        let k = (0..n)
            .map(|j| {
                if j < n / 2 {
                    j as f64 * dk
                } else {
                    (j as f64 - n as f64) * dk
                }
            })
            .collect::<Vec<_>>()
            .into();
        let mut planner = FftPlanner::new();
        let plans = FftPlans {
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        };
        Ok(Self {
            x_min,
            x_max,
            n,
            dx,
            k,
            plans: Arc::new(plans),
        })
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn dk(&self) -> f64 {
        2.0 * PI / (self.n as f64 * self.dx)
    }

    pub fn length(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.dx
    }

    pub fn xs(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(move |i| self.x(i))
    }

    /// Momentum lattice in FFT order: `0, dk, .., -(n/2) dk, .., -dk`.
    pub fn k_values(&self) -> &[f64] {
        &self.k
    }

    /// Magnitude of the most negative lattice momentum, `pi / dx`.
    pub fn k_max(&self) -> f64 {
        PI / self.dx
    }

    /// Index of the grid point nearest to `x`, clamped to the lattice.
    pub fn index_of(&self, x: f64) -> usize {
        let i = ((x - self.x_min) / self.dx).round();
        i.clamp(0.0, (self.n - 1) as f64) as usize
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.x_min && x <= self.x_max - self.dx
    }

    /// Unnormalized in-place forward DFT (`exp(-i k x)` kernel).
    pub(crate) fn fft_forward(&self, buf: &mut [Complex64]) {
        run_with_scratch(self.plans.forward.as_ref(), buf);
    }

    /// Unnormalized in-place inverse DFT.
    pub(crate) fn fft_inverse(&self, buf: &mut [Complex64]) {
        run_with_scratch(self.plans.inverse.as_ref(), buf);
    }
}

thread_local! {
    static SCRATCH: RefCell<Vec<Complex64>> = const { RefCell::new(Vec::new()) };
}

fn run_with_scratch(plan: &dyn Fft<f64>, buf: &mut [Complex64]) {
    SCRATCH.with(|s| {
        let mut s = s.borrow_mut();
        let need = plan.get_inplace_scratch_len();
        if s.len() < need {
            s.resize(need, Complex64::new(0.0, 0.0));
        }
        plan.process_with_scratch(buf, &mut s[..need]);
    });
}

/// Build a grid; see [`Grid1D::new`].
pub fn make_grid(x_min: f64, x_max: f64, n: usize) -> Result<Grid1D> {
    Grid1D::new(x_min, x_max, n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_point_lattice() {
        let g = make_grid(-1.0, 1.0, 4).unwrap();
        assert_eq!(g.dx(), 0.5);
        let k = g.k_values();
        assert_eq!(k, &[0.0, PI, -2.0 * PI, -PI]);
        assert_eq!(g.k_max(), 2.0 * PI);
    }

    #[test]
    fn spacing_is_exact() {
        let g = make_grid(0.0, 10.0, 1024).unwrap();
        assert_eq!(g.dx(), 10.0 / 1024.0);
        assert_eq!(g.x(1023), 10.0 - 10.0 / 1024.0);
    }

    #[test]
    fn momentum_cutoff() {
        let g = make_grid(-50.0, 50.0, 4096).unwrap();
        let expected = PI * 4096.0 / 100.0;
        assert!((g.k_max() - expected).abs() < 1e-12);
        assert!((g.k_max() - 128.68).abs() < 0.01);
        let most_negative = g.k_values().iter().cloned().fold(f64::INFINITY, f64::min);
        assert!((most_negative + expected).abs() < 1e-9);
        assert!((g.dk() - 2.0 * PI / 100.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(make_grid(0.0, 1.0, 1000).is_err());
        assert!(make_grid(1.0, 1.0, 64).is_err());
        assert!(make_grid(2.0, 1.0, 64).is_err());
        assert!(make_grid(0.0, f64::NAN, 64).is_err());
        assert!(make_grid(0.0, 1.0, 2).is_err());
    }
}
