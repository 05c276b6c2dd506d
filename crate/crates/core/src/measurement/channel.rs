use num_complex::Complex64;
use rand::Rng;

use super::{Centers, MeasurementEvent, MeasurementKind, MeasurementModel, Outcome};
use crate::error::{Error, Result};
use crate::grid::Grid1D;
use crate::potentials::BarrierRegion;
use crate::wavefn::WaveFn;

/// Kraus windows are truncated at this many `delta_l` from their center.
pub const KRAUS_SUPPORT: f64 = 10.0;

/// Full-coverage sets are rejected when the unnormalized window sum drops
/// below this fraction of its maximum somewhere on the grid.
const COVERAGE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
struct Window {
    start: usize,
    values: Vec<f64>,
}

/// Gaussian Kraus family `K_j(x) ~ exp(-(x - c_j)^2 / (4 dl^2))`, normalized
/// so that `sum_j K_j^2 (+ K_null^2) = 1` pointwise.
#[derive(Debug, Clone, PartialEq)]
pub struct KrausSet {
    grid: Grid1D,
    delta_l: f64,
    centers: Vec<f64>,
    windows: Vec<Window>,
    null: Option<Vec<f64>>,
}

/// Two-outcome dark-spot split: `null^2 + flash^2 = 1` pointwise.
#[derive(Debug, Clone, PartialEq)]
pub struct DarkMask {
    pub region: BarrierRegion,
    null: Vec<f64>,
    flash: Vec<f64>,
}

/// A measurement model compiled onto a grid.
#[derive(Debug, Clone, PartialEq)]
pub enum Channel {
    Bright { kind: MeasurementKind, kraus: KrausSet },
    Dark(DarkMask),
}

pub fn kraus_set(grid: &Grid1D, delta_l: f64, centers: &Centers) -> Result<KrausSet> {
    if !(delta_l >= 2.0 * grid.dx()) {
        return Err(Error::Measurement(format!(
            "delta_l = {delta_l} is not resolvable on a grid with dx = {}",
            grid.dx()
        )));
    }
    let pitch = centers.pitch.unwrap_or(delta_l);
    if !(pitch > 0.0) {
        return Err(Error::Measurement(format!("pitch must be > 0, got {pitch}")));
    }
    let (a, b) = centers.span.unwrap_or((grid.x_min(), grid.x_max()));
    if !(a <= b) {
        return Err(Error::Measurement(format!("span needs a <= b, got ({a}, {b})")));
    }
    let count = ((b - a) / pitch + 1e-9).floor() as usize + 1;
    let cs: Vec<f64> = (0..count).map(|j| a + j as f64 * pitch).collect();
    let n = grid.len();
    let reach = KRAUS_SUPPORT * delta_l;
    let mut windows = Vec::with_capacity(cs.len());
    let mut sum = vec![0.0; n];
    for &c in &cs {
        let lo = ((c - reach - grid.x_min()) / grid.dx()).ceil().max(0.0) as usize;
        let hi = (((c + reach - grid.x_min()) / grid.dx()).floor().max(-1.0) as isize + 1).min(n as isize);
        let hi = hi.max(lo as isize) as usize;
        let values: Vec<f64> = (lo..hi)
            .map(|i| {
                let d = grid.x(i) - c;
                (-d * d / (4.0 * delta_l * delta_l)).exp()
            })
            .collect();
        for (k, v) in values.iter().enumerate() {
            sum[lo + k] += v * v;
        }
        windows.push(Window { start: lo, values });
    }
    let smax = sum.iter().cloned().fold(0.0, f64::max);
    if !(smax > 0.0) {
        return Err(Error::Measurement("no Kraus window overlaps the grid".into()));
    }
    let null = if centers.span.is_some() {
        for w in &mut windows {
            w.values.iter_mut().for_each(|v| *v /= smax.sqrt());
        }
        Some(sum.iter().map(|s| (1.0 - (s / smax).min(1.0)).sqrt()).collect())
    } else {
        let smin = sum.iter().cloned().fold(f64::INFINITY, f64::min);
        if smin < COVERAGE_FLOOR * smax {
            return Err(Error::Measurement(format!(
                "Kraus centers leave a coverage gap (window sum {smin:.3e} vs peak {smax:.3e}); reduce the pitch"
            )));
        }
        for w in &mut windows {
            for (k, v) in w.values.iter_mut().enumerate() {
                *v /= sum[w.start + k].sqrt();
            }
        }
        None
    };
    Ok(KrausSet {
        grid: grid.clone(),
        delta_l,
        centers: cs,
        windows,
        null,
    })
}

impl KrausSet {
    pub fn delta_l(&self) -> f64 {
        self.delta_l
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn has_null(&self) -> bool {
        self.null.is_some()
    }

    /// `K_j` on the full grid.
    pub fn operator(&self, j: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.grid.len()];
        let w = &self.windows[j];
        out[w.start..w.start + w.values.len()].copy_from_slice(&w.values);
        out
    }

    /// `max_x |sum_j K_j^2 + K_null^2 - 1|`.
    pub fn completeness_residual(&self) -> f64 {
        let mut sum = match &self.null {
            Some(k) => k.iter().map(|v| v * v).collect(),
            None => vec![0.0; self.grid.len()],
        };
        for w in &self.windows {
            for (k, v) in w.values.iter().enumerate() {
                sum[w.start + k] += v * v;
            }
        }
        sum.iter().map(|s| (s - 1.0).abs()).fold(0.0, f64::max)
    }

    fn outcomes(&self, psi: &WaveFn) -> Vec<(Outcome, f64)> {
        let amps = psi.amps();
        let total: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
        let mut out: Vec<(Outcome, f64)> = self
            .windows
            .iter()
            .enumerate()
            .map(|(j, w)| {
                let p: f64 = w
                    .values
                    .iter()
                    .zip(&amps[w.start..w.start + w.values.len()])
                    .map(|(k, a)| k * k * a.norm_sqr())
                    .sum();
                (Outcome::Center(j), p / total)
            })
            .collect();
        if let Some(k) = &self.null {
            let p: f64 = k.iter().zip(amps).map(|(k, a)| k * k * a.norm_sqr()).sum();
            out.push((Outcome::Null, p / total));
        }
        out
    }

    fn apply_operator(&self, psi: &WaveFn, outcome: Outcome) -> Result<Vec<Complex64>> {
        let amps = psi.amps();
        match outcome {
            Outcome::Center(j) if j < self.windows.len() => {
                let w = &self.windows[j];
                let mut out = vec![Complex64::new(0.0, 0.0); amps.len()];
                for (k, v) in w.values.iter().enumerate() {
                    out[w.start + k] = amps[w.start + k] * v;
                }
                Ok(out)
            }
            Outcome::Null if self.null.is_some() => {
                let k = self.null.as_ref().expect("checked");
                Ok(amps.iter().zip(k).map(|(a, k)| a * k).collect())
            }
            other => Err(Error::Measurement(format!("outcome {other} does not belong to this Kraus set"))),
        }
    }
}

impl DarkMask {
    pub fn new(grid: &Grid1D, region: &BarrierRegion, edge: Option<f64>) -> Result<Self> {
        region.check_on(grid)?;
        let m: Vec<f64> = match edge {
            None => grid.xs().map(|x| if region.contains(x) { 1.0 } else { 0.0 }).collect(),
            Some(w) if w > 0.0 => {
                let s = std::f64::consts::SQRT_2 * w;
                grid.xs()
                    .map(|x| {
                        (0.5 * (libm::erf((x - region.x_left) / s) - libm::erf((x - region.x_right) / s))).clamp(0.0, 1.0)
                    })
                    .collect()
            }
            Some(w) => return Err(Error::Measurement(format!("edge width must be > 0, got {w}"))),
        };
        Ok(Self {
            region: *region,
            null: m.iter().map(|v| v.sqrt()).collect(),
            flash: m.iter().map(|v| (1.0 - v).sqrt()).collect(),
        })
    }

    pub fn completeness_residual(&self) -> f64 {
        self.null
            .iter()
            .zip(&self.flash)
            .map(|(a, b)| (a * a + b * b - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

impl Channel {
    pub fn new(model: &MeasurementModel, grid: &Grid1D) -> Result<Self> {
        model.validate()?;
        Ok(match model {
            MeasurementModel::BrightImaging { delta_l, centers, .. } => Channel::Bright {
                kind: MeasurementKind::Bright,
                kraus: kraus_set(grid, *delta_l, centers)?,
            },
            MeasurementModel::ContinuousBright { delta_l, centers, .. } => Channel::Bright {
                kind: MeasurementKind::ContinuousBright,
                kraus: kraus_set(grid, *delta_l, centers)?,
            },
            MeasurementModel::DarkSpot { region, edge, .. } => Channel::Dark(DarkMask::new(grid, region, *edge)?),
        })
    }

    pub fn kind(&self) -> MeasurementKind {
        match self {
            Channel::Bright { kind, .. } => *kind,
            Channel::Dark(_) => MeasurementKind::DarkSpot,
        }
    }

    pub fn completeness_residual(&self) -> f64 {
        match self {
            Channel::Bright { kraus, .. } => kraus.completeness_residual(),
            Channel::Dark(d) => d.completeness_residual(),
        }
    }

    /// Every outcome with its probability relative to the current norm,
    /// zero-probability outcomes included.
    pub fn outcomes(&self, psi: &WaveFn) -> Result<Vec<(Outcome, f64)>> {
        check_state(psi, self.grid())?;
        Ok(match self {
            Channel::Bright { kraus, .. } => kraus.outcomes(psi),
            Channel::Dark(d) => {
                let amps = psi.amps();
                let total: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
                let pn: f64 = d.null.iter().zip(amps).map(|(k, a)| k * k * a.norm_sqr()).sum::<f64>() / total;
                let pf: f64 = d.flash.iter().zip(amps).map(|(k, a)| k * k * a.norm_sqr()).sum::<f64>() / total;
                vec![(Outcome::Null, pn), (Outcome::Flash, pf)]
            }
        })
    }

    fn grid(&self) -> Option<&Grid1D> {
        match self {
            Channel::Bright { kraus, .. } => Some(&kraus.grid),
            Channel::Dark(_) => None,
        }
    }

    /// Post-measurement state for `outcome`, rescaled to the norm of `psi`.
    pub fn branch(&self, psi: &WaveFn, outcome: Outcome) -> Result<WaveFn> {
        check_state(psi, self.grid())?;
        let raw = match (self, outcome) {
            (Channel::Bright { kraus, .. }, o) => kraus.apply_operator(psi, o)?,
            (Channel::Dark(d), Outcome::Null) => psi.amps().iter().zip(&d.null).map(|(a, k)| a * k).collect(),
            (Channel::Dark(d), Outcome::Flash) => psi.amps().iter().zip(&d.flash).map(|(a, k)| a * k).collect(),
            (Channel::Dark(_), o) => return Err(Error::Measurement(format!("dark spot has no outcome {o}"))),
        };
        let mut post = WaveFn::from_amplitudes(psi.grid(), raw)?;
        let (before, after) = (psi.norm_sq(), post.norm_sq());
        if !(after > 0.0) {
            return Err(Error::Measurement(format!("outcome {outcome} has zero probability")));
        }
        post.scale((before / after).sqrt());
        Ok(post)
    }

    /// Draw an outcome; zero-probability outcomes are never returned.
    pub fn sample<R: Rng + ?Sized>(&self, psi: &WaveFn, rng: &mut R) -> Result<(Outcome, f64)> {
        let outs = self.outcomes(psi)?;
        let total: f64 = outs.iter().map(|o| o.1).sum();
        let u = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut last = None;
        for &(o, p) in &outs {
            if p > 0.0 {
                acc += p;
                last = Some((o, p));
                if u < acc {
                    return Ok((o, p));
                }
            }
        }
        last.ok_or_else(|| Error::Measurement("no outcome has positive probability".into()))
    }
}

fn check_state(psi: &WaveFn, grid: Option<&Grid1D>) -> Result<()> {
    if psi.representation() != crate::wavefn::Representation::Position {
        return Err(Error::Representation("momentum"));
    }
    if let Some(g) = grid {
        if g != psi.grid() {
            return Err(Error::GridMismatch);
        }
    }
    if !(psi.norm_sq() > 0.0) {
        return Err(Error::State("cannot measure a zero state".into()));
    }
    Ok(())
}

/// Sample an outcome, collapse, and record the event.
pub fn apply<R: Rng + ?Sized>(
    psi: &WaveFn,
    channel: &Channel,
    potential: &[f64],
    region: &BarrierRegion,
    time: f64,
    traj_id: u64,
    rng: &mut R,
) -> Result<(MeasurementEvent, WaveFn)> {
    if let Channel::Dark(d) = channel {
        if psi.grid().len() != d.null.len() {
            return Err(Error::GridMismatch);
        }
    }
    let before = psi.observables(potential)?.total;
    let (outcome, probability) = channel.sample(psi, rng)?;
    let post = channel.branch(psi, outcome)?;
    let after = post.observables(potential)?.total;
    let event = MeasurementEvent {
        traj_id,
        time,
        kind: channel.kind(),
        outcome,
        probability,
        delta_e_atom: after - before,
        post_in_barrier: post.probability_in(region) / post.norm_sq(),
    };
    Ok((event, post))
}

pub fn apply_bright<R: Rng + ?Sized>(
    psi: &WaveFn,
    channel: &Channel,
    potential: &[f64],
    region: &BarrierRegion,
    time: f64,
    rng: &mut R,
) -> Result<(MeasurementEvent, WaveFn)> {
    match channel {
        Channel::Bright { .. } => apply(psi, channel, potential, region, time, 0, rng),
        Channel::Dark(_) => Err(Error::Measurement("apply_bright needs a bright-imaging channel".into())),
    }
}

pub fn apply_dark_spot<R: Rng + ?Sized>(
    psi: &WaveFn,
    channel: &Channel,
    potential: &[f64],
    time: f64,
    rng: &mut R,
) -> Result<(MeasurementEvent, WaveFn)> {
    match channel {
        Channel::Dark(d) => {
            let region = d.region;
            apply(psi, channel, potential, &region, time, 0, rng)
        }
        Channel::Bright { .. } => Err(Error::Measurement("apply_dark_spot needs a dark-spot channel".into())),
    }
}
