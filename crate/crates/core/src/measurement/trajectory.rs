use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::Serialize;

use super::channel::apply;
use super::{Channel, EventLedger, MeasurementModel, Outcome};
use crate::error::{Error, Result};
use crate::parallel::{self, Execution};
use crate::potentials::BarrierRegion;
use crate::propagator::{FluxSample, Propagation, PropagatorConfig, ScatterOptions};
use crate::units::MASS;
use crate::wavefn::WaveFn;

/// Two-sided 95% normal quantile.
const Z95: f64 = 1.959_963_984_540_054;

/// Per-trajectory generator: ChaCha8 keyed by `seed`, stream `traj_id`.
pub fn trajectory_rng(seed: u64, traj_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(traj_id);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryRecord {
    pub traj_id: u64,
    pub ledger: EventLedger,
    pub transmitted: f64,
    pub reflected: f64,
    pub in_barrier: f64,
    pub absorbed_left: f64,
    pub absorbed_right: f64,
    pub steps: usize,
    pub time: f64,
    #[serde(skip)]
    pub flux_history: Vec<FluxSample>,
}

/// Everything a trajectory needs besides its seed.
#[derive(Debug, Clone, Copy)]
pub struct TrajectoryRun<'a> {
    pub psi0: &'a WaveFn,
    pub potential: &'a [f64],
    pub region: &'a BarrierRegion,
    pub model: &'a MeasurementModel,
    pub channel: &'a Channel,
    /// Fixed event times; must be empty for `ContinuousBright`.
    pub schedule: &'a [f64],
    pub config: &'a PropagatorConfig,
    pub options: &'a ScatterOptions,
}

impl TrajectoryRun<'_> {
    fn event_steps<R: Rng>(&self, rng: &mut R) -> Result<Vec<usize>> {
        let dt = self.config.dt;
        let horizon = self.config.n_steps as f64 * dt;
        let times: Vec<f64> = match self.model {
            MeasurementModel::ContinuousBright { rate, window, .. } => {
                if !self.schedule.is_empty() {
                    return Err(Error::Measurement(
                        "continuous imaging draws its own event times; leave the schedule empty".into(),
                    ));
                }
                let (a, b) = window.unwrap_or((0.0, horizon));
                let mut out = Vec::new();
                if *rate > 0.0 {
                    let exp = Exp::new(*rate).map_err(|e| Error::Measurement(e.to_string()))?;
                    let mut t = a;
                    loop {
                        t += exp.sample(rng);
                        if t > b {
                            break;
                        }
                        out.push(t);
                    }
                }
                out
            }
            _ => self.schedule.to_vec(),
        };
        let mut steps = Vec::with_capacity(times.len());
        for &t in &times {
            if !(t >= 0.0 && t <= horizon * (1.0 + 1e-12)) {
                return Err(Error::Measurement(format!(
                    "measurement time {t} lies outside the run [0, {horizon}]"
                )));
            }
            steps.push(((t / dt).round() as usize).min(self.config.n_steps));
        }
        if steps.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Measurement("schedule times must be sorted".into()));
        }
        Ok(steps)
    }

    pub fn run(&self, seed: u64, traj_id: u64) -> Result<TrajectoryRecord> {
        let mut rng = trajectory_rng(seed, traj_id);
        let steps = self.event_steps(&mut rng)?;
        self.run_with(&steps, traj_id, &mut rng)
    }

    fn run_with<R: Rng>(&self, events: &[usize], traj_id: u64, rng: &mut R) -> Result<TrajectoryRecord> {
        let mut prop = Propagation::new(self.psi0, self.potential, self.config)?;
        let mut ledger = EventLedger::new();
        let mut history = Vec::new();
        let check = self.options.record_every.clamp(1, 50);
        let mut next = 0;
        loop {
            while next < events.len() && events[next] == prop.steps() {
                let (event, post) = apply(
                    prop.psi(),
                    self.channel,
                    self.potential,
                    self.region,
                    prop.time(),
                    traj_id,
                    rng,
                )?;
                ledger.push(event);
                prop.set_psi(post);
                next += 1;
            }
            if prop.steps() >= self.config.n_steps {
                break;
            }
            prop.step();
            if self.options.record_every > 0 && prop.steps() % self.options.record_every == 0 {
                history.push(prop.tally(self.region));
            }
            if next == events.len()
                && self.config.absorber.is_some()
                && prop.steps() % check == 0
                && prop.interior_probability() < self.options.residual_tol
            {
                break;
            }
        }
        let rec = prop.into_record(self.region, history);
        Ok(TrajectoryRecord {
            traj_id,
            ledger,
            transmitted: rec.transmitted,
            reflected: rec.reflected,
            in_barrier: rec.in_flight,
            absorbed_left: rec.absorbed_left,
            absorbed_right: rec.absorbed_right,
            steps: rec.steps,
            time: rec.time,
            flux_history: rec.flux_history,
        })
    }

    /// The same propagation with no measurements.
    pub fn unitary(&self) -> Result<TrajectoryRecord> {
        let mut rng = trajectory_rng(0, u64::MAX);
        self.run_with(&[], u64::MAX, &mut rng)
    }
}

pub fn trajectory_run(run: &TrajectoryRun<'_>, seed: u64, traj_id: u64) -> Result<TrajectoryRecord> {
    run.run(seed, traj_id)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[allow(non_snake_case)]
pub struct EnsembleSummary {
    pub T_measured: f64,
    pub stderr: f64,
    pub T_unitary: f64,
    pub enhancement: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl EnsembleSummary {
    pub const CSV_HEADER: &'static str = "T_measured,stderr,T_unitary,enhancement,ci_low,ci_high";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.T_measured, self.stderr, self.T_unitary, self.enhancement, self.ci_low, self.ci_high
        )
    }

    /// Lower confidence bound exceeds one.
    pub fn enhanced(&self) -> bool {
        self.ci_low > 1.0
    }

    pub fn from_samples(samples: &[f64], t_unitary: f64) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::Measurement("need at least two trajectories".into()));
        }
        if !(t_unitary > 0.0) {
            return Err(Error::Measurement(format!("unitary transmission {t_unitary} is not positive")));
        }
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (n - 1.0);
        let se = (var / n).sqrt();
        Ok(Self {
            T_measured: mean,
            stderr: se,
            T_unitary: t_unitary,
            enhancement: mean / t_unitary,
            ci_low: (mean - Z95 * se) / t_unitary,
            ci_high: (mean + Z95 * se) / t_unitary,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleResult {
    pub summary: EnsembleSummary,
    pub records: Vec<TrajectoryRecord>,
}

impl EnsembleResult {
    pub fn ledger(&self) -> EventLedger {
        let mut l = EventLedger::new();
        for r in &self.records {
            l.merge(&r.ledger);
        }
        l
    }
}

/// Monte-Carlo transmission under measurement against the unitary baseline.
pub fn ensemble_transmission(run: &TrajectoryRun<'_>, n_traj: usize, seed: u64, exec: Execution) -> Result<EnsembleResult> {
    if n_traj < 2 {
        return Err(Error::Measurement(format!("n_traj must be >= 2, got {n_traj}")));
    }
    let baseline = run.unitary()?;
    let records: Vec<TrajectoryRecord> = parallel::map_range(exec, n_traj, |i| run.run(seed, i as u64))
        .into_iter()
        .collect::<Result<_>>()?;
    let ts: Vec<f64> = records.iter().map(|r| r.transmitted).collect();
    Ok(EnsembleResult {
        summary: EnsembleSummary::from_samples(&ts, baseline.transmitted)?,
        records,
    })
}

/// Ballistic window in which the packet's central 98% crosses the left
/// barrier edge: `t_c -/+ 2.326 sigma / v`.
pub fn traversal_window(psi0: &WaveFn, region: &BarrierRegion) -> Result<(f64, f64)> {
    let obs = psi0.observables(&vec![0.0; psi0.grid().len()])?;
    let v = obs.mean_p / MASS;
    if !(v > 0.0) {
        return Err(Error::State("packet is not moving toward the barrier".into()));
    }
    let tc = (region.x_left - obs.mean_x) / v;
    let half = 2.326_347_874 * psi0.width() / v;
    Ok(((tc - half).max(0.0), tc + half))
}

/// `n` times at the centers of equal slices of `[a, b]`.
pub fn evenly_spaced(window: (f64, f64), n: usize) -> Vec<f64> {
    let (a, b) = window;
    (0..n).map(|i| a + (i as f64 + 0.5) * (b - a) / n as f64).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NullSample {
    pub time: f64,
    pub probability: f64,
    pub kinetic: f64,
    pub potential: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NullSurvey {
    pub draws: usize,
    pub nulls: Vec<NullSample>,
}

/// Dark-spot interrogations of a single unmeasured propagation: each draw
/// picks one of `n_snapshots` evenly spaced times in `window`, samples the
/// channel there, and keeps the conditioned state when the outcome is null.
#[allow(clippy::too_many_arguments)]
pub fn null_survey(
    psi0: &WaveFn,
    potential: &[f64],
    channel: &Channel,
    config: &PropagatorConfig,
    window: (f64, f64),
    n_snapshots: usize,
    target: usize,
    max_draws: usize,
    seed: u64,
) -> Result<NullSurvey> {
    if !matches!(channel, Channel::Dark(_)) {
        return Err(Error::Measurement("null survey needs a dark-spot channel".into()));
    }
    if n_snapshots == 0 {
        return Err(Error::Measurement("need at least one snapshot".into()));
    }
    let dt = config.dt;
    let times = evenly_spaced(window, n_snapshots);
    let mut prop = Propagation::new(psi0, potential, config)?;
    let mut snaps = Vec::with_capacity(n_snapshots);
    for &t in &times {
        let target_step = (t / dt).round() as usize;
        if target_step > config.n_steps {
            return Err(Error::Measurement(format!("snapshot time {t} beyond the run")));
        }
        while prop.steps() < target_step {
            prop.step();
        }
        snaps.push((prop.time(), prop.psi().clone()));
    }
    let mut cache: Vec<Option<NullSample>> = vec![None; snaps.len()];
    let mut rng = trajectory_rng(seed, 0);
    let mut nulls = Vec::new();
    let mut draws = 0;
    while nulls.len() < target && draws < max_draws {
        draws += 1;
        let k = rng.random_range(0..snaps.len());
        let (time, psi) = &snaps[k];
        let (outcome, p) = channel.sample(psi, &mut rng)?;
        if outcome != Outcome::Null {
            continue;
        }
        let sample = match cache[k] {
            Some(s) => s,
            None => {
                let post = channel.branch(psi, Outcome::Null)?;
                let obs = post.observables(potential)?;
                let s = NullSample {
                    time: *time,
                    probability: p,
                    kinetic: obs.kinetic,
                    potential: obs.potential,
                    total: obs.total,
                };
                cache[k] = Some(s);
                s
            }
        };
        nulls.push(sample);
    }
    Ok(NullSurvey { draws, nulls })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_grid, Grid1D};
    use crate::measurement::{Centers, Outcome};
    use crate::potentials::{eval_potential, PotentialSpec};
    use crate::propagator::scattering_run;
    use crate::wavefn::gaussian_packet;

    struct Setup {
        grid: Grid1D,
        psi: WaveFn,
        v: Vec<f64>,
        region: BarrierRegion,
        config: PropagatorConfig,
    }

    fn setup(v0: f64, p0: f64) -> Setup {
        let grid = make_grid(-60.0, 60.0, 512).unwrap();
        let psi = gaussian_packet(&grid, -25.0, p0, 3.5).unwrap();
        let v = eval_potential(&PotentialSpec::Rectangular { v0, width: 1.0, center: 0.0 }, &grid).unwrap().values;
        let region = BarrierRegion::centered(0.0, 1.0).unwrap();
        let config = PropagatorConfig::new(0.005, 16_000).with_absorber(15.0, 1.0);
        Setup { grid, psi, v, region, config }
    }

    fn bright(dl: f64) -> MeasurementModel {
        MeasurementModel::BrightImaging { delta_l: dl, pulse_duration: Some(2.0 * dl * dl), centers: Centers::default() }
    }

    #[test]
    fn empty_schedule_matches_scattering_run() {
        let s = setup(1.5, 1.5);
        let model = bright(0.5);
        let ch = Channel::new(&model, &s.grid).unwrap();
        let opts = ScatterOptions::default();
        let run = TrajectoryRun {
            psi0: &s.psi,
            potential: &s.v,
            region: &s.region,
            model: &model,
            channel: &ch,
            schedule: &[],
            config: &s.config,
            options: &opts,
        };
        let a = run.run(1, 0).unwrap();
        let b = scattering_run(&s.psi, &s.v, &s.region, &s.config).unwrap();
        assert!(a.ledger.is_empty());
        assert_eq!(a.steps, b.steps);
        assert!((a.transmitted - b.transmitted).abs() < 1e-12);
        assert!((a.reflected - b.reflected).abs() < 1e-12);
    }

    #[test]
    fn seeded_records_repeat() {
        let s = setup(1.5, 1.5);
        let model = bright(0.5);
        let ch = Channel::new(&model, &s.grid).unwrap();
        let opts = ScatterOptions::default();
        let sched = [10.0, 15.0, 20.0];
        let run = TrajectoryRun {
            psi0: &s.psi,
            potential: &s.v,
            region: &s.region,
            model: &model,
            channel: &ch,
            schedule: &sched,
            config: &s.config,
            options: &opts,
        };
        let a = run.run(42, 3).unwrap();
        let b = run.run(42, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.ledger.len(), 3);
        let others: Vec<_> = (4..8).map(|i| run.run(42, i).unwrap().ledger.events[0].outcome).collect();
        assert!(others.iter().any(|o| *o != a.ledger.events[0].outcome));
        assert!((a.transmitted + a.reflected + a.in_barrier - 1.0).abs() < 1e-9);
        let total: f64 = a.ledger.events.iter().map(|e| e.delta_e_atom).sum();
        assert!((a.ledger.total_atom_gain - total).abs() < 1e-10);
    }

    #[test]
    fn late_events_see_the_far_side() {
        let s = setup(0.0, 2.0);
        let model = bright(0.5);
        let ch = Channel::new(&model, &s.grid).unwrap();
        let opts = ScatterOptions { residual_tol: 1e-4, record_every: 0 };
        let Channel::Bright { kraus, .. } = &ch else { panic!() };
        let cs = kraus.centers().to_vec();
        let sched = [20.0];
        let run = TrajectoryRun {
            psi0: &s.psi,
            potential: &s.v,
            region: &s.region,
            model: &model,
            channel: &ch,
            schedule: &sched,
            config: &s.config,
            options: &opts,
        };
        for i in 0..10 {
            let r = run.run(5, i).unwrap();
            let ev = r.ledger.events[0];
            let Outcome::Center(j) = ev.outcome else { panic!() };
            assert!(cs[j] > s.region.x_right + 5.0, "center {}", cs[j]);
            assert!(ev.post_in_barrier < 1e-9);
            // gain is the localization energy, of order hbar^2 / (8 m dl^2)
            assert!(ev.delta_e_atom.abs() < 5.0 * 0.5);
        }
    }

    #[test]
    fn schedule_outside_run_rejected() {
        let s = setup(1.5, 1.5);
        let model = bright(0.5);
        let ch = Channel::new(&model, &s.grid).unwrap();
        let opts = ScatterOptions::default();
        for sched in [vec![-1.0], vec![1e6], vec![5.0, 2.0]] {
            let run = TrajectoryRun {
                psi0: &s.psi,
                potential: &s.v,
                region: &s.region,
                model: &model,
                channel: &ch,
                schedule: &sched,
                config: &s.config,
                options: &opts,
            };
            assert!(run.run(0, 0).is_err());
        }
    }

    #[test]
    fn free_space_ensemble_transmits_everything() {
        // momentum kicks of order 1/(2 dl) stay far below p0
        let s = setup(0.0, 4.0);
        let config = PropagatorConfig::new(0.005, 16_000).with_absorber(15.0, 4.0);
        let model = bright(2.0);
        let ch = Channel::new(&model, &s.grid).unwrap();
        let opts = ScatterOptions { residual_tol: 1e-6, record_every: 0 };
        let sched = [2.0, 4.0];
        let run = TrajectoryRun {
            psi0: &s.psi,
            potential: &s.v,
            region: &s.region,
            model: &model,
            channel: &ch,
            schedule: &sched,
            config: &config,
            options: &opts,
        };
        let r = ensemble_transmission(&run, 16, 3, Execution::Parallel).unwrap();
        let sm = r.summary;
        assert!((sm.T_unitary - 1.0).abs() < 1e-4, "{}", sm.T_unitary);
        assert!((sm.T_measured - 1.0).abs() < 1e-4 + 2.0 * sm.stderr);
    }

    #[test]
    fn empty_region_control_is_neutral() {
        let s = setup(1.5, 1.5);
        let model = MeasurementModel::BrightImaging {
            delta_l: 0.5,
            pulse_duration: None,
            centers: Centers { pitch: None, span: Some((30.0, 40.0)) },
        };
        let ch = Channel::new(&model, &s.grid).unwrap();
        let opts = ScatterOptions::default();
        let sched = [5.0, 10.0, 15.0];
        let run = TrajectoryRun {
            psi0: &s.psi,
            potential: &s.v,
            region: &s.region,
            model: &model,
            channel: &ch,
            schedule: &sched,
            config: &s.config,
            options: &opts,
        };
        let r = ensemble_transmission(&run, 4, 11, Execution::Sequential).unwrap();
        assert!((r.summary.enhancement - 1.0).abs() < 1e-9);
        assert!(r.records.iter().all(|t| t.ledger.events.iter().all(|e| e.outcome == Outcome::Null)));
    }

    #[test]
    fn parallel_and_sequential_ensembles_agree() {
        let s = setup(1.5, 1.5);
        let model = bright(0.5);
        let ch = Channel::new(&model, &s.grid).unwrap();
        let opts = ScatterOptions::default();
        let sched = [12.0];
        let run = TrajectoryRun {
            psi0: &s.psi,
            potential: &s.v,
            region: &s.region,
            model: &model,
            channel: &ch,
            schedule: &sched,
            config: &s.config,
            options: &opts,
        };
        let a = ensemble_transmission(&run, 6, 2, Execution::Parallel).unwrap();
        let b = ensemble_transmission(&run, 6, 2, Execution::Sequential).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn continuous_imaging_rate_zero_is_unitary() {
        let s = setup(1.5, 1.5);
        let model = MeasurementModel::ContinuousBright {
            delta_l: 0.5,
            rate: 0.0,
            pulse_duration: None,
            centers: Centers::default(),
            window: None,
        };
        let ch = Channel::new(&model, &s.grid).unwrap();
        let opts = ScatterOptions::default();
        let run = TrajectoryRun {
            psi0: &s.psi,
            potential: &s.v,
            region: &s.region,
            model: &model,
            channel: &ch,
            schedule: &[],
            config: &s.config,
            options: &opts,
        };
        let r = run.run(0, 0).unwrap();
        assert!(r.ledger.is_empty());
        assert_eq!(r.transmitted, run.unitary().unwrap().transmitted);

        let busy = MeasurementModel::ContinuousBright {
            delta_l: 0.5,
            rate: 0.5,
            pulse_duration: None,
            centers: Centers::default(),
            window: Some((5.0, 25.0)),
        };
        let run = TrajectoryRun { model: &busy, ..run };
        let r = run.run(0, 1).unwrap();
        assert!(!r.ledger.is_empty());
        assert!(r.ledger.events.iter().all(|e| e.time >= 5.0 - 0.01 && e.time <= 25.0 + 0.01));
    }

    #[test]
    fn summary_statistics() {
        let sm = EnsembleSummary::from_samples(&[0.1, 0.3, 0.2, 0.4], 0.1).unwrap();
        assert!((sm.T_measured - 0.25).abs() < 1e-15);
        let se = (0.05f64 / 3.0 / 4.0).sqrt();
        assert!((sm.stderr - se).abs() < 1e-15);
        assert!((sm.enhancement - 2.5).abs() < 1e-12);
        assert!((sm.ci_low - (0.25 - Z95 * se) / 0.1).abs() < 1e-12);
        assert!(EnsembleSummary::from_samples(&[0.1], 0.1).is_err());
    }

    #[test]
    fn window_and_spacing() {
        let g = make_grid(-60.0, 60.0, 512).unwrap();
        let psi = gaussian_packet(&g, -20.0, 2.0, 3.0).unwrap();
        let region = BarrierRegion::new(0.0, 1.0).unwrap();
        let (a, b) = traversal_window(&psi, &region).unwrap();
        assert!((0.5 * (a + b) - 10.0).abs() < 1e-6);
        assert!((b - a - 2.0 * 2.326_347_874 * 3.0 / 2.0).abs() < 1e-6);
        assert_eq!(evenly_spaced((0.0, 3.0), 3), vec![0.5, 1.5, 2.5]);
    }
}
