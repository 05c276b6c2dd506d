//! Protocol execution. Computation happens first; files are written by a
//! single writer afterwards.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;

use super::config::{ExperimentConfig, InitialState, ProtocolKind};
use crate::analysis::{self, energy_spread, packet_transmission_analytic, wkb_decay_rate, DecayFit};
use crate::cooling::{self, ClassicalEnsemble, CoolingReport, SweepResult, SweepSpec, ThermalSweep};
use crate::error::{Error, Result};
use crate::grid::Grid1D;
use crate::measurement::{
    bound_audit, ensemble_transmission, evenly_spaced, frequency_shift_estimate, null_survey, traversal_window,
    AuditReport, Centers, Channel, EnsembleResult, EnsembleSummary, FrequencyShift, MeasurementModel,
    TrajectoryRun,
};
use crate::parallel::{self, Execution};
use crate::potentials::{BarrierRegion, PotentialSpec};
use crate::propagator::{imaginary_time_ground, lowest_states, scattering_run_with, Propagation, ScatterOptions};
use crate::snapshot;
use crate::wavefn::{gaussian_packet, WaveFn};

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub artifact_version: String,
    pub protocol: String,
    pub seed: Option<u64>,
    pub wall_clock_s: f64,
    pub summary: BTreeMap<String, f64>,
    pub outputs: Vec<String>,
}

/// Finished run: manifest plus file contents keyed by name.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub manifest: RunManifest,
    pub files: Vec<(String, Vec<u8>)>,
}

impl RunOutput {
    pub fn file(&self, name: &str) -> Option<&[u8]> {
        self.files.iter().find(|(n, _)| n == name).map(|(_, b)| b.as_slice())
    }

    /// Write every file and `manifest.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, bytes) in &self.files {
            std::fs::write(dir.join(name), bytes)?;
        }
        let json = serde_json::to_string_pretty(&self.manifest).map_err(|e| Error::Io(e.to_string()))?;
        std::fs::write(dir.join("manifest.json"), json + "\n")?;
        Ok(())
    }

    pub fn summary_line(&self) -> String {
        let mut s = format!("{} [{}]", self.manifest.protocol, &self.manifest.config_hash[..12]);
        for (k, v) in &self.manifest.summary {
            let _ = write!(s, " {k}={v}");
        }
        s
    }
}

struct Collector {
    files: Vec<(String, Vec<u8>)>,
    summary: BTreeMap<String, f64>,
}

impl Collector {
    fn csv(&mut self, name: &str, header: &str, rows: impl IntoIterator<Item = String>) {
        let mut s = String::from(header);
        s.push('\n');
        for r in rows {
            s.push_str(&r);
            s.push('\n');
        }
        self.files.push((name.to_string(), s.into_bytes()));
    }

    fn snapshot(&mut self, name: &str, psi: &WaveFn) -> Result<()> {
        let mut buf = Vec::new();
        snapshot::write_snapshot(&mut buf, psi)?;
        self.files.push((name.to_string(), buf));
        Ok(())
    }

    fn put(&mut self, k: &str, v: f64) {
        self.summary.insert(k.to_string(), v);
    }
}

/// Hold the potential at its maxima beyond the sealed span on each side.
pub fn seal_well(v: &[f64], grid: &Grid1D, seal: &BarrierRegion) -> Vec<f64> {
    let (lo, hi) = (grid.index_of(seal.x_left), grid.index_of(seal.x_right));
    let argmax = |r: std::ops::Range<usize>| r.max_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = v.to_vec();
    if let Some(ir) = argmax(hi..v.len()) {
        out[ir..].iter_mut().for_each(|x| *x = v[ir]);
    }
    if let Some(il) = argmax(0..lo + 1) {
        out[..=il].iter_mut().for_each(|x| *x = v[il]);
    }
    out
}

fn initial_state(cfg: &ExperimentConfig, grid: &Grid1D, v: &[f64]) -> Result<WaveFn> {
    match cfg.initial.as_ref().ok_or_else(|| Error::Config("`initial` missing".into()))? {
        InitialState::Gaussian { x0, p0, sigma } => gaussian_packet(grid, *x0, *p0, *sigma),
        InitialState::Ground { potential, seal, tol } => {
            let base = match potential {
                Some(p) => crate::potentials::eval_potential(p, grid)?.values,
                None => v.to_vec(),
            };
            let base = match seal {
                Some(s) => seal_well(&base, grid, s),
                None => base,
            };
            Ok(imaginary_time_ground(&base, grid, *tol)?.state)
        }
    }
}

/// Execute the protocol without touching the filesystem.
pub fn execute(cfg: &ExperimentConfig, exec: Execution) -> Result<RunOutput> {
    let start = Instant::now();
    let kind = cfg.protocol()?;
    let grid = cfg.grid()?;
    let v = cfg.potential_values(&grid)?;
    let mut out = Collector { files: Vec::new(), summary: BTreeMap::new() };
    match kind {
        ProtocolKind::Ground => ground(cfg, &grid, &v, &mut out)?,
        ProtocolKind::Scatter => scatter(cfg, &grid, &v, exec, &mut out)?,
        ProtocolKind::Decay => decay(cfg, &grid, &v, &mut out)?,
        ProtocolKind::KickCool => kick_cool(cfg, &mut out)?,
        ProtocolKind::SweepSelect => sweep_select(cfg, &grid, &v, exec, &mut out)?,
        ProtocolKind::MeasureEnsemble => measure(cfg, &grid, &v, exec, &mut out)?,
        ProtocolKind::Bounds => bounds(cfg, &mut out)?,
    }
    let mut outputs: Vec<String> = out.files.iter().map(|f| f.0.clone()).collect();
    outputs.push("manifest.json".into());
    Ok(RunOutput {
        manifest: RunManifest {
            config_hash: cfg.hash(),
            artifact_version: ARTIFACT_VERSION.to_string(),
            protocol: kind.name().to_string(),
            seed: cfg.seed,
            wall_clock_s: start.elapsed().as_secs_f64(),
            summary: out.summary,
            outputs,
        },
        files: out.files,
    })
}

/// Execute and write into `dir` (the config's output directory when `None`).
pub fn run(cfg: &ExperimentConfig, dir: Option<&Path>, exec: Execution) -> Result<RunOutput> {
    let out = execute(cfg, exec)?;
    let d = dir.map(Path::to_path_buf).unwrap_or_else(|| cfg.output.dir.clone().into());
    out.write(&d)?;
    Ok(out)
}

fn ground(cfg: &ExperimentConfig, grid: &Grid1D, v: &[f64], out: &mut Collector) -> Result<()> {
    let g = cfg.ground.as_ref().expect("protocol");
    let states = if g.n_states == 1 {
        vec![imaginary_time_ground(v, grid, g.tol)?]
    } else {
        lowest_states(v, grid, g.n_states, g.tol)?
    };
    out.csv(
        "ground.csv",
        "index,energy,residual",
        states.iter().enumerate().map(|(i, s)| format!("{i},{},{}", s.energy, s.residual)),
    );
    if cfg.output.snapshots {
        for (i, s) in states.iter().enumerate() {
            out.snapshot(&format!("ground_{i}.tscp"), &s.state)?;
        }
    }
    out.put("energy_0", states[0].energy);
    out.put("residual_0", states[0].residual);
    Ok(())
}

struct ScatterRow {
    energy: f64,
    p0: f64,
    sigma: f64,
    rec: crate::propagator::ScatteringRecord,
    analytic: Option<f64>,
}

fn scatter(cfg: &ExperimentConfig, grid: &Grid1D, v: &[f64], exec: Execution, out: &mut Collector) -> Result<()> {
    let s = cfg.scatter.as_ref().expect("protocol");
    let pc = cfg.propagator_config()?;
    let opts = ScatterOptions { residual_tol: s.residual_tol, record_every: 0 };
    let packets: Vec<(WaveFn, f64)> = if s.energies.is_empty() {
        let psi = initial_state(cfg, grid, v)?;
        let sigma = match cfg.initial {
            Some(InitialState::Gaussian { sigma, .. }) => sigma,
            _ => psi.width(),
        };
        vec![(psi, sigma)]
    } else {
        s.energies
            .iter()
            .map(|&e| {
                let p0 = (2.0 * e).sqrt();
                let sigma = 1.0 / (p0 * s.relative_spread);
                Ok((gaussian_packet(grid, s.region.x_left - s.offset_sigmas * sigma, p0, sigma)?, sigma))
            })
            .collect::<Result<_>>()?
    };
    let rect = match &cfg.potential {
        Some(PotentialSpec::Rectangular { v0, width, .. }) => Some((*v0, *width)),
        _ => None,
    };
    let rows: Vec<ScatterRow> = parallel::map(exec, &packets, |_, (psi, sigma)| {
        let rec = scattering_run_with(psi, v, &s.region, &pc, &opts)?;
        let (energy, _) = energy_spread(psi)?;
        let analytic = match rect {
            Some((v0, d)) => Some(packet_transmission_analytic(psi, v0, d)?),
            None => None,
        };
        let p0 = psi.observables(&vec![0.0; grid.len()])?.mean_p;
        Ok(ScatterRow { energy, p0, sigma: *sigma, rec, analytic })
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let mut worst = 0.0f64;
    let fmt_opt = |x: Option<f64>| x.map(|x| x.to_string()).unwrap_or_default();
    let lines: Vec<String> = rows
        .iter()
        .map(|r| {
            let err = r.analytic.map(|a| (r.rec.transmitted - a).abs() / a);
            if let Some(e) = err {
                worst = worst.max(e);
            }
            format!(
                "{},{},{},{},{},{},{},{},{},{},{}",
                r.energy,
                r.p0,
                r.sigma,
                r.rec.transmitted,
                r.rec.reflected,
                r.rec.in_flight,
                r.rec.absorbed_left,
                r.rec.absorbed_right,
                r.rec.steps,
                fmt_opt(r.analytic),
                fmt_opt(err)
            )
        })
        .collect();
    out.csv(
        "scatter.csv",
        "energy,p0,sigma,transmitted,reflected,in_flight,absorbed_left,absorbed_right,steps,T_analytic,rel_error",
        lines,
    );
    if cfg.output.snapshots {
        for (i, r) in rows.iter().enumerate() {
            out.snapshot(&format!("scatter_final_{i}.tscp"), &r.rec.final_state)?;
        }
    }
    out.put("n_energies", rows.len() as f64);
    out.put("transmitted_first", rows[0].rec.transmitted);
    if rect.is_some() {
        out.put("max_rel_error", worst);
    }
    Ok(())
}

/// Indices of the highest points on either side of the well bottom.
fn barrier_peaks(v: &[f64], imin: usize) -> (usize, usize) {
    let argmax = |r: std::ops::Range<usize>| r.max_by(|&a, &b| v[a].total_cmp(&v[b])).unwrap_or(imin);
    (argmax(0..imin + 1), argmax(imin..v.len()))
}

/// Survival-probability trace plus its exponential fit and WKB estimate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayOutcome {
    pub survival: Vec<(f64, f64)>,
    pub fit: DecayFit,
    pub wkb: analysis::WkbEstimate,
    pub energy: f64,
}

impl DecayOutcome {
    pub fn loss_per_period(&self) -> f64 {
        self.fit.rate * 2.0 * std::f64::consts::PI / self.wkb.omega
    }
}

pub fn decay_outcome(cfg: &ExperimentConfig) -> Result<DecayOutcome> {
    let d = cfg.decay.as_ref().ok_or_else(|| Error::Config("`decay` missing".into()))?;
    let grid = cfg.grid()?;
    let v = cfg.potential_values(&grid)?;
    let pc = cfg.propagator_config()?;
    let psi0 = initial_state(cfg, &grid, &v)?;
    let energy = psi0.observables(&v)?.total;
    let wkb = wkb_decay_rate(&grid, &v, energy, &d.trap)?;
    let (lo, hi) = (grid.index_of(d.trap.x_left), grid.index_of(d.trap.x_right));
    let imin = (lo..=hi).min_by(|&a, &b| v[a].total_cmp(&v[b])).expect("nonempty");
    let (pl, pr) = barrier_peaks(&v, imin);
    let (xl, xr) = (grid.x(pl), grid.x(pr));
    let every = (pc.n_steps / d.samples).max(1);
    let mut prop = Propagation::new(&psi0, &v, &pc)?;
    let mut survival = Vec::with_capacity(d.samples);
    while prop.steps() < pc.n_steps {
        prop.step();
        if prop.steps() % every == 0 {
            survival.push((prop.time(), prop.psi().probability_between(xl, xr)));
        }
    }
    let fit = analysis::fit_exponential_decay_window(&survival, d.skip_fraction, survival.len())?;
    Ok(DecayOutcome { survival, fit, wkb, energy })
}

fn decay(cfg: &ExperimentConfig, _grid: &Grid1D, _v: &[f64], out: &mut Collector) -> Result<()> {
    let r = decay_outcome(cfg)?;
    out.csv("decay.csv", "time,survival", r.survival.iter().map(|(t, p)| format!("{t},{p}")));
    let loss = r.loss_per_period();
    out.csv(
        "decay_fit.csv",
        &format!("{},energy,wkb_rate,omega,two_action,loss_per_period,wkb_loss_per_period,rate_over_wkb", DecayFit::CSV_HEADER),
        [format!(
            "{},{},{},{},{},{},{},{}",
            r.fit.csv_row(),
            r.energy,
            r.wkb.rate,
            r.wkb.omega,
            2.0 * r.wkb.action,
            loss,
            r.wkb.loss_per_period(),
            r.fit.rate / r.wkb.rate
        )],
    );
    out.put("rate", r.fit.rate);
    out.put("r_squared", r.fit.r_squared);
    out.put("wkb_rate", r.wkb.rate);
    out.put("rate_over_wkb", r.fit.rate / r.wkb.rate);
    out.put("loss_per_period", loss);
    out.put("two_action", 2.0 * r.wkb.action);
    Ok(())
}

fn kick_cool(cfg: &ExperimentConfig, out: &mut Collector) -> Result<()> {
    let k = cfg.kick_cool.as_ref().expect("protocol");
    let seed = cfg.seed.expect("validated");
    let ens = ClassicalEnsemble::thermal(k.n_particles, k.sigma_x, k.sigma_v()?, seed)?;
    let (_, rep) = cooling::kick_cool(&ens, k.t_free, k.kick.as_ref())?;
    out.csv("kick_cool.csv", CoolingReport::CSV_HEADER, [rep.csv_row()]);
    out.put("ratio", rep.ratio);
    out.put("predicted_ratio", rep.predicted_ratio);
    out.put("strength", rep.strength);
    if let Some(us) = cfg.units.system()? {
        out.put("temperature_initial_K", us.energy_to_kelvin(rep.temperature_initial));
        out.put("temperature_final_K", us.energy_to_kelvin(rep.temperature_final));
    }
    Ok(())
}

fn sweep_select(cfg: &ExperimentConfig, grid: &Grid1D, v: &[f64], exec: Execution, out: &mut Collector) -> Result<()> {
    let s = cfg.sweep_select.as_ref().expect("protocol");
    let pc = cfg.propagator_config()?;
    let spec = SweepSpec { segments: s.segments.clone(), aux_region: s.aux_region };
    let trap = cfg.potential.clone().unwrap_or(PotentialSpec::Linear { slope: 0.0 });
    match s.kt {
        Some(kt) => {
            let r = cooling::thermal_sweep(grid, &trap, &spec, &pc, kt, s.n_states, exec)?;
            out.csv("sweep.csv", ThermalSweep::CSV_HEADER, [r.csv_row()]);
            out.put("transferred", r.transferred);
            out.put("ground_fraction", r.ground_fraction);
            out.put("transferred_spread", r.transferred_spread);
        }
        None => {
            let psi = initial_state(cfg, grid, v)?;
            let r = cooling::velocity_select_sweep(&psi, &trap, &spec, &pc)?;
            out.csv("sweep.csv", SweepResult::CSV_HEADER, [r.csv_row()]);
            if cfg.output.snapshots {
                out.snapshot("sweep_final.tscp", &r.final_state)?;
            }
            out.put("transferred", r.transferred);
            out.put("ground_fraction", r.ground_fraction);
        }
    }
    Ok(())
}

fn ensemble_rows(res: &EnsembleResult) -> Vec<String> {
    res.records
        .iter()
        .map(|r| {
            format!(
                "{},{},{},{},{},{},{}",
                r.traj_id,
                r.transmitted,
                r.reflected,
                r.in_barrier,
                r.absorbed_left,
                r.absorbed_right,
                r.ledger.len()
            )
        })
        .collect()
}

fn measure(cfg: &ExperimentConfig, grid: &Grid1D, v: &[f64], exec: Execution, out: &mut Collector) -> Result<()> {
    let m = cfg.measure_ensemble.as_ref().expect("protocol");
    let seed = cfg.seed.expect("validated");
    let pc = cfg.propagator_config()?;
    let psi0 = initial_state(cfg, grid, v)?;
    let window = traversal_window(&psi0, &m.region)?;
    let schedule = match m.events {
        Some(n) => evenly_spaced(window, n),
        None => m.schedule.clone(),
    };
    let channel = Channel::new(&m.model, grid)?;
    let options = ScatterOptions { residual_tol: 1e-4, record_every: 0 };
    let run = TrajectoryRun {
        psi0: &psi0,
        potential: v,
        region: &m.region,
        model: &m.model,
        channel: &channel,
        schedule: &schedule,
        config: &pc,
        options: &options,
    };
    let res = ensemble_transmission(&run, m.n_traj, seed, exec)?;
    let ledger = res.ledger();
    let mut buf = Vec::new();
    ledger.write_csv(&mut buf, true)?;
    out.files.push(("ledger.csv".into(), buf));
    out.csv("ensemble.csv", EnsembleSummary::CSV_HEADER, [res.summary.csv_row()]);
    out.csv(
        "trajectories.csv",
        "traj_id,transmitted,reflected,in_barrier,absorbed_left,absorbed_right,n_events",
        ensemble_rows(&res),
    );
    out.put("T_measured", res.summary.T_measured);
    out.put("T_unitary", res.summary.T_unitary);
    out.put("enhancement", res.summary.enhancement);
    out.put("ci_low", res.summary.ci_low);
    out.put("ci_high", res.summary.ci_high);
    out.put("n_events", ledger.len() as f64);

    if let (Some(span), MeasurementModel::BrightImaging { delta_l, pulse_duration, centers }) = (m.control_span, &m.model) {
        let model = MeasurementModel::BrightImaging {
            delta_l: *delta_l,
            pulse_duration: *pulse_duration,
            centers: Centers { span: Some(span), ..*centers },
        };
        let channel = Channel::new(&model, grid)?;
        let ctl = TrajectoryRun { model: &model, channel: &channel, ..run };
        let r = ensemble_transmission(&ctl, m.n_traj, seed, exec)?;
        out.csv("ensemble_control.csv", EnsembleSummary::CSV_HEADER, [r.summary.csv_row()]);
        out.put("control_enhancement", r.summary.enhancement);
        out.put("control_ci_low", r.summary.ci_low);
        out.put("control_ci_high", r.summary.ci_high);
    }

    let e_packet = energy_spread(&psi0)?.0;
    if let (Some(v0), Some(_)) = (m.v0, m.model.pulse_duration()) {
        let a = bound_audit(&ledger, v0, e_packet, &m.model)?;
        out.csv("audit.csv", AuditReport::CSV_HEADER, [a.csv_row()]);
        out.put("audit_fraction_exceeding", a.fraction_exceeding);
        out.put("audit_c", a.c);
    }

    if let Some(s) = &m.survey {
        let survey = null_survey(&psi0, v, &channel, &pc, window, s.n_snapshots, s.target, s.max_draws, seed)?;
        out.csv(
            "null_survey.csv",
            "time,probability,kinetic,potential,total",
            survey
                .nulls
                .iter()
                .map(|n| format!("{},{},{},{},{}", n.time, n.probability, n.kinetic, n.potential, n.total)),
        );
        out.put("survey_draws", survey.draws as f64);
        out.put("survey_nulls", survey.nulls.len() as f64);
        if let Some(v0) = m.v0 {
            let above = survey.nulls.iter().filter(|n| n.total > v0).count();
            out.put("survey_fraction_above_v0", above as f64 / survey.nulls.len().max(1) as f64);
        }
        if !survey.nulls.is_empty() {
            let mk = survey.nulls.iter().map(|n| n.kinetic).sum::<f64>() / survey.nulls.len() as f64;
            out.put("survey_mean_kinetic", mk);
        }
    }
    Ok(())
}

fn bounds(cfg: &ExperimentConfig, out: &mut Collector) -> Result<()> {
    let b = cfg.bounds.as_ref().expect("protocol");
    let reports: Vec<analysis::BoundReport> = b
        .cases
        .iter()
        .map(|c| analysis::bound_chain(c.v0, c.e, c.delta_l))
        .collect::<Result<_>>()?;
    out.csv("bounds.csv", analysis::BoundReport::CSV_HEADER, reports.iter().map(|r| r.csv_row()));
    if !b.eta.is_empty() {
        let mut rows = Vec::new();
        for c in &b.cases {
            let t = analysis::critical_pulse_duration(c.v0, c.e)?;
            for &eta in &b.eta {
                let f = frequency_shift_estimate(eta, t)?;
                rows.push(format!("{},{},{},{},{},{}", c.v0, c.e, eta, t, f.csv_row(), f.total_budget / (c.v0 - c.e)));
            }
        }
        out.csv(
            "frequency_shift.csv",
            &format!("v0,e,eta,pulse_duration,{},budget_over_deficit", FrequencyShift::CSV_HEADER),
            rows,
        );
    }
    let worst = reports.iter().map(|r| (r.critical_energy_floor - r.barrier_deficit).abs()).fold(0.0, f64::max);
    out.put("n_cases", reports.len() as f64);
    out.put("max_identity_residual", worst);
    out.put("chain_holds_all", reports.iter().all(|r| r.chain_holds) as u8 as f64);
    Ok(())
}

/// Error exit codes: 2 for configuration problems, 3 for numerical failures.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => 2,
        Error::Io(_) => 1,
        _ => 3,
    }
}
