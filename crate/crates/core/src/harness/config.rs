//! Experiment configuration: TOML with strict keys and optional quantity
//! strings.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::quantity::{self, key_dimension};
use crate::cooling::{KickSpec, SweepSegment};
use crate::error::{Error, Result};
use crate::grid::Grid1D;
use crate::measurement::MeasurementModel;
use crate::potentials::{eval_potential, BarrierRegion, PotentialSpec};
use crate::propagator::{Absorber, PropagatorConfig, STABILITY_LIMIT};
use crate::units::UnitSystem;

/// Fraction of the stability limit used when `dt` is left out.
pub const AUTO_DT_FRACTION: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// Internal units; quantity strings are rejected.
    #[default]
    Natural,
    /// Rb-87, one micron per length unit unless `length_m` says otherwise.
    Rb87,
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnitsConfig {
    #[serde(default)]
    pub profile: Profile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mass_kg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length_m: Option<f64>,
}

impl UnitsConfig {
    pub fn system(&self) -> Result<Option<UnitSystem>> {
        let rb = UnitSystem::rb87();
        match self.profile {
            Profile::Natural => {
                if self.mass_kg.is_some() || self.length_m.is_some() {
                    return Err(Error::Config("units: natural profile takes no mass_kg/length_m".into()));
                }
                Ok(None)
            }
            Profile::Rb87 => {
                if self.mass_kg.is_some() {
                    return Err(Error::Config("units.mass_kg: fixed by the rb87 profile".into()));
                }
                Ok(Some(UnitSystem::new(rb.mass_si, self.length_m.unwrap_or(rb.si_length))))
            }
            Profile::Custom => match (self.mass_kg, self.length_m) {
                (Some(m), Some(l)) if m > 0.0 && l > 0.0 => Ok(Some(UnitSystem::new(m, l))),
                _ => Err(Error::Config("units: custom profile needs positive mass_kg and length_m".into())),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub x_min: f64,
    pub x_max: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialState {
    Gaussian {
        x0: f64,
        p0: f64,
        sigma: f64,
    },
    /// Ground state of `potential` (the experiment's potential when absent).
    /// With `seal`, the potential outside the highest points on either side
    /// of the sealed span is held at those maxima, closing the well.
    Ground {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        potential: Option<PotentialSpec>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seal: Option<BarrierRegion>,
        #[serde(default = "default_tol")]
        tol: f64,
    },
}

fn default_tol() -> f64 {
    1e-10
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropagatorSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub absorber: Option<Absorber>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: String,
    #[serde(default)]
    pub snapshots: bool,
}

fn default_dir() -> String {
    "out".into()
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: default_dir(), snapshots: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundProtocol {
    #[serde(default = "one")]
    pub n_states: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScatterProtocol {
    pub region: BarrierRegion,
    /// Mean energies to scan; the `[initial]` packet alone when empty.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub energies: Vec<f64>,
    /// `sigma_E / E` of the scan packets.
    #[serde(default = "default_spread")]
    pub relative_spread: f64,
    /// Start of each scan packet, in packet widths left of the region.
    #[serde(default = "default_offset")]
    pub offset_sigmas: f64,
    #[serde(default = "default_residual")]
    pub residual_tol: f64,
}

fn default_spread() -> f64 {
    0.045
}

fn default_offset() -> f64 {
    5.3
}

fn default_residual() -> f64 {
    1e-4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecayProtocol {
    /// Span searched for the well bottom.
    pub trap: BarrierRegion,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_skip")]
    pub skip_fraction: f64,
}

fn default_samples() -> usize {
    200
}

fn default_skip() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KickCoolProtocol {
    pub n_particles: usize,
    pub sigma_x: f64,
    /// Velocity spread; alternatively `temperature` (`sigma_v^2 = kT/m`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_v: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    pub t_free: f64,
    /// Regression-optimal impulse when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kick: Option<KickSpec>,
}

impl KickCoolProtocol {
    pub fn sigma_v(&self) -> Result<f64> {
        match (self.sigma_v, self.temperature) {
            (Some(s), None) => Ok(s),
            (None, Some(t)) if t >= 0.0 => Ok(t.sqrt()),
            _ => Err(Error::Config("kick-cool: give exactly one of sigma_v, temperature (>= 0)".into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepProtocol {
    pub segments: Vec<SweepSegment>,
    pub aux_region: BarrierRegion,
    /// Boltzmann average over trap eigenstates instead of `[initial]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kt: Option<f64>,
    #[serde(default = "default_states")]
    pub n_states: usize,
}

fn default_states() -> usize {
    6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurveyConfig {
    pub n_snapshots: usize,
    pub target: usize,
    pub max_draws: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureProtocol {
    pub region: BarrierRegion,
    pub model: MeasurementModel,
    pub n_traj: usize,
    /// Explicit event times.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub schedule: Vec<f64>,
    /// Events spread evenly over the traversal window (instead of `schedule`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub events: Option<usize>,
    /// Rerun with the bright windows restricted to this span as a control.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control_span: Option<(f64, f64)>,
    /// Barrier height for the bound audit.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub survey: Option<SurveyConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundCase {
    pub v0: f64,
    pub e: f64,
    pub delta_l: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsProtocol {
    pub cases: Vec<BoundCase>,
    /// Detection efficiencies for the phase-shift estimate at each case's
    /// critical pulse duration.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub eta: Vec<f64>,
}

/// Which protocol a config runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProtocolKind {
    Ground,
    Scatter,
    Decay,
    KickCool,
    SweepSelect,
    MeasureEnsemble,
    Bounds,
}

impl ProtocolKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Ground => "ground",
            Self::Scatter => "scatter",
            Self::Decay => "decay",
            Self::KickCool => "kick-cool",
            Self::SweepSelect => "sweep-select",
            Self::MeasureEnsemble => "measure-ensemble",
            Self::Bounds => "bounds",
        }
    }

    pub fn stochastic(self) -> bool {
        matches!(self, Self::KickCool | Self::MeasureEnsemble)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub units: UnitsConfig,
    pub grid: GridConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub potential: Option<PotentialSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialState>,
    #[serde(default)]
    pub propagator: PropagatorSection,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground: Option<GroundProtocol>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scatter: Option<ScatterProtocol>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decay: Option<DecayProtocol>,
    #[serde(default, rename = "kick-cool", skip_serializing_if = "Option::is_none")]
    pub kick_cool: Option<KickCoolProtocol>,
    #[serde(default, rename = "sweep-select", skip_serializing_if = "Option::is_none")]
    pub sweep_select: Option<SweepProtocol>,
    #[serde(default, rename = "measure-ensemble", skip_serializing_if = "Option::is_none")]
    pub measure_ensemble: Option<MeasureProtocol>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<BoundsProtocol>,
}

fn cfg_err(key: &str, e: impl std::fmt::Display) -> Error {
    Error::Config(format!("`{key}`: {e}"))
}

impl ExperimentConfig {
    pub fn protocol(&self) -> Result<ProtocolKind> {
        let present: Vec<ProtocolKind> = [
            (self.ground.is_some(), ProtocolKind::Ground),
            (self.scatter.is_some(), ProtocolKind::Scatter),
            (self.decay.is_some(), ProtocolKind::Decay),
            (self.kick_cool.is_some(), ProtocolKind::KickCool),
            (self.sweep_select.is_some(), ProtocolKind::SweepSelect),
            (self.measure_ensemble.is_some(), ProtocolKind::MeasureEnsemble),
            (self.bounds.is_some(), ProtocolKind::Bounds),
        ]
        .into_iter()
        .filter_map(|(p, k)| p.then_some(k))
        .collect();
        match present.as_slice() {
            [k] => Ok(*k),
            [] => Err(Error::Config("no protocol section (ground, scatter, decay, kick-cool, sweep-select, measure-ensemble, bounds)".into())),
            many => Err(Error::Config(format!(
                "exactly one protocol section allowed, found {}",
                many.iter().map(|k| k.name()).collect::<Vec<_>>().join(", ")
            ))),
        }
    }

    pub fn grid(&self) -> Result<Grid1D> {
        Grid1D::new(self.grid.x_min, self.grid.x_max, self.grid.n).map_err(|e| cfg_err("grid", e))
    }

    pub fn potential_values(&self, grid: &Grid1D) -> Result<Vec<f64>> {
        match &self.potential {
            None => Ok(vec![0.0; grid.len()]),
            Some(spec) => sample(spec, grid, "potential"),
        }
    }

    /// Propagator settings with `dt` and `n_steps` resolved.
    pub fn propagator_config(&self) -> Result<PropagatorConfig> {
        let dt = self.propagator.dt.ok_or_else(|| cfg_err("propagator.dt", "unresolved"))?;
        let n = self.propagator.n_steps.ok_or_else(|| cfg_err("propagator.n_steps", "unresolved"))?;
        Ok(PropagatorConfig { dt, n_steps: n, absorber: self.propagator.absorber })
    }

    /// Fill `dt` from the stability limits and `n_steps` from `t_max`.
    fn resolve(&mut self, grid: &Grid1D, v: &[f64]) -> Result<()> {
        let p = &mut self.propagator;
        if p.dt.is_none() {
            let vmax = v.iter().fold(0.0f64, |a, b| a.max(b.abs()));
            let kin = grid.k_max().powi(2) / 2.0;
            p.dt = Some(AUTO_DT_FRACTION * STABILITY_LIMIT / vmax.max(kin));
        }
        let dt = p.dt.expect("set above");
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(cfg_err("propagator.dt", format!("must be > 0, got {dt}")));
        }
        match (p.n_steps, p.t_max) {
            (Some(_), Some(_)) => return Err(cfg_err("propagator", "give n_steps or t_max, not both")),
            (None, Some(t)) => {
                if !(t >= 0.0) {
                    return Err(cfg_err("propagator.t_max", "must be >= 0"));
                }
                p.n_steps = Some((t / dt).ceil() as usize);
                p.t_max = None;
            }
            (None, None) => p.n_steps = Some(0),
            (Some(_), None) => {}
        }
        Ok(())
    }

    /// Semantic checks that need the grid: regions, potentials, stability.
    fn check(&self, grid: &Grid1D, v: &[f64]) -> Result<()> {
        let kind = self.protocol()?;
        if kind.stochastic() && self.seed.is_none() {
            return Err(cfg_err("seed", format!("required by the {} protocol", kind.name())));
        }
        let pc = self.propagator_config()?;
        if let Some(a) = pc.absorber {
            if !(a.width > 0.0 && a.strength >= 0.0) || 2.0 * a.width >= grid.length() {
                return Err(cfg_err("propagator.absorber", "needs width > 0, strength >= 0 and 2 width < grid length"));
            }
        }
        let needs_time = matches!(
            kind,
            ProtocolKind::Scatter | ProtocolKind::Decay | ProtocolKind::SweepSelect | ProtocolKind::MeasureEnsemble
        );
        if needs_time {
            crate::propagator::check_stability(grid, v, pc.dt).map_err(|e| cfg_err("propagator.dt", e))?;
        }
        if let Some(init) = &self.initial {
            match init {
                InitialState::Gaussian { x0, sigma, .. } => {
                    crate::wavefn::gaussian_packet(grid, *x0, 0.0, *sigma).map_err(|e| cfg_err("initial", e))?;
                }
                InitialState::Ground { potential, seal, tol } => {
                    if let Some(p) = potential {
                        sample(p, grid, "initial.potential")?;
                    }
                    if let Some(s) = seal {
                        region_on(s, grid, "initial.seal")?;
                    }
                    if !(*tol > 0.0) {
                        return Err(cfg_err("initial.tol", "must be > 0"));
                    }
                }
            }
        }
        let need_initial = |key: &str| -> Result<()> {
            if self.initial.is_none() {
                return Err(cfg_err("initial", format!("required by the {key} protocol")));
            }
            Ok(())
        };
        match kind {
            ProtocolKind::Ground => {
                let g = self.ground.as_ref().expect("kind");
                if g.n_states == 0 || !(g.tol > 0.0) {
                    return Err(cfg_err("ground", "n_states >= 1 and tol > 0 required"));
                }
            }
            ProtocolKind::Scatter => {
                let s = self.scatter.as_ref().expect("kind");
                region_on(&s.region, grid, "scatter.region")?;
                if pc.absorber.is_none() {
                    return Err(cfg_err("propagator.absorber", "required by the scatter protocol"));
                }
                if s.energies.is_empty() {
                    need_initial("scatter")?;
                }
                if s.energies.iter().any(|e| !(*e > 0.0)) {
                    return Err(cfg_err("scatter.energies", "must all be > 0"));
                }
                if !(s.relative_spread > 0.0) {
                    return Err(cfg_err("scatter.relative_spread", "must be > 0"));
                }
            }
            ProtocolKind::Decay => {
                let d = self.decay.as_ref().expect("kind");
                region_on(&d.trap, grid, "decay.trap")?;
                need_initial("decay")?;
                if d.samples < 8 {
                    return Err(cfg_err("decay.samples", "need at least 8"));
                }
                if pc.n_steps < d.samples {
                    return Err(cfg_err("propagator", "fewer steps than decay samples"));
                }
            }
            ProtocolKind::KickCool => {
                let k = self.kick_cool.as_ref().expect("kind");
                if k.n_particles < 2 {
                    return Err(cfg_err("kick-cool.n_particles", "need at least 2"));
                }
                k.sigma_v()?;
                if !(k.sigma_x >= 0.0) || !(k.t_free >= 0.0) {
                    return Err(cfg_err("kick-cool", "sigma_x and t_free must be >= 0"));
                }
                if let Some(kick) = &k.kick {
                    kick.validate().map_err(|e| cfg_err("kick-cool.kick", e))?;
                }
            }
            ProtocolKind::SweepSelect => {
                let s = self.sweep_select.as_ref().expect("kind");
                region_on(&s.aux_region, grid, "sweep-select.aux_region")?;
                if s.kt.is_none() {
                    need_initial("sweep-select")?;
                }
                if s.segments.windows(2).any(|w| w[1].t < w[0].t) {
                    return Err(cfg_err("sweep-select.segments", "t must be nondecreasing"));
                }
                if s.segments.iter().any(|s| !(s.width > 0.0)) {
                    return Err(cfg_err("sweep-select.segments", "width must be > 0"));
                }
                let vmax = v.iter().fold(0.0f64, |a, b| a.max(b.abs()))
                    + s.segments.iter().fold(0.0f64, |a, b| a.max(b.height.abs()));
                if pc.dt * vmax >= STABILITY_LIMIT {
                    return Err(cfg_err("propagator.dt", "too large for the sweep element depth"));
                }
            }
            ProtocolKind::MeasureEnsemble => {
                let m = self.measure_ensemble.as_ref().expect("kind");
                region_on(&m.region, grid, "measure-ensemble.region")?;
                need_initial("measure-ensemble")?;
                m.model.validate().map_err(|e| cfg_err("measure-ensemble.model", e))?;
                if let MeasurementModel::DarkSpot { region, .. } = &m.model {
                    region_on(region, grid, "measure-ensemble.model.region")?;
                }
                crate::measurement::Channel::new(&m.model, grid).map_err(|e| cfg_err("measure-ensemble.model", e))?;
                if m.n_traj < 2 {
                    return Err(cfg_err("measure-ensemble.n_traj", "need at least 2"));
                }
                if pc.absorber.is_none() {
                    return Err(cfg_err("propagator.absorber", "required by the measure-ensemble protocol"));
                }
                if m.events.is_some() && !m.schedule.is_empty() {
                    return Err(cfg_err("measure-ensemble", "give schedule or events, not both"));
                }
                if let Some((a, b)) = m.control_span {
                    if !(grid.contains(a) && grid.contains(b) && a < b) {
                        return Err(cfg_err("measure-ensemble.control_span", "must be an ordered span on the grid"));
                    }
                    if !matches!(m.model, MeasurementModel::BrightImaging { .. }) {
                        return Err(cfg_err("measure-ensemble.control_span", "only bright imaging has a control span"));
                    }
                }
                if let Some(s) = &m.survey {
                    if !matches!(m.model, MeasurementModel::DarkSpot { .. }) {
                        return Err(cfg_err("measure-ensemble.survey", "needs a dark_spot model"));
                    }
                    if s.n_snapshots == 0 || s.target == 0 {
                        return Err(cfg_err("measure-ensemble.survey", "n_snapshots and target must be >= 1"));
                    }
                }
            }
            ProtocolKind::Bounds => {
                let b = self.bounds.as_ref().expect("kind");
                if b.cases.is_empty() {
                    return Err(cfg_err("bounds.cases", "need at least one case"));
                }
                for (i, c) in b.cases.iter().enumerate() {
                    crate::analysis::bound_chain(c.v0, c.e, c.delta_l).map_err(|e| cfg_err(&format!("bounds.cases[{i}]"), e))?;
                }
                if b.eta.iter().any(|e| !(*e > 0.0 && *e <= 1.0)) {
                    return Err(cfg_err("bounds.eta", "each eta must lie in (0, 1]"));
                }
            }
        }
        Ok(())
    }

    /// Canonical TOML (resolved values, internal units).
    pub fn canonical_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the key-sorted JSON form; stable under field reordering.
    pub fn hash(&self) -> String {
        let v = serde_json::to_value(self).expect("config serializes");
        hex::encode(Sha256::digest(v.to_string().as_bytes()))
    }
}

fn sample(spec: &PotentialSpec, grid: &Grid1D, key: &str) -> Result<Vec<f64>> {
    let arr = eval_potential(spec, grid).map_err(|e| cfg_err(key, e))?;
    if let Some(w) = arr.warnings.first() {
        return Err(cfg_err(key, w));
    }
    Ok(arr.values)
}

fn region_on(r: &BarrierRegion, grid: &Grid1D, key: &str) -> Result<()> {
    BarrierRegion::new(r.x_left, r.x_right).map_err(|e| cfg_err(key, e))?;
    r.check_on(grid).map_err(|e| cfg_err(key, e))
}

/// 1-based line of the first assignment or header naming the last key of
/// `path`.
fn locate(text: &str, path: &str) -> Option<usize> {
    let key = path.rsplit('.').next()?.split('[').next()?.trim_matches('`');
    if key.is_empty() {
        return None;
    }
    text.lines().position(|l| {
        let t = l.trim_start();
        let name = t.split(['=', ' ']).next().unwrap_or("").trim_matches('"');
        (name == key && t[key.len().min(t.len())..].trim_start().starts_with('='))
            || (t.starts_with('[') && t.trim_matches(['[', ']', ' ']).rsplit('.').next() == Some(key))
    })
    .map(|i| i + 1)
}

fn convert_quantities(v: &mut toml::Value, key: &str, path: &str, units: Option<&UnitSystem>) -> Result<()> {
    match v {
        toml::Value::Table(t) => {
            for (k, child) in t.iter_mut() {
                let p = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
                convert_quantities(child, k, &p, units)?;
            }
        }
        toml::Value::Array(a) => {
            for (i, child) in a.iter_mut().enumerate() {
                convert_quantities(child, key, &format!("{path}[{i}]"), units)?;
            }
        }
        toml::Value::String(s) => {
            if let Some((dim, angular)) = key_dimension(key) {
                let x = quantity::convert(s, dim, angular, units).map_err(|e| cfg_err(path, e))?;
                *v = toml::Value::Float(x);
            }
        }
        _ => {}
    }
    Ok(())
}

fn with_line(e: Error, text: &str) -> Error {
    match e {
        Error::Config(msg) => {
            let key = msg.split('`').nth(1).unwrap_or("");
            match locate(text, key) {
                Some(line) => Error::Config(format!("line {line}: {msg}")),
                None => Error::Config(msg),
            }
        }
        other => other,
    }
}

/// Parse, convert quantities, apply the strict schema, fill defaults and
/// validate against the grid.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    parse_inner(text).map_err(|e| with_line(e, text))
}

fn parse_inner(text: &str) -> Result<ExperimentConfig> {
    let mut value: toml::Value = toml::from_str(text).map_err(|e| Error::Config(e.to_string().trim().to_string()))?;
    let units: UnitsConfig = match value.get("units") {
        Some(u) => u.clone().try_into().map_err(|e: toml::de::Error| cfg_err("units", e.message()))?,
        None => UnitsConfig::default(),
    };
    let system = units.system()?;
    if let toml::Value::Table(t) = &mut value {
        for (k, child) in t.iter_mut() {
            if k != "units" {
                convert_quantities(child, k, k, system.as_ref())?;
            }
        }
    }
    let mut cfg: ExperimentConfig = serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        Error::Config(format!("`{path}`: {}", e.inner().message()))
    })?;
    cfg.protocol()?;
    let grid = cfg.grid()?;
    let v = cfg.potential_values(&grid)?;
    cfg.resolve(&grid, &v)?;
    cfg.check(&grid, &v)?;
    Ok(cfg)
}
