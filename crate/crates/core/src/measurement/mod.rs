//! Position-measurement channels and the energy bookkeeping around them.
//!
//! Bright imaging is a family of Gaussian Kraus windows on a lattice of
//! centers; dark-spot detection is a two-outcome split into the barrier
//! region ("null", no light scattered) and its exterior ("flash"). The probe
//! field is not simulated: every event records the atom's energy change and
//! the ledger books the opposite amount against the probe.

mod budget;
mod channel;
mod trajectory;

use std::fmt;

use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::potentials::BarrierRegion;

pub use budget::{bound_audit, frequency_shift_estimate, AuditReport, FrequencyShift};
pub use channel::{apply, apply_bright, apply_dark_spot, kraus_set, Channel, DarkMask, KrausSet, KRAUS_SUPPORT};
pub use trajectory::{
    ensemble_transmission, evenly_spaced, null_survey, traversal_window, trajectory_run, EnsembleResult,
    EnsembleSummary, NullSample, NullSurvey, TrajectoryRecord, TrajectoryRun, trajectory_rng,
};

/// Lattice of Kraus-window centers. The pitch defaults to `delta_l`; with a
/// `span`, only `[a, b]` is imaged and a "null" outcome covers the rest.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Centers {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pitch: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub span: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeasurementModel {
    BrightImaging {
        delta_l: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        pulse_duration: Option<f64>,
        #[serde(default)]
        centers: Centers,
    },
    DarkSpot {
        region: BarrierRegion,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        pulse_duration: Option<f64>,
        /// Gaussian edge width of the mask; sharp projector when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        edge: Option<f64>,
    },
    /// Bright imaging at Poisson-distributed times.
    ContinuousBright {
        delta_l: f64,
        rate: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        pulse_duration: Option<f64>,
        #[serde(default)]
        centers: Centers,
        /// Event window; the whole run when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        window: Option<(f64, f64)>,
    },
}

impl MeasurementModel {
    pub fn kind(&self) -> MeasurementKind {
        match self {
            Self::BrightImaging { .. } => MeasurementKind::Bright,
            Self::DarkSpot { .. } => MeasurementKind::DarkSpot,
            Self::ContinuousBright { .. } => MeasurementKind::ContinuousBright,
        }
    }

    pub fn pulse_duration(&self) -> Option<f64> {
        match self {
            Self::BrightImaging { pulse_duration, .. }
            | Self::DarkSpot { pulse_duration, .. }
            | Self::ContinuousBright { pulse_duration, .. } => *pulse_duration,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Measurement(m));
        if let Some(t) = self.pulse_duration() {
            if !(t > 0.0 && t.is_finite()) {
                return bad(format!("pulse_duration must be > 0, got {t}"));
            }
        }
        match self {
            Self::BrightImaging { delta_l, centers, .. } => check_bright(*delta_l, centers),
            Self::ContinuousBright { delta_l, rate, centers, window, .. } => {
                if !(*rate >= 0.0 && rate.is_finite()) {
                    return bad(format!("rate must be >= 0, got {rate}"));
                }
                if let Some((a, b)) = window {
                    if !(a >= &0.0 && a < b) {
                        return bad(format!("window needs 0 <= start < end, got ({a}, {b})"));
                    }
                }
                check_bright(*delta_l, centers)
            }
            Self::DarkSpot { region, edge, .. } => {
                BarrierRegion::new(region.x_left, region.x_right)?;
                match edge {
                    Some(w) if !(*w > 0.0) => bad(format!("edge width must be > 0, got {w}")),
                    _ => Ok(()),
                }
            }
        }
    }
}

fn check_bright(delta_l: f64, centers: &Centers) -> Result<()> {
    if !(delta_l > 0.0 && delta_l.is_finite()) {
        return Err(Error::Measurement(format!("delta_l must be > 0, got {delta_l}")));
    }
    if let Some(p) = centers.pitch {
        if !(p > 0.0) {
            return Err(Error::Measurement(format!("pitch must be > 0, got {p}")));
        }
    }
    if let Some((a, b)) = centers.span {
        if !(a <= b) {
            return Err(Error::Measurement(format!("span needs a <= b, got ({a}, {b})")));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasurementKind {
    Bright,
    DarkSpot,
    ContinuousBright,
}

impl MeasurementKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Bright => "bright",
            Self::DarkSpot => "dark_spot",
            Self::ContinuousBright => "continuous_bright",
        }
    }
}

impl fmt::Display for MeasurementKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Outcome {
    /// Kraus window index.
    Center(usize),
    /// No light detected: inside the dark spot, or outside the imaged span.
    Null,
    /// Light detected outside the dark spot.
    Flash,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Center(j) => write!(f, "{j}"),
            Self::Null => f.write_str("null"),
            Self::Flash => f.write_str("flash"),
        }
    }
}

impl Serialize for Outcome {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeasurementEvent {
    pub traj_id: u64,
    pub time: f64,
    pub kind: MeasurementKind,
    pub outcome: Outcome,
    pub probability: f64,
    /// Total energy after minus before, barrier potential included.
    pub delta_e_atom: f64,
    /// Fraction of the post-measurement state inside the barrier region.
    pub post_in_barrier: f64,
}

impl MeasurementEvent {
    pub const CSV_HEADER: &'static str = "traj_id,time,kind,outcome,probability,delta_e_atom,post_in_barrier";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.traj_id, self.time, self.kind, self.outcome, self.probability, self.delta_e_atom, self.post_in_barrier
        )
    }
}

/// Event list with running totals. The probe is charged the negative of the
/// atom's gain.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct EventLedger {
    pub events: Vec<MeasurementEvent>,
    pub total_atom_gain: f64,
    pub attributed_probe_loss: f64,
}

impl EventLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, event: MeasurementEvent) {
        self.events.push(event);
        self.total_atom_gain += event.delta_e_atom;
        self.attributed_probe_loss = -self.total_atom_gain;
    }

    pub fn merge(&mut self, other: &EventLedger) {
        for e in &other.events {
            self.push(*e);
        }
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn write_csv<W: std::io::Write>(&self, mut w: W, header: bool) -> std::io::Result<()> {
        if header {
            writeln!(w, "{}", MeasurementEvent::CSV_HEADER)?;
        }
        for e in &self.events {
            writeln!(w, "{}", e.csv_row())?;
        }
        Ok(())
    }
}
