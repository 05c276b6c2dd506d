use serde::Serialize;

use super::{EventLedger, MeasurementModel};
use crate::analysis::kappa;
use crate::error::{Error, Result};
use crate::units::HBAR;

/// Events whose post-state holds at least this fraction inside the barrier
/// count as in-barrier outcomes.
const IN_BARRIER: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AuditReport {
    pub pulse_duration: f64,
    /// `hbar / pulse_duration`.
    pub budget: f64,
    pub barrier_deficit: f64,
    /// `budget / (v0 - e)`; one at the critical pulse duration.
    pub budget_over_deficit: f64,
    pub n_events: usize,
    pub n_in_barrier: usize,
    /// Events whose atom-energy gain exceeds the budget.
    pub n_exceeding: usize,
    pub fraction_exceeding: f64,
    /// Mean gain over in-barrier events (NaN when there are none).
    pub mean_gain_in_barrier: f64,
    /// `mean_gain_in_barrier / budget`.
    pub c: f64,
}

impl AuditReport {
    pub const CSV_HEADER: &'static str = "pulse_duration,budget,barrier_deficit,budget_over_deficit,n_events,n_in_barrier,n_exceeding,fraction_exceeding,mean_gain_in_barrier,c";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.pulse_duration,
            self.budget,
            self.barrier_deficit,
            self.budget_over_deficit,
            self.n_events,
            self.n_in_barrier,
            self.n_exceeding,
            self.fraction_exceeding,
            self.mean_gain_in_barrier,
            self.c
        )
    }
}

pub fn bound_audit(ledger: &EventLedger, v0: f64, e: f64, model: &MeasurementModel) -> Result<AuditReport> {
    let t = model
        .pulse_duration()
        .ok_or_else(|| Error::Measurement("bound audit needs a pulse_duration".into()))?;
    kappa(v0, e)?;
    let budget = HBAR / t;
    let n_events = ledger.events.len();
    let n_exceeding = ledger.events.iter().filter(|ev| ev.delta_e_atom > budget).count();
    let inside: Vec<f64> = ledger
        .events
        .iter()
        .filter(|ev| ev.post_in_barrier >= IN_BARRIER)
        .map(|ev| ev.delta_e_atom)
        .collect();
    let mean = if inside.is_empty() {
        f64::NAN
    } else {
        inside.iter().sum::<f64>() / inside.len() as f64
    };
    Ok(AuditReport {
        pulse_duration: t,
        budget,
        barrier_deficit: v0 - e,
        budget_over_deficit: budget / (v0 - e),
        n_events,
        n_in_barrier: inside.len(),
        n_exceeding,
        fraction_exceeding: if n_events == 0 { 0.0 } else { n_exceeding as f64 / n_events as f64 },
        mean_gain_in_barrier: mean,
        c: mean / budget,
    })
}

/// Phase-shift bookkeeping for a dark-spot probe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FrequencyShift {
    /// `eta / t`.
    pub per_photon_shift: f64,
    /// `hbar eta / t`.
    pub per_photon_energy: f64,
    /// `1 / eta`.
    pub photons_needed: f64,
    /// `ceil(1 / eta)`.
    pub photons_needed_whole: u64,
    /// `per_photon_energy * photons_needed = hbar / t`.
    pub total_budget: f64,
}

impl FrequencyShift {
    pub const CSV_HEADER: &'static str = "per_photon_shift,per_photon_energy,photons_needed,photons_needed_whole,total_budget";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.per_photon_shift, self.per_photon_energy, self.photons_needed, self.photons_needed_whole, self.total_budget
        )
    }
}

pub fn frequency_shift_estimate(eta: f64, t: f64) -> Result<FrequencyShift> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::Invalid(format!("eta must lie in (0, 1], got {eta}")));
    }
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::Invalid(format!("t must be > 0, got {t}")));
    }
    let per_photon_shift = eta / t;
    let per_photon_energy = HBAR * per_photon_shift;
    let photons_needed = 1.0 / eta;
    Ok(FrequencyShift {
        per_photon_shift,
        per_photon_energy,
        photons_needed,
        photons_needed_whole: photons_needed.ceil() as u64,
        total_budget: per_photon_energy * photons_needed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::critical_pulse_duration;
    use crate::measurement::{Centers, MeasurementEvent, MeasurementKind, Outcome};

    fn model(t: Option<f64>) -> MeasurementModel {
        MeasurementModel::BrightImaging { delta_l: 0.5, pulse_duration: t, centers: Centers::default() }
    }

    fn ledger(gains: &[(f64, f64)]) -> EventLedger {
        let mut l = EventLedger::new();
        for &(de, inside) in gains {
            l.push(MeasurementEvent {
                traj_id: 0,
                time: 0.0,
                kind: MeasurementKind::Bright,
                outcome: Outcome::Center(0),
                probability: 1.0,
                delta_e_atom: de,
                post_in_barrier: inside,
            });
        }
        l
    }

    #[test]
    fn audit_at_critical_duration() {
        let (v0, e) = (1.7, 0.4);
        let t = critical_pulse_duration(v0, e).unwrap();
        let r = bound_audit(&ledger(&[]), v0, e, &model(Some(t))).unwrap();
        assert!((r.budget - (v0 - e)).abs() < 1e-12);
        let half = bound_audit(&ledger(&[]), v0, e, &model(Some(t / 2.0))).unwrap();
        assert!((half.budget / r.budget - 2.0).abs() < 1e-12);
    }

    #[test]
    fn audit_counts() {
        let l = ledger(&[(0.1, 0.9), (3.0, 0.8), (0.2, 0.1), (5.0, 0.0)]);
        let r = bound_audit(&l, 1.0, 0.5, &model(Some(0.5))).unwrap();
        assert_eq!(r.n_events, 4);
        assert_eq!(r.n_in_barrier, 2);
        assert_eq!(r.n_exceeding, 2);
        assert!((r.mean_gain_in_barrier - 1.55).abs() < 1e-12);
        assert!((r.c - 0.775).abs() < 1e-12);
        assert!(bound_audit(&l, 1.0, 0.5, &model(None)).is_err());
    }

    #[test]
    fn frequency_shift_examples() {
        let one = frequency_shift_estimate(1.0, 2.0).unwrap();
        assert_eq!(one.photons_needed_whole, 1);
        assert_eq!(one.total_budget, 0.5);
        let f = frequency_shift_estimate(0.01, 1.0).unwrap();
        assert!((f.per_photon_energy - 0.01).abs() < 1e-15);
        assert_eq!(f.photons_needed_whole, 100);
        assert!((f.total_budget - 1.0).abs() < 1e-15);
        assert!(frequency_shift_estimate(0.0, 1.0).is_err());
        assert!(frequency_shift_estimate(1.5, 1.0).is_err());
        assert!(frequency_shift_estimate(0.5, 0.0).is_err());
    }
}
