use alloc::collections::{BTreeMap, BTreeSet};

use crate::ids::Tick;
use crate::messaging::MsgClass;

use super::trace::TraceKind;

/// Per-run summary. Recovery energy and rounds cover failure-report and
/// recovery messages; periodic maintenance and probing are excluded.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunMetrics {
    /// tx + rx energy of recovery messages, mJ.
    pub recovery_energy: f64,
    /// Recovery transmissions; a multicast counts once.
    pub recovery_messages: u64,
    /// Failure-report transmissions.
    pub report_messages: u64,
    /// Distinct ticks on which recovery messages were sent.
    pub recovery_rounds: u64,
    /// Last repair minus first recovery send, ticks.
    pub recovery_latency: Tick,
    /// First declaration or self-report after the first fault, ticks.
    pub detection_latency: Option<Tick>,
    pub total_messages: u64,
    /// Every charge applied to every node, mJ.
    pub total_energy: f64,
    pub messages_by_kind: BTreeMap<&'static str, u64>,
}

#[derive(Clone, Debug, Default)]
pub(super) struct Accumulator {
    pub metrics: RunMetrics,
    pub recovery_send_ticks: BTreeSet<Tick>,
    pub last_recovery: Option<Tick>,
}

impl Accumulator {
    pub fn on_send(&mut self, tick: Tick, kind: TraceKind, tx: f64) {
        let m = &mut self.metrics;
        m.total_messages += 1;
        *m.messages_by_kind.entry(kind.name()).or_insert(0) += 1;
        if kind.class().is_recovery() {
            if kind.class() == MsgClass::FailureReport {
                m.report_messages += 1;
            } else {
                m.recovery_messages += 1;
            }
            m.recovery_energy += tx;
            self.recovery_send_ticks.insert(tick);
        }
    }

    pub fn on_receive(&mut self, kind: TraceKind, rx: f64) {
        if kind.class().is_recovery() {
            self.metrics.recovery_energy += rx;
        }
    }

    pub fn on_recovered(&mut self, tick: Tick) {
        self.last_recovery = Some(self.last_recovery.map_or(tick, |t| t.max(tick)));
    }

    pub fn finish(mut self, total_energy: f64, first_fault: Option<Tick>, first_detection: Option<Tick>) -> RunMetrics {
        let m = &mut self.metrics;
        m.total_energy = total_energy;
        m.recovery_rounds = self.recovery_send_ticks.len() as u64;
        if let (Some(first), Some(last)) = (self.recovery_send_ticks.first(), self.last_recovery) {
            m.recovery_latency = last.saturating_sub(*first);
        }
        if let (Some(f), Some(d)) = (first_fault, first_detection) {
            m.detection_latency = Some(d.saturating_sub(f));
        }
        self.metrics
    }
}

pub(super) fn is_activity(class: MsgClass) -> bool {
    class != MsgClass::Maintenance
}
