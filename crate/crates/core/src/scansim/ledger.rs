use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::Phase;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseCount {
    pub probes: u64,
    pub responses: u64,
}

/// Probe and response totals per phase.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandwidthLedger {
    /// Probes in one sweep of the whole address space on one port.
    pub probes_per_full_scan: u64,
    pub phases: BTreeMap<Phase, PhaseCount>,
}

impl BandwidthLedger {
    pub fn new(probes_per_full_scan: u64) -> Self {
        BandwidthLedger {
            probes_per_full_scan: probes_per_full_scan.max(1),
            phases: BTreeMap::new(),
        }
    }

    pub fn record(&mut self, phase: Phase, probes: u64, responses: u64) {
        debug_assert!(responses <= probes);
        let c = self.phases.entry(phase).or_default();
        c.probes += probes;
        c.responses += responses;
    }

    pub fn phase(&self, phase: Phase) -> PhaseCount {
        self.phases.get(&phase).copied().unwrap_or_default()
    }

    pub fn total_probes(&self) -> u64 {
        self.phases.values().map(|c| c.probes).sum()
    }

    pub fn total_responses(&self) -> u64 {
        self.phases.values().map(|c| c.responses).sum()
    }

    /// `probes` in multiples of a full single-port sweep.
    pub fn full_scan_units(&self, probes: u64) -> f64 {
        probes as f64 / self.probes_per_full_scan as f64
    }
}
