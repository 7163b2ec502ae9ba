//! Executing scan plans against a backend and accounting every probe.

mod ledger;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Ipv4, ServiceRecord, Subnet};
use crate::error::{Error, Result};
use crate::planner::{Prediction, PriorsEntry};

pub use ledger::{BandwidthLedger, PhaseCount};

/// Something that answers probes. Only the corpus-backed simulator ships.
pub trait ScanBackend {
    fn universe(&self) -> Subnet;

    fn probe(&self, ip: Ipv4, port: u16) -> Option<ServiceRecord>;

    /// Responsive services on `port` within `subnet ∩ universe`, by IP.
    fn sweep(&self, subnet: Subnet, port: u16) -> Vec<ServiceRecord> {
        let Some(cell) = subnet.intersection(&self.universe()) else {
            return Vec::new();
        };
        cell.addresses().filter_map(|ip| self.probe(ip, port)).collect()
    }

    /// Responsive services of one address among `ports`, by port.
    fn scan_host(&self, ip: Ipv4, ports: &BTreeSet<u16>) -> Vec<ServiceRecord> {
        ports.iter().filter_map(|&p| self.probe(ip, p)).collect()
    }
}

/// Answers from a ground-truth corpus.
#[derive(Clone, Copy, Debug)]
pub struct SimulatedInternet<'a> {
    corpus: &'a Corpus,
}

impl<'a> SimulatedInternet<'a> {
    pub fn new(corpus: &'a Corpus) -> Self {
        SimulatedInternet { corpus }
    }
}

impl ScanBackend for SimulatedInternet<'_> {
    fn universe(&self) -> Subnet {
        self.corpus.universe()
    }

    fn probe(&self, ip: Ipv4, port: u16) -> Option<ServiceRecord> {
        self.corpus.get(ip, port).cloned()
    }

    fn sweep(&self, subnet: Subnet, port: u16) -> Vec<ServiceRecord> {
        match subnet.intersection(&self.corpus.universe()) {
            Some(cell) => self.corpus.lookup_port_subnet(port, cell).cloned().collect(),
            None => Vec::new(),
        }
    }

    fn scan_host(&self, ip: Ipv4, ports: &BTreeSet<u16>) -> Vec<ServiceRecord> {
        self.corpus
            .by_ip(ip)
            .iter()
            .filter(|r| ports.contains(&r.port))
            .cloned()
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Seed,
    Priors,
    Predictions,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Seed => "seed",
            Phase::Priors => "priors",
            Phase::Predictions => "predictions",
        }
    }
}

/// Cumulative totals after one unit of work (a host, a sweep or a probe).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScanStep {
    pub probes: u64,
    pub found: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScanResult {
    pub phase: Phase,
    /// Responsive services in discovery order.
    pub found: Vec<ServiceRecord>,
    pub probes: u64,
    pub steps: Vec<ScanStep>,
}

impl ScanResult {
    fn new(phase: Phase) -> Self {
        ScanResult {
            phase,
            found: Vec::new(),
            probes: 0,
            steps: Vec::new(),
        }
    }

    fn step(&mut self, probes: u64, found: impl IntoIterator<Item = ServiceRecord>) {
        self.probes += probes;
        self.found.extend(found);
        self.steps.push(ScanStep {
            probes: self.probes,
            found: self.found.len(),
        });
    }

    pub fn responses(&self) -> u64 {
        self.found.len() as u64
    }

    /// Adds this scan's totals to `ledger`.
    pub fn charge(&self, ledger: &mut BandwidthLedger) {
        ledger.record(self.phase, self.probes, self.responses());
    }
}

/// Probes every `ports` entry on each address of the universe drawn into
/// the sample. The draw is a pure function of `(rng_seed, ip)`; see
/// [`crate::corpus::SeedSplit`], which uses the same draw.
pub fn run_seed_scan(
    backend: &dyn ScanBackend,
    sample_fraction: f64,
    ports: &BTreeSet<u16>,
    rng_seed: u64,
) -> Result<ScanResult> {
    if !(sample_fraction > 0.0 && sample_fraction <= 1.0) {
        return Err(Error::Config(format!(
            "sample fraction must be in (0, 1], got {sample_fraction}"
        )));
    }
    let mut result = ScanResult::new(Phase::Seed);
    let per_host = ports.len() as u64;
    let mut sampled = 0u64;
    for ip in backend.universe().addresses() {
        if sample_fraction < 1.0 && !crate::corpus::in_sample(rng_seed, sample_fraction, ip) {
            continue;
        }
        sampled += 1;
        result.found.extend(backend.scan_host(ip, ports));
    }
    result.step(sampled * per_host, []);
    Ok(result)
}

/// Sweeps priors entries in list order. An entry is atomic: it is swept
/// only if its whole cost fits in what is left of `budget`, and the scan
/// stops at the first entry that does not fit.
pub fn run_priors_scan(
    backend: &dyn ScanBackend,
    priors: &[PriorsEntry],
    budget: Option<u64>,
) -> ScanResult {
    let universe = backend.universe();
    let mut result = ScanResult::new(Phase::Priors);
    for entry in priors {
        let cost = entry.subnet.overlap(&universe);
        if budget.is_some_and(|b| result.probes + cost > b) {
            break;
        }
        result.step(cost, backend.sweep(entry.subnet, entry.port));
    }
    result
}

/// One probe per prediction, in order, until `budget` probes are spent.
pub fn run_prediction_scan(
    backend: &dyn ScanBackend,
    predictions: &[Prediction],
    budget: Option<u64>,
) -> ScanResult {
    let mut result = ScanResult::new(Phase::Predictions);
    let take = budget.map_or(predictions.len(), |b| predictions.len().min(b as usize));
    for p in &predictions[..take] {
        result.step(1, backend.probe(p.ip, p.port));
    }
    result
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Condition;

    fn corpus() -> Corpus {
        let universe: Subnet = "10.0.0.0/24".parse().unwrap();
        let recs = (0..256u32)
            .filter(|i| i % 4 == 0)
            .map(|i| ServiceRecord::new(Ipv4(0x0A00_0000 + i), 80, "http"))
            .collect();
        Corpus::new(universe, recs).unwrap()
    }

    #[test]
    fn full_seed_scan_of_a_slash24() {
        let c = corpus();
        let sim = SimulatedInternet::new(&c);
        let ports: BTreeSet<u16> = [80].into();
        let r = run_seed_scan(&sim, 1.0, &ports, 1).unwrap();
        assert_eq!(r.probes, 256);
        assert_eq!(r.found.len(), 64);
        assert!(run_seed_scan(&sim, 0.0, &ports, 1).is_err());
    }

    #[test]
    fn priors_budget_gate() {
        let c = corpus();
        let sim = SimulatedInternet::new(&c);
        let entry = |s: &str| PriorsEntry {
            port: 80,
            subnet: s.parse().unwrap(),
            coverage: 1,
        };
        let plan = [entry("10.0.0.0/25"), entry("10.0.0.128/25"), entry("0.0.0.0/0")];
        assert_eq!(run_priors_scan(&sim, &plan, Some(127)).probes, 0);
        let r = run_priors_scan(&sim, &plan, Some(300));
        assert_eq!((r.probes, r.found.len(), r.steps.len()), (256, 64, 2));
        // A /0 sweep only costs the universe.
        let r = run_priors_scan(&sim, &plan[2..], None);
        assert_eq!((r.probes, r.found.len()), (256, 64));
    }

    #[test]
    fn prediction_budget_is_exact() {
        let c = corpus();
        let sim = SimulatedInternet::new(&c);
        let preds: Vec<Prediction> = (0..100u32)
            .map(|i| Prediction {
                ip: Ipv4(0x0A00_0000 + i),
                port: 80,
                probability: 0.5,
                via: Condition::PortOnly { port: 22 },
            })
            .collect();
        let r = run_prediction_scan(&sim, &preds, None);
        assert_eq!((r.probes, r.found.len()), (100, 25));
        let r = run_prediction_scan(&sim, &preds, Some(10));
        assert_eq!((r.probes, r.found.len()), (10, 3));
        assert_eq!(run_prediction_scan(&sim, &preds, Some(0)).probes, 0);
    }

    #[test]
    fn default_sweep_matches_simulator() {
        struct Probing<'a>(SimulatedInternet<'a>);
        impl ScanBackend for Probing<'_> {
            fn universe(&self) -> Subnet {
                self.0.universe()
            }
            fn probe(&self, ip: Ipv4, port: u16) -> Option<ServiceRecord> {
                self.0.probe(ip, port)
            }
        }
        let c = corpus();
        let sim = SimulatedInternet::new(&c);
        let slow = Probing(sim);
        for s in ["10.0.0.0/26", "10.0.0.64/28", "10.0.0.0/8"] {
            let s: Subnet = s.parse().unwrap();
            assert_eq!(slow.sweep(s, 80), sim.sweep(s, 80));
        }
    }
}
