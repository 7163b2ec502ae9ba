use std::collections::BTreeMap;
use std::io::{BufWriter, Write};

use rustc_hash::FxHashSet;
use serde::Serialize;

use super::{normalized_from_counts, optimal_port_order, ServiceKey, Truth};
use crate::scansim::ScanResult;

pub const CURVE_HEADER: &str = "probes,full_scan_units,fraction_services,normalized_services,precision,phase";

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoveragePoint {
    pub probes: u64,
    pub full_scan_units: f64,
    pub fraction_services: f64,
    pub normalized_services: f64,
    /// Truth services found per probe; 0 before the first probe.
    pub precision: f64,
    pub phase: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Curve {
    pub label: String,
    pub points: Vec<CoveragePoint>,
}

impl Curve {
    /// Thins the curve to points at least `every` probes apart, always
    /// keeping the first point and the last point of each phase.
    pub fn sampled(&self, every: u64) -> Vec<CoveragePoint> {
        if every <= 1 {
            return self.points.clone();
        }
        let n = self.points.len();
        let mut out: Vec<CoveragePoint> = Vec::new();
        for (i, p) in self.points.iter().enumerate() {
            let phase_end = i + 1 == n || self.points[i + 1].phase != p.phase;
            let due = out.last().is_none_or(|last| p.probes >= last.probes + every);
            if due || phase_end {
                out.push(p.clone());
            }
        }
        out
    }
}

struct Tracker<'a> {
    truth: &'a Truth,
    ports: std::collections::BTreeSet<u16>,
    units: u64,
    found: FxHashSet<ServiceKey>,
    found_on: BTreeMap<u16, usize>,
    probes: u64,
    points: Vec<CoveragePoint>,
}

impl<'a> Tracker<'a> {
    fn new(truth: &'a Truth, probes_per_full_scan: u64, start_probes: u64) -> Self {
        Tracker {
            truth,
            ports: truth.ports(),
            units: probes_per_full_scan.max(1),
            found: FxHashSet::default(),
            found_on: BTreeMap::new(),
            probes: start_probes,
            points: Vec::new(),
        }
    }

    fn advance(&mut self, probes: u64, keys: impl IntoIterator<Item = ServiceKey>, phase: &str) {
        self.probes += probes;
        for k in keys {
            if self.truth.contains(&k) && self.found.insert(k) {
                *self.found_on.entry(k.1).or_insert(0) += 1;
            }
        }
        let n = self.truth.len().max(1) as f64;
        self.points.push(CoveragePoint {
            probes: self.probes,
            full_scan_units: self.probes as f64 / self.units as f64,
            fraction_services: self.found.len() as f64 / n,
            normalized_services: normalized_from_counts(&self.found_on, self.truth, &self.ports)
                .unwrap_or(0.0),
            precision: if self.probes == 0 {
                0.0
            } else {
                self.found.len() as f64 / self.probes as f64
            },
            phase: phase.to_string(),
        });
    }
}

/// One point per step of each scan, in order. `start_probes` shifts the
/// probe axis, e.g. by the seed scan's cost.
pub fn scan_curve(
    label: &str,
    truth: &Truth,
    scans: &[&ScanResult],
    probes_per_full_scan: u64,
    start_probes: u64,
) -> Curve {
    let mut t = Tracker::new(truth, probes_per_full_scan, start_probes);
    for scan in scans {
        let (mut probes, mut found) = (0u64, 0usize);
        for step in &scan.steps {
            let keys = scan.found[found..step.found].iter().map(|r| r.key());
            t.advance(step.probes - probes, keys, scan.phase.name());
            probes = step.probes;
            found = step.found;
        }
    }
    Curve {
        label: label.to_string(),
        points: t.points,
    }
}

/// Exhaustive sweeps of whole ports in descending truth count, each
/// costing `universe_size` probes.
pub fn port_order_curve(truth: &Truth, universe_size: u64, probes_per_full_scan: u64) -> Curve {
    let mut t = Tracker::new(truth, probes_per_full_scan, 0);
    let mut by_port: BTreeMap<u16, Vec<ServiceKey>> = BTreeMap::new();
    for k in &truth.services {
        by_port.entry(k.1).or_default().push(*k);
    }
    for port in optimal_port_order(truth) {
        t.advance(universe_size, by_port.remove(&port).unwrap_or_default(), "port_order");
    }
    Curve {
        label: "port_order".into(),
        points: t.points,
    }
}

/// A predictor that only probes truth services: one point at the start
/// and one when everything is found; coverage is linear in between.
pub fn oracle_curve(truth: &Truth, probes_per_full_scan: u64) -> Curve {
    let mut t = Tracker::new(truth, probes_per_full_scan, 0);
    t.advance(0, [], "oracle");
    let mut all: Vec<ServiceKey> = truth.services.iter().copied().collect();
    all.sort_unstable();
    t.advance(all.len() as u64, all, "oracle");
    Curve {
        label: "oracle".into(),
        points: t.points,
    }
}

/// First probe count at which `fraction_services` reaches `target`.
pub fn probes_to_reach(points: &[CoveragePoint], target: f64) -> Option<u64> {
    points
        .iter()
        .find(|p| p.fraction_services >= target)
        .map(|p| p.probes)
}

/// True when no point finds more than an oracle could with its probes.
pub fn dominated_by_oracle(points: &[CoveragePoint], truth: &Truth) -> bool {
    let n = truth.len() as u64;
    points.iter().all(|p| {
        let best = p.probes.min(n);
        // fraction * n <= best, compared in integers where possible
        (p.fraction_services * n as f64).round() as u64 <= best
    })
}

pub fn write_curve_csv(w: impl Write, points: &[CoveragePoint]) -> std::io::Result<()> {
    let mut w = BufWriter::new(w);
    writeln!(w, "{CURVE_HEADER}")?;
    for p in points {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            p.probes, p.full_scan_units, p.fraction_services, p.normalized_services, p.precision, p.phase
        )?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Ipv4, ServiceRecord};
    use crate::scansim::{Phase, ScanStep};

    fn truth() -> Truth {
        Truth::new((0..10u32).map(|i| (Ipv4(i), 80)).chain((0..4).map(|i| (Ipv4(i), 22))))
    }

    #[test]
    fn port_order_and_oracle() {
        let t = truth();
        let po = port_order_curve(&t, 1000, 1000);
        assert_eq!(po.points.len(), 2);
        assert_eq!(po.points[0].probes, 1000);
        assert_eq!(po.points[0].fraction_services, 10.0 / 14.0);
        assert_eq!(po.points[1].fraction_services, 1.0);
        let or = oracle_curve(&t, 1000);
        assert_eq!(or.points.last().unwrap().probes, 14);
        assert_eq!(or.points.last().unwrap().precision, 1.0);
        assert_eq!(probes_to_reach(&po.points, 0.9), Some(2000));
        assert!(dominated_by_oracle(&po.points, &t));

        let one = Truth::new([(Ipv4(1), 5)]);
        assert_eq!(port_order_curve(&one, 16, 16).points.len(), 1);
    }

    #[test]
    fn scan_curve_replays_steps() {
        let t = truth();
        let scan = ScanResult {
            phase: Phase::Predictions,
            found: vec![
                ServiceRecord::new(Ipv4(0), 80, "http"),
                ServiceRecord::new(Ipv4(99), 80, "http"),
                ServiceRecord::new(Ipv4(1), 22, "ssh"),
            ],
            probes: 5,
            steps: vec![
                ScanStep { probes: 1, found: 1 },
                ScanStep { probes: 3, found: 2 },
                ScanStep { probes: 5, found: 3 },
            ],
        };
        let c = scan_curve("svcpredict", &t, &[&scan], 10, 0);
        let fr: Vec<f64> = c.points.iter().map(|p| p.fraction_services).collect();
        assert_eq!(fr, vec![1.0 / 14.0, 1.0 / 14.0, 2.0 / 14.0]);
        assert_eq!(c.points[2].precision, 2.0 / 5.0);
        assert_eq!(c.points[2].normalized_services, (0.1 + 0.25) / 2.0);
        let shifted = scan_curve("svcpredict", &t, &[&scan], 10, 100);
        assert_eq!(shifted.points[0].probes, 101);
        assert!(dominated_by_oracle(&c.points, &t));
    }

    #[test]
    fn sampling_keeps_phase_ends() {
        let p = |probes, phase: &str| CoveragePoint {
            probes,
            full_scan_units: 0.0,
            fraction_services: 0.0,
            normalized_services: 0.0,
            precision: 0.0,
            phase: phase.into(),
        };
        let c = Curve {
            label: "x".into(),
            points: vec![p(1, "a"), p(2, "a"), p(3, "a"), p(50, "b"), p(51, "b"), p(52, "b")],
        };
        let s: Vec<u64> = c.sampled(10).iter().map(|p| p.probes).collect();
        assert_eq!(s, vec![1, 3, 50, 52]);
        assert_eq!(c.sampled(0).len(), 6);
    }
}
