//! Coverage metrics, baselines, curves and the feature report.

mod curve;
mod report;

use std::collections::{BTreeMap, BTreeSet};

use rustc_hash::FxHashSet;

use crate::corpus::{Corpus, Ipv4, SeedSplit};
use crate::error::{Error, Result};

pub use curve::{
    dominated_by_oracle, oracle_curve, port_order_curve, probes_to_reach, scan_curve,
    write_curve_csv, CoveragePoint, Curve, CURVE_HEADER,
};
pub use report::{feature_report, write_feature_report_csv, FeatureReportRow};

pub type ServiceKey = (Ipv4, u16);

/// The services a run is scored against.
#[derive(Clone, Debug, Default)]
pub struct Truth {
    services: FxHashSet<ServiceKey>,
    per_port: BTreeMap<u16, usize>,
}

impl Truth {
    pub fn new(keys: impl IntoIterator<Item = ServiceKey>) -> Self {
        let services: FxHashSet<ServiceKey> = keys.into_iter().collect();
        let mut per_port = BTreeMap::new();
        for (_, port) in &services {
            *per_port.entry(*port).or_insert(0) += 1;
        }
        Truth { services, per_port }
    }

    /// Test-side services on eligible ports.
    pub fn from_corpus(corpus: &Corpus, split: &SeedSplit, eligible: &BTreeSet<u16>) -> Self {
        Self::new(
            corpus
                .services()
                .iter()
                .filter(|r| split.is_test(r.ip) && eligible.contains(&r.port))
                .map(|r| r.key()),
        )
    }

    pub fn len(&self) -> usize {
        self.services.len()
    }

    pub fn is_empty(&self) -> bool {
        self.services.is_empty()
    }

    pub fn contains(&self, key: &ServiceKey) -> bool {
        self.services.contains(key)
    }

    /// Ports with at least one truth service, ascending.
    pub fn ports(&self) -> BTreeSet<u16> {
        self.per_port.keys().copied().collect()
    }

    pub fn count_on(&self, port: u16) -> usize {
        self.per_port.get(&port).copied().unwrap_or(0)
    }

    pub fn per_port(&self) -> &BTreeMap<u16, usize> {
        &self.per_port
    }
}

/// Share of truth services found. Found services outside the truth are
/// ignored.
pub fn fraction_services(found: &FxHashSet<ServiceKey>, truth: &Truth) -> Result<f64> {
    if truth.is_empty() {
        return Err(Error::UndefinedMetric("fraction of services over an empty truth set"));
    }
    let hit = found.iter().filter(|k| truth.contains(k)).count();
    Ok(hit as f64 / truth.len() as f64)
}

/// Mean over `ports` of the share of each port's truth services found.
pub fn normalized_services(
    found: &FxHashSet<ServiceKey>,
    truth: &Truth,
    ports: &BTreeSet<u16>,
) -> Result<f64> {
    if ports.is_empty() {
        return Err(Error::UndefinedMetric("normalized services over no ports"));
    }
    let mut found_on: BTreeMap<u16, usize> = BTreeMap::new();
    for k in found.iter().filter(|k| truth.contains(k)) {
        *found_on.entry(k.1).or_insert(0) += 1;
    }
    normalized_from_counts(&found_on, truth, ports)
}

pub(crate) fn normalized_from_counts(
    found_on: &BTreeMap<u16, usize>,
    truth: &Truth,
    ports: &BTreeSet<u16>,
) -> Result<f64> {
    if ports.is_empty() {
        return Err(Error::UndefinedMetric("normalized services over no ports"));
    }
    let mut sum = 0.0;
    for p in ports {
        let t = truth.count_on(*p);
        if t == 0 {
            return Err(Error::UndefinedMetric("normalized services over a port with no truth"));
        }
        sum += found_on.get(p).copied().unwrap_or(0) as f64 / t as f64;
    }
    Ok(sum / ports.len() as f64)
}

pub fn precision(found: u64, probes: u64) -> Result<f64> {
    if probes == 0 {
        return Err(Error::UndefinedMetric("precision with zero probes"));
    }
    Ok(found as f64 / probes as f64)
}

/// Ports by descending truth count, ties ascending.
pub fn optimal_port_order(truth: &Truth) -> Vec<u16> {
    let mut ports: Vec<(u16, usize)> = truth.per_port.iter().map(|(p, n)| (*p, *n)).collect();
    ports.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    ports.into_iter().map(|(p, _)| p).collect()
}
