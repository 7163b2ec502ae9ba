//! The two scan plans: a priors list of `(port, subnet)` sweeps that find
//! one predictive service per host, and a prediction list of individual
//! `(ip, port)` probes derived from whatever the sweeps found.

mod export;

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use rustc_hash::{FxHashMap, FxHashSet};
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Ipv4, ServiceRecord, Subnet};
use crate::error::{Error, Result};
use crate::features::Extractor;
use crate::model::{derive_conditions, CoOccurrenceModel, Condition, ScoredKey};

pub use export::{write_predictions_csv, write_priors_csv};

/// Probabilities below this are no better than probing at random.
pub const DEFAULT_FLOOR: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PriorsEntry {
    pub port: u16,
    pub subnet: Subnet,
    /// Unique seed services this sweep helps predict.
    pub coverage: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictiveFeatureEntry {
    pub condition: Condition,
    pub target_port: u16,
    pub probability: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub ip: Ipv4,
    pub port: u16,
    pub probability: f64,
    pub via: Condition,
}

fn desc(model: &CoOccurrenceModel, a: &Option<ScoredKey>, b: &Option<ScoredKey>) -> Ordering {
    match (a, b) {
        (Some(a), Some(b)) => model.compare(b, a),
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => Ordering::Equal,
    }
}

/// Builds the priors scan list.
///
/// A single-service host is covered by sweeping its own port. On a
/// multi-service host each service `a` gets the port `b` among the host's
/// other ports whose best condition predicts `a` most strongly. Services are
/// then visited from the most to the least predictable: a service whose
/// port is already swept is covered by that sweep, otherwise its `b` is
/// added to the host's sweeps and covers both `b` and `a`. A service with
/// no predictor is swept on its own port.
///
/// Entries are grouped by `(port, step subnet)` and sorted by descending
/// coverage, then ascending `(port, subnet)`.
pub fn build_priors_list(
    seed: &Corpus,
    model: &CoOccurrenceModel,
    extractor: &Extractor,
    step_prefix: u8,
) -> Result<Vec<PriorsEntry>> {
    if step_prefix > 32 {
        return Err(Error::Config(format!(
            "step prefix must be in 0..=32, got {step_prefix}"
        )));
    }
    let mut cover: FxHashMap<(u16, Subnet), FxHashSet<(Ipv4, u16)>> = FxHashMap::default();
    for (ip, services) in seed.hosts() {
        let subnet = Subnet::containing(ip, step_prefix)?;
        for (sweep, covered) in host_sweeps(model, extractor, ip, services) {
            cover.entry((sweep, subnet)).or_default().extend(covered);
        }
    }
    let mut list: Vec<PriorsEntry> = cover
        .into_iter()
        .map(|((port, subnet), set)| PriorsEntry {
            port,
            subnet,
            coverage: set.len(),
        })
        .collect();
    list.sort_by(|a, b| {
        b.coverage
            .cmp(&a.coverage)
            .then(a.port.cmp(&b.port))
            .then(a.subnet.cmp(&b.subnet))
    });
    Ok(list)
}

/// `(swept port, services it covers)` for one host.
fn host_sweeps(
    model: &CoOccurrenceModel,
    extractor: &Extractor,
    ip: Ipv4,
    services: &[ServiceRecord],
) -> Vec<(u16, Vec<(Ipv4, u16)>)> {
    if services.len() == 1 {
        return vec![(services[0].port, vec![(ip, services[0].port)])];
    }
    let hc = model.host_conditions(services, extractor);
    let mut ranked: Vec<(u16, Option<ScoredKey>)> = services
        .iter()
        .map(|s| (s.port, model.best_among(hc.all_keys(), s.port)))
        .collect();
    ranked.sort_by(|x, y| desc(model, &x.1, &y.1).then(x.0.cmp(&y.0)));

    let mut sweeps: BTreeMap<u16, Vec<(Ipv4, u16)>> = BTreeMap::new();
    for (a, best) in ranked {
        if let Some(covered) = sweeps.get_mut(&a) {
            covered.push((ip, a));
            continue;
        }
        match best {
            Some(best) => {
                let b = best.key.port;
                let covered = sweeps.entry(b).or_default();
                covered.push((ip, a));
                covered.push((ip, b));
            }
            None => sweeps.entry(a).or_default().push((ip, a)),
        }
    }
    sweeps.into_iter().collect()
}

/// For each seed service on `b` and each other port `a` on its host, the
/// best condition derived from the `b` service alone that predicts `a`,
/// kept when its probability reaches `floor`. Sorted by condition, then
/// target.
pub fn build_predictive_features(
    seed: &Corpus,
    model: &CoOccurrenceModel,
    extractor: &Extractor,
    floor: f64,
) -> Result<Vec<PredictiveFeatureEntry>> {
    if !(floor > 0.0 && floor <= 1.0) {
        return Err(Error::Config(format!("floor must be in (0, 1], got {floor}")));
    }
    let mut chosen: FxHashMap<(Condition, u16), f64> = FxHashMap::default();
    for (_, services) in seed.hosts().filter(|(_, s)| s.len() >= 2) {
        let hc = model.host_conditions(services, extractor);
        for b in services {
            let keys = hc.keys_of(b.port);
            for a in services.iter().filter(|a| a.port != b.port) {
                let Some(best) = model.best_among(keys.iter().copied(), a.port) else {
                    continue;
                };
                let p = best.probability();
                if p >= floor {
                    chosen.insert((model.resolve(best.key), a.port), p);
                }
            }
        }
    }
    let mut out: Vec<PredictiveFeatureEntry> = chosen
        .into_iter()
        .map(|((condition, target_port), probability)| PredictiveFeatureEntry {
            condition,
            target_port,
            probability,
        })
        .collect();
    out.sort_by(|a, b| {
        a.condition
            .cmp(&b.condition)
            .then(a.target_port.cmp(&b.target_port))
    });
    Ok(out)
}

/// Turns discovered services into `(ip, port)` probes.
///
/// Every condition derivable from a discovered service is matched against
/// `predictive`; each match proposes its target port on the same IP unless
/// the pair is in `already_known`. A pair proposed more than once keeps
/// its highest probability (ties: the smaller condition). Sorted by
/// descending probability, then `(ip, port)`.
pub fn build_prediction_list<'a>(
    discovered: impl IntoIterator<Item = &'a ServiceRecord>,
    predictive: &[PredictiveFeatureEntry],
    extractor: &Extractor,
    already_known: &FxHashSet<(Ipv4, u16)>,
) -> Vec<Prediction> {
    let mut index: FxHashMap<&Condition, Vec<&PredictiveFeatureEntry>> = FxHashMap::default();
    for e in predictive {
        index.entry(&e.condition).or_default().push(e);
    }
    let mut best: BTreeMap<(Ipv4, u16), (f64, Condition)> = BTreeMap::new();
    for record in discovered {
        for cond in derive_conditions(record, extractor) {
            let Some(entries) = index.get(&cond) else {
                continue;
            };
            for e in entries {
                let key = (record.ip, e.target_port);
                if already_known.contains(&key) {
                    continue;
                }
                match best.get_mut(&key) {
                    Some(cur) => {
                        let better = e.probability > cur.0
                            || (e.probability == cur.0 && e.condition < cur.1);
                        if better {
                            *cur = (e.probability, e.condition.clone());
                        }
                    }
                    None => {
                        best.insert(key, (e.probability, e.condition.clone()));
                    }
                }
            }
        }
    }
    let mut list: Vec<Prediction> = best
        .into_iter()
        .map(|((ip, port), (probability, via))| Prediction {
            ip,
            port,
            probability,
            via,
        })
        .collect();
    // Stable sort keeps the (ip, port) order within equal probabilities.
    list.sort_by(|a, b| b.probability.total_cmp(&a.probability));
    list
}

/// Ports a set of records covers, per IP.
pub fn known_pairs<'a>(records: impl IntoIterator<Item = &'a ServiceRecord>) -> FxHashSet<(Ipv4, u16)> {
    records.into_iter().map(|r| r.key()).collect()
}

/// Distinct ports across a priors list, in first-appearance order.
pub fn priors_ports(list: &[PriorsEntry]) -> Vec<u16> {
    let mut seen = BTreeSet::new();
    list.iter()
        .filter(|e| seen.insert(e.port))
        .map(|e| e.port)
        .collect()
}
