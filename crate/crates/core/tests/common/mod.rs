//! Brute-force reference implementations shared by the oracle and
//! acceptance tests. They rely only on plain collections and the public
//! data types, never on the indexes or interning of the library.

#![allow(dead_code)]

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use svcpredict::corpus::{Corpus, Ipv4, ServiceRecord, Subnet};
use svcpredict::features::{AsnTable, Extractor, FeatureKind, FeatureSet, FeatureValue};
use svcpredict::model::{Condition, ModelEntry};
use svcpredict::planner::{Prediction, PredictiveFeatureEntry, PriorsEntry};

/// A best condition with its joint and conditional host counts.
pub type Best = (Condition, u32, u32);

pub const PORTS: [u16; 8] = [21, 22, 23, 80, 443, 7547, 8080, 37215];

/// Small random corpus with repeating banners so that many conditions
/// clear support. Addresses spread over a few /16s and two ASNs.
pub fn random_corpus(rng: &mut ChaCha8Rng, hosts: usize, max_services: usize) -> Corpus {
    let banners = ["A", "B", "C"];
    let titles = ["router", "camera"];
    let mut records = Vec::new();
    let mut ips = BTreeSet::new();
    while ips.len() < hosts {
        let net = rng.gen_range(0..3u32);
        ips.insert(Ipv4(0x0A00_0000 | (net << 16) | rng.gen_range(0..512u32)));
    }
    for ip in ips {
        let n = rng.gen_range(1..=max_services);
        let ports: BTreeSet<u16> = (0..n).map(|_| *PORTS.choose(rng).unwrap()).collect();
        for port in ports {
            let protocol = match port {
                21 => "ftp",
                22 => "ssh",
                23 => "telnet",
                _ => {
                    if rng.gen_bool(0.8) {
                        "http"
                    } else {
                        "https"
                    }
                }
            };
            let mut r = ServiceRecord::new(ip, port, protocol);
            let kind = match protocol {
                "ftp" => FeatureKind::FtpBanner,
                "ssh" => FeatureKind::SshBanner,
                "telnet" => FeatureKind::TelnetBanner,
                _ => FeatureKind::HttpServer,
            };
            if rng.gen_bool(0.7) {
                r = r.with_feature(kind, *banners.choose(rng).unwrap());
            }
            if protocol == "http" && rng.gen_bool(0.5) {
                r = r.with_feature(FeatureKind::HttpHtmlTitle, *titles.choose(rng).unwrap());
            }
            records.push(r);
        }
    }
    Corpus::new(Subnet::all(), records).unwrap()
}

pub fn extractor() -> Extractor {
    let asn = AsnTable::new(vec![
        ("10.0.0.0/15".parse().unwrap(), 64500),
        ("10.2.0.0/16".parse().unwrap(), 64501),
    ]);
    Extractor::new(FeatureSet::default(), asn)
}

/// Every condition a service yields, enumerated directly.
pub fn conditions_of(r: &ServiceRecord, ex: &Extractor) -> Vec<Condition> {
    let mut apps = Vec::new();
    if ex.features.app_kinds.contains(&FeatureKind::Protocol) {
        apps.push(FeatureValue::new(FeatureKind::Protocol, r.protocol.clone()));
    }
    for (k, v) in &r.features {
        if ex.features.app_kinds.contains(k) && !v.is_empty() {
            apps.push(FeatureValue::new(*k, v.clone()));
        }
    }
    let mut nets = Vec::new();
    for k in &ex.features.net_kinds {
        match k {
            FeatureKind::SubnetPrefix(len) => {
                let mask = if *len == 0 { 0 } else { u32::MAX << (32 - len) };
                let base = Ipv4(r.ip.0 & mask);
                nets.push(FeatureValue::new(*k, format!("{base}/{len}")));
            }
            FeatureKind::Asn => {
                if let Some(asn) = ex.asn.lookup(r.ip) {
                    nets.push(FeatureValue::new(*k, asn.to_string()));
                }
            }
            _ => {}
        }
    }
    let port = r.port;
    let mut out = vec![Condition::PortOnly { port }];
    for a in &apps {
        out.push(Condition::PortApp { port, app: a.clone() });
    }
    for n in &nets {
        out.push(Condition::PortNet { port, net: n.clone() });
    }
    for a in &apps {
        for n in &nets {
            out.push(Condition::PortAppNet {
                port,
                app: a.clone(),
                net: n.clone(),
            });
        }
    }
    out
}

fn hosts_of(c: &Corpus) -> BTreeMap<Ipv4, Vec<ServiceRecord>> {
    let mut m: BTreeMap<Ipv4, Vec<ServiceRecord>> = BTreeMap::new();
    for r in c.services() {
        m.entry(r.ip).or_default().push(r.clone());
    }
    m
}

/// Nested-loop counts of every condition and every ordered port pair.
pub struct OracleModel {
    pub cond: BTreeMap<Condition, u32>,
    pub joint: BTreeMap<(Condition, u16), u32>,
    pub min_support: u32,
}

impl OracleModel {
    pub fn count(seed: &Corpus, ex: &Extractor, min_support: u32) -> Self {
        let mut cond = BTreeMap::new();
        let mut joint = BTreeMap::new();
        for services in hosts_of(seed).values() {
            for b in services {
                for c in conditions_of(b, ex) {
                    *cond.entry(c.clone()).or_insert(0) += 1;
                    for a in services {
                        if a.port != b.port {
                            *joint.entry((c.clone(), a.port)).or_insert(0) += 1;
                        }
                    }
                }
            }
        }
        OracleModel {
            cond,
            joint,
            min_support,
        }
    }

    pub fn counts(&self, c: &Condition, target: u16) -> Option<(u32, u32)> {
        let n = *self.cond.get(c)?;
        if n < self.min_support {
            return None;
        }
        let j = *self.joint.get(&(c.clone(), target))?;
        Some((j, n))
    }

    pub fn entries(&self) -> Vec<ModelEntry> {
        self.joint
            .iter()
            .filter_map(|((c, target), j)| {
                let n = self.cond[c];
                (n >= self.min_support).then(|| ModelEntry {
                    condition: c.clone(),
                    target: *target,
                    joint_hosts: *j,
                    cond_hosts: n,
                })
            })
            .collect()
    }

    /// The documented total order, written out longhand.
    pub fn better(&self, x: &(Condition, u32, u32), y: &(Condition, u32, u32)) -> Ordering {
        let rank = |c: &Condition| match c {
            Condition::PortOnly { .. } => 0,
            Condition::PortNet { .. } => 1,
            Condition::PortApp { .. } => 2,
            Condition::PortAppNet { .. } => 3,
        };
        let (cx, jx, nx) = x;
        let (cy, jy, ny) = y;
        (*jx as u64 * *ny as u64)
            .cmp(&(*jy as u64 * *nx as u64))
            .then(nx.cmp(ny))
            .then(cy.port().cmp(&cx.port()))
            .then(rank(cx).cmp(&rank(cy)))
            .then((cy.app(), cy.net()).cmp(&(cx.app(), cx.net())))
    }

    pub fn argmax(
        &self,
        conds: impl IntoIterator<Item = Condition>,
        target: u16,
    ) -> Option<(Condition, u32, u32)> {
        let mut best: Option<(Condition, u32, u32)> = None;
        for c in conds {
            if c.port() == target {
                continue;
            }
            if let Some((j, n)) = self.counts(&c, target) {
                let cand = (c, j, n);
                if best.as_ref().is_none_or(|b| self.better(&cand, b) == Ordering::Greater) {
                    best = Some(cand);
                }
            }
        }
        best
    }

    pub fn best_for_host(
        &self,
        services: &[ServiceRecord],
        target: u16,
        ex: &Extractor,
    ) -> Option<(Condition, u32, u32)> {
        let all: Vec<Condition> = services
            .iter()
            .filter(|s| s.port != target)
            .flat_map(|s| conditions_of(s, ex))
            .collect();
        self.argmax(all, target)
    }
}

/// Priors list, step by step over plain maps.
pub fn oracle_priors(seed: &Corpus, om: &OracleModel, ex: &Extractor, step: u8) -> Vec<PriorsEntry> {
    let mut cover: BTreeMap<(u16, Subnet), BTreeSet<(Ipv4, u16)>> = BTreeMap::new();
    for (ip, services) in hosts_of(seed) {
        let subnet = Subnet::containing(ip, step).unwrap();
        if services.len() == 1 {
            cover
                .entry((services[0].port, subnet))
                .or_default()
                .insert((ip, services[0].port));
            continue;
        }
        let mut ranked: Vec<(u16, Option<Best>)> = services
            .iter()
            .map(|s| (s.port, om.best_for_host(&services, s.port, ex)))
            .collect();
        ranked.sort_by(|x, y| {
            let o = match (&x.1, &y.1) {
                (Some(a), Some(b)) => om.better(b, a),
                (Some(_), None) => Ordering::Less,
                (None, Some(_)) => Ordering::Greater,
                (None, None) => Ordering::Equal,
            };
            o.then(x.0.cmp(&y.0))
        });
        let mut selected: BTreeSet<u16> = BTreeSet::new();
        for (a, best) in ranked {
            let (sweep, also) = if selected.contains(&a) {
                (a, None)
            } else if let Some((c, _, _)) = best {
                (c.port(), Some(c.port()))
            } else {
                (a, None)
            };
            selected.insert(sweep);
            let set = cover.entry((sweep, subnet)).or_default();
            set.insert((ip, a));
            if let Some(b) = also {
                set.insert((ip, b));
            }
        }
    }
    let mut list: Vec<PriorsEntry> = cover
        .into_iter()
        .map(|((port, subnet), s)| PriorsEntry {
            port,
            subnet,
            coverage: s.len(),
        })
        .collect();
    list.sort_by(|a, b| b.coverage.cmp(&a.coverage).then((a.port, a.subnet).cmp(&(b.port, b.subnet))));
    list
}

pub fn oracle_predictive(
    seed: &Corpus,
    om: &OracleModel,
    ex: &Extractor,
    floor: f64,
) -> BTreeMap<(Condition, u16), f64> {
    let mut out = BTreeMap::new();
    for services in hosts_of(seed).values() {
        for b in services {
            for a in services {
                if a.port == b.port {
                    continue;
                }
                if let Some((c, j, n)) = om.argmax(conditions_of(b, ex), a.port) {
                    let p = j as f64 / n as f64;
                    if p >= floor {
                        out.insert((c, a.port), p);
                    }
                }
            }
        }
    }
    out
}

pub fn oracle_predictions(
    discovered: &[ServiceRecord],
    predictive: &[PredictiveFeatureEntry],
    ex: &Extractor,
    known: &BTreeSet<(Ipv4, u16)>,
) -> Vec<(Ipv4, u16, f64)> {
    let mut best: BTreeMap<(Ipv4, u16), f64> = BTreeMap::new();
    for r in discovered {
        let conds = conditions_of(r, ex);
        for e in predictive {
            if conds.contains(&e.condition) && !known.contains(&(r.ip, e.target_port)) {
                let slot = best.entry((r.ip, e.target_port)).or_insert(0.0);
                if e.probability > *slot {
                    *slot = e.probability;
                }
            }
        }
    }
    let mut list: Vec<(Ipv4, u16, f64)> = best.into_iter().map(|((i, p), v)| (i, p, v)).collect();
    list.sort_by(|a, b| b.2.partial_cmp(&a.2).unwrap().then((a.0, a.1).cmp(&(b.0, b.1))));
    list
}

pub fn prediction_triples(list: &[Prediction]) -> Vec<(Ipv4, u16, f64)> {
    list.iter().map(|p| (p.ip, p.port, p.probability)).collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Prints one result line and returns whether it passed.
pub fn report(criterion: &str, pass: bool, detail: impl std::fmt::Display) -> bool {
    println!(
        "{} criterion {criterion}: {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    pass
}
