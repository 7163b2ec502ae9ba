//! Ground-truth services: the data model, file ingestion, synthetic
//! generation, pseudo-service filtering and the per-IP seed/test split.

pub(crate) mod addr;
mod filter;
mod io;
mod split;
mod synth;

use std::collections::BTreeMap;
use std::ops::Range;

use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureKind;

pub use addr::{Ipv4, Subnet};
pub use filter::{filter_pseudo_services, CollapseMode, DynamicFields, PseudoFilter};
pub use io::{ingest, parse_corpus, write_records, write_records_to};
pub use split::{eligible_ports, EligibilityBasis, SeedSplit};
pub(crate) use split::in_sample;
pub use synth::{generate, DeviceTemplate, SyntheticSpec};

/// One responsive `(ip, port)` and what it answered with.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ServiceRecord {
    pub ip: Ipv4,
    pub port: u16,
    pub protocol: String,
    #[serde(default)]
    pub features: BTreeMap<FeatureKind, String>,
}

impl ServiceRecord {
    pub fn new(ip: Ipv4, port: u16, protocol: impl Into<String>) -> Self {
        ServiceRecord {
            ip,
            port,
            protocol: protocol.into(),
            features: BTreeMap::new(),
        }
    }

    pub fn with_feature(mut self, kind: FeatureKind, value: impl Into<String>) -> Self {
        self.features.insert(kind, value.into());
        self
    }

    pub fn key(&self) -> (Ipv4, u16) {
        (self.ip, self.port)
    }

    /// Checks the protocol is present and every feature kind is one the
    /// protocol can carry.
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.protocol.is_empty() {
            return Err("empty protocol".into());
        }
        for kind in self.features.keys() {
            if !kind.valid_for(&self.protocol) {
                return Err(format!(
                    "feature `{kind}` is not valid for protocol `{}`",
                    self.protocol
                ));
            }
        }
        Ok(())
    }
}

/// An immutable set of services inside a universe subnet, indexed by host
/// and by port.
///
/// Records are stored sorted by `(ip, port)`, so each host's services form
/// a contiguous run. The per-port index keeps record positions sorted by
/// address, which answers `(port, subnet)` queries at any prefix length by
/// binary search.
#[derive(Clone, Debug)]
pub struct Corpus {
    universe: Subnet,
    services: Vec<ServiceRecord>,
    hosts: Vec<(Ipv4, Range<usize>)>,
    host_pos: FxHashMap<Ipv4, usize>,
    by_port: FxHashMap<u16, Vec<u32>>,
}

impl PartialEq for Corpus {
    fn eq(&self, other: &Self) -> bool {
        self.universe == other.universe && self.services == other.services
    }
}

impl Corpus {
    /// Builds a corpus. Duplicate `(ip, port)` keys keep the last record.
    pub fn new(universe: Subnet, records: Vec<ServiceRecord>) -> Result<Self> {
        let mut offenders: Vec<Ipv4> = records
            .iter()
            .map(|r| r.ip)
            .filter(|ip| !universe.contains(*ip))
            .collect();
        if !offenders.is_empty() {
            offenders.sort();
            offenders.dedup();
            return Err(Error::OutsideUniverse {
                universe: universe.to_string(),
                offenders,
            });
        }
        Ok(Self::build_unchecked(universe, dedup_last_wins(records)))
    }

    fn build_unchecked(universe: Subnet, services: Vec<ServiceRecord>) -> Self {
        debug_assert!(services.windows(2).all(|w| w[0].key() < w[1].key()));
        let mut hosts: Vec<(Ipv4, Range<usize>)> = Vec::new();
        let mut by_port: FxHashMap<u16, Vec<u32>> = FxHashMap::default();
        for (i, rec) in services.iter().enumerate() {
            match hosts.last_mut() {
                Some((ip, range)) if *ip == rec.ip => range.end = i + 1,
                _ => hosts.push((rec.ip, i..i + 1)),
            }
            by_port.entry(rec.port).or_default().push(i as u32);
        }
        let host_pos = hosts
            .iter()
            .enumerate()
            .map(|(i, (ip, _))| (*ip, i))
            .collect();
        Corpus {
            universe,
            services,
            hosts,
            host_pos,
            by_port,
        }
    }

    /// Keeps records for which `keep` holds. Indexes are rebuilt.
    pub fn retain(&self, mut keep: impl FnMut(&ServiceRecord) -> bool) -> Corpus {
        let services = self.services.iter().filter(|r| keep(r)).cloned().collect();
        Self::build_unchecked(self.universe, services)
    }

    pub fn universe(&self) -> Subnet {
        self.universe
    }

    /// All services sorted by `(ip, port)`.
    pub fn services(&self) -> &[ServiceRecord] {
        &self.services
    }

    pub fn len(&self) -> usize {
        self.services.len()
    }

    pub fn is_empty(&self) -> bool {
        self.services.is_empty()
    }

    /// Each responsive host with its services, in address order.
    pub fn hosts(&self) -> impl ExactSizeIterator<Item = (Ipv4, &[ServiceRecord])> + '_ {
        self.hosts
            .iter()
            .map(move |(ip, range)| (*ip, &self.services[range.clone()]))
    }

    pub fn host_count(&self) -> usize {
        self.hosts.len()
    }

    pub fn responsive_ips(&self) -> impl Iterator<Item = Ipv4> + '_ {
        self.hosts.iter().map(|(ip, _)| *ip)
    }

    /// Services of one host, empty when the address is silent.
    pub fn by_ip(&self, ip: Ipv4) -> &[ServiceRecord] {
        match self.host_pos.get(&ip) {
            Some(&i) => &self.services[self.hosts[i].1.clone()],
            None => &[],
        }
    }

    pub fn get(&self, ip: Ipv4, port: u16) -> Option<&ServiceRecord> {
        let host = self.by_ip(ip);
        host.binary_search_by_key(&port, |r| r.port)
            .ok()
            .map(|i| &host[i])
    }

    /// Ports with at least one service, ascending.
    pub fn ports(&self) -> Vec<u16> {
        let mut ports: Vec<u16> = self.by_port.keys().copied().collect();
        ports.sort_unstable();
        ports
    }

    /// Services on `port`, in address order.
    pub fn by_port(&self, port: u16) -> impl Iterator<Item = &ServiceRecord> + '_ {
        self.by_port
            .get(&port)
            .into_iter()
            .flatten()
            .map(move |&i| &self.services[i as usize])
    }

    /// Services on `port` whose address lies in `subnet`, in address order.
    pub fn by_port_subnet(&self, port: u16, subnet: Subnet) -> &[u32] {
        let Some(idx) = self.by_port.get(&port) else {
            return &[];
        };
        let lo = idx.partition_point(|&i| self.services[i as usize].ip < subnet.base());
        let hi = idx.partition_point(|&i| self.services[i as usize].ip <= subnet.last());
        &idx[lo..hi]
    }

    /// Records on `port` inside `subnet`.
    pub fn lookup_port_subnet(
        &self,
        port: u16,
        subnet: Subnet,
    ) -> impl Iterator<Item = &ServiceRecord> + '_ {
        self.by_port_subnet(port, subnet)
            .iter()
            .map(move |&i| &self.services[i as usize])
    }
}

fn dedup_last_wins(mut records: Vec<ServiceRecord>) -> Vec<ServiceRecord> {
    // Stable sort keeps file order within equal keys, so the last of each
    // run is the last occurrence.
    records.sort_by_key(|r| r.key());
    let mut out: Vec<ServiceRecord> = Vec::with_capacity(records.len());
    for rec in records {
        match out.last_mut() {
            Some(prev) if prev.key() == rec.key() => *prev = rec,
            _ => out.push(rec),
        }
    }
    out
}
