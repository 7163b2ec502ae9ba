//! Conditional probabilities of port co-occurrence.
//!
//! For every seed host and every ordered pair of its open ports `(b, a)`,
//! the service on `b` yields a family of conditions: the bare port, the
//! port with one application value, the port with one network value, and
//! the port with one of each. The model stores, per condition, how many
//! hosts exhibit it (`cond_hosts`) and, per target port `a`, how many of
//! those hosts also have `a` open (`joint_hosts`).
//!
//! Counting is split into host partitions processed in parallel and merged
//! by addition, so the result does not depend on the partition count.

mod dump;

use std::cmp::Ordering;
use std::fmt;

use rayon::prelude::*;
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, ServiceRecord};
use crate::features::{Extractor, FeatureKind, FeatureSet, FeatureValue};

pub use dump::MODEL_FORMAT_VERSION;

/// The evidence a prediction is conditioned on.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "snake_case")]
pub enum Condition {
    PortOnly {
        port: u16,
    },
    PortApp {
        port: u16,
        app: FeatureValue,
    },
    PortNet {
        port: u16,
        net: FeatureValue,
    },
    PortAppNet {
        port: u16,
        app: FeatureValue,
        net: FeatureValue,
    },
}

/// The four condition shapes, ordered from least to most specific.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionClass {
    PortOnly,
    PortNet,
    PortApp,
    PortAppNet,
}

impl ConditionClass {
    pub fn name(self) -> &'static str {
        match self {
            ConditionClass::PortOnly => "port_only",
            ConditionClass::PortNet => "port_net",
            ConditionClass::PortApp => "port_app",
            ConditionClass::PortAppNet => "port_app_net",
        }
    }
}

impl Condition {
    pub fn port(&self) -> u16 {
        match self {
            Condition::PortOnly { port }
            | Condition::PortApp { port, .. }
            | Condition::PortNet { port, .. }
            | Condition::PortAppNet { port, .. } => *port,
        }
    }

    pub fn class(&self) -> ConditionClass {
        match self {
            Condition::PortOnly { .. } => ConditionClass::PortOnly,
            Condition::PortApp { .. } => ConditionClass::PortApp,
            Condition::PortNet { .. } => ConditionClass::PortNet,
            Condition::PortAppNet { .. } => ConditionClass::PortAppNet,
        }
    }

    pub fn app(&self) -> Option<&FeatureValue> {
        match self {
            Condition::PortApp { app, .. } | Condition::PortAppNet { app, .. } => Some(app),
            _ => None,
        }
    }

    pub fn net(&self) -> Option<&FeatureValue> {
        match self {
            Condition::PortNet { net, .. } | Condition::PortAppNet { net, .. } => Some(net),
            _ => None,
        }
    }

    /// Checks that app and net slots hold the right layer.
    pub fn is_well_formed(&self) -> bool {
        self.app().is_none_or(|v| v.kind.is_application())
            && self.net().is_none_or(|v| v.kind.is_network())
    }

    fn from_parts(port: u16, app: Option<FeatureValue>, net: Option<FeatureValue>) -> Self {
        match (app, net) {
            (None, None) => Condition::PortOnly { port },
            (Some(app), None) => Condition::PortApp { port, app },
            (None, Some(net)) => Condition::PortNet { port, net },
            (Some(app), Some(net)) => Condition::PortAppNet { port, app, net },
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(port {}", self.port())?;
        if let Some(app) = self.app() {
            write!(f, ", {app}")?;
        }
        if let Some(net) = self.net() {
            write!(f, ", {net}")?;
        }
        f.write_str(")")
    }
}

/// Interned value id; 0 means "slot empty".
type ValueId = u32;

/// Every condition derivable from one service: the bare port, each
/// application value, each network value, and each pair of the two.
pub fn derive_conditions(record: &ServiceRecord, extractor: &Extractor) -> Vec<Condition> {
    let apps = extractor.app(record);
    let nets = extractor.net(record.ip);
    let port = record.port;
    let mut out = Vec::with_capacity((1 + apps.len()) * (1 + nets.len()));
    out.push(Condition::PortOnly { port });
    out.extend(apps.iter().map(|app| Condition::PortApp { port, app: app.clone() }));
    out.extend(nets.iter().map(|net| Condition::PortNet { port, net: net.clone() }));
    for app in &apps {
        for net in &nets {
            out.push(Condition::PortAppNet {
                port,
                app: app.clone(),
                net: net.clone(),
            });
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub(crate) struct CondKey {
    pub(crate) port: u16,
    pub(crate) app: ValueId,
    pub(crate) net: ValueId,
}

impl CondKey {
    fn class(self) -> ConditionClass {
        match (self.app != 0, self.net != 0) {
            (false, false) => ConditionClass::PortOnly,
            (true, false) => ConditionClass::PortApp,
            (false, true) => ConditionClass::PortNet,
            (true, true) => ConditionClass::PortAppNet,
        }
    }
}

#[derive(Clone, Debug, Default)]
struct Interner {
    ids: FxHashMap<FeatureValue, ValueId>,
    values: Vec<FeatureValue>,
}

impl Interner {
    fn new() -> Self {
        Interner {
            ids: FxHashMap::default(),
            // Slot 0 is the "absent" marker and never looked up.
            values: vec![FeatureValue::new(FeatureKind::Protocol, "")],
        }
    }

    fn intern(&mut self, value: &FeatureValue) -> ValueId {
        if let Some(&id) = self.ids.get(value) {
            return id;
        }
        let id = self.values.len() as ValueId;
        self.values.push(value.clone());
        self.ids.insert(value.clone(), id);
        id
    }

    fn get(&self, value: &FeatureValue) -> Option<ValueId> {
        self.ids.get(value).copied()
    }

    fn resolve(&self, id: ValueId) -> Option<&FeatureValue> {
        (id != 0).then(|| &self.values[id as usize])
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct CondEntry {
    cond_hosts: u32,
    /// `(target_port, joint_hosts)`, sorted by port.
    targets: Vec<(u16, u32)>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct BuildOptions {
    /// Conditions seen on fewer hosts are dropped.
    pub min_support: u32,
    /// Host partitions counted independently and merged.
    pub partitions: usize,
    /// Free-form identifier of the seed set.
    pub built_from: String,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions {
            min_support: 2,
            partitions: 1,
            built_from: String::new(),
        }
    }
}

/// One table row with its condition resolved.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelEntry {
    pub condition: Condition,
    pub target: u16,
    pub joint_hosts: u32,
    pub cond_hosts: u32,
}

impl ModelEntry {
    pub fn probability(&self) -> f64 {
        self.joint_hosts as f64 / self.cond_hosts as f64
    }
}

/// A condition that predicts a target port, with its counts.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Scored {
    pub condition: Condition,
    pub joint_hosts: u32,
    pub cond_hosts: u32,
}

impl Scored {
    pub fn probability(&self) -> f64 {
        self.joint_hosts as f64 / self.cond_hosts as f64
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct ScoredKey {
    pub(crate) key: CondKey,
    pub(crate) joint: u32,
    pub(crate) cond: u32,
}

impl ScoredKey {
    pub(crate) fn probability(&self) -> f64 {
        self.joint as f64 / self.cond as f64
    }
}

/// Condition keys derivable from each service of one host.
#[derive(Clone, Debug, Default)]
pub struct HostConditions {
    /// `(port, keys)` per service.
    services: Vec<(u16, Vec<CondKey>)>,
}

impl HostConditions {
    pub fn ports(&self) -> impl Iterator<Item = u16> + '_ {
        self.services.iter().map(|(p, _)| *p)
    }

    pub(crate) fn keys_of(&self, port: u16) -> &[CondKey] {
        self.services
            .iter()
            .find(|(p, _)| *p == port)
            .map_or(&[], |(_, k)| k.as_slice())
    }

    pub(crate) fn all_keys(&self) -> impl Iterator<Item = CondKey> + '_ {
        self.services.iter().flat_map(|(_, k)| k.iter().copied())
    }
}

/// Conditional-probability tables built from a seed set.
#[derive(Clone, Debug)]
pub struct CoOccurrenceModel {
    interner: Interner,
    table: FxHashMap<CondKey, CondEntry>,
    min_support: u32,
    features: FeatureSet,
    built_from: String,
}

impl PartialEq for CoOccurrenceModel {
    fn eq(&self, other: &Self) -> bool {
        self.min_support == other.min_support
            && self.features == other.features
            && self.built_from == other.built_from
            && self.entries() == other.entries()
    }
}

fn push_keys(out: &mut Vec<CondKey>, port: u16, apps: &[ValueId], nets: &[ValueId]) {
    out.push(CondKey { port, app: 0, net: 0 });
    for &app in apps {
        out.push(CondKey { port, app, net: 0 });
    }
    for &net in nets {
        out.push(CondKey { port, app: 0, net });
    }
    for &app in apps {
        for &net in nets {
            out.push(CondKey { port, app, net });
        }
    }
}

struct PreparedHost {
    /// `(port, keys)` per service, keys already filtered to supported values.
    services: Vec<(u16, Vec<CondKey>)>,
}

fn merge_counts<K: std::hash::Hash + Eq>(
    mut a: FxHashMap<K, u32>,
    mut b: FxHashMap<K, u32>,
) -> FxHashMap<K, u32> {
    if a.len() < b.len() {
        std::mem::swap(&mut a, &mut b);
    }
    for (k, v) in b {
        *a.entry(k).or_insert(0) += v;
    }
    a
}

fn chunks<T>(items: &[T], partitions: usize) -> Vec<&[T]> {
    let partitions = partitions.max(1);
    let size = items.len().div_ceil(partitions).max(1);
    items.chunks(size).collect()
}

impl CoOccurrenceModel {
    /// An empty model carrying the given metadata.
    pub fn empty(features: FeatureSet, min_support: u32) -> Self {
        CoOccurrenceModel {
            interner: Interner::new(),
            table: FxHashMap::default(),
            min_support,
            features,
            built_from: String::new(),
        }
    }

    /// Counts every condition over the seed hosts.
    pub fn build(seed: &Corpus, extractor: &Extractor, opts: &BuildOptions) -> Self {
        let min_support = opts.min_support.max(1);
        let mut model = CoOccurrenceModel {
            interner: Interner::new(),
            table: FxHashMap::default(),
            min_support,
            features: extractor.features.clone(),
            built_from: opts.built_from.clone(),
        };

        // A value carried by fewer than `min_support` hosts cannot reach
        // `min_support` in any condition that includes it, so it is never
        // interned.
        let mut value_hosts: FxHashMap<FeatureValue, u32> = FxHashMap::default();
        let mut host_values: Vec<(Vec<Vec<FeatureValue>>, Vec<FeatureValue>)> =
            Vec::with_capacity(seed.host_count());
        for (ip, services) in seed.hosts() {
            let nets = extractor.net(ip);
            let apps: Vec<Vec<FeatureValue>> = services.iter().map(|s| extractor.app(s)).collect();
            let mut distinct: Vec<&FeatureValue> = apps.iter().flatten().chain(nets.iter()).collect();
            distinct.sort_unstable();
            distinct.dedup();
            for v in distinct {
                match value_hosts.get_mut(v) {
                    Some(n) => *n += 1,
                    None => {
                        value_hosts.insert(v.clone(), 1);
                    }
                }
            }
            host_values.push((apps, nets));
        }

        let mut hosts: Vec<PreparedHost> = Vec::with_capacity(host_values.len());
        for ((_, services), (apps, nets)) in seed.hosts().zip(host_values) {
            let mut keep = |v: &FeatureValue| -> Option<ValueId> {
                (value_hosts[v] >= min_support).then(|| model.interner.intern(v))
            };
            let net_ids: Vec<ValueId> = nets.iter().filter_map(&mut keep).collect();
            let prepared = services
                .iter()
                .zip(apps)
                .map(|(s, apps)| {
                    let app_ids: Vec<ValueId> = apps.iter().filter_map(&mut keep).collect();
                    let mut keys = Vec::with_capacity((1 + app_ids.len()) * (1 + net_ids.len()));
                    push_keys(&mut keys, s.port, &app_ids, &net_ids);
                    (s.port, keys)
                })
                .collect();
            hosts.push(PreparedHost { services: prepared });
        }
        drop(value_hosts);

        let parts = chunks(&hosts, opts.partitions);

        // Pass 1: hosts exhibiting each condition. Within a host each key
        // occurs once because a port identifies a single service.
        let cond_counts = parts
            .par_iter()
            .map(|part| {
                let mut counts: FxHashMap<CondKey, u32> = FxHashMap::default();
                for host in part.iter() {
                    for (_, keys) in &host.services {
                        for k in keys {
                            *counts.entry(*k).or_insert(0) += 1;
                        }
                    }
                }
                counts
            })
            .reduce(FxHashMap::default, merge_counts);
        let supported: FxHashMap<CondKey, u32> = cond_counts
            .into_iter()
            .filter(|(_, n)| *n >= min_support)
            .collect();

        // Pass 2: joint counts for every ordered port pair on multi-port hosts.
        let joint_counts = parts
            .par_iter()
            .map(|part| {
                let mut counts: FxHashMap<(CondKey, u16), u32> = FxHashMap::default();
                let mut live: Vec<CondKey> = Vec::new();
                for host in part.iter().filter(|h| h.services.len() >= 2) {
                    for (b, keys) in &host.services {
                        live.clear();
                        live.extend(keys.iter().filter(|k| supported.contains_key(k)));
                        if live.is_empty() {
                            continue;
                        }
                        for (a, _) in &host.services {
                            if a == b {
                                continue;
                            }
                            for k in &live {
                                *counts.entry((*k, *a)).or_insert(0) += 1;
                            }
                        }
                    }
                }
                counts
            })
            .reduce(FxHashMap::default, merge_counts);

        for ((key, target), joint) in joint_counts {
            let entry = model.table.entry(key).or_insert_with(|| CondEntry {
                cond_hosts: supported[&key],
                targets: Vec::new(),
            });
            entry.targets.push((target, joint));
        }
        for entry in model.table.values_mut() {
            entry.targets.sort_unstable();
        }
        model
    }

    pub fn min_support(&self) -> u32 {
        self.min_support
    }

    pub fn features(&self) -> &FeatureSet {
        &self.features
    }

    pub fn built_from(&self) -> &str {
        &self.built_from
    }

    /// Number of distinct conditions with at least one target.
    pub fn condition_count(&self) -> usize {
        self.table.len()
    }

    /// Number of `(condition, target)` rows.
    pub fn entry_count(&self) -> usize {
        self.table.values().map(|e| e.targets.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    fn key_of(&self, cond: &Condition) -> Option<CondKey> {
        let app = match cond.app() {
            Some(v) => self.interner.get(v)?,
            None => 0,
        };
        let net = match cond.net() {
            Some(v) => self.interner.get(v)?,
            None => 0,
        };
        Some(CondKey {
            port: cond.port(),
            app,
            net,
        })
    }

    pub(crate) fn resolve(&self, key: CondKey) -> Condition {
        Condition::from_parts(
            key.port,
            self.interner.resolve(key.app).cloned(),
            self.interner.resolve(key.net).cloned(),
        )
    }

    pub(crate) fn lookup_key(&self, key: CondKey, target: u16) -> Option<(u32, u32)> {
        let entry = self.table.get(&key)?;
        let i = entry
            .targets
            .binary_search_by_key(&target, |(t, _)| *t)
            .ok()?;
        Some((entry.targets[i].1, entry.cond_hosts))
    }

    /// `(joint_hosts, cond_hosts)` for a row, if present.
    pub fn counts(&self, cond: &Condition, target: u16) -> Option<(u32, u32)> {
        self.lookup_key(self.key_of(cond)?, target)
    }

    /// `P(target | cond)`, absent when the row was never observed or was
    /// dropped for low support. Never returns zero.
    pub fn probability(&self, cond: &Condition, target: u16) -> Option<f64> {
        self.counts(cond, target)
            .map(|(joint, cond)| joint as f64 / cond as f64)
    }

    /// Targets predicted by `cond`, ascending by port.
    pub fn targets(&self, cond: &Condition) -> Vec<ModelEntry> {
        let Some(key) = self.key_of(cond) else {
            return Vec::new();
        };
        self.table
            .get(&key)
            .map(|e| {
                e.targets
                    .iter()
                    .map(|&(target, joint)| ModelEntry {
                        condition: cond.clone(),
                        target,
                        joint_hosts: joint,
                        cond_hosts: e.cond_hosts,
                    })
                    .collect()
            })
            .unwrap_or_default()
    }

    /// Every row, sorted by condition then target.
    pub fn entries(&self) -> Vec<ModelEntry> {
        let mut conds: Vec<(Condition, &CondEntry)> = self
            .table
            .iter()
            .map(|(k, e)| (self.resolve(*k), e))
            .collect();
        conds.sort_by(|a, b| a.0.cmp(&b.0));
        conds
            .into_iter()
            .flat_map(|(cond, e)| {
                e.targets.iter().map(move |&(target, joint)| ModelEntry {
                    condition: cond.clone(),
                    target,
                    joint_hosts: joint,
                    cond_hosts: e.cond_hosts,
                })
            })
            .collect()
    }

    /// Keys for each service of a host. Values the model has never seen
    /// produce no keys.
    pub fn host_conditions(&self, services: &[ServiceRecord], extractor: &Extractor) -> HostConditions {
        let Some(first) = services.first() else {
            return HostConditions::default();
        };
        let nets: Vec<ValueId> = extractor
            .net(first.ip)
            .iter()
            .filter_map(|v| self.interner.get(v))
            .collect();
        let services = services
            .iter()
            .map(|s| {
                let apps: Vec<ValueId> = extractor
                    .app(s)
                    .iter()
                    .filter_map(|v| self.interner.get(v))
                    .collect();
                let mut keys = Vec::new();
                push_keys(&mut keys, s.port, &apps, &nets);
                keys.retain(|k| self.table.contains_key(k));
                (s.port, keys)
            })
            .collect();
        HostConditions { services }
    }

    /// Total order used to pick a single best condition: higher
    /// probability, then more supporting hosts, then lower conditioning
    /// port, then the more specific class, then feature values ascending.
    pub(crate) fn compare(&self, a: &ScoredKey, b: &ScoredKey) -> Ordering {
        let pa = a.joint as u64 * b.cond as u64;
        let pb = b.joint as u64 * a.cond as u64;
        pa.cmp(&pb)
            .then(a.cond.cmp(&b.cond))
            .then(b.key.port.cmp(&a.key.port))
            .then(a.key.class().cmp(&b.key.class()))
            .then_with(|| {
                let va = (self.interner.resolve(a.key.app), self.interner.resolve(a.key.net));
                let vb = (self.interner.resolve(b.key.app), self.interner.resolve(b.key.net));
                vb.cmp(&va)
            })
    }

    /// Best key over `keys` for `target`.
    pub(crate) fn best_among(
        &self,
        keys: impl Iterator<Item = CondKey>,
        target: u16,
    ) -> Option<ScoredKey> {
        let mut best: Option<ScoredKey> = None;
        for key in keys {
            if key.port == target {
                continue;
            }
            let Some((joint, cond)) = self.lookup_key(key, target) else {
                continue;
            };
            let cand = ScoredKey { key, joint, cond };
            if best.is_none_or(|b| self.compare(&cand, &b) == Ordering::Greater) {
                best = Some(cand);
            }
        }
        best
    }

    pub(crate) fn scored(&self, s: ScoredKey) -> Scored {
        Scored {
            condition: self.resolve(s.key),
            joint_hosts: s.joint,
            cond_hosts: s.cond,
        }
    }

    /// The highest-probability condition derivable from any of
    /// `host_services` (other than a service on `target` itself) that
    /// predicts `target`.
    pub fn best_condition_for(
        &self,
        host_services: &[ServiceRecord],
        target: u16,
        extractor: &Extractor,
    ) -> Option<Scored> {
        let hc = self.host_conditions(host_services, extractor);
        self.best_among(hc.all_keys(), target)
            .map(|s| self.scored(s))
    }
}
