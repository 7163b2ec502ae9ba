//! Synthetic host populations.
//!
//! Device templates model vendor-manufactured port sets: every host of a
//! template opens the same required ports, optionally some extra ones,
//! and carries the template's shared banners. Pseudo hosts answer
//! identically on a long contiguous port range; noise hosts open a few
//! uniformly random ports.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rustc_hash::FxHashSet;
use serde::{Deserialize, Serialize};

use super::{Corpus, Ipv4, ServiceRecord, Subnet};
use crate::error::{Error, Result};
use crate::features::{AsnTable, FeatureKind};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub universe: Subnet,
    #[serde(default)]
    pub templates: Vec<DeviceTemplate>,
    #[serde(default)]
    pub pseudo_host_count: usize,
    /// Contiguous ports answered by each pseudo host.
    #[serde(default = "default_pseudo_span")]
    pub pseudo_port_span: u32,
    #[serde(default)]
    pub noise_host_count: usize,
    /// Noise hosts open between one and this many random ports.
    #[serde(default = "default_noise_ports")]
    pub noise_max_ports: usize,
    #[serde(default)]
    pub rng_seed: u64,
    /// Static prefix-to-ASN blocks describing the synthetic world.
    #[serde(default)]
    pub asns: Vec<AsnBlock>,
}

fn default_pseudo_span() -> u32 {
    1500
}

fn default_noise_ports() -> usize {
    3
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AsnBlock {
    pub subnet: Subnet,
    pub asn: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterWeight {
    pub subnet: Subnet,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceTemplate {
    pub id: String,
    pub port_set: BTreeSet<u16>,
    /// Extra ports, each open with the given probability.
    #[serde(default, with = "port_keyed")]
    pub optional_ports: BTreeMap<u16, f64>,
    /// Protocol per port; unlisted ports use a well-known default.
    #[serde(default, with = "port_keyed")]
    pub protocols: BTreeMap<u16, String>,
    /// Values every host carries on services whose protocol accepts them.
    #[serde(default)]
    pub shared_features: BTreeMap<FeatureKind, String>,
    /// Kinds that get a fresh random value per host (keys, cert hashes).
    #[serde(default)]
    pub unique_features: BTreeSet<FeatureKind>,
    #[serde(default)]
    pub subnet_clustering: Vec<ClusterWeight>,
    pub population: usize,
}

impl DeviceTemplate {
    pub fn protocol_for(&self, port: u16) -> String {
        self.protocols
            .get(&port)
            .cloned()
            .unwrap_or_else(|| default_protocol(port).to_string())
    }
}

/// Well-known protocol for a port, `http` otherwise.
pub fn default_protocol(port: u16) -> &'static str {
    match port {
        21 => "ftp",
        22 | 2222 => "ssh",
        23 | 2323 => "telnet",
        25 | 587 => "smtp",
        110 => "pop3",
        143 => "imap",
        443 | 8443 => "https",
        623 => "ipmi",
        1433 => "mssql",
        1723 => "pptp",
        3306 => "mysql",
        5900 => "vnc",
        7547 => "cwmp",
        11211 => "memcached",
        _ => "http",
    }
}

mod port_keyed {
    use std::collections::BTreeMap;

    use serde::{de::Error, Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<V: Serialize, S: Serializer>(
        map: &BTreeMap<u16, V>,
        serializer: S,
    ) -> Result<S::Ok, S::Error> {
        map.iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect::<BTreeMap<_, _>>()
            .serialize(serializer)
    }

    pub fn deserialize<'de, V: Deserialize<'de>, D: Deserializer<'de>>(
        deserializer: D,
    ) -> Result<BTreeMap<u16, V>, D::Error> {
        BTreeMap::<String, V>::deserialize(deserializer)?
            .into_iter()
            .map(|(k, v)| {
                k.parse::<u16>()
                    .map(|k| (k, v))
                    .map_err(|_| D::Error::custom(format!("`{k}` is not a port")))
            })
            .collect()
    }
}

impl SyntheticSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn asn_table(&self) -> AsnTable {
        AsnTable::new(self.asns.iter().map(|b| (b.subnet, b.asn)).collect())
    }

    pub fn validate(&self) -> Result<()> {
        for t in &self.templates {
            if t.port_set.is_empty() {
                return Err(Error::Config(format!("template `{}` has no ports", t.id)));
            }
            if let Some((p, prob)) = t
                .optional_ports
                .iter()
                .find(|(_, p)| !(**p > 0.0 && **p <= 1.0))
            {
                return Err(Error::Config(format!(
                    "template `{}`: port {p} probability {prob} outside (0, 1]",
                    t.id
                )));
            }
            for c in &t.subnet_clustering {
                if c.weight.is_nan() || c.weight <= 0.0 || self.universe.intersection(&c.subnet).is_none() {
                    return Err(Error::Config(format!(
                        "template `{}`: cluster {} (weight {}) unusable",
                        t.id, c.subnet, c.weight
                    )));
                }
            }
        }
        if self.pseudo_host_count > 0
            && !(1..=65_536).contains(&self.pseudo_port_span)
        {
            return Err(Error::Config("pseudo_port_span must be in 1..=65536".into()));
        }
        let hosts = self.templates.iter().map(|t| t.population).sum::<usize>()
            + self.pseudo_host_count
            + self.noise_host_count;
        if hosts as u64 > self.universe.size() {
            return Err(Error::Capacity(format!(
                "{hosts} hosts do not fit in {} ({} addresses)",
                self.universe,
                self.universe.size()
            )));
        }
        Ok(())
    }
}

struct Placer {
    used: FxHashSet<u32>,
}

impl Placer {
    fn place(&mut self, rng: &mut ChaCha8Rng, region: Subnet) -> Result<Ipv4> {
        let start = region.base().0 as u64;
        let size = region.size();
        for _ in 0..64 {
            let ip = (start + rng.gen_range(0..size)) as u32;
            if self.used.insert(ip) {
                return Ok(Ipv4(ip));
            }
        }
        // Dense region: walk from a random offset to the next free address.
        let offset = rng.gen_range(0..size);
        for step in 0..size {
            let ip = (start + (offset + step) % size) as u32;
            if self.used.insert(ip) {
                return Ok(Ipv4(ip));
            }
        }
        Err(Error::Capacity(format!("no free address left in {region}")))
    }
}

/// Generates a corpus; deterministic for a fixed `rng_seed`.
pub fn generate(spec: &SyntheticSpec) -> Result<Corpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let mut placer = Placer {
        used: FxHashSet::default(),
    };
    let mut records = Vec::new();

    for t in &spec.templates {
        let regions: Vec<Subnet> = t
            .subnet_clustering
            .iter()
            .filter_map(|c| spec.universe.intersection(&c.subnet))
            .collect();
        let weights = if regions.is_empty() {
            None
        } else {
            let w = WeightedIndex::new(t.subnet_clustering.iter().map(|c| c.weight))
                .map_err(|e| Error::Config(format!("template `{}`: {e}", t.id)))?;
            Some(w)
        };
        for _ in 0..t.population {
            let region = match &weights {
                Some(w) => regions[w.sample(&mut rng)],
                None => spec.universe,
            };
            let ip = placer.place(&mut rng, region)?;
            let mut ports: Vec<u16> = t.port_set.iter().copied().collect();
            for (&port, &p) in &t.optional_ports {
                if !t.port_set.contains(&port) && rng.gen::<f64>() < p {
                    ports.push(port);
                }
            }
            for port in ports {
                let protocol = t.protocol_for(port);
                let mut rec = ServiceRecord::new(ip, port, protocol.clone());
                for (kind, value) in &t.shared_features {
                    if kind.valid_for(&protocol) {
                        rec.features.insert(*kind, value.clone());
                    }
                }
                for kind in &t.unique_features {
                    if kind.valid_for(&protocol) {
                        rec.features
                            .insert(*kind, format!("{}-{:016x}", t.id, rng.gen::<u64>()));
                    }
                }
                if FeatureKind::HttpBodyHash.valid_for(&protocol) {
                    rec.features
                        .entry(FeatureKind::HttpBodyHash)
                        .or_insert_with(|| format!("{}:{port}", t.id));
                }
                records.push(rec);
            }
        }
    }

    let span = spec.pseudo_port_span;
    for _ in 0..spec.pseudo_host_count {
        let ip = placer.place(&mut rng, spec.universe)?;
        let lowest = u32::from(span < 65_536);
        let first = rng.gen_range(lowest..=65_536 - span);
        let body = format!("{:016x}", rng.gen::<u64>());
        for port in first..first + span {
            records.push(
                ServiceRecord::new(ip, port as u16, "http")
                    .with_feature(FeatureKind::HttpHtmlTitle, "No service here")
                    .with_feature(FeatureKind::HttpBodyHash, body.clone())
                    .with_feature(
                        FeatureKind::HttpHeader,
                        format!("Server: wildcard\r\nDate: {}", rng.gen::<u32>()),
                    ),
            );
        }
    }

    const NOISE_PROTOCOLS: [&str; 4] = ["http", "ssh", "telnet", "ftp"];
    for _ in 0..spec.noise_host_count {
        let ip = placer.place(&mut rng, spec.universe)?;
        let n = rng.gen_range(1..=spec.noise_max_ports.max(1));
        let mut ports = BTreeSet::new();
        while ports.len() < n {
            ports.insert(rng.gen_range(1..=65_535u16));
        }
        for port in ports {
            let protocol = NOISE_PROTOCOLS[rng.gen_range(0..NOISE_PROTOCOLS.len())];
            let tag = format!("noise-{:016x}", rng.gen::<u64>());
            let kind = match protocol {
                "http" => FeatureKind::HttpHtmlTitle,
                "ssh" => FeatureKind::SshBanner,
                "telnet" => FeatureKind::TelnetBanner,
                _ => FeatureKind::FtpBanner,
            };
            records.push(ServiceRecord::new(ip, port, protocol).with_feature(kind, tag));
        }
    }

    Corpus::new(spec.universe, records)
}
