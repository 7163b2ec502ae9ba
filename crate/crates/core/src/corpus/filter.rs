//! Removal of wildcard responders ("pseudo services").
//!
//! Three passes over each host: strip dynamic content, collapse services
//! whose remaining content is identical, then drop any host still serving
//! more than `max_services_per_host` services.

use std::collections::{BTreeMap, BTreeSet};

use rustc_hash::FxHashSet;
use serde::{Deserialize, Serialize};

use super::{Corpus, Ipv4, ServiceRecord};
use crate::features::FeatureKind;

/// Content ignored when comparing two services of one host.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct DynamicFields {
    /// Feature kinds dropped entirely.
    pub kinds: BTreeSet<FeatureKind>,
    /// Header lines (matched case-insensitively by name) removed from
    /// `http_header` and `cwmp_header` values.
    pub header_fields: BTreeSet<String>,
}

impl Default for DynamicFields {
    fn default() -> Self {
        DynamicFields {
            kinds: BTreeSet::new(),
            header_fields: ["date", "set-cookie", "cookie", "expires", "last-modified"]
                .into_iter()
                .map(String::from)
                .collect(),
        }
    }
}

impl DynamicFields {
    fn strip(&self, kind: FeatureKind, value: &str) -> Option<String> {
        if self.kinds.contains(&kind) {
            return None;
        }
        if matches!(kind, FeatureKind::HttpHeader | FeatureKind::CwmpHeader)
            && !self.header_fields.is_empty()
        {
            let kept: Vec<&str> = value
                .split('\n')
                .map(|l| l.trim_end_matches('\r'))
                .filter(|line| {
                    let name = line.split_once(':').map_or("", |(n, _)| n.trim());
                    !self.header_fields.contains(&name.to_ascii_lowercase())
                })
                .collect();
            return Some(kept.join("\n"));
        }
        Some(value.to_string())
    }

    fn content_key(&self, rec: &ServiceRecord) -> (String, BTreeMap<FeatureKind, String>) {
        let features = rec
            .features
            .iter()
            .filter_map(|(k, v)| self.strip(*k, v).map(|v| (*k, v)))
            .collect();
        (rec.protocol.clone(), features)
    }
}

/// What happens to a group of same-content services on one host.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CollapseMode {
    /// Every service in the group is removed.
    #[default]
    RemoveAll,
    /// The lowest-port service of the group survives.
    KeepLowest,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PseudoFilter {
    pub dynamic: DynamicFields,
    pub max_services_per_host: usize,
    pub collapse: CollapseMode,
}

impl Default for PseudoFilter {
    fn default() -> Self {
        PseudoFilter {
            dynamic: DynamicFields::default(),
            max_services_per_host: 10,
            collapse: CollapseMode::default(),
        }
    }
}

/// Returns a new corpus with pseudo services removed.
pub fn filter_pseudo_services(corpus: &Corpus, filter: &PseudoFilter) -> Corpus {
    let max = filter.max_services_per_host.max(1);
    let mut keep: FxHashSet<(Ipv4, u16)> = FxHashSet::default();
    for (_, services) in corpus.hosts() {
        let mut groups: BTreeMap<_, Vec<&ServiceRecord>> = BTreeMap::new();
        for s in services {
            groups.entry(filter.dynamic.content_key(s)).or_default().push(s);
        }
        let mut survivors: Vec<&ServiceRecord> = Vec::with_capacity(services.len());
        for group in groups.into_values() {
            match (group.len(), filter.collapse) {
                (1, _) => survivors.push(group[0]),
                (_, CollapseMode::RemoveAll) => {}
                (_, CollapseMode::KeepLowest) => {
                    survivors.push(group.into_iter().min_by_key(|s| s.port).unwrap())
                }
            }
        }
        if survivors.len() <= max {
            keep.extend(survivors.iter().map(|s| s.key()));
        }
    }
    corpus.retain(|r| keep.contains(&r.key()))
}
