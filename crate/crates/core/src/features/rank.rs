use std::collections::BTreeMap;

use serde::Serialize;

use super::{Extractor, FeatureKind};
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::model::CoOccurrenceModel;

/// Share of seed services whose best network-conditioned predictor uses
/// `kind`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NetFeatureRank {
    pub kind: FeatureKind,
    pub services: usize,
    pub fraction: f64,
}

/// For every seed service, restricts the argmax to conditions that carry
/// a network value and tallies which network kind won. Intended for a
/// model built with the full candidate set, to pick the default kinds.
pub fn rank_net_features(
    model: &CoOccurrenceModel,
    seed: &Corpus,
    extractor: &Extractor,
) -> Result<Vec<NetFeatureRank>> {
    if model.features().net_kinds.is_empty() {
        return Err(Error::Unavailable(
            "model was built without network feature kinds".into(),
        ));
    }
    let mut wins: BTreeMap<FeatureKind, usize> = BTreeMap::new();
    for (_, services) in seed.hosts().filter(|(_, s)| s.len() >= 2) {
        let hc = model.host_conditions(services, extractor);
        for target in services.iter().map(|s| s.port) {
            let net_keys = hc.all_keys().filter(|k| k.net != 0);
            if let Some(best) = model.best_among(net_keys, target) {
                let cond = model.resolve(best.key);
                if let Some(net) = cond.net() {
                    *wins.entry(net.kind).or_default() += 1;
                }
            }
        }
    }
    let total: usize = wins.values().sum();
    let mut ranks: Vec<NetFeatureRank> = wins
        .into_iter()
        .map(|(kind, services)| NetFeatureRank {
            kind,
            services,
            fraction: services as f64 / total as f64,
        })
        .collect();
    ranks.sort_by(|a, b| b.services.cmp(&a.services).then(a.kind.cmp(&b.kind)));
    Ok(ranks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Ipv4, ServiceRecord, Subnet};
    use crate::features::{AsnTable, FeatureSet};
    use crate::model::BuildOptions;

    #[test]
    fn unavailable_without_net_kinds() {
        let seed = Corpus::new(Subnet::all(), vec![]).unwrap();
        let ex = Extractor::new(
            FeatureSet {
                net_kinds: Default::default(),
                ..FeatureSet::default()
            },
            AsnTable::default(),
        );
        let m = CoOccurrenceModel::build(&seed, &ex, &BuildOptions::default());
        assert!(matches!(
            rank_net_features(&m, &seed, &ex),
            Err(Error::Unavailable(_))
        ));
    }

    #[test]
    fn one_slash16_cluster_favours_slash16() {
        // Every host of the template sits in 10.1.0.0/16 but spreads over
        // many /20s, so only the /16 value reaches support everywhere.
        let recs: Vec<_> = (0..40u32)
            .flat_map(|i| {
                let ip = Ipv4(0x0A01_0000 + i * 0x0400 + 5);
                vec![
                    ServiceRecord::new(ip, 7547, "cwmp"),
                    ServiceRecord::new(ip, 30005, "cwmp"),
                ]
            })
            .collect();
        let seed = Corpus::new(Subnet::all(), recs).unwrap();
        let ex = Extractor::new(
            FeatureSet {
                net_kinds: FeatureKind::net_candidates(),
                ..FeatureSet::default()
            },
            AsnTable::default(),
        );
        let m = CoOccurrenceModel::build(&seed, &ex, &BuildOptions::default());
        let ranks = rank_net_features(&m, &seed, &ex).unwrap();
        let sum: f64 = ranks.iter().map(|r| r.fraction).sum();
        assert!((sum - 1.0).abs() < 1e-12);
        let share = |k| ranks.iter().find(|r| r.kind == k).map_or(0.0, |r| r.fraction);
        let s16 = share(FeatureKind::SubnetPrefix(16));
        for len in 17..=23 {
            assert!(s16 >= share(FeatureKind::SubnetPrefix(len)));
        }
    }
}
