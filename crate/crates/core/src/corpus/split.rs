use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{Corpus, Ipv4};
use crate::error::{Error, Result};

/// Per-IP assignment of responsive hosts to seed or test.
#[derive(Clone, Debug, PartialEq)]
pub struct SeedSplit {
    pub seed_ips: BTreeSet<Ipv4>,
    pub test_ips: BTreeSet<Ipv4>,
    pub seed_fraction: f64,
    pub rng_seed: u64,
}

/// Uniform value in `[0, 1)` derived from `(rng_seed, ip)`.
///
/// Membership is a pure function of the address, so the seed scan's
/// address sample and the seed side of the split agree on every
/// responsive host.
pub(crate) fn address_draw(rng_seed: u64, ip: Ipv4) -> f64 {
    // SplitMix64 finalizer over the seed-keyed address.
    let mut z = rng_seed ^ (ip.0 as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    (z >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

pub(crate) fn in_sample(rng_seed: u64, fraction: f64, ip: Ipv4) -> bool {
    address_draw(rng_seed, ip) < fraction
}

impl SeedSplit {
    /// Assigns each responsive IP of `corpus` to the seed side with
    /// probability `seed_fraction`.
    pub fn new(corpus: &Corpus, seed_fraction: f64, rng_seed: u64) -> Result<Self> {
        if !(seed_fraction > 0.0 && seed_fraction < 1.0) {
            return Err(Error::Config(format!(
                "seed_fraction must be in (0, 1), got {seed_fraction}"
            )));
        }
        let (seed_ips, test_ips) = corpus
            .responsive_ips()
            .partition(|ip| in_sample(rng_seed, seed_fraction, *ip));
        Ok(SeedSplit {
            seed_ips,
            test_ips,
            seed_fraction,
            rng_seed,
        })
    }

    pub fn is_seed(&self, ip: Ipv4) -> bool {
        self.seed_ips.contains(&ip)
    }

    pub fn is_test(&self, ip: Ipv4) -> bool {
        self.test_ips.contains(&ip)
    }
}

/// Which hosts count towards a port's responsive-IP total.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EligibilityBasis {
    Seed,
    Test,
    #[default]
    All,
}

/// Ports whose responsive-IP count on the chosen side strictly exceeds
/// `min_ips`.
pub fn eligible_ports(
    split: &SeedSplit,
    corpus: &Corpus,
    basis: EligibilityBasis,
    min_ips: usize,
) -> BTreeSet<u16> {
    let mut counts: BTreeMap<u16, usize> = BTreeMap::new();
    for (ip, services) in corpus.hosts() {
        let counted = match basis {
            EligibilityBasis::Seed => split.is_seed(ip),
            EligibilityBasis::Test => split.is_test(ip),
            EligibilityBasis::All => true,
        };
        if counted {
            for s in services {
                *counts.entry(s.port).or_default() += 1;
            }
        }
    }
    counts
        .into_iter()
        .filter(|&(_, n)| n > min_ips)
        .map(|(p, _)| p)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{ServiceRecord, Subnet};
    use proptest::prelude::*;

    fn corpus_of(hosts: &[(u32, &[u16])]) -> Corpus {
        let records = hosts
            .iter()
            .flat_map(|(ip, ports)| {
                ports
                    .iter()
                    .map(move |p| ServiceRecord::new(Ipv4(*ip), *p, "http"))
            })
            .collect();
        Corpus::new(Subnet::all(), records).unwrap()
    }

    #[test]
    fn thousand_hosts_half_split() {
        let hosts: Vec<(u32, Vec<u16>)> = (0..1000).map(|i| (i * 7 + 3, vec![80])).collect();
        let refs: Vec<(u32, &[u16])> = hosts.iter().map(|(i, p)| (*i, p.as_slice())).collect();
        let c = corpus_of(&refs);
        let split = SeedSplit::new(&c, 0.5, 42).unwrap();
        // Binomial(1000, 0.5) has sd ~15.8; [400, 600] is > 6 sd wide.
        assert!((400..=600).contains(&split.seed_ips.len()), "{}", split.seed_ips.len());
        assert_eq!(split.seed_ips.len() + split.test_ips.len(), 1000);
        assert!(split.seed_ips.is_disjoint(&split.test_ips));
        assert_eq!(split, SeedSplit::new(&c, 0.5, 42).unwrap());
        assert_ne!(split.seed_ips, SeedSplit::new(&c, 0.5, 43).unwrap().seed_ips);
    }

    #[test]
    fn rejects_degenerate_fraction() {
        let c = corpus_of(&[(1, &[80])]);
        assert!(SeedSplit::new(&c, 0.0, 1).is_err());
        assert!(SeedSplit::new(&c, 1.0, 1).is_err());
    }

    #[test]
    fn strict_min_ips() {
        let c = corpus_of(&[(1, &[80, 22]), (2, &[80, 22]), (3, &[80])]);
        let split = SeedSplit::new(&c, 0.5, 0).unwrap();
        let ports = eligible_ports(&split, &c, EligibilityBasis::All, 2);
        assert!(ports.contains(&80));
        assert!(!ports.contains(&22));
    }

    proptest! {
        #[test]
        fn partition_is_exact(
            hosts in prop::collection::btree_map(any::<u32>(), prop::collection::btree_set(1u16..50, 1..5), 1..200),
            fraction in 0.01f64..0.99,
            seed in any::<u64>(),
            min_ips in 1usize..4,
        ) {
            let hosts: Vec<(u32, Vec<u16>)> = hosts.into_iter().map(|(k, v)| (k, v.into_iter().collect())).collect();
            let refs: Vec<(u32, &[u16])> = hosts.iter().map(|(i, p)| (*i, p.as_slice())).collect();
            let c = corpus_of(&refs);
            let split = SeedSplit::new(&c, fraction, seed).unwrap();
            let all: BTreeSet<Ipv4> = c.responsive_ips().collect();
            let union: BTreeSet<Ipv4> = split.seed_ips.union(&split.test_ips).copied().collect();
            prop_assert_eq!(union, all);
            prop_assert!(split.seed_ips.is_disjoint(&split.test_ips));

            // group-by oracle over raw host lists
            for basis in [EligibilityBasis::Seed, EligibilityBasis::Test, EligibilityBasis::All] {
                let mut expect = BTreeSet::new();
                for port in 1u16..50 {
                    let n = hosts.iter().filter(|(ip, ports)| {
                        let side = match basis {
                            EligibilityBasis::Seed => split.seed_ips.contains(&Ipv4(*ip)),
                            EligibilityBasis::Test => split.test_ips.contains(&Ipv4(*ip)),
                            EligibilityBasis::All => true,
                        };
                        side && ports.contains(&port)
                    }).count();
                    if n > min_ips { expect.insert(port); }
                }
                prop_assert_eq!(eligible_ports(&split, &c, basis, min_ips), expect);
            }
        }
    }
}
