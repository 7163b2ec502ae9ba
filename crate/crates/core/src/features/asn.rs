use std::path::Path;

use rustc_hash::FxHashMap;

use crate::corpus::{addr::mask, Ipv4, Subnet};
use crate::error::{Error, Result};

/// Static prefix-to-ASN mapping with longest-prefix-match lookup.
///
/// Entries are bucketed by prefix length; a lookup probes the populated
/// lengths from longest to shortest.
#[derive(Clone, Debug, Default)]
pub struct AsnTable {
    entries: Vec<(Subnet, u32)>,
    by_len: Vec<(u8, FxHashMap<u32, u32>)>,
}

impl AsnTable {
    pub fn new(mut entries: Vec<(Subnet, u32)>) -> Self {
        entries.sort();
        entries.dedup_by_key(|(s, _)| *s);
        let mut by_len: Vec<(u8, FxHashMap<u32, u32>)> = Vec::new();
        for (subnet, asn) in &entries {
            let len = subnet.prefix_len();
            match by_len.iter_mut().find(|(l, _)| *l == len) {
                Some((_, map)) => {
                    map.insert(subnet.base().0, *asn);
                }
                None => {
                    let mut map = FxHashMap::default();
                    map.insert(subnet.base().0, *asn);
                    by_len.push((len, map));
                }
            }
        }
        by_len.sort_by_key(|e| std::cmp::Reverse(e.0));
        AsnTable { entries, by_len }
    }

    /// Parses `prefix/len,asn` lines. Blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                line: i + 1,
                message,
            };
            let (prefix, asn) = line
                .split_once(',')
                .ok_or_else(|| parse_err(format!("expected `prefix/len,asn`, got `{line}`")))?;
            let subnet: Subnet = prefix
                .trim()
                .parse()
                .map_err(|e: Error| parse_err(e.to_string()))?;
            let asn: u32 = asn
                .trim()
                .trim_start_matches("AS")
                .parse()
                .map_err(|_| parse_err(format!("bad ASN `{}`", asn.trim())))?;
            entries.push((subnet, asn));
        }
        Ok(AsnTable::new(entries))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        AsnTable::parse(&text)
    }

    pub fn lookup(&self, ip: Ipv4) -> Option<u32> {
        self.by_len
            .iter()
            .find_map(|(len, map)| map.get(&(ip.0 & mask(*len))).copied())
    }

    /// Entries sorted by subnet.
    pub fn entries(&self) -> &[(Subnet, u32)] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_text(&self) -> String {
        self.entries
            .iter()
            .map(|(s, a)| format!("{s},{a}\n"))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn linear_lookup(entries: &[(Subnet, u32)], ip: Ipv4) -> Option<u32> {
        entries
            .iter()
            .filter(|(s, _)| s.contains(ip))
            .max_by_key(|(s, _)| s.prefix_len())
            .map(|(_, a)| *a)
    }

    #[test]
    fn longest_prefix_wins() {
        let table = AsnTable::parse("10.0.0.0/8,100\n10.1.0.0/16,200\n# c\n\n10.1.2.0/24,AS300\n")
            .unwrap();
        assert_eq!(table.lookup(Ipv4::new(10, 9, 9, 9)), Some(100));
        assert_eq!(table.lookup(Ipv4::new(10, 1, 9, 9)), Some(200));
        assert_eq!(table.lookup(Ipv4::new(10, 1, 2, 9)), Some(300));
        assert_eq!(table.lookup(Ipv4::new(11, 0, 0, 1)), None);
    }

    #[test]
    fn parse_errors_name_the_line() {
        let err = AsnTable::parse("10.0.0.0/8,1\n10.0.0.1/8,2\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        assert!(AsnTable::parse("10.0.0.0/8\n").is_err());
    }

    proptest! {
        #[test]
        fn matches_linear_scan(
            raw in prop::collection::vec((any::<u32>(), 0u8..=32, 1u32..1000), 0..40),
            probes in prop::collection::vec(any::<u32>(), 1..40),
        ) {
            let entries: Vec<_> = raw
                .into_iter()
                .map(|(v, len, asn)| (Subnet::containing(Ipv4(v), len).unwrap(), asn))
                .collect();
            let table = AsnTable::new(entries);
            for p in probes {
                // Also probe an address inside the first entry so hits are exercised.
                let inside = table.entries().first().map(|(s, _)| Ipv4(s.base().0 | (p & !mask(s.prefix_len()))));
                for ip in std::iter::once(Ipv4(p)).chain(inside) {
                    prop_assert_eq!(table.lookup(ip), linear_lookup(table.entries(), ip));
                }
            }
        }
    }
}
