//! IPv4 addresses and prefixes as plain integers.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::Error;

/// An IPv4 address held as its 32-bit big-endian value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Ipv4(pub u32);

impl Ipv4 {
    pub const fn new(a: u8, b: u8, c: u8, d: u8) -> Self {
        Ipv4(u32::from_be_bytes([a, b, c, d]))
    }

    pub const fn value(self) -> u32 {
        self.0
    }
}

impl From<std::net::Ipv4Addr> for Ipv4 {
    fn from(addr: std::net::Ipv4Addr) -> Self {
        Ipv4(u32::from(addr))
    }
}

impl From<Ipv4> for std::net::Ipv4Addr {
    fn from(ip: Ipv4) -> Self {
        std::net::Ipv4Addr::from(ip.0)
    }
}

impl fmt::Display for Ipv4 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(&std::net::Ipv4Addr::from(self.0), f)
    }
}

impl FromStr for Ipv4 {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.parse::<std::net::Ipv4Addr>()
            .map(Ipv4::from)
            .map_err(|_| Error::Address(s.to_string()))
    }
}

impl Serialize for Ipv4 {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Ipv4 {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = <std::borrow::Cow<'de, str>>::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Network mask with the top `prefix_len` bits set.
pub const fn mask(prefix_len: u8) -> u32 {
    if prefix_len == 0 {
        0
    } else {
        u32::MAX << (32 - prefix_len as u32)
    }
}

/// A CIDR block. The base never has host bits set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Subnet {
    base: Ipv4,
    prefix_len: u8,
}

impl Subnet {
    /// Builds a subnet, rejecting bases with host bits set.
    pub fn new(base: Ipv4, prefix_len: u8) -> Result<Self, Error> {
        if prefix_len > 32 {
            return Err(Error::Address(format!("{base}/{prefix_len}")));
        }
        if base.0 & !mask(prefix_len) != 0 {
            return Err(Error::Address(format!(
                "{base}/{prefix_len} has host bits set"
            )));
        }
        Ok(Subnet { base, prefix_len })
    }

    /// The subnet of length `prefix_len` that contains `ip`.
    pub fn containing(ip: Ipv4, prefix_len: u8) -> Result<Self, Error> {
        if prefix_len > 32 {
            return Err(Error::Address(format!("/{prefix_len}")));
        }
        Ok(Subnet {
            base: Ipv4(ip.0 & mask(prefix_len)),
            prefix_len,
        })
    }

    /// The whole IPv4 space, `0.0.0.0/0`.
    pub const fn all() -> Self {
        Subnet {
            base: Ipv4(0),
            prefix_len: 0,
        }
    }

    pub fn base(&self) -> Ipv4 {
        self.base
    }

    pub fn prefix_len(&self) -> u8 {
        self.prefix_len
    }

    /// Number of addresses covered.
    pub fn size(&self) -> u64 {
        1u64 << (32 - self.prefix_len as u32)
    }

    /// Last address in the block.
    pub fn last(&self) -> Ipv4 {
        Ipv4(self.base.0 | !mask(self.prefix_len))
    }

    pub fn contains(&self, ip: Ipv4) -> bool {
        ip.0 & mask(self.prefix_len) == self.base.0
    }

    pub fn contains_subnet(&self, other: &Subnet) -> bool {
        other.prefix_len >= self.prefix_len && self.contains(other.base)
    }

    /// Prefixes either nest or are disjoint, so the intersection is the
    /// smaller block or nothing.
    pub fn intersection(&self, other: &Subnet) -> Option<Subnet> {
        if self.contains_subnet(other) {
            Some(*other)
        } else if other.contains_subnet(self) {
            Some(*self)
        } else {
            None
        }
    }

    /// Number of addresses shared with `other`.
    pub fn overlap(&self, other: &Subnet) -> u64 {
        self.intersection(other).map_or(0, |s| s.size())
    }

    /// Iterates every address in the block in ascending order.
    pub fn addresses(&self) -> impl Iterator<Item = Ipv4> {
        let start = self.base.0 as u64;
        let end = start + self.size();
        (start..end).map(|v| Ipv4(v as u32))
    }
}

impl fmt::Display for Subnet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.base, self.prefix_len)
    }
}

impl FromStr for Subnet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (ip, len) = s
            .split_once('/')
            .ok_or_else(|| Error::Address(s.to_string()))?;
        let len: u8 = len.parse().map_err(|_| Error::Address(s.to_string()))?;
        Subnet::new(ip.parse()?, len)
    }
}

impl Serialize for Subnet {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Subnet {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = <std::borrow::Cow<'de, str>>::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
