//! Transport, application and network evidence attached to a service.
//!
//! Application-layer values arrive pre-parsed on each [`ServiceRecord`];
//! network-layer values are computed from the address (prefix masking and
//! an ASN table). All values are compared as exact strings.

mod asn;
mod rank;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::corpus::{Ipv4, ServiceRecord, Subnet};
use crate::error::Error;

pub use asn::AsnTable;
pub use rank::{rank_net_features, NetFeatureRank};

/// Every kind of evidence a condition can be built from.
///
/// Declaration order is the canonical extraction order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FeatureKind {
    Protocol,
    TlsCertHash,
    TlsCertOrganization,
    TlsCertSubjectName,
    HttpHtmlTitle,
    HttpBodyHash,
    HttpServer,
    HttpHeader,
    SshHostKey,
    SshBanner,
    VncDesktopName,
    SmtpBanner,
    FtpBanner,
    ImapBanner,
    Pop3Banner,
    CwmpHeader,
    CwmpBodyHash,
    TelnetBanner,
    PptpVendor,
    MysqlServerVersion,
    MemcachedServerVersion,
    MssqlServerVersion,
    IpmiBanner,
    /// The enclosing subnet at the given prefix length.
    SubnetPrefix(u8),
    Asn,
}

const APP_KINDS: [FeatureKind; 23] = [
    FeatureKind::Protocol,
    FeatureKind::TlsCertHash,
    FeatureKind::TlsCertOrganization,
    FeatureKind::TlsCertSubjectName,
    FeatureKind::HttpHtmlTitle,
    FeatureKind::HttpBodyHash,
    FeatureKind::HttpServer,
    FeatureKind::HttpHeader,
    FeatureKind::SshHostKey,
    FeatureKind::SshBanner,
    FeatureKind::VncDesktopName,
    FeatureKind::SmtpBanner,
    FeatureKind::FtpBanner,
    FeatureKind::ImapBanner,
    FeatureKind::Pop3Banner,
    FeatureKind::CwmpHeader,
    FeatureKind::CwmpBodyHash,
    FeatureKind::TelnetBanner,
    FeatureKind::PptpVendor,
    FeatureKind::MysqlServerVersion,
    FeatureKind::MemcachedServerVersion,
    FeatureKind::MssqlServerVersion,
    FeatureKind::IpmiBanner,
];

impl FeatureKind {
    /// All application-layer kinds, `Protocol` first.
    pub fn app_kinds() -> &'static [FeatureKind] {
        &APP_KINDS
    }

    /// The candidate network kinds: /16 through /23 and ASN.
    pub fn net_candidates() -> BTreeSet<FeatureKind> {
        (16..=23)
            .map(FeatureKind::SubnetPrefix)
            .chain(std::iter::once(FeatureKind::Asn))
            .collect()
    }

    /// The default network kinds, /16 and ASN.
    pub fn default_net_kinds() -> BTreeSet<FeatureKind> {
        [FeatureKind::SubnetPrefix(16), FeatureKind::Asn]
            .into_iter()
            .collect()
    }

    pub fn is_network(self) -> bool {
        matches!(self, FeatureKind::SubnetPrefix(_) | FeatureKind::Asn)
    }

    pub fn is_application(self) -> bool {
        !self.is_network()
    }

    /// Whether a service speaking `protocol` may carry this kind in its
    /// feature map. `Protocol` itself and network kinds never appear there.
    pub fn valid_for(self, protocol: &str) -> bool {
        use FeatureKind::*;
        match self {
            Protocol | SubnetPrefix(_) | Asn => false,
            TlsCertHash | TlsCertOrganization | TlsCertSubjectName => true,
            HttpHtmlTitle | HttpBodyHash | HttpServer | HttpHeader => {
                protocol == "http" || protocol == "https"
            }
            SshHostKey | SshBanner => protocol == "ssh",
            VncDesktopName => protocol == "vnc",
            SmtpBanner => protocol == "smtp",
            FtpBanner => protocol == "ftp",
            ImapBanner => protocol == "imap",
            Pop3Banner => protocol == "pop3",
            CwmpHeader | CwmpBodyHash => protocol == "cwmp",
            TelnetBanner => protocol == "telnet",
            PptpVendor => protocol == "pptp",
            MysqlServerVersion => protocol == "mysql",
            MemcachedServerVersion => protocol == "memcached",
            MssqlServerVersion => protocol == "mssql",
            IpmiBanner => protocol == "ipmi",
        }
    }

    fn name(self) -> std::borrow::Cow<'static, str> {
        use FeatureKind::*;
        let s = match self {
            Protocol => "protocol",
            TlsCertHash => "tls_cert_hash",
            TlsCertOrganization => "tls_cert_organization",
            TlsCertSubjectName => "tls_cert_subject_name",
            HttpHtmlTitle => "http_html_title",
            HttpBodyHash => "http_body_hash",
            HttpServer => "http_server",
            HttpHeader => "http_header",
            SshHostKey => "ssh_host_key",
            SshBanner => "ssh_banner",
            VncDesktopName => "vnc_desktop_name",
            SmtpBanner => "smtp_banner",
            FtpBanner => "ftp_banner",
            ImapBanner => "imap_banner",
            Pop3Banner => "pop3_banner",
            CwmpHeader => "cwmp_header",
            CwmpBodyHash => "cwmp_body_hash",
            TelnetBanner => "telnet_banner",
            PptpVendor => "pptp_vendor",
            MysqlServerVersion => "mysql_server_version",
            MemcachedServerVersion => "memcached_server_version",
            MssqlServerVersion => "mssql_server_version",
            IpmiBanner => "ipmi_banner",
            Asn => "asn",
            SubnetPrefix(len) => return format!("subnet{len}").into(),
        };
        s.into()
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for FeatureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some(len) = s.strip_prefix("subnet") {
            return match len.parse::<u8>() {
                Ok(len) if len <= 32 => Ok(FeatureKind::SubnetPrefix(len)),
                _ => Err(Error::Config(format!("unknown feature kind `{s}`"))),
            };
        }
        if s == "asn" {
            return Ok(FeatureKind::Asn);
        }
        APP_KINDS
            .iter()
            .copied()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown feature kind `{s}`")))
    }
}

impl Serialize for FeatureKind {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for FeatureKind {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = <std::borrow::Cow<'de, str>>::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One observed value of one feature kind.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FeatureValue {
    pub kind: FeatureKind,
    pub value: String,
}

impl FeatureValue {
    pub fn new(kind: FeatureKind, value: impl Into<String>) -> Self {
        FeatureValue {
            kind,
            value: value.into(),
        }
    }
}

impl fmt::Display for FeatureValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}={:?}", self.kind, self.value)
    }
}

/// The `Protocol` value followed by every populated application feature,
/// in kind order. Empty strings are skipped.
pub fn extract_app_features(record: &ServiceRecord) -> Vec<FeatureValue> {
    let mut out = Vec::with_capacity(1 + record.features.len());
    if !record.protocol.is_empty() {
        out.push(FeatureValue::new(FeatureKind::Protocol, &record.protocol));
    }
    // BTreeMap iteration is already kind order.
    for (kind, value) in &record.features {
        if !value.is_empty() {
            out.push(FeatureValue::new(*kind, value));
        }
    }
    out
}

/// Network-layer values for `ip`. Subnet kinds are masked; `Asn` is
/// present only when the table has a covering prefix.
pub fn extract_net_features(
    ip: Ipv4,
    net_kinds: &BTreeSet<FeatureKind>,
    asn: &AsnTable,
) -> Vec<FeatureValue> {
    net_kinds
        .iter()
        .filter_map(|kind| match *kind {
            FeatureKind::SubnetPrefix(len) => {
                let subnet = Subnet::containing(ip, len).ok()?;
                Some(FeatureValue::new(*kind, subnet.to_string()))
            }
            FeatureKind::Asn => asn
                .lookup(ip)
                .map(|asn| FeatureValue::new(FeatureKind::Asn, asn.to_string())),
            _ => None,
        })
        .collect()
}

/// Which feature kinds take part in modeling.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSet {
    pub app_kinds: BTreeSet<FeatureKind>,
    pub net_kinds: BTreeSet<FeatureKind>,
}

impl Default for FeatureSet {
    fn default() -> Self {
        FeatureSet {
            app_kinds: APP_KINDS.iter().copied().collect(),
            net_kinds: FeatureKind::default_net_kinds(),
        }
    }
}

impl FeatureSet {
    pub fn validate(&self) -> Result<(), Error> {
        if let Some(k) = self.app_kinds.iter().find(|k| k.is_network()) {
            return Err(Error::Config(format!("`{k}` is not an application kind")));
        }
        for k in &self.net_kinds {
            match k {
                FeatureKind::Asn => {}
                FeatureKind::SubnetPrefix(len) if (16..=23).contains(len) => {}
                _ => {
                    return Err(Error::Config(format!(
                        "network kind `{k}` outside subnet16..subnet23 and asn"
                    )))
                }
            }
        }
        Ok(())
    }
}

/// Feature extraction bound to a kind selection and an ASN table.
#[derive(Clone, Debug, Default)]
pub struct Extractor {
    pub features: FeatureSet,
    pub asn: AsnTable,
}

impl Extractor {
    pub fn new(features: FeatureSet, asn: AsnTable) -> Self {
        Extractor { features, asn }
    }

    pub fn app(&self, record: &ServiceRecord) -> Vec<FeatureValue> {
        let mut values = extract_app_features(record);
        values.retain(|v| self.features.app_kinds.contains(&v.kind));
        values
    }

    pub fn net(&self, ip: Ipv4) -> Vec<FeatureValue> {
        extract_net_features(ip, &self.features.net_kinds, &self.asn)
    }
}
