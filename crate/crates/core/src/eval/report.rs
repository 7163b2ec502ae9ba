use std::collections::BTreeMap;
use std::io::{BufWriter, Write};

use serde::Serialize;

use crate::model::{Condition, ConditionClass};
use crate::planner::Prediction;

/// Winning conditions of found predictions, grouped by shape with feature
/// values abstracted away.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FeatureReportRow {
    pub condition_class: ConditionClass,
    /// `port` plus the feature kinds of the condition, joined by `+`.
    pub kinds: String,
    /// Mean over ports of this row's share of that port's found services.
    pub normalized_share: f64,
    /// Share of all found services.
    pub service_share: f64,
    pub services: usize,
}

fn kinds_label(c: &Condition) -> String {
    let mut label = String::from("port");
    for v in c.app().into_iter().chain(c.net()) {
        label.push('+');
        label.push_str(&v.kind.to_string());
    }
    label
}

/// Aggregates the `via` condition of every prediction that found a
/// service. Shares are relative to those services.
pub fn feature_report<'a>(found: impl IntoIterator<Item = &'a Prediction>) -> Vec<FeatureReportRow> {
    // (class, kinds) -> port -> count
    let mut rows: BTreeMap<(ConditionClass, String), BTreeMap<u16, usize>> = BTreeMap::new();
    let mut per_port: BTreeMap<u16, usize> = BTreeMap::new();
    let mut total = 0usize;
    for p in found {
        let key = (p.via.class(), kinds_label(&p.via));
        *rows.entry(key).or_default().entry(p.port).or_insert(0) += 1;
        *per_port.entry(p.port).or_insert(0) += 1;
        total += 1;
    }
    let ports = per_port.len() as f64;
    let mut out: Vec<FeatureReportRow> = rows
        .into_iter()
        .map(|((condition_class, kinds), by_port)| {
            let services: usize = by_port.values().sum();
            let normalized: f64 = per_port
                .iter()
                .map(|(port, n)| by_port.get(port).copied().unwrap_or(0) as f64 / *n as f64)
                .sum::<f64>()
                / ports;
            FeatureReportRow {
                condition_class,
                kinds,
                normalized_share: normalized,
                service_share: services as f64 / total as f64,
                services,
            }
        })
        .collect();
    out.sort_by(|a, b| {
        b.normalized_share
            .total_cmp(&a.normalized_share)
            .then(b.service_share.total_cmp(&a.service_share))
            .then(a.condition_class.cmp(&b.condition_class))
            .then(a.kinds.cmp(&b.kinds))
    });
    out
}

pub fn write_feature_report_csv(w: impl Write, rows: &[FeatureReportRow]) -> std::io::Result<()> {
    let mut w = BufWriter::new(w);
    writeln!(w, "condition_class,kinds,normalized_share,service_share")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{}",
            r.condition_class.name(),
            r.kinds,
            r.normalized_share,
            r.service_share
        )?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Ipv4;
    use crate::features::{FeatureKind, FeatureValue};

    fn pred(port: u16, via: Condition) -> Prediction {
        Prediction {
            ip: Ipv4(1),
            port,
            probability: 1.0,
            via,
        }
    }

    #[test]
    fn single_class() {
        let proto = |p| Condition::PortApp {
            port: p,
            app: FeatureValue::new(FeatureKind::Protocol, "http"),
        };
        let preds = [pred(80, proto(8080)), pred(443, proto(80))];
        let rows = feature_report(&preds);
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].kinds, "port+protocol");
        assert_eq!((rows[0].normalized_share, rows[0].service_share), (1.0, 1.0));
        assert!(feature_report(&[]).is_empty());
    }

    #[test]
    fn shares_partition() {
        let only = Condition::PortOnly { port: 22 };
        let net = Condition::PortNet {
            port: 22,
            net: FeatureValue::new(FeatureKind::Asn, "7"),
        };
        let preds = [
            pred(80, only.clone()),
            pred(80, only.clone()),
            pred(80, net.clone()),
            pred(443, net),
        ];
        let rows = feature_report(&preds);
        let sum_n: f64 = rows.iter().map(|r| r.normalized_share).sum();
        let sum_s: f64 = rows.iter().map(|r| r.service_share).sum();
        assert!((sum_n - 1.0).abs() < 1e-12 && (sum_s - 1.0).abs() < 1e-12);
        // port_net: (1/3 + 1) / 2
        assert_eq!(rows[0].kinds, "port+asn");
        assert!((rows[0].normalized_share - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(rows[1].service_share, 0.5);
    }
}
