use std::io::{BufWriter, Write};

use super::{Prediction, PriorsEntry};

/// `port,subnet,coverage` with a header line.
pub fn write_priors_csv(w: impl Write, list: &[PriorsEntry]) -> std::io::Result<()> {
    let mut w = BufWriter::new(w);
    writeln!(w, "port,subnet,coverage")?;
    for e in list {
        writeln!(w, "{},{},{}", e.port, e.subnet, e.coverage)?;
    }
    w.flush()
}

/// `ip,port,probability` with a header line. Probabilities use the
/// shortest text that parses back to the same value.
pub fn write_predictions_csv(w: impl Write, list: &[Prediction]) -> std::io::Result<()> {
    let mut w = BufWriter::new(w);
    writeln!(w, "ip,port,probability")?;
    for p in list {
        writeln!(w, "{},{},{}", p.ip, p.port, p.probability)?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Ipv4;
    use crate::model::Condition;

    #[test]
    fn csv_shapes() {
        let mut out = Vec::new();
        write_priors_csv(
            &mut out,
            &[PriorsEntry {
                port: 80,
                subnet: "1.1.0.0/16".parse().unwrap(),
                coverage: 3,
            }],
        )
        .unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "port,subnet,coverage\n80,1.1.0.0/16,3\n");

        let mut out = Vec::new();
        let p = Prediction {
            ip: Ipv4::new(1, 2, 3, 4),
            port: 8080,
            probability: 2.0 / 3.0,
            via: Condition::PortOnly { port: 22 },
        };
        write_predictions_csv(&mut out, &[p]).unwrap();
        let text = String::from_utf8(out).unwrap();
        let last = text.lines().nth(1).unwrap();
        let prob: f64 = last.rsplit(',').next().unwrap().parse().unwrap();
        assert_eq!(prob, 2.0 / 3.0);
        assert!(last.starts_with("1.2.3.4,8080,"));
    }
}
