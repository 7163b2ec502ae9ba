use std::path::PathBuf;

use crate::corpus::Ipv4;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid address or prefix: {0}")]
    Address(String),

    #[error("{} address(es) outside universe {universe}: {}", offenders.len(), format_offenders(offenders))]
    OutsideUniverse {
        universe: String,
        offenders: Vec<Ipv4>,
    },

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("metric undefined: {0}")]
    UndefinedMetric(&'static str),

    #[error("unavailable: {0}")]
    Unavailable(String),

    #[error("model format: {0}")]
    ModelFormat(String),

    #[error("phase `{phase}` failed: {source}")]
    Phase {
        phase: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_phase(self, phase: &'static str) -> Self {
        Error::Phase {
            phase,
            source: Box::new(self),
        }
    }
}

fn format_offenders(offenders: &[Ipv4]) -> String {
    const SHOWN: usize = 8;
    let mut out = offenders
        .iter()
        .take(SHOWN)
        .map(|ip| ip.to_string())
        .collect::<Vec<_>>()
        .join(", ");
    if offenders.len() > SHOWN {
        out.push_str(&format!(", ... ({} more)", offenders.len() - SHOWN));
    }
    out
}
