//! Predictive discovery of Internet services across all ports.
//!
//! A small random seed of fully scanned hosts trains conditional
//! probabilities of the form "a host with port *b* open (optionally with a
//! given banner, certificate, subnet or ASN on that service) also has port
//! *a* open". Those tables drive two scan plans: a priors list of
//! `(port, subnet)` sweeps that find each host's most predictive service,
//! and a prediction list of individual `(ip, port)` probes for the rest.
//!
//! Scans run against a [`scansim::ScanBackend`]; the bundled simulator
//! answers from a ground-truth [`corpus::Corpus`], so every plan can be
//! scored exactly with the metrics in [`eval`].
//!
//! ```
//! use svcpredict::corpus::{Corpus, Ipv4, ServiceRecord, Subnet};
//! use svcpredict::features::{Extractor, FeatureKind};
//! use svcpredict::model::{BuildOptions, CoOccurrenceModel, Condition};
//!
//! let host = |ip, ports: &[u16]| -> Vec<ServiceRecord> {
//!     ports.iter().map(|&p| ServiceRecord::new(Ipv4(ip), p, "http")).collect()
//! };
//! let seed = Corpus::new(
//!     Subnet::all(),
//!     [host(1, &[22, 80]), host(2, &[22, 80]), host(3, &[22])].concat(),
//! )
//! .unwrap();
//! let model = CoOccurrenceModel::build(&seed, &Extractor::default(), &BuildOptions::default());
//! let p = model.probability(&Condition::PortOnly { port: 22 }, 80).unwrap();
//! assert!((p - 2.0 / 3.0).abs() < 1e-12);
//! ```

pub mod corpus;
pub mod error;
pub mod eval;
pub mod features;
pub mod model;
pub mod pipeline;
pub mod planner;
pub mod scansim;

pub use error::{Error, Result};

// The guide's chapters are compiled and run as doc-tests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/corpus.md")]
    mod corpus {}
    #[doc = include_str!("../../../book/src/features.md")]
    mod features {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/planning.md")]
    mod planning {}
    #[doc = include_str!("../../../book/src/scanning.md")]
    mod scanning {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/pipeline.md")]
    mod pipeline {}
}
