use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{EligibilityBasis, PseudoFilter, Subnet};
use crate::error::{Error, Result};
use crate::features::{FeatureKind, FeatureSet};
use crate::planner::DEFAULT_FLOOR;

/// Every knob of one pipeline run. Relative paths are resolved against
/// the directory of the config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Corpus file in the JSON-lines record format.
    pub corpus: Option<PathBuf>,
    /// Synthetic population spec, used when `corpus` is absent.
    pub synthetic: Option<PathBuf>,
    /// Address space of `corpus`; taken from the spec for synthetic runs.
    pub universe: Option<Subnet>,
    /// `prefix/len,asn` lines. Synthetic runs default to the spec's blocks.
    pub asn_table: Option<PathBuf>,
    pub seed_fraction: f64,
    pub step_prefix: u8,
    pub floor: f64,
    pub min_support: u32,
    /// A port is eligible when strictly more IPs than this answer on it.
    pub min_ips: usize,
    pub eligibility: EligibilityBasis,
    pub app_kinds: Option<BTreeSet<FeatureKind>>,
    pub net_kinds: BTreeSet<FeatureKind>,
    pub priors_budget: Option<u64>,
    pub prediction_budget: Option<u64>,
    pub rng_seed: u64,
    pub partitions: usize,
    /// Keep seed hosts out of the prediction list.
    pub exclude_seed_hosts: bool,
    pub pseudo_filter: PseudoFilter,
    /// Defaults to the universe size.
    pub probes_per_full_scan: Option<u64>,
    /// Minimum probe distance between written curve points; 0 keeps all.
    pub curve_step: u64,
    pub out_dir: PathBuf,
    pub sweep: SweepGrid,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepGrid {
    pub seed_fractions: Vec<f64>,
    pub step_prefixes: Vec<u8>,
}

impl SweepGrid {
    pub fn cells(&self) -> Vec<(f64, u8)> {
        self.seed_fractions
            .iter()
            .flat_map(|&f| self.step_prefixes.iter().map(move |&p| (f, p)))
            .collect()
    }
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            corpus: None,
            synthetic: None,
            universe: None,
            asn_table: None,
            seed_fraction: 0.05,
            step_prefix: 16,
            floor: DEFAULT_FLOOR,
            min_support: 2,
            min_ips: 2,
            eligibility: EligibilityBasis::default(),
            app_kinds: None,
            net_kinds: FeatureKind::default_net_kinds(),
            priors_budget: None,
            prediction_budget: None,
            rng_seed: 0,
            partitions: 1,
            exclude_seed_hosts: true,
            pseudo_filter: PseudoFilter::default(),
            probes_per_full_scan: None,
            curve_step: 0,
            out_dir: PathBuf::from("out"),
            sweep: SweepGrid::default(),
            base_dir: PathBuf::new(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn out_path(&self) -> PathBuf {
        self.resolve(&self.out_dir)
    }

    pub fn feature_set(&self) -> FeatureSet {
        let mut set = FeatureSet {
            net_kinds: self.net_kinds.clone(),
            ..FeatureSet::default()
        };
        if let Some(app) = &self.app_kinds {
            set.app_kinds = app.clone();
        }
        set
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.corpus.is_none() && self.synthetic.is_none() {
            return bad("one of `corpus` or `synthetic` is required".into());
        }
        if self.corpus.is_some() && self.synthetic.is_some() {
            return bad("`corpus` and `synthetic` are mutually exclusive".into());
        }
        if self.corpus.is_some() && self.universe.is_none() {
            return bad("`universe` is required with `corpus`".into());
        }
        if !(self.seed_fraction > 0.0 && self.seed_fraction < 1.0) {
            return bad(format!("seed_fraction {} outside (0, 1)", self.seed_fraction));
        }
        if self.step_prefix > 32 {
            return bad(format!("step_prefix {} outside 0..=32", self.step_prefix));
        }
        if !(self.floor > 0.0 && self.floor <= 1.0) {
            return bad(format!("floor {} outside (0, 1]", self.floor));
        }
        if self.min_support == 0 {
            return bad("min_support must be at least 1".into());
        }
        if self.partitions == 0 {
            return bad("partitions must be at least 1".into());
        }
        if self.probes_per_full_scan == Some(0) {
            return bad("probes_per_full_scan must be positive".into());
        }
        self.feature_set().validate()
    }
}
