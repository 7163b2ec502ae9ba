//! The four-phase run: seed scan, model, priors sweeps, prediction probes,
//! followed by evaluation. Each phase can write its artifact as soon as it
//! finishes; a failing phase leaves a `FAILED` marker next to whatever was
//! already written.

mod config;
mod sweep;

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::corpus::{
    eligible_ports, filter_pseudo_services, generate, ingest, write_records, Corpus, SeedSplit,
    ServiceRecord, SyntheticSpec,
};
use crate::error::{Error, Result};
use crate::eval::{
    dominated_by_oracle, feature_report, oracle_curve, port_order_curve, probes_to_reach,
    scan_curve, write_curve_csv, write_feature_report_csv, Curve, FeatureReportRow, Truth,
};
use crate::features::{AsnTable, Extractor};
use crate::model::{BuildOptions, CoOccurrenceModel};
use crate::planner::{
    build_prediction_list, build_predictive_features, build_priors_list, known_pairs,
    write_predictions_csv, write_priors_csv, Prediction, PredictiveFeatureEntry, PriorsEntry,
};
use crate::scansim::{
    run_prediction_scan, run_priors_scan, run_seed_scan, BandwidthLedger, ScanResult,
    SimulatedInternet,
};

pub use config::{PipelineConfig, SweepGrid};
pub use sweep::{run_sweep, run_sweep_to_dir, SweepCell};

/// Pseudo-filtered ground truth plus the ASN table: everything a run
/// reads from disk.
#[derive(Clone, Debug)]
pub struct World {
    pub corpus: Corpus,
    pub asn: AsnTable,
    /// Services removed by the pseudo filter.
    pub pseudo_removed: usize,
}

/// Loads (or generates) the corpus and removes pseudo services.
pub fn prepare(cfg: &PipelineConfig) -> Result<World> {
    cfg.validate()?;
    let (raw, spec_asn) = match (&cfg.corpus, &cfg.synthetic) {
        (Some(path), _) => {
            let universe = cfg.universe.expect("validated");
            (ingest(cfg.resolve(path), universe)?, None)
        }
        (None, Some(spec)) => {
            let spec = SyntheticSpec::load(cfg.resolve(spec))?;
            (generate(&spec)?, Some(spec.asn_table()))
        }
        (None, None) => unreachable!("validated"),
    };
    let asn = match (&cfg.asn_table, spec_asn) {
        (Some(path), _) => AsnTable::load(cfg.resolve(path))?,
        (None, Some(table)) => table,
        (None, None) => AsnTable::default(),
    };
    let corpus = filter_pseudo_services(&raw, &cfg.pseudo_filter);
    Ok(World {
        pseudo_removed: raw.len() - corpus.len(),
        corpus,
        asn,
    })
}

/// Headline numbers of one run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub universe_size: u64,
    pub pseudo_removed: usize,
    pub eligible_ports: usize,
    pub seed_hosts: usize,
    pub test_hosts: usize,
    pub truth_services: usize,
    pub model_entries: usize,
    pub priors_entries: usize,
    pub predictive_features: usize,
    pub predictions: usize,
    pub seed_probes: u64,
    pub priors_probes: u64,
    pub prediction_probes: u64,
    pub fraction_services: f64,
    pub normalized_services: f64,
    /// Truth services found per probe, seed probes excluded.
    pub precision: f64,
    /// Prediction-scan responses per prediction probe.
    pub prediction_precision: Option<f64>,
    pub probes_to_90: Option<u64>,
    pub port_order_probes_to_90: Option<u64>,
    pub port_order_ratio_at_90: Option<f64>,
    pub oracle_dominates: bool,
}

/// Everything a run produces, in memory.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub split: SeedSplit,
    pub eligible: BTreeSet<u16>,
    pub seed_scan: ScanResult,
    pub model: CoOccurrenceModel,
    pub priors: Vec<PriorsEntry>,
    pub priors_scan: ScanResult,
    pub predictive: Vec<PredictiveFeatureEntry>,
    pub predictions: Vec<Prediction>,
    pub prediction_scan: ScanResult,
    pub ledger: BandwidthLedger,
    pub truth: Truth,
    pub curve: Curve,
    pub curve_with_seed: Curve,
    pub port_order: Curve,
    pub oracle: Curve,
    pub feature_report: Vec<FeatureReportRow>,
    pub summary: Summary,
}

struct Sink<'a> {
    dir: Option<&'a Path>,
}

impl Sink<'_> {
    fn write(&self, name: &str, f: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<()> {
        let Some(dir) = self.dir else {
            return Ok(());
        };
        let path = dir.join(name);
        let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = std::io::BufWriter::new(file);
        f(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(&path, e))
    }

    fn records(&self, name: &str, records: &[ServiceRecord]) -> Result<()> {
        match self.dir {
            Some(dir) => write_records(dir.join(name), records),
            None => Ok(()),
        }
    }

    fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        self.write(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value)?;
            w.write_all(b"\n")
        })
    }
}

/// Runs every phase in memory.
pub fn run(cfg: &PipelineConfig, world: &World) -> Result<RunOutput> {
    run_inner(cfg, world, &Sink { dir: None })
}

/// Runs every phase, writing artifacts into `cfg.out_dir`.
pub fn run_to_dir(cfg: &PipelineConfig) -> Result<RunOutput> {
    let dir = cfg.out_path();
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let failed = dir.join("FAILED");
    if failed.exists() {
        fs::remove_file(&failed).map_err(|e| Error::io(&failed, e))?;
    }
    let result = prepare(cfg)
        .map_err(|e| e.in_phase("load"))
        .and_then(|world| run_inner(cfg, &world, &Sink { dir: Some(&dir) }));
    if let Err(e) = &result {
        fs::write(&failed, format!("{e}\n")).map_err(|e| Error::io(&failed, e))?;
    }
    result
}

fn run_inner(cfg: &PipelineConfig, world: &World, sink: &Sink) -> Result<RunOutput> {
    cfg.validate().map_err(|e| e.in_phase("config"))?;
    let corpus = &world.corpus;
    let universe = corpus.universe();
    let sim = SimulatedInternet::new(corpus);
    let extractor = Extractor::new(cfg.feature_set(), world.asn.clone());
    let units = cfg.probes_per_full_scan.unwrap_or(universe.size());

    // Phase 1: seed scan over eligible ports.
    let (split, eligible, seed_scan, seed) = (|| -> Result<_> {
        let split = SeedSplit::new(corpus, cfg.seed_fraction, cfg.rng_seed)?;
        let eligible = eligible_ports(&split, corpus, cfg.eligibility, cfg.min_ips);
        let scan = run_seed_scan(&sim, cfg.seed_fraction, &eligible, cfg.rng_seed)?;
        let seed = Corpus::new(universe, scan.found.clone())?;
        sink.records("seed_scan.jsonl", &scan.found)?;
        Ok((split, eligible, scan, seed))
    })()
    .map_err(|e| e.in_phase("seed"))?;

    // Phase 2: model.
    let model = (|| -> Result<_> {
        let opts = BuildOptions {
            min_support: cfg.min_support,
            partitions: cfg.partitions,
            built_from: format!(
                "seed_fraction={} rng_seed={} hosts={}",
                cfg.seed_fraction,
                cfg.rng_seed,
                seed.host_count()
            ),
        };
        let model = CoOccurrenceModel::build(&seed, &extractor, &opts);
        sink.write("model.jsonl", |w| {
            model.write_to(w).map_err(std::io::Error::other)
        })?;
        Ok(model)
    })()
    .map_err(|e| e.in_phase("model"))?;

    // Phase 3: priors.
    let (priors, priors_scan) = (|| -> Result<_> {
        let priors = build_priors_list(&seed, &model, &extractor, cfg.step_prefix)?;
        sink.write("priors.csv", |w| write_priors_csv(w, &priors))?;
        let scan = run_priors_scan(&sim, &priors, cfg.priors_budget);
        sink.records("priors_scan.jsonl", &scan.found)?;
        Ok((priors, scan))
    })()
    .map_err(|e| e.in_phase("priors"))?;

    // Phase 4: predictions.
    let (predictive, predictions, prediction_scan) = (|| -> Result<_> {
        let predictive = build_predictive_features(&seed, &model, &extractor, cfg.floor)?;
        let mut known = known_pairs(&priors_scan.found);
        known.extend(known_pairs(&seed_scan.found));
        let discovered = priors_scan
            .found
            .iter()
            .filter(|r| !(cfg.exclude_seed_hosts && split.is_seed(r.ip)));
        let predictions = build_prediction_list(discovered, &predictive, &extractor, &known);
        sink.write("predictions.csv", |w| write_predictions_csv(w, &predictions))?;
        let scan = run_prediction_scan(&sim, &predictions, cfg.prediction_budget);
        sink.records("prediction_scan.jsonl", &scan.found)?;
        Ok((predictive, predictions, scan))
    })()
    .map_err(|e| e.in_phase("predictions"))?;

    let mut ledger = BandwidthLedger::new(units);
    for scan in [&seed_scan, &priors_scan, &prediction_scan] {
        scan.charge(&mut ledger);
    }
    sink.json("ledger.json", &ledger).map_err(|e| e.in_phase("ledger"))?;

    // Evaluation.
    (|| -> Result<_> {
        let truth = Truth::from_corpus(corpus, &split, &eligible);
        let scans = [&priors_scan, &prediction_scan];
        let curve = scan_curve("svcpredict", &truth, &scans, units, 0);
        let curve_with_seed = scan_curve("svcpredict_with_seed", &truth, &scans, units, seed_scan.probes);
        let port_order = port_order_curve(&truth, universe.size(), units);
        let oracle = oracle_curve(&truth, units);

        let probed = prediction_scan.steps.len();
        let found_predictions: Vec<&Prediction> = predictions[..probed]
            .iter()
            .filter(|p| truth.contains(&(p.ip, p.port)) && corpus.get(p.ip, p.port).is_some())
            .collect();
        let report = feature_report(found_predictions.iter().copied());

        let last = curve.points.last();
        let run90 = probes_to_reach(&curve.points, 0.9);
        let po90 = probes_to_reach(&port_order.points, 0.9);
        let summary = Summary {
            universe_size: universe.size(),
            pseudo_removed: world.pseudo_removed,
            eligible_ports: eligible.len(),
            seed_hosts: split.seed_ips.len(),
            test_hosts: split.test_ips.len(),
            truth_services: truth.len(),
            model_entries: model.entry_count(),
            priors_entries: priors.len(),
            predictive_features: predictive.len(),
            predictions: predictions.len(),
            seed_probes: seed_scan.probes,
            priors_probes: priors_scan.probes,
            prediction_probes: prediction_scan.probes,
            fraction_services: last.map_or(0.0, |p| p.fraction_services),
            normalized_services: last.map_or(0.0, |p| p.normalized_services),
            precision: last.map_or(0.0, |p| p.precision),
            prediction_precision: (prediction_scan.probes > 0)
                .then(|| prediction_scan.responses() as f64 / prediction_scan.probes as f64),
            probes_to_90: run90,
            port_order_probes_to_90: po90,
            port_order_ratio_at_90: run90.zip(po90).map(|(g, p)| p as f64 / g.max(1) as f64),
            oracle_dominates: dominated_by_oracle(&curve.points, &truth),
        };

        let out = RunOutput {
            split,
            eligible,
            seed_scan,
            model,
            priors,
            priors_scan,
            predictive,
            predictions,
            prediction_scan,
            ledger,
            truth,
            curve,
            curve_with_seed,
            port_order,
            oracle,
            feature_report: report,
            summary,
        };
        write_evaluation_to(sink, &out, cfg.curve_step)?;
        Ok(out)
    })()
    .map_err(|e| e.in_phase("eval"))
}

/// Writes the curves, baselines, feature report and summary of `out`
/// into `dir`.
pub fn write_evaluation(out: &RunOutput, dir: &Path, curve_step: u64) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_evaluation_to(&Sink { dir: Some(dir) }, out, curve_step)
}

fn write_evaluation_to(sink: &Sink, out: &RunOutput, curve_step: u64) -> Result<()> {
    sink.write("curve.csv", |w| write_curve_csv(w, &out.curve.sampled(curve_step)))?;
    sink.write("curve_with_seed.csv", |w| {
        write_curve_csv(w, &out.curve_with_seed.sampled(curve_step))
    })?;
    sink.write("baseline_port_order.csv", |w| write_curve_csv(w, &out.port_order.points))?;
    sink.write("baseline_oracle.csv", |w| write_curve_csv(w, &out.oracle.points))?;
    sink.write("feature_report.csv", |w| write_feature_report_csv(w, &out.feature_report))?;
    sink.json("summary.json", &out.summary)
}
