use std::collections::BTreeSet;
use std::io::ErrorKind;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use svcpredict::corpus::{generate, write_records, EligibilityBasis, Subnet, SyntheticSpec};
use svcpredict::features::{rank_net_features, Extractor, FeatureKind, FeatureSet};
use svcpredict::model::{BuildOptions, CoOccurrenceModel};
use svcpredict::pipeline::{self, PipelineConfig};
use svcpredict::Error;

#[derive(Parser)]
#[command(name = "svcpredict", version, about = "Predictive service discovery over a simulated address space")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus from a population spec.
    Generate {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Replaces the rng_seed in the population spec.
        #[arg(long)]
        rng_seed: Option<u64>,
    },
    /// Run all four phases and write every artifact.
    Run(ConfigArgs),
    /// Run the pipeline and write only the evaluation outputs.
    Eval(ConfigArgs),
    /// Run the pipeline once per seed_fraction x step_prefix cell.
    Sweep {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, value_delimiter = ',')]
        seed_fractions: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        step_prefixes: Vec<u8>,
    },
    /// Print the summary and feature report of a finished run.
    Report {
        /// Artifact directory written by `run` or `eval`.
        #[arg(long, conflicts_with = "net_features")]
        dir: Option<PathBuf>,
        /// Rank candidate network kinds (/16../23 and ASN) on the config's
        /// seed instead.
        #[arg(long, requires = "config")]
        net_features: bool,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

/// A config file plus one flag per config key.
#[derive(Args)]
struct ConfigArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    synthetic: Option<PathBuf>,
    #[arg(long)]
    universe: Option<Subnet>,
    #[arg(long)]
    asn_table: Option<PathBuf>,
    #[arg(long)]
    seed_fraction: Option<f64>,
    #[arg(long)]
    step_prefix: Option<u8>,
    #[arg(long)]
    floor: Option<f64>,
    #[arg(long)]
    min_support: Option<u32>,
    #[arg(long)]
    min_ips: Option<usize>,
    #[arg(long, value_parser = parse_basis)]
    eligibility: Option<EligibilityBasis>,
    #[arg(long, value_delimiter = ',')]
    app_kinds: Option<Vec<FeatureKind>>,
    #[arg(long, value_delimiter = ',')]
    net_kinds: Option<Vec<FeatureKind>>,
    #[arg(long)]
    priors_budget: Option<u64>,
    #[arg(long)]
    prediction_budget: Option<u64>,
    #[arg(long)]
    rng_seed: Option<u64>,
    #[arg(long)]
    partitions: Option<usize>,
    #[arg(long)]
    exclude_seed_hosts: Option<bool>,
    #[arg(long)]
    probes_per_full_scan: Option<u64>,
    #[arg(long)]
    curve_step: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

fn parse_basis(s: &str) -> Result<EligibilityBasis, String> {
    match s {
        "seed" => Ok(EligibilityBasis::Seed),
        "test" => Ok(EligibilityBasis::Test),
        "all" => Ok(EligibilityBasis::All),
        _ => Err(format!("expected seed, test or all, got `{s}`")),
    }
}

impl ConfigArgs {
    fn load(&self) -> svcpredict::Result<PipelineConfig> {
        let mut cfg = PipelineConfig::load(&self.config)?;
        // Flag paths are relative to the working directory.
        let abs = |p: &PathBuf| std::path::absolute(p).unwrap_or_else(|_| p.clone());
        if let Some(p) = &self.corpus {
            cfg.corpus = Some(abs(p));
            cfg.synthetic = None;
        }
        if let Some(p) = &self.synthetic {
            cfg.synthetic = Some(abs(p));
            cfg.corpus = None;
        }
        if let Some(p) = &self.asn_table {
            cfg.asn_table = Some(abs(p));
        }
        if let Some(p) = &self.out_dir {
            cfg.out_dir = abs(p);
        }
        if let Some(v) = &self.app_kinds {
            cfg.app_kinds = Some(v.iter().copied().collect());
        }
        if let Some(v) = &self.net_kinds {
            cfg.net_kinds = v.iter().copied().collect::<BTreeSet<_>>();
        }
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = self.$field { cfg.$field = v; }
            )*};
        }
        set!(seed_fraction, step_prefix, floor, min_support, min_ips, eligibility, rng_seed,
             partitions, exclude_seed_hosts, curve_step);
        macro_rules! set_opt {
            ($($field:ident),*) => {$(
                if self.$field.is_some() { cfg.$field = self.$field; }
            )*};
        }
        set_opt!(universe, priors_budget, prediction_budget, probes_per_full_scan);
        cfg.validate()?;
        Ok(cfg)
    }
}

fn category(e: &Error) -> (&'static str, u8) {
    match e {
        Error::Phase { source, .. } => category(source),
        Error::Config(_) => ("config", 3),
        Error::Io { .. } => ("io", 4),
        Error::Parse { .. }
        | Error::Address(_)
        | Error::OutsideUniverse { .. }
        | Error::Capacity(_)
        | Error::ModelFormat(_) => ("data", 5),
        Error::UndefinedMetric(_) | Error::Unavailable(_) => ("eval", 6),
    }
}

fn describe(e: &Error) -> String {
    match e {
        Error::Io { path, source } if source.kind() == ErrorKind::NotFound => {
            format!("file not found: {}", path.display())
        }
        Error::Phase { phase, source } => format!("phase `{phase}` failed: {}", describe(source)),
        other => other.to_string(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            match err.downcast_ref::<Error>() {
                Some(e) => {
                    let (cat, code) = category(e);
                    eprintln!("error[{cat}]: {}", describe(e));
                    ExitCode::from(code)
                }
                None => {
                    eprintln!("error: {err:#}");
                    ExitCode::FAILURE
                }
            }
        }
    }
}

fn dispatch(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Generate {
            spec,
            out,
            rng_seed,
        } => {
            let mut spec = SyntheticSpec::load(&spec)?;
            if let Some(seed) = rng_seed {
                spec.rng_seed = seed;
            }
            let corpus = generate(&spec)?;
            write_records(&out, corpus.services())?;
            eprintln!(
                "wrote {} services on {} hosts to {}",
                corpus.len(),
                corpus.host_count(),
                out.display()
            );
        }
        Command::Run(args) => {
            let cfg = args.load()?;
            let out = pipeline::run_to_dir(&cfg)?;
            print_summary(&out.summary, &cfg.out_path());
        }
        Command::Eval(args) => {
            let cfg = args.load()?;
            let world = pipeline::prepare(&cfg)?;
            let out = pipeline::run(&cfg, &world)?;
            pipeline::write_evaluation(&out, &cfg.out_path(), cfg.curve_step)?;
            print_summary(&out.summary, &cfg.out_path());
        }
        Command::Sweep {
            config,
            seed_fractions,
            step_prefixes,
        } => {
            let mut cfg = config.load()?;
            if !seed_fractions.is_empty() {
                cfg.sweep.seed_fractions = seed_fractions;
            }
            if !step_prefixes.is_empty() {
                cfg.sweep.step_prefixes = step_prefixes;
            }
            let cells = pipeline::run_sweep_to_dir(&cfg)?;
            let mut failed = 0;
            for cell in &cells {
                match &cell.outcome {
                    Ok((_, s)) => println!(
                        "{}\tok\tfraction={:.4}\tnormalized={:.4}",
                        cell.label, s.fraction_services, s.normalized_services
                    ),
                    Err(e) => {
                        failed += 1;
                        println!("{}\terror\t{e}", cell.label);
                    }
                }
            }
            println!("{} cells, {failed} failed", cells.len());
        }
        Command::Report {
            dir,
            net_features,
            config,
        } => {
            if net_features {
                report_net_features(config.as_deref().expect("required by clap"))?;
            } else {
                let dir = dir.context("either --dir or --net-features is required")?;
                report_dir(&dir)?;
            }
        }
    }
    Ok(())
}

fn print_summary(s: &pipeline::Summary, dir: &Path) {
    println!("artifacts: {}", dir.display());
    println!("truth services: {} on {} eligible ports", s.truth_services, s.eligible_ports);
    println!(
        "probes: seed {} / priors {} / predictions {}",
        s.seed_probes, s.priors_probes, s.prediction_probes
    );
    println!(
        "fraction {:.4}, normalized {:.4}, precision {:.6}",
        s.fraction_services, s.normalized_services, s.precision
    );
    if let (Some(g), Some(p)) = (s.probes_to_90, s.port_order_probes_to_90) {
        println!("90% of services: {g} probes vs {p} for port order");
    }
}

fn read(path: &Path) -> svcpredict::Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn report_dir(dir: &Path) -> anyhow::Result<()> {
    if dir.join("FAILED").exists() {
        println!("run incomplete: {}", read(&dir.join("FAILED"))?.trim());
    }
    let summary: serde_json::Value = serde_json::from_str(&read(&dir.join("summary.json"))?)?;
    if let Some(map) = summary.as_object() {
        for (k, v) in map {
            println!("{k:<24} {v}");
        }
    }
    println!();
    println!("{:<14} {:<40} {:>10} {:>10}", "class", "kinds", "normalized", "services");
    for line in read(&dir.join("feature_report.csv"))?.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        if let [class, kinds, norm, share] = cols[..] {
            let f = |s: &str| s.parse::<f64>().unwrap_or(0.0) * 100.0;
            println!("{class:<14} {kinds:<40} {:>9.1}% {:>9.1}%", f(norm), f(share));
        }
    }
    Ok(())
}

fn report_net_features(config: &Path) -> anyhow::Result<()> {
    let cfg = PipelineConfig::load(config)?;
    let world = pipeline::prepare(&cfg)?;
    let split = svcpredict::corpus::SeedSplit::new(&world.corpus, cfg.seed_fraction, cfg.rng_seed)?;
    let seed = world.corpus.retain(|r| split.is_seed(r.ip));
    let features = FeatureSet {
        net_kinds: FeatureKind::net_candidates(),
        ..cfg.feature_set()
    };
    let extractor = Extractor::new(features, world.asn.clone());
    let opts = BuildOptions {
        min_support: cfg.min_support,
        partitions: cfg.partitions,
        built_from: String::new(),
    };
    let model = CoOccurrenceModel::build(&seed, &extractor, &opts);
    println!("{:<10} {:>8} {:>8}", "kind", "services", "share");
    for r in rank_net_features(&model, &seed, &extractor)? {
        println!("{:<10} {:>8} {:>7.1}%", r.kind.to_string(), r.services, r.fraction * 100.0);
    }
    Ok(())
}
