use std::fs;
use std::io::Write;

use rayon::prelude::*;

use super::{prepare, run, PipelineConfig, Summary, World};
use crate::error::{Error, Result};
use crate::eval::{write_curve_csv, Curve};

/// One grid cell's outcome. A failing cell does not stop the others.
#[derive(Clone, Debug)]
pub struct SweepCell {
    pub label: String,
    pub seed_fraction: f64,
    pub step_prefix: u8,
    pub outcome: std::result::Result<(Curve, Summary), String>,
}

fn cell_label(seed_fraction: f64, step_prefix: u8) -> String {
    format!("seed{seed_fraction}_step{step_prefix}")
}

/// Runs the full pipeline once per `(seed_fraction, step_prefix)` cell of
/// `cfg.sweep`, in parallel, on a shared world.
pub fn run_sweep(cfg: &PipelineConfig, world: &World) -> Result<Vec<SweepCell>> {
    let cells = cfg.sweep.cells();
    if cells.is_empty() {
        return Err(Error::Config("sweep grid is empty".into()));
    }
    Ok(cells
        .into_par_iter()
        .map(|(seed_fraction, step_prefix)| {
            let mut c = cfg.clone();
            c.seed_fraction = seed_fraction;
            c.step_prefix = step_prefix;
            let label = cell_label(seed_fraction, step_prefix);
            let outcome = run(&c, world)
                .map(|out| {
                    let mut curve = out.curve;
                    curve.label = label.clone();
                    (curve, out.summary)
                })
                .map_err(|e| e.to_string());
            SweepCell {
                label,
                seed_fraction,
                step_prefix,
                outcome,
            }
        })
        .collect())
}

/// Runs the sweep and writes `sweep/cells.csv` plus one curve CSV per
/// successful cell under `cfg.out_dir`.
pub fn run_sweep_to_dir(cfg: &PipelineConfig) -> Result<Vec<SweepCell>> {
    let world = prepare(cfg)?;
    let cells = run_sweep(cfg, &world)?;
    let dir = cfg.out_path().join("sweep");
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let index = dir.join("cells.csv");
    let mut text = String::from("label,seed_fraction,step_prefix,status,fraction_services,normalized_services,probes_to_90,error\n");
    for cell in &cells {
        match &cell.outcome {
            Ok((curve, summary)) => {
                let path = dir.join(format!("{}.csv", cell.label));
                let mut f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
                write_curve_csv(&mut f, &curve.sampled(cfg.curve_step)).map_err(|e| Error::io(&path, e))?;
                text.push_str(&format!(
                    "{},{},{},ok,{},{},{},\n",
                    cell.label,
                    cell.seed_fraction,
                    cell.step_prefix,
                    summary.fraction_services,
                    summary.normalized_services,
                    summary.probes_to_90.map_or(String::new(), |p| p.to_string()),
                ));
            }
            Err(e) => text.push_str(&format!(
                "{},{},{},error,,,,\"{}\"\n",
                cell.label,
                cell.seed_fraction,
                cell.step_prefix,
                e.replace('"', "'")
            )),
        }
    }
    let mut f = fs::File::create(&index).map_err(|e| Error::io(&index, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(&index, e))?;
    Ok(cells)
}
