//! Local-limit rate runs: one density inversion per `h`, in parallel.

use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use sqmle_core::llt::{fit_rate, invert_density, l1_distance, CfModel, RateFit, UniformGrid};
use sqmle_core::{KernelConfig, StableKernel};

use crate::config::LltSection;
use crate::error::{Error, Result};
use crate::io;

#[derive(Debug, Clone, Serialize)]
pub struct LltReport {
    pub cf: CfModel,
    pub grid: UniformGrid,
    pub fit: RateFit,
    /// Per `h`: mass removed by clipping, and total mass of the inverted density.
    pub clip_mass: Vec<f64>,
    pub total_mass: Vec<f64>,
}

pub fn run_llt(section: &LltSection, kernel: KernelConfig, workers: usize) -> Result<LltReport> {
    let cf = section.cf.ok_or_else(|| Error::usage("config has no llt.cf"))?;
    cf.validate()?;
    let h = section.h_grid();
    // Reject a bad design before the inversions.
    fit_rate(&h, &vec![1.0; h.len()])?;
    let kernel = StableKernel::with_config(cf.beta(), kernel)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::usage(format!("cannot start worker pool: {e}")))?;
    let per_h: Vec<(f64, f64, f64)> = pool.install(|| {
        h.par_iter()
            .map(|&h| {
                let d = invert_density(&cf, h, &section.grid)?;
                Ok((l1_distance(&d, &kernel)?, d.clip_mass, d.total_mass()))
            })
            .collect::<sqmle_core::Result<Vec<_>>>()
    })?;
    let l1: Vec<f64> = per_h.iter().map(|p| p.0).collect();
    let fit = fit_rate(&h, &l1)?;
    for w in &fit.warnings {
        log::warn!("{w}");
    }
    Ok(LltReport {
        cf,
        grid: section.grid,
        fit,
        clip_mass: per_h.iter().map(|p| p.1).collect(),
        total_mass: per_h.iter().map(|p| p.2).collect(),
    })
}

/// Writes `llt.csv` (`h,l1`) and `llt.json` into `out`.
pub fn write_llt(out: &Path, report: &LltReport) -> Result<()> {
    io::create_dir(out)?;
    let path = out.join("llt.csv");
    let mut w = io::csv_writer(&path)?;
    let fail = |e: csv::Error| Error::format(&path, e);
    w.write_record(["h", "l1"]).map_err(fail)?;
    for (h, l) in report.fit.h_values.iter().zip(&report.fit.l1_values) {
        w.write_record([h.to_string(), l.to_string()]).map_err(fail)?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    io::write_json(&out.join("llt.json"), report)
}
