//! Monte Carlo driver: simulate, fit and Studentize replicate paths, then
//! aggregate per design.

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sqmle_core::inference::studentize;
use sqmle_core::sim::simulate_fine;
use sqmle_core::sqlik::fit;
use sqmle_core::{KernelConfig, ModelSpec, NoiseSpec, OptimizerConfig, RngStream, StableKernel};

use crate::config::{Config, Design};
use crate::error::{Error, Result};
use crate::io;

pub const HIST_BINS: usize = 50;
pub const HIST_RANGE: (f64, f64) = (-4.0, 4.0);

#[derive(Debug, Clone)]
pub struct Experiment {
    pub model: ModelSpec,
    pub noise: NoiseSpec,
    pub x0: f64,
    pub designs: Vec<Design>,
    pub beta_fit: f64,
    pub level: f64,
    pub optimizer: OptimizerConfig,
    pub kernel: KernelConfig,
    pub replicates: usize,
    pub base_seed: u64,
    pub workers: usize,
    pub record_timing: bool,
    pub max_failure_fraction: f64,
}

impl Experiment {
    pub fn from_config(c: &Config) -> Result<Experiment> {
        let model = c.model_spec()?;
        if model.theta_true().is_none() {
            return Err(Error::usage("experiments need model.theta_true"));
        }
        if c.simulation.designs.is_empty() {
            return Err(Error::usage("simulation.designs is empty"));
        }
        let designs = (0..c.simulation.designs.len()).map(|i| c.design(i)).collect::<Result<Vec<_>>>()?;
        let e = &c.experiment;
        if e.replicates == 0 {
            return Err(Error::usage("experiment.replicates must be at least 1"));
        }
        if !(0.0..=1.0).contains(&e.max_failure_fraction) {
            return Err(Error::usage("experiment.max_failure_fraction must lie in [0, 1]"));
        }
        Ok(Experiment {
            model,
            noise: c.noise_spec()?,
            x0: c.simulation.x0,
            designs,
            beta_fit: c.beta_fit()?,
            level: c.estimation.level,
            optimizer: c.estimation.optimizer.clone(),
            kernel: c.kernel,
            replicates: e.replicates,
            base_seed: e.base_seed,
            workers: e.workers,
            record_timing: e.record_timing,
            max_failure_fraction: e.max_failure_fraction,
        })
    }

    pub fn coordinate_names(&self) -> Vec<String> {
        coordinate_names(self.model.p_alpha(), self.model.p_gamma())
    }
}

pub fn coordinate_names(p_alpha: usize, p_gamma: usize) -> Vec<String> {
    (1..=p_alpha).map(|k| format!("alpha{k}")).chain((1..=p_gamma).map(|k| format!("gamma{k}"))).collect()
}

/// SplitMix64 finalizer, used to derive independent seeds from the base seed.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the noise for path group `g`; the first group uses the base seed.
pub fn path_seed(base_seed: u64, group: usize) -> u64 {
    if group == 0 {
        base_seed
    } else {
        mix(base_seed ^ mix(2 * group as u64))
    }
}

/// Seed of the optimizer starting points for design `d`.
pub fn start_seed(base_seed: u64, design: usize) -> u64 {
    mix(base_seed ^ mix(2 * design as u64 + 1))
}

/// Stream of replicate `rep`.
pub fn stream_id(base_seed: u64, rep: usize) -> u64 {
    base_seed ^ rep as u64
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateRecord {
    pub rep: usize,
    pub design: usize,
    /// NaN when the replicate failed.
    pub theta_hat: Vec<f64>,
    pub z: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub converged: bool,
    pub seconds: Option<f64>,
}

impl ReplicateRecord {
    fn failed(rep: usize, design: usize, dim: usize) -> Self {
        let nan = vec![f64::NAN; dim];
        ReplicateRecord {
            rep,
            design,
            theta_hat: nan.clone(),
            z: nan.clone(),
            lower: nan.clone(),
            upper: nan,
            converged: false,
            seconds: None,
        }
    }
}

/// Designs sharing `(horizon, n_fine)` are thinned from one path.
fn path_groups(designs: &[Design]) -> Vec<Vec<usize>> {
    let mut groups: Vec<(f64, usize, Vec<usize>)> = Vec::new();
    for (i, d) in designs.iter().enumerate() {
        match groups.iter_mut().find(|g| g.0 == d.horizon && g.1 == d.n_fine()) {
            Some(g) => g.2.push(i),
            None => groups.push((d.horizon, d.n_fine(), vec![i])),
        }
    }
    groups.into_iter().map(|g| g.2).collect()
}

fn run_one(exp: &Experiment, kernel: &StableKernel, groups: &[Vec<usize>], rep: usize) -> Vec<ReplicateRecord> {
    let dim = exp.model.dim();
    let truth = exp.model.theta_true();
    let stream = stream_id(exp.base_seed, rep);
    let mut out = Vec::new();
    for (g, members) in groups.iter().enumerate() {
        let first = exp.designs[members[0]];
        let mut rng = RngStream::new(path_seed(exp.base_seed, g), stream);
        let path = match simulate_fine(&exp.model, &exp.noise, first.horizon, first.n_fine(), exp.x0, &mut rng) {
            Ok(p) => p,
            Err(e) => {
                log::warn!("replicate {rep}: simulation failed: {e}");
                out.extend(members.iter().map(|&d| ReplicateRecord::failed(rep, d, dim)));
                continue;
            }
        };
        for &d in members {
            let started = Instant::now();
            let mut rng = RngStream::new(start_seed(exp.base_seed, d), stream);
            let result = path.thin(exp.designs[d].fine_factor).and_then(|obs| {
                let f = fit(&obs, &exp.model, exp.beta_fit, kernel, &exp.optimizer, &mut rng)?;
                let report = studentize(&obs, &exp.model, &f.theta_hat, truth, kernel, exp.level)?;
                Ok((f, report))
            });
            let mut rec = match result {
                Ok((f, r)) => {
                    let z: Vec<f64> = r.z_alpha.iter().chain(&r.z_gamma).copied().collect();
                    ReplicateRecord {
                        rep,
                        design: d,
                        converged: f.converged && z.iter().all(|v| v.is_finite()),
                        theta_hat: f.theta_hat.to_flat(),
                        z,
                        lower: r.ci.iter().map(|c| c.lower).collect(),
                        upper: r.ci.iter().map(|c| c.upper).collect(),
                        seconds: None,
                    }
                }
                Err(e) => {
                    log::warn!("replicate {rep}, design {d}: {e}");
                    ReplicateRecord::failed(rep, d, dim)
                }
            };
            if exp.record_timing {
                rec.seconds = Some(started.elapsed().as_secs_f64());
            }
            out.push(rec);
        }
    }
    out
}

/// Runs every replicate on a pool of `exp.workers` threads; rows come back
/// sorted by `(design, rep)`.
pub fn run_replicates(exp: &Experiment) -> Result<Vec<ReplicateRecord>> {
    let kernel = StableKernel::with_config(exp.beta_fit, exp.kernel)?;
    let groups = path_groups(&exp.designs);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(exp.workers)
        .build()
        .map_err(|e| Error::usage(format!("cannot start worker pool: {e}")))?;
    let mut rows: Vec<ReplicateRecord> = pool.install(|| {
        (0..exp.replicates).into_par_iter().flat_map_iter(|rep| run_one(exp, &kernel, &groups, rep)).collect()
    });
    rows.sort_by_key(|r| (r.design, r.rep));
    Ok(rows)
}

/// Type-7 sample quantile of sorted data.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = (sorted.len() - 1) as f64 * p;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

fn sorted(v: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = v.collect();
    v.sort_by(f64::total_cmp);
    v
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiveNumber {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl FiveNumber {
    fn of(sorted: &[f64]) -> Option<FiveNumber> {
        if sorted.is_empty() {
            return None;
        }
        Some(FiveNumber {
            min: sorted[0],
            q1: quantile(sorted, 0.25),
            median: quantile(sorted, 0.5),
            q3: quantile(sorted, 0.75),
            max: sorted[sorted.len() - 1],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoordinateSummary {
    pub name: String,
    pub truth: Option<f64>,
    /// Of the estimates.
    pub median: Option<f64>,
    pub iqr: Option<f64>,
    pub median_abs_error: Option<f64>,
    pub z_mean: Option<f64>,
    /// Sample standard deviation (divisor `m - 1`; 0 for a single row).
    pub z_sd: Option<f64>,
    /// Fraction of intervals containing the truth.
    pub coverage: Option<f64>,
    /// Studentized values outside the histogram range.
    pub z_outside: usize,
    pub five_number: Option<FiveNumber>,
    pub histogram: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSummary {
    pub design: usize,
    pub setting: Option<Design>,
    pub rows: usize,
    /// Converged rows entering the statistics.
    pub used: usize,
    pub non_converged: usize,
    pub coordinates: Vec<CoordinateSummary>,
}

/// Per-design aggregation of converged rows. `truth` enables errors and
/// coverage.
pub fn summarize(records: &[ReplicateRecord], names: &[String], truth: Option<&[f64]>) -> Result<Vec<DesignSummary>> {
    if records.is_empty() {
        return Err(Error::usage("no replicate rows to summarize"));
    }
    if let Some(t) = truth {
        if t.len() != names.len() {
            return Err(Error::usage(format!("{} true values for {} coordinates", t.len(), names.len())));
        }
    }
    let mut designs: Vec<usize> = records.iter().map(|r| r.design).collect();
    designs.sort_unstable();
    designs.dedup();
    let mut out = Vec::new();
    for d in designs {
        let rows: Vec<&ReplicateRecord> = records.iter().filter(|r| r.design == d).collect();
        let used: Vec<&ReplicateRecord> = rows.iter().copied().filter(|r| r.converged).collect();
        let mut coords = Vec::new();
        for (k, name) in names.iter().enumerate() {
            let est = sorted(used.iter().map(|r| r.theta_hat[k]));
            let tr = truth.map(|t| t[k]);
            let five = FiveNumber::of(&est);
            let mae = tr.filter(|_| !est.is_empty()).map(|t| quantile(&sorted(est.iter().map(|v| (v - t).abs())), 0.5));
            let zs: Vec<f64> = used.iter().filter_map(|r| r.z.get(k).copied()).filter(|v| v.is_finite()).collect();
            let (z_mean, z_sd) = if zs.is_empty() {
                (None, None)
            } else {
                let m = zs.len() as f64;
                let mean = zs.iter().sum::<f64>() / m;
                let var = if zs.len() > 1 { zs.iter().map(|z| (z - mean).powi(2)).sum::<f64>() / (m - 1.0) } else { 0.0 };
                (Some(mean), Some(var.sqrt()))
            };
            let coverage = tr.filter(|_| !used.is_empty()).map(|t| {
                used.iter().filter(|r| r.lower[k] <= t && t <= r.upper[k]).count() as f64 / used.len() as f64
            });
            let mut histogram = vec![0usize; HIST_BINS];
            let mut z_outside = 0;
            let width = (HIST_RANGE.1 - HIST_RANGE.0) / HIST_BINS as f64;
            for &z in &zs {
                if (HIST_RANGE.0..=HIST_RANGE.1).contains(&z) {
                    histogram[(((z - HIST_RANGE.0) / width) as usize).min(HIST_BINS - 1)] += 1;
                } else {
                    z_outside += 1;
                }
            }
            coords.push(CoordinateSummary {
                name: name.clone(),
                truth: tr,
                median: five.as_ref().map(|f| f.median),
                iqr: five.as_ref().map(|f| f.q3 - f.q1),
                median_abs_error: mae,
                z_mean,
                z_sd,
                coverage,
                z_outside,
                five_number: five,
                histogram,
            });
        }
        out.push(DesignSummary {
            design: d,
            setting: None,
            rows: rows.len(),
            used: used.len(),
            non_converged: rows.len() - used.len(),
            coordinates: coords,
        });
    }
    Ok(out)
}

fn field(v: f64) -> String {
    if v.is_finite() {
        v.to_string()
    } else {
        String::new()
    }
}

pub fn write_replicates(path: &Path, names: &[String], rows: &[ReplicateRecord]) -> Result<()> {
    let mut w = io::csv_writer(path)?;
    let fail = |e: csv::Error| Error::format(path, e);
    let mut header = vec!["rep".to_string(), "design".to_string()];
    for prefix in ["hat", "z", "lower", "upper"] {
        header.extend(names.iter().map(|n| if prefix == "hat" { format!("{n}_hat") } else { format!("{prefix}_{n}") }));
    }
    header.extend(["converged".to_string(), "seconds".to_string()]);
    w.write_record(&header).map_err(fail)?;
    for r in rows {
        let mut rec = vec![r.rep.to_string(), r.design.to_string()];
        for vals in [&r.theta_hat, &r.z, &r.lower, &r.upper] {
            // Rows without a reference value have no z entries.
            rec.extend((0..names.len()).map(|k| vals.get(k).map_or(String::new(), |v| field(*v))));
        }
        rec.push(r.converged.to_string());
        rec.push(r.seconds.map_or(String::new(), |s| format!("{s:.6}")));
        w.write_record(&rec).map_err(fail)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads `replicates.csv`; returns the coordinate names and the rows.
pub fn read_replicates(path: &Path) -> Result<(Vec<String>, Vec<ReplicateRecord>)> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::format(path, e))?;
    let headers = r.headers().map_err(|e| Error::format(path, e))?.clone();
    let names: Vec<String> = headers.iter().filter_map(|h| h.strip_suffix("_hat")).map(String::from).collect();
    let p = names.len();
    if headers.len() != 4 + 4 * p || &headers[0] != "rep" || &headers[1] != "design" {
        return Err(Error::format(path, "unexpected replicate header"));
    }
    let mut rows = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::format(path, e))?;
        let bad = |what: &str| Error::format(path, format!("row {}: bad {what}", line + 2));
        let int = |i: usize| rec[i].trim().parse::<usize>().map_err(|_| bad(&headers[i]));
        let num = |i: usize| -> Result<f64> {
            let s = rec[i].trim();
            if s.is_empty() {
                Ok(f64::NAN)
            } else {
                s.parse().map_err(|_| bad(&headers[i]))
            }
        };
        let block = |b: usize| (0..p).map(|k| num(2 + b * p + k)).collect::<Result<Vec<f64>>>();
        let converged = rec[2 + 4 * p].trim().parse::<bool>().map_err(|_| bad("converged"))?;
        let secs = rec[3 + 4 * p].trim();
        rows.push(ReplicateRecord {
            rep: int(0)?,
            design: int(1)?,
            theta_hat: block(0)?,
            z: block(1)?,
            lower: block(2)?,
            upper: block(3)?,
            converged,
            seconds: if secs.is_empty() { None } else { Some(secs.parse().map_err(|_| bad("seconds"))?) },
        });
    }
    Ok((names, rows))
}

fn write_histograms(path: &Path, summaries: &[DesignSummary]) -> Result<()> {
    let mut w = io::csv_writer(path)?;
    let fail = |e: csv::Error| Error::format(path, e);
    w.write_record(["design", "coordinate", "bin", "lower", "upper", "count"]).map_err(fail)?;
    let width = (HIST_RANGE.1 - HIST_RANGE.0) / HIST_BINS as f64;
    for s in summaries {
        for c in &s.coordinates {
            for (b, count) in c.histogram.iter().enumerate() {
                let lo = HIST_RANGE.0 + b as f64 * width;
                let rec = [s.design.to_string(), c.name.clone(), b.to_string(), lo.to_string(), (lo + width).to_string(), count.to_string()];
                w.write_record(&rec).map_err(fail)?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_boxplots(path: &Path, summaries: &[DesignSummary]) -> Result<()> {
    let mut w = io::csv_writer(path)?;
    let fail = |e: csv::Error| Error::format(path, e);
    w.write_record(["design", "coordinate", "min", "q1", "median", "q3", "max"]).map_err(fail)?;
    for s in summaries {
        for c in &s.coordinates {
            let mut rec = vec![s.design.to_string(), c.name.clone()];
            match &c.five_number {
                Some(f) => rec.extend([f.min, f.q1, f.median, f.q3, f.max].iter().map(|v| v.to_string())),
                None => rec.extend(std::iter::repeat_n(String::new(), 5)),
            }
            w.write_record(&rec).map_err(fail)?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub model: String,
    pub theta_true: Vec<f64>,
    pub noise: NoiseSpec,
    pub beta_fit: f64,
    pub level: f64,
    pub replicates: usize,
    pub base_seed: u64,
    pub failed: usize,
    pub designs: Vec<DesignSummary>,
}

/// Runs the experiment and writes `replicates.csv`, `summary.json`,
/// `histograms.csv` and `boxplots.csv` into `out`. Fails after writing when
/// too many replicates failed.
pub fn run_experiment(exp: &Experiment, out: &Path) -> Result<RunSummary> {
    io::create_dir(out)?;
    let names = exp.coordinate_names();
    let truth = exp.model.theta_true().map(|t| t.to_flat()).unwrap_or_default();
    let rows = run_replicates(exp)?;
    write_replicates(&out.join("replicates.csv"), &names, &rows)?;
    let mut designs = summarize(&rows, &names, Some(&truth))?;
    for s in designs.iter_mut() {
        s.setting = exp.designs.get(s.design).copied();
    }
    write_histograms(&out.join("histograms.csv"), &designs)?;
    write_boxplots(&out.join("boxplots.csv"), &designs)?;
    let failed = rows.iter().filter(|r| !r.converged).count();
    let summary = RunSummary {
        model: exp.model.name().to_string(),
        theta_true: truth,
        noise: exp.noise,
        beta_fit: exp.beta_fit,
        level: exp.level,
        replicates: exp.replicates,
        base_seed: exp.base_seed,
        failed,
        designs,
    };
    io::write_json(&out.join("summary.json"), &summary)?;
    if failed as f64 > exp.max_failure_fraction * rows.len() as f64 {
        return Err(Error::Replicates { failed, total: rows.len(), limit: 100.0 * exp.max_failure_fraction });
    }
    Ok(summary)
}
