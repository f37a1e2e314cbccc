//! The TOML configuration shared by every subcommand, the shipped presets
//! and `section.key=value` overrides.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sqmle_core::llt::{log_spaced, CfModel, UniformGrid};
use sqmle_core::{KernelConfig, ModelSpec, NoiseSpec, OptimizerConfig, Theta};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub model: Option<ModelSection>,
    pub noise: Option<NoiseSpec>,
    pub simulation: SimulationSection,
    pub estimation: EstimationSection,
    pub kernel: KernelConfig,
    pub experiment: ExperimentSection,
    pub llt: LltSection,
}

/// Either a built-in family (`name`) or `drift`/`scale` expressions.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub name: Option<String>,
    pub drift: Option<String>,
    pub scale: Option<String>,
    /// Alpha coordinates, then gamma coordinates.
    pub theta_true: Option<Vec<f64>>,
    /// `[lower, upper]` per coordinate, in the same order.
    pub bounds: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Design {
    pub horizon: f64,
    pub n: usize,
    /// Euler steps per observation interval.
    pub fine_factor: usize,
}

impl Design {
    pub fn n_fine(&self) -> usize {
        self.n * self.fine_factor
    }

    pub fn h(&self) -> f64 {
        self.horizon / self.n as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationSection {
    pub x0: f64,
    pub designs: Vec<Design>,
}

impl Default for SimulationSection {
    fn default() -> Self {
        SimulationSection { x0: 0.0, designs: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimationSection {
    /// Stability index of the quasi-likelihood; defaults to the local index
    /// of the configured noise.
    pub beta: Option<f64>,
    /// Confidence level of the reported intervals.
    pub level: f64,
    pub optimizer: OptimizerConfig,
}

impl Default for EstimationSection {
    fn default() -> Self {
        EstimationSection { beta: None, level: 0.95, optimizer: OptimizerConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub replicates: usize,
    pub base_seed: u64,
    /// Worker threads; 0 uses every available core.
    pub workers: usize,
    /// Fill the `seconds` column of `replicates.csv` (breaks byte-identical reruns).
    pub record_timing: bool,
    /// The run fails when more than this fraction of replicates fail.
    pub max_failure_fraction: f64,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        ExperimentSection { replicates: 200, base_seed: 1, workers: 0, record_timing: false, max_failure_fraction: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LltSection {
    pub cf: Option<CfModel>,
    /// Explicit `h` values; otherwise `count` log-spaced values from `h_max` to `h_min`.
    pub h_values: Option<Vec<f64>>,
    pub h_max: f64,
    pub h_min: f64,
    pub count: usize,
    pub grid: UniformGrid,
}

impl Default for LltSection {
    fn default() -> Self {
        LltSection { cf: None, h_values: None, h_max: 1e-1, h_min: 1e-3, count: 6, grid: UniformGrid::default() }
    }
}

impl LltSection {
    pub fn h_grid(&self) -> Vec<f64> {
        self.h_values.clone().unwrap_or_else(|| log_spaced(self.h_max, self.h_min, self.count))
    }
}

pub const PRESETS: [(&str, &str); 4] = [
    ("nig-1d", include_str!("../presets/nig-1d.toml")),
    ("nig-2d", include_str!("../presets/nig-2d.toml")),
    ("stable15-1d", include_str!("../presets/stable15-1d.toml")),
    ("stable15-2d", include_str!("../presets/stable15-2d.toml")),
];

pub fn preset_text(name: &str) -> Result<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t).ok_or_else(|| {
        let names: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
        Error::usage(format!("unknown preset `{name}` (available: {})", names.join(", ")))
    })
}

/// Parses TOML text, applies `section.key=value` overrides and checks
/// every key. `origin` names the source in messages.
pub fn parse(text: &str, origin: &str, overrides: &[String]) -> Result<Config> {
    let mut table: toml::Table = text.parse().map_err(|e| Error::usage(format!("{origin}: {e}")))?;
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    let value = toml::Value::Table(table);
    serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        Error::usage(format!("{origin}: at `{path}`: {}", e.into_inner()))
    })
}

pub fn load(path: &Path, overrides: &[String]) -> Result<Config> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse(&text, &path.display().to_string(), overrides)
}

fn apply_override(table: &mut toml::Table, item: &str) -> Result<()> {
    let (key, raw) = item.split_once('=').ok_or_else(|| Error::usage(format!("override `{item}` is not key=value")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::usage(format!("override key `{key}` is malformed")));
    }
    // TOML literal if it parses as one, plain string otherwise.
    let value = format!("v = {}", raw.trim())
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry.as_table_mut().ok_or_else(|| Error::usage(format!("override `{key}`: `{p}` is not a section")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

impl Config {
    pub fn model_spec(&self) -> Result<ModelSpec> {
        let m = self.model.as_ref().ok_or_else(|| Error::usage("config has no [model] section"))?;
        let bounds: Vec<(f64, f64)> = m.bounds.iter().map(|b| (b[0], b[1])).collect();
        let spec = match (&m.name, &m.drift, &m.scale) {
            (Some(name), None, None) => ModelSpec::builtin(name, bounds, None)?,
            (None, Some(drift), Some(scale)) => ModelSpec::expression(drift, scale, bounds, None)?,
            _ => return Err(Error::usage("[model] needs either `name` or both `drift` and `scale`")),
        };
        match &m.theta_true {
            Some(flat) => {
                if flat.len() != spec.dim() {
                    return Err(Error::usage(format!("model.theta_true has {} entries, model has {}", flat.len(), spec.dim())));
                }
                let pa = spec.p_alpha();
                Ok(spec.with_theta_true(Theta::from_flat(flat, pa))?)
            }
            None => Ok(spec),
        }
    }

    pub fn noise_spec(&self) -> Result<NoiseSpec> {
        let n = self.noise.ok_or_else(|| Error::usage("config has no [noise] section"))?;
        n.validate()?;
        Ok(n)
    }

    /// Estimation index: `estimation.beta`, else the noise's local index.
    pub fn beta_fit(&self) -> Result<f64> {
        let beta = match (self.estimation.beta, self.noise) {
            (Some(b), _) => b,
            (None, Some(n)) => n.local_index(),
            (None, None) => return Err(Error::usage("set estimation.beta or a [noise] section")),
        };
        if !(1.0..2.0).contains(&beta) {
            return Err(Error::usage(format!("estimation.beta must lie in [1, 2), got {beta}")));
        }
        Ok(beta)
    }

    pub fn design(&self, index: usize) -> Result<Design> {
        let d = *self
            .simulation
            .designs
            .get(index)
            .ok_or_else(|| Error::usage(format!("simulation.designs has no entry {index}")))?;
        if d.n == 0 || d.fine_factor == 0 || !(d.horizon > 0.0 && d.horizon.is_finite()) {
            return Err(Error::usage(format!("design {index} needs horizon > 0, n >= 1 and fine_factor >= 1")));
        }
        Ok(d)
    }
}

/// Help text listing every preset and configuration key.
pub fn reference() -> String {
    let mut s = String::from("PRESETS\n");
    for (name, text) in PRESETS {
        let first = text.lines().next().unwrap_or("").trim_start_matches('#').trim();
        s.push_str(&format!("  {name:<12} {first}\n"));
    }
    s.push_str(
        "
CONFIG KEYS (TOML; override any with --set section.key=value)
  [model]       name (nonlinear-2d | nonlinear-1d | ou-const | ou-exp | scale-only)
                or drift, scale (expressions in x, alpha1.., gamma1..);
                theta_true = [alpha.., gamma..]; bounds = [[lo, hi], ..]
  [noise]       kind = \"stable\", beta | kind = \"nig\", eta
  [simulation]  x0; designs = [{ horizon, n, fine_factor }, ..]
  [estimation]  beta (defaults to the noise's local index); level;
                [estimation.optimizer] mode (simplex | quasi_newton), restarts,
                max_iter, xtol, gtol
  [kernel]      spacing, tail_cutoff, abs_tol, direct
  [experiment]  replicates, base_seed, workers, record_timing, max_failure_fraction
  [llt]         cf = { kind = \"stable\", beta } | { kind = \"tempered_stable\", beta,
                lambda_tempering } | { kind = \"gh_nig\", gh_lambda, gh_eta };
                h_values or h_max, h_min, count; [llt.grid] half_width, spacing
",
    );
    s
}
