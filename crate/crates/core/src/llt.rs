//! Small-time local limit lab: densities of the rescaled increment
//! `h^{-1/beta} J_h` by characteristic-function inversion, their L1
//! distance to `phi_beta`, and log-log decay-rate fits.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::PI;
// Float math for no_std builds; std builds see the inherent methods.
#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::CompositeRule;
use crate::special::{gamma, log_bessel_k, stable_levy_constant};
use crate::stable::{cosine_sweep, StableKernel};

/// Frequencies beyond the point where `psi_h < -CF_CUTOFF` are dropped.
pub const CF_CUTOFF: f64 = 40.0;

/// L1 values at or below this are indistinguishable from quadrature noise.
pub const L1_FLOOR: f64 = 1e-8;

/// Rate fits drop the largest `h` when the quadratic log-log coefficient
/// exceeds this in magnitude.
pub const CURVATURE_LIMIT: f64 = 0.1;

/// Driving Lévy law described by its characteristic exponent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CfModel {
    Stable { beta: f64 },
    /// Lévy density `c_beta |z|^{-1-beta} exp(-lambda |z|)`.
    TemperedStable { beta: f64, lambda_tempering: f64 },
    /// Symmetric generalized hyperbolic law with `zeta = 1`; locally Cauchy.
    GhNig { gh_lambda: f64, gh_eta: f64 },
}

impl CfModel {
    pub fn validate(&self) -> Result<()> {
        match *self {
            CfModel::Stable { beta } if !(beta > 0.0 && beta <= 2.0) => {
                Err(Error::domain(format!("stable index must lie in (0, 2], got {beta}")))
            }
            CfModel::TemperedStable { beta, lambda_tempering } => {
                if !(beta >= 1.0 && beta < 2.0) {
                    return Err(Error::domain(format!("tempered-stable index must lie in [1, 2), got {beta}")));
                }
                if !(lambda_tempering > 0.0 && lambda_tempering.is_finite()) {
                    return Err(Error::domain(format!("tempering rate must be positive, got {lambda_tempering}")));
                }
                Ok(())
            }
            CfModel::GhNig { gh_lambda, gh_eta } => {
                if !gh_lambda.is_finite() {
                    return Err(Error::domain(format!("GH lambda must be finite, got {gh_lambda}")));
                }
                if !(gh_eta > 0.0 && gh_eta.is_finite()) {
                    return Err(Error::domain(format!("GH eta must be positive, got {gh_eta}")));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Index of the local stable limit.
    pub fn beta(&self) -> f64 {
        match *self {
            CfModel::Stable { beta } | CfModel::TemperedStable { beta, .. } => beta,
            CfModel::GhNig { .. } => 1.0,
        }
    }

    /// `psi_h(u)`, the log characteristic function of `h^{-1/beta} J_h`.
    pub fn exponent(&self, u: f64, h: f64) -> Result<f64> {
        self.validate()?;
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::domain(format!("h must be positive, got {h}")));
        }
        if !u.is_finite() {
            return Err(Error::domain(format!("u must be finite, got {u}")));
        }
        let u = u.abs();
        Ok(match *self {
            CfModel::Stable { beta } => -u.powf(beta),
            CfModel::TemperedStable { beta, lambda_tempering } => tempered_exponent(beta, lambda_tempering, u, h),
            CfModel::GhNig { gh_lambda, gh_eta } if gh_lambda == -0.5 => {
                let e = gh_eta * h;
                // eta h - sqrt(eta^2 h^2 + u^2) without cancellation.
                -u * u / (e + e.hypot(u))
            }
            CfModel::GhNig { gh_lambda, gh_eta } => gh_exponent(gh_lambda, gh_eta, u, h)?,
        })
    }
}

fn tempered_exponent(beta: f64, lambda: f64, u: f64, h: f64) -> f64 {
    if beta == 1.0 {
        let s = lambda * h;
        let r = u / s;
        (s * (r * r).ln_1p() - 2.0 * u * r.atan()) / PI
    } else {
        let s = lambda * h.powf(1.0 / beta);
        let k = 2.0 * stable_levy_constant(beta) * gamma(-beta);
        k * ((s * s + u * u).powf(0.5 * beta) * (beta * (u / s).atan()).cos() - lambda.powf(beta) * h)
    }
}

/// GH exponent through the Bessel function `K_lambda`, valid for every
/// `lambda` (including the NIG value, which [`CfModel::exponent`]
/// evaluates in closed form).
pub fn gh_exponent(lambda: f64, eta: f64, u: f64, h: f64) -> Result<f64> {
    let e = eta * h;
    let r = u / e;
    let x = e.hypot(u) / h;
    Ok(h * (-0.5 * lambda * (r * r).ln_1p() + log_bessel_k(lambda, x)? - log_bessel_k(lambda, eta)?))
}

/// Symmetric uniform abscissae `-half_width, ..., half_width`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UniformGrid {
    pub half_width: f64,
    pub spacing: f64,
}

impl Default for UniformGrid {
    fn default() -> Self {
        UniformGrid { half_width: 60.0, spacing: 1e-2 }
    }
}

impl UniformGrid {
    /// Number of spacings from 0 to `half_width`.
    pub fn half_len(&self) -> Result<usize> {
        if !(self.spacing > 0.0 && self.half_width > 0.0 && self.half_width.is_finite()) {
            return Err(Error::usage(format!("bad grid {self:?}")));
        }
        let m = (self.half_width / self.spacing).round();
        if (m * self.spacing - self.half_width).abs() > 1e-9 * self.half_width || m > 1e8 {
            return Err(Error::usage(format!("grid spacing {} does not divide {}", self.spacing, self.half_width)));
        }
        Ok(m as usize)
    }

    pub fn points(&self) -> Result<Vec<f64>> {
        let m = self.half_len()? as i64;
        Ok((-m..=m).map(|j| j as f64 * self.spacing).collect())
    }
}

/// A density tabulated on a [`UniformGrid`], with the mass it puts outside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridDensity {
    pub grid: UniformGrid,
    /// Values at `grid.points()`.
    pub values: Vec<f64>,
    /// Mass on `y < -half_width` and `y > half_width`.
    pub outer_left: f64,
    pub outer_right: f64,
    /// Mass removed by clipping negative quadrature values to zero.
    pub clip_mass: f64,
}

impl GridDensity {
    /// Tabulates `f` and takes the outer masses as given.
    pub fn from_fn(grid: UniformGrid, f: impl Fn(f64) -> f64, outer_left: f64, outer_right: f64) -> Result<Self> {
        let values = grid.points()?.into_iter().map(f).collect();
        Ok(GridDensity { grid, values, outer_left, outer_right, clip_mass: 0.0 })
    }

    /// Trapezoidal mass on the grid plus the outer masses.
    pub fn total_mass(&self) -> f64 {
        trapezoid(self.grid.spacing, self.values.iter().copied()) + self.outer_left + self.outer_right
    }
}

fn trapezoid(dy: f64, values: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut first, mut last) = (0.0, None, 0.0);
    for v in values {
        first.get_or_insert(v);
        sum += v;
        last = v;
    }
    dy * (sum - 0.5 * (first.unwrap_or(0.0) + last))
}

/// Smallest power-of-two frequency with `psi_h < -CF_CUTOFF`.
fn frequency_cutoff(cf: &CfModel, h: f64) -> Result<f64> {
    let mut u = 1.0;
    for _ in 0..80 {
        if cf.exponent(u, h)? < -CF_CUTOFF {
            return Ok(u);
        }
        u *= 2.0;
    }
    Err(Error::Numeric { what: format!("characteristic function of {cf:?} does not decay at h={h}"), residual: u })
}

/// `f_h(y) = (1/pi) int_0^inf cos(u y) exp(psi_h(u)) du` on the grid, with
/// outer masses from `P(|Y| > Y) = 1 - (2/pi) int sin(u Y)/u exp(psi_h(u)) du`.
pub fn invert_density(cf: &CfModel, h: f64, grid: &UniformGrid) -> Result<GridDensity> {
    cf.validate()?;
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::domain(format!("h must be positive, got {h}")));
    }
    let m = grid.half_len()?;
    let upper = frequency_cutoff(cf, h)?;
    let panel = (0.5 * PI / grid.half_width).min(0.25);
    let rule = CompositeRule::graded(upper, panel, 20, 44);
    let mut weighted = Vec::with_capacity(rule.nodes.len());
    for (&u, &w) in rule.nodes.iter().zip(&rule.weights) {
        weighted.push(w * cf.exponent(u, h)?.exp() / PI);
    }
    let sweep = |dy: f64| {
        let mut out = alloc::vec![0.0; m + 1];
        cosine_sweep(&rule.nodes, dy, m + 1, |i, _, c, _| (weighted[i] * c, 0.0, 0.0, 0.0), |j, t| out[j] = t.0);
        out
    };
    let right = sweep(grid.spacing);
    // The left half runs the phase rotation the other way.
    let left = sweep(-grid.spacing);
    let mut values: Vec<f64> = left.iter().rev().chain(&right[1..]).copied().collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric { what: format!("inversion of {cf:?} at h={h} is not finite"), residual: f64::NAN });
    }
    let mut clip_mass = 0.0;
    for v in values.iter_mut() {
        if *v < 0.0 {
            clip_mass -= *v * grid.spacing;
            *v = 0.0;
        }
    }
    let y = grid.half_width;
    let inner: f64 = rule.nodes.iter().zip(&weighted).map(|(&u, &w)| w * (u * y).sin() / u).sum();
    let outer = (1.0 - 2.0 * inner).max(0.0);
    Ok(GridDensity { grid: *grid, values, outer_left: 0.5 * outer, outer_right: 0.5 * outer, clip_mass })
}

/// Trapezoidal `int |f - phi_beta|` over the grid, plus the outer-mass
/// differences on each side (exact when `f - phi_beta` keeps its sign in
/// each outer region).
pub fn l1_distance(f: &GridDensity, kernel: &StableKernel) -> Result<f64> {
    let pts = f.grid.points()?;
    if pts.len() != f.values.len() {
        return Err(Error::usage(format!("{} values for {} grid points", f.values.len(), pts.len())));
    }
    let mut diffs = Vec::with_capacity(pts.len());
    for (&y, &v) in pts.iter().zip(&f.values) {
        diffs.push((v - kernel.density(y)?).abs());
    }
    let side = 0.5 * kernel.tail_mass(f.grid.half_width);
    Ok(trapezoid(f.grid.spacing, diffs.into_iter()) + (f.outer_left - side).abs() + (f.outer_right - side).abs())
}

/// `int |f - g|` for two densities on the same grid.
pub fn l1_between(f: &GridDensity, g: &GridDensity) -> Result<f64> {
    if f.grid != g.grid || f.values.len() != g.values.len() {
        return Err(Error::usage(format!("grid mismatch: {:?} vs {:?}", f.grid, g.grid)));
    }
    let inner = trapezoid(f.grid.spacing, f.values.iter().zip(&g.values).map(|(a, b)| (a - b).abs()));
    Ok(inner + (f.outer_left - g.outer_left).abs() + (f.outer_right - g.outer_right).abs())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub h_values: Vec<f64>,
    pub l1_values: Vec<f64>,
    /// Whether each pair entered the final linear fit.
    pub used: Vec<bool>,
    /// Least-squares slope and intercept of `log l1` on `log h`; `None`
    /// when fewer than two usable pairs remain.
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
    /// Quadratic coefficient of the log-log fit before any exclusion.
    pub curvature: Option<f64>,
    pub warnings: Vec<String>,
}

/// Fits the decay rate to precomputed distances.
pub fn fit_rate(h_values: &[f64], l1_values: &[f64]) -> Result<RateFit> {
    if h_values.len() != l1_values.len() {
        return Err(Error::usage(format!("{} h values but {} distances", h_values.len(), l1_values.len())));
    }
    if h_values.len() < 4 {
        return Err(Error::usage(format!("rate fit needs at least 4 h values, got {}", h_values.len())));
    }
    if h_values.iter().any(|h| !(*h > 0.0 && h.is_finite())) || h_values.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::usage("h values must be positive and strictly decreasing"));
    }
    if h_values[0] / h_values[h_values.len() - 1] < 100.0 * (1.0 - 1e-12) {
        return Err(Error::usage("h values must span at least two decades"));
    }
    if l1_values.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
        return Err(Error::usage("L1 distances must be finite and nonnegative"));
    }
    let mut warnings = Vec::new();
    let mut used: Vec<bool> = l1_values.iter().map(|&v| v > L1_FLOOR).collect();
    for (h, v) in h_values.iter().zip(l1_values).filter(|(_, v)| **v <= L1_FLOOR) {
        warnings.push(format!("h={h}: L1 distance {v:e} is at the quadrature floor; excluded"));
    }
    let points = |used: &[bool]| -> Vec<(f64, f64)> {
        h_values.iter().zip(l1_values).zip(used).filter(|(_, u)| **u).map(|((h, v), _)| (h.ln(), v.ln())).collect()
    };
    let mut curvature = None;
    let pts = points(&used);
    if pts.len() >= 4 {
        let c = quadratic_coefficient(&pts);
        curvature = c;
        if c.is_some_and(|c| c.abs() > CURVATURE_LIMIT) {
            if let Some(first) = used.iter().position(|u| *u) {
                used[first] = false;
                warnings.push(format!("log-log curvature {:.3} exceeds {CURVATURE_LIMIT}; dropped h={}", c.unwrap(), h_values[first]));
            }
        }
    }
    let (slope, intercept) = match linear_fit(&points(&used)) {
        Some((s, i)) => (Some(s), Some(i)),
        None => {
            warnings.push(String::from("fewer than two usable distances; slope undefined"));
            (None, None)
        }
    };
    Ok(RateFit { h_values: h_values.to_vec(), l1_values: l1_values.to_vec(), used, slope, intercept, curvature, warnings })
}

fn linear_fit(pts: &[(f64, f64)]) -> Option<(f64, f64)> {
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if !(sxx > 0.0) {
        return None;
    }
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

/// Quadratic coefficient of the least-squares fit `y = a + b x + c x^2`.
fn quadratic_coefficient(pts: &[(f64, f64)]) -> Option<f64> {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let a = nalgebra::DMatrix::from_fn(pts.len(), 3, |i, j| (pts[i].0 - mx).powi(j as i32));
    let b = nalgebra::DVector::from_iterator(pts.len(), pts.iter().map(|p| p.1));
    let sol = (a.transpose() * &a).cholesky()?.solve(&(a.transpose() * b));
    Some(sol[2])
}

/// Inverts `cf` at every `h` and fits the L1 decay rate against `kernel`.
pub fn rate_fit(cf: &CfModel, kernel: &StableKernel, h_values: &[f64], grid: &UniformGrid) -> Result<RateFit> {
    if cf.beta() != kernel.beta() {
        return Err(Error::usage(format!("kernel index {} does not match the driver's local index {}", kernel.beta(), cf.beta())));
    }
    // Validate the design before spending time on inversions.
    fit_rate(h_values, &alloc::vec![1.0; h_values.len()])?;
    let mut l1 = Vec::with_capacity(h_values.len());
    for &h in h_values {
        l1.push(l1_distance(&invert_density(cf, h, grid)?, kernel)?);
    }
    fit_rate(h_values, &l1)
}

/// `count` log-spaced values from `hi` down to `lo`.
pub fn log_spaced(hi: f64, lo: f64, count: usize) -> Vec<f64> {
    if count < 2 {
        return alloc::vec![hi; count];
    }
    let (a, b) = (hi.ln(), lo.ln());
    (0..count).map(|k| (a + (b - a) * k as f64 / (count - 1) as f64).exp()).collect()
}
