//! Standard symmetric beta-stable density `phi_beta` (characteristic
//! function `exp(-|u|^beta)`), its score functions and information
//! constants.
//!
//! For `|y|` up to the tail cutoff the density and its first three
//! derivatives are tabulated once from cosine/sine transforms and read back
//! through cubic Hermite interpolation. Beyond the cutoff the convergent
//! part of the asymptotic tail series is used. `beta = 1` is the Cauchy law
//! and is always evaluated in closed form.

// Float math for no_std builds; std builds see the inherent methods.
#[allow(unused_imports)]
use num_traits::Float;
use alloc::vec::Vec;
use core::f64::consts::PI;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::{self, CompositeRule};
use crate::special::stable_levy_constant;

/// Numerical configuration of a [`StableKernel`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelConfig {
    /// Table spacing.
    pub spacing: f64,
    /// `|y|` beyond which the tail series replaces the table.
    pub tail_cutoff: f64,
    /// Absolute tolerance of adaptive quadratures.
    pub abs_tol: f64,
    /// Evaluate every point by adaptive quadrature instead of the table.
    pub direct: bool,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig { spacing: 1e-3, tail_cutoff: 15.0, abs_tol: 1e-10, direct: false }
    }
}

/// `phi`, `phi'`, `phi''` at one abscissa.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityDerivs {
    pub phi: f64,
    pub dphi: f64,
    pub ddphi: f64,
}

impl DensityDerivs {
    /// `g = phi' / phi`.
    pub fn g(&self) -> f64 {
        self.dphi / self.phi
    }

    /// `dg = phi'' / phi - g^2`.
    pub fn dg(&self) -> f64 {
        let g = self.g();
        self.ddphi / self.phi - g * g
    }
}

/// Information constants `C_alpha = int g^2 phi` and `C_gamma = int k^2 phi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InfoConstants {
    pub c_alpha: f64,
    pub c_gamma: f64,
}

#[derive(Debug, Clone)]
struct Table {
    // Values at y_i = i * spacing, i = 0..len; the density is even so only
    // the half line is stored.
    phi: Vec<f64>,
    d1: Vec<f64>,
    d2: Vec<f64>,
    d3: Vec<f64>,
}

/// Standard symmetric beta-stable density with precomputed tables.
#[derive(Debug, Clone)]
pub struct StableKernel {
    beta: f64,
    config: KernelConfig,
    table: Option<Table>,
    // Tail series phi(y) ~ sum_k tail[k] * |y|^{-(k+1) beta - 1}.
    tail: Vec<f64>,
    upper: f64,
}

/// `e^{-u^beta}` falls below `e^{-40}` beyond this frequency.
fn frequency_cutoff(beta: f64) -> f64 {
    40f64.powf(1.0 / beta)
}

impl StableKernel {
    pub fn new(beta: f64) -> Result<Self> {
        Self::with_config(beta, KernelConfig::default())
    }

    pub fn with_config(beta: f64, config: KernelConfig) -> Result<Self> {
        if !(1.0..2.0).contains(&beta) {
            return Err(Error::domain(alloc::format!("stability index must lie in [1, 2), got {beta}")));
        }
        if !(config.spacing > 0.0) || !(config.tail_cutoff > 0.0) || !(config.abs_tol > 0.0) {
            return Err(Error::usage("kernel spacing, tail_cutoff and abs_tol must be positive"));
        }
        let mut kernel = StableKernel {
            beta,
            config,
            table: None,
            tail: Vec::new(),
            upper: frequency_cutoff(beta),
        };
        if beta == 1.0 {
            return Ok(kernel);
        }
        kernel.tail = tail_coefficients(beta, config.tail_cutoff)?;
        if !config.direct {
            kernel.table = Some(build_table(beta, &config, kernel.upper));
        }
        Ok(kernel)
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn config(&self) -> &KernelConfig {
        &self.config
    }

    pub fn tail_cutoff(&self) -> f64 {
        self.config.tail_cutoff
    }

    pub fn is_cauchy(&self) -> bool {
        self.beta == 1.0
    }

    /// Tabulation abscissae (non-negative half; the density is even).
    pub fn grid(&self) -> Vec<f64> {
        match &self.table {
            Some(t) => (0..t.phi.len()).map(|i| i as f64 * self.config.spacing).collect(),
            None => Vec::new(),
        }
    }

    /// Tabulated `(phi, phi', phi'')` on [`grid`](Self::grid).
    pub fn tables(&self) -> Option<(&[f64], &[f64], &[f64])> {
        self.table.as_ref().map(|t| (&t.phi[..], &t.d1[..], &t.d2[..]))
    }

    fn check(y: f64) -> Result<()> {
        if y.is_finite() {
            Ok(())
        } else {
            Err(Error::domain(alloc::format!("stable kernel evaluated at non-finite {y}")))
        }
    }

    /// `phi, phi', phi''` at `y`.
    pub fn derivs(&self, y: f64) -> Result<DensityDerivs> {
        Self::check(y)?;
        Ok(self.derivs_unchecked(y))
    }

    pub(crate) fn derivs_unchecked(&self, y: f64) -> DensityDerivs {
        if self.beta == 1.0 {
            let q = 1.0 + y * y;
            return DensityDerivs {
                phi: 1.0 / (PI * q),
                dphi: -2.0 * y / (PI * q * q),
                ddphi: (6.0 * y * y - 2.0) / (PI * q * q * q),
            };
        }
        let a = y.abs();
        let s = if y < 0.0 { -1.0 } else { 1.0 };
        let (phi, d1, d2) = if a > self.config.tail_cutoff {
            self.tail_series(a)
        } else if let Some(t) = &self.table {
            self.interpolate(t, a)
        } else {
            self.direct(a)
        };
        DensityDerivs { phi, dphi: s * d1, ddphi: d2 }
    }

    /// `phi` alone at a finite `y`; the likelihood hot path.
    pub(crate) fn phi_unchecked(&self, y: f64) -> f64 {
        let a = y.abs();
        match &self.table {
            Some(t) if a <= self.config.tail_cutoff => {
                let dy = self.config.spacing;
                let pos = a / dy;
                let i = (pos.floor() as usize).min(t.phi.len() - 2);
                let x = pos - i as f64;
                let x2 = x * x;
                let x3 = x2 * x;
                (2.0 * x3 - 3.0 * x2 + 1.0) * t.phi[i]
                    + (x3 - 2.0 * x2 + x) * dy * t.d1[i]
                    + (3.0 * x2 - 2.0 * x3) * t.phi[i + 1]
                    + (x3 - x2) * dy * t.d1[i + 1]
            }
            _ => self.derivs_unchecked(y).phi,
        }
    }

    fn tail_series(&self, a: f64) -> (f64, f64, f64) {
        let (mut p, mut d1, mut d2) = (0.0, 0.0, 0.0);
        let lg = a.ln();
        for (k, &c) in self.tail.iter().enumerate() {
            let e = (k as f64 + 1.0) * self.beta + 1.0;
            let t = c * (-e * lg).exp();
            p += t;
            d1 -= e * t / a;
            d2 += e * (e + 1.0) * t / (a * a);
        }
        (p, d1, d2)
    }

    fn interpolate(&self, t: &Table, a: f64) -> (f64, f64, f64) {
        let dy = self.config.spacing;
        let last = t.phi.len() - 1;
        let pos = a / dy;
        let i = (pos.floor() as usize).min(last - 1);
        let x = pos - i as f64;
        let x2 = x * x;
        let x3 = x2 * x;
        let h00 = 2.0 * x3 - 3.0 * x2 + 1.0;
        let h10 = x3 - 2.0 * x2 + x;
        let h01 = -2.0 * x3 + 3.0 * x2;
        let h11 = x3 - x2;
        let herm = |f: &[f64], df: &[f64]| h00 * f[i] + h10 * dy * df[i] + h01 * f[i + 1] + h11 * dy * df[i + 1];
        (herm(&t.phi, &t.d1), herm(&t.d1, &t.d2), herm(&t.d2, &t.d3))
    }

    /// Direct adaptive evaluation of the inversion integrals at `a >= 0`.
    fn direct(&self, a: f64) -> (f64, f64, f64) {
        let b = self.beta;
        let tol = self.config.abs_tol * PI;
        let run = |f: &dyn Fn(f64) -> f64| {
            quad::adaptive(f, 0.0, self.upper, tol, 20_000).map(|r| r.value).unwrap_or(f64::NAN) / PI
        };
        let phi = run(&|u: f64| (-u.powf(b)).exp() * (u * a).cos());
        let d1 = -run(&|u: f64| u * (-u.powf(b)).exp() * (u * a).sin());
        let d2 = -run(&|u: f64| u * u * (-u.powf(b)).exp() * (u * a).cos());
        (phi, d1, d2)
    }

    /// Adaptive-quadrature values regardless of the table, for validation.
    pub fn direct_derivs(&self, y: f64) -> Result<DensityDerivs> {
        Self::check(y)?;
        if self.beta == 1.0 {
            return Ok(self.derivs_unchecked(y));
        }
        let (phi, d1, d2) = self.direct(y.abs());
        let s = if y < 0.0 { -1.0 } else { 1.0 };
        Ok(DensityDerivs { phi, dphi: s * d1, ddphi: d2 })
    }

    /// `phi_beta(y)`.
    pub fn density(&self, y: f64) -> Result<f64> {
        Ok(self.derivs(y)?.phi)
    }

    pub fn log_density(&self, y: f64) -> Result<f64> {
        Self::check(y)?;
        if self.beta == 1.0 {
            return Ok(-PI.ln() - y.mul_add(y, 1.0).ln());
        }
        Ok(self.derivs_unchecked(y).phi.ln())
    }

    /// `g_beta(y) = d/dy log phi_beta(y)`.
    pub fn g(&self, y: f64) -> Result<f64> {
        Ok(self.derivs(y)?.g())
    }

    /// `k_beta(y) = 1 + y g_beta(y)`.
    pub fn k(&self, y: f64) -> Result<f64> {
        Ok(1.0 + y * self.g(y)?)
    }

    /// `d g_beta / dy`.
    pub fn dg(&self, y: f64) -> Result<f64> {
        Ok(self.derivs(y)?.dg())
    }

    /// Mass of `phi_beta` on `|y| > cutoff` (both tails).
    pub fn tail_mass(&self, cutoff: f64) -> f64 {
        if self.beta == 1.0 {
            return 1.0 - 2.0 * cutoff.atan() / PI;
        }
        if cutoff >= self.config.tail_cutoff {
            let lg = cutoff.ln();
            2.0 * self
                .tail
                .iter()
                .enumerate()
                .map(|(k, &c)| {
                    let e = (k as f64 + 1.0) * self.beta;
                    c * (-e * lg).exp() / e
                })
                .sum::<f64>()
        } else {
            let inner = quad::adaptive(|y| self.derivs_unchecked(y).phi, 0.0, cutoff, 1e-13, 4000)
                .map(|r| r.value)
                .unwrap_or(f64::NAN);
            1.0 - 2.0 * inner
        }
    }

    /// `int f(y) phi(y) dy` over the real line for an even integrand built
    /// from the kernel values; returns `(value, error estimate)`.
    fn integrate_even(&self, f: impl Fn(f64, &DensityDerivs) -> f64) -> Result<(f64, f64)> {
        let cut = self.config.tail_cutoff;
        let tol = self.config.abs_tol;
        let h = |y: f64| {
            let d = self.derivs_unchecked(y);
            f(y, &d)
        };
        let mut value = 0.0;
        let mut error = 0.0;
        // Unit pieces keep the adaptive refinement local to each region.
        let pieces = cut.ceil() as usize;
        for i in 0..pieces {
            let lo = i as f64 * cut / pieces as f64;
            let hi = (i + 1) as f64 * cut / pieces as f64;
            let r = quad::adaptive(h, lo, hi, tol / (2.0 * pieces as f64), 10_000)?;
            value += r.value;
            error += r.error;
        }
        let r = quad::adaptive_to_infinity(h, cut, tol / 2.0, 10_000)?;
        value += r.value;
        error += r.error;
        Ok((2.0 * value, 2.0 * error))
    }

    /// `C_alpha(beta)` and `C_gamma(beta)` by quadrature.
    pub fn info_constants(&self) -> Result<InfoConstants> {
        if self.beta == 1.0 {
            // Closed forms for the Cauchy law.
            return Ok(InfoConstants { c_alpha: 0.5, c_gamma: 0.5 });
        }
        let (c_alpha, _) = self.integrate_even(|_, d| d.dphi * d.dphi / d.phi)?;
        let (c_gamma, _) = self.integrate_even(|y, d| {
            let k = d.phi + y * d.dphi;
            k * k / d.phi
        })?;
        if !(c_alpha > 0.0 && c_gamma > 0.0 && c_alpha.is_finite() && c_gamma.is_finite()) {
            return Err(Error::Numeric { what: "information constants not positive".into(), residual: f64::NAN });
        }
        Ok(InfoConstants { c_alpha, c_gamma })
    }

    /// Moments behind the kernel invariants: `(int phi, int k phi, -int dg phi)`.
    pub fn moment_checks(&self) -> Result<(f64, f64, f64)> {
        let (mass, _) = self.integrate_even(|_, d| d.phi)?;
        let (k_mean, _) = self.integrate_even(|y, d| d.phi + y * d.dphi)?;
        let (neg_dg, _) = self.integrate_even(|_, d| -(d.ddphi - d.dphi * d.dphi / d.phi))?;
        Ok((mass, k_mean, neg_dg))
    }
}

/// Coefficients of the tail expansion
/// `phi(y) ~ (1/pi) sum_k (-1)^{k+1} Gamma(k beta + 1)/k! sin(k pi beta/2) y^{-k beta - 1}`,
/// truncated where the terms at `cutoff` become negligible.
fn tail_coefficients(beta: f64, cutoff: f64) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    let lc = cutoff.ln();
    let mut first = None;
    for k in 1..200usize {
        let kf = k as f64;
        let log_mag = libm::lgamma(kf * beta + 1.0) - libm::lgamma(kf + 1.0) - kf * beta * lc;
        let f0 = *first.get_or_insert(log_mag);
        let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
        let c = sign * (libm::lgamma(kf * beta + 1.0) - libm::lgamma(kf + 1.0)).exp() * (kf * PI * beta / 2.0).sin() / PI;
        out.push(c);
        if log_mag - f0 < (1e-17f64).ln() {
            return Ok(out);
        }
        if k > 2 && log_mag > f0 {
            break;
        }
    }
    Err(Error::usage(alloc::format!(
        "tail_cutoff {cutoff} is too small for the asymptotic tail series at beta {beta}"
    )))
}

fn build_table(beta: f64, config: &KernelConfig, upper: f64) -> Table {
    let dy = config.spacing;
    let len = (config.tail_cutoff / dy).ceil() as usize + 2;
    let y_max = len as f64 * dy;
    // Panels resolve a quarter period of cos(u * y_max) or better.
    let panel = (0.5 * PI / y_max).min(0.25);
    let rule = CompositeRule::graded(upper, panel, 20, 44);
    let base: Vec<f64> = rule
        .nodes
        .iter()
        .zip(&rule.weights)
        .map(|(&u, &w)| w * (-u.powf(beta)).exp() / PI)
        .collect();
    let mut phi = alloc::vec![0.0; len];
    let mut d1 = alloc::vec![0.0; len];
    let mut d2 = alloc::vec![0.0; len];
    let mut d3 = alloc::vec![0.0; len];
    cosine_sweep(&rule.nodes, dy, len, |i, u, c, s| {
        let b = base[i];
        (b * c, -b * u * s, -b * u * u * c, b * u * u * u * s)
    }, |j, (a, b, c, d)| {
        phi[j] = a;
        d1[j] = b;
        d2[j] = c;
        d3[j] = d;
    });
    Table { phi, d1, d2, d3 }
}

/// Evaluates `sum_i term(i, u_i, cos(u_i y_j), sin(u_i y_j))` for
/// `y_j = j * dy`, `j < len`, advancing the phases by complex rotation and
/// re-anchoring them periodically.
pub(crate) fn cosine_sweep(
    nodes: &[f64],
    dy: f64,
    len: usize,
    term: impl Fn(usize, f64, f64, f64) -> (f64, f64, f64, f64),
    mut sink: impl FnMut(usize, (f64, f64, f64, f64)),
) {
    const ANCHOR: usize = 256;
    let steps: Vec<(f64, f64)> = nodes.iter().map(|&u| ((u * dy).cos(), (u * dy).sin())).collect();
    let mut phase: Vec<(f64, f64)> = alloc::vec![(1.0, 0.0); nodes.len()];
    for j in 0..len {
        if j % ANCHOR == 0 {
            let y = j as f64 * dy;
            for (p, &u) in phase.iter_mut().zip(nodes) {
                *p = ((u * y).cos(), (u * y).sin());
            }
        }
        let mut acc = (0.0, 0.0, 0.0, 0.0);
        for (i, (&u, p)) in nodes.iter().zip(phase.iter_mut()).enumerate() {
            let t = term(i, u, p.0, p.1);
            acc.0 += t.0;
            acc.1 += t.1;
            acc.2 += t.2;
            acc.3 += t.3;
            let (c, s) = steps[i];
            *p = (p.0 * c - p.1 * s, p.0 * s + p.1 * c);
        }
        sink(j, acc);
    }
}

/// `c_beta` re-exported for the tail bound `c_beta / |y|^{1+beta}`.
pub fn levy_constant(beta: f64) -> f64 {
    stable_levy_constant(beta)
}
