//! The stable quasi-likelihood
//! `H_n(theta) = sum_j log( phi_beta(eps_j) / (c_{j-1} h^{1/beta}) )`,
//! its parameter derivatives and the multistart estimator.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use nalgebra::DMatrix;
// Float math for no_std builds; std builds see the inherent methods.
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelSpec, ScaleForm, Theta};
use crate::noise::RngStream;
use crate::optim;
use crate::sim::ObservationSeries;
use crate::stable::StableKernel;

/// `h^{1 - 1/beta}`, exactly 1 at the Cauchy index.
pub fn drift_rate_factor(h: f64, beta: f64) -> f64 {
    if beta == 1.0 {
        1.0
    } else {
        ((1.0 - 1.0 / beta) * h.ln()).exp()
    }
}

/// Diagonal entries of the rate matrix: `(sqrt(n) h^{1-1/beta}, sqrt(n))`.
pub fn rates(n: usize, h: f64, beta: f64) -> (f64, f64) {
    let rn = (n as f64).sqrt();
    (rn * drift_rate_factor(h, beta), rn)
}

// Parameter-free basis values for each observation, row-major.
struct Features {
    drift: Vec<f64>,
    scale: Vec<f64>,
    form: ScaleForm,
}

/// Evaluates `H_n` and its derivatives on one series.
pub struct QuasiLikelihood<'a> {
    obs: &'a ObservationSeries,
    model: &'a ModelSpec,
    kernel: &'a StableKernel,
    features: Option<Features>,
    h_root: f64,
    drift_factor: f64,
}

// Per-observation quantities shared by the score and the Hessian.
struct Term {
    eps: f64,
    c: f64,
    g: f64,
    dg: f64,
}

impl<'a> QuasiLikelihood<'a> {
    pub fn new(obs: &'a ObservationSeries, model: &'a ModelSpec, kernel: &'a StableKernel) -> Self {
        let beta = kernel.beta();
        let h = obs.h();
        let features = model.coeffs().as_basis().map(|b| {
            let prev = &obs.x()[..obs.n()];
            Features {
                drift: prev.iter().flat_map(|&x| b.drift.iter().map(move |f| f.eval(x))).collect(),
                scale: prev.iter().flat_map(|&x| b.scale.iter().map(move |f| f.eval(x))).collect(),
                form: b.form,
            }
        });
        QuasiLikelihood { obs, model, kernel, features, h_root: h.powf(1.0 / beta), drift_factor: drift_rate_factor(h, beta) }
    }

    pub fn beta(&self) -> f64 {
        self.kernel.beta()
    }

    pub fn obs(&self) -> &ObservationSeries {
        self.obs
    }

    pub fn model(&self) -> &ModelSpec {
        self.model
    }

    pub fn kernel(&self) -> &StableKernel {
        self.kernel
    }

    fn residual(&self, j: usize, a: f64, c: f64) -> Result<f64> {
        if !(c > 0.0) {
            return Err(Error::ModelViolation { index: j, value: c });
        }
        let x = self.obs.x();
        let eps = (x[j + 1] - x[j] - self.obs.h() * a) / (self.h_root * c);
        if eps.is_finite() {
            Ok(eps)
        } else {
            Err(Error::Numeric { what: format!("residual {j} overflowed"), residual: eps })
        }
    }

    /// `(a_{j-1}, c_{j-1}, log c_{j-1})` for `j = 1..=n`, through the
    /// feature cache when the model has one.
    fn for_each_coefficient(&self, theta: &Theta, mut f: impl FnMut(usize, f64, f64, f64) -> Result<()>) -> Result<()> {
        self.model.check_dims(theta)?;
        let n = self.obs.n();
        match &self.features {
            Some(feat) => {
                let (pa, pg) = (theta.alpha.len(), theta.gamma.len());
                for j in 0..n {
                    let a: f64 = feat.drift[j * pa..(j + 1) * pa].iter().zip(&theta.alpha).map(|(b, p)| b * p).sum();
                    let s: f64 = feat.scale[j * pg..(j + 1) * pg].iter().zip(&theta.gamma).map(|(b, p)| b * p).sum();
                    match feat.form {
                        ScaleForm::Exp => f(j, a, s.exp(), s)?,
                        ScaleForm::Linear => f(j, a, s, s.ln())?,
                    }
                }
            }
            None => {
                let m = self.model.coeffs();
                for (j, &x) in self.obs.x()[..n].iter().enumerate() {
                    let c = m.scale(x, &theta.gamma);
                    f(j, m.drift(x, &theta.alpha), c, c.ln())?;
                }
            }
        }
        Ok(())
    }

    pub fn residuals(&self, theta: &Theta) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.obs.n());
        self.for_each_coefficient(theta, |j, a, c, _| {
            out.push(self.residual(j, a, c)?);
            Ok(())
        })?;
        Ok(out)
    }

    /// `H_n(theta)`; the Cauchy index uses the explicit
    /// `-sum[log(pi h) + log c + log(1 + eps^2)]`.
    pub fn value(&self, theta: &Theta) -> Result<f64> {
        let n = self.obs.n() as f64;
        let mut sum = 0.0;
        if self.kernel.is_cauchy() {
            self.for_each_coefficient(theta, |j, a, c, log_c| {
                let eps = self.residual(j, a, c)?;
                sum -= log_c + eps.mul_add(eps, 1.0).ln();
                Ok(())
            })?;
            Ok(sum - n * (PI * self.obs.h()).ln())
        } else {
            self.for_each_coefficient(theta, |j, a, c, log_c| {
                let eps = self.residual(j, a, c)?;
                sum += self.kernel.phi_unchecked(eps).ln() - log_c;
                Ok(())
            })?;
            Ok(sum - n * self.h_root.ln())
        }
    }

    /// `H_n` through the kernel density at every index (no Cauchy shortcut).
    pub fn value_direct(&self, theta: &Theta) -> Result<f64> {
        let mut sum = 0.0;
        self.for_each_coefficient(theta, |j, a, c, _| {
            let eps = self.residual(j, a, c)?;
            sum += (self.kernel.density(eps)? / (c * self.h_root)).ln();
            Ok(())
        })?;
        Ok(sum)
    }

    /// Score and, optionally, Hessian from the model's derivative evaluators.
    fn derivatives(&self, theta: &Theta, hessian: bool) -> Result<(Vec<f64>, Option<DMatrix<f64>>)> {
        self.model.check_dims(theta)?;
        let m = self.model.coeffs();
        let (pa, pg) = (theta.alpha.len(), theta.gamma.len());
        let p = pa + pg;
        let s = self.drift_factor;
        let mut score = vec![0.0; p];
        let mut hess = DMatrix::<f64>::zeros(p, p);
        let (mut da, mut dc) = (vec![0.0; pa], vec![0.0; pg]);
        let (mut d2a, mut d2c) = (vec![0.0; pa * pa], vec![0.0; pg * pg]);
        let x = self.obs.x();
        for j in 0..self.obs.n() {
            let xj = x[j];
            let c = m.scale(xj, &theta.gamma);
            let eps = self.residual(j, m.drift(xj, &theta.alpha), c)?;
            let d = self.kernel.derivs(eps)?;
            let t = Term { eps, c, g: d.g(), dg: d.dg() };
            let k = 1.0 + t.eps * t.g;
            m.drift_grad(xj, &theta.alpha, &mut da);
            m.scale_grad(xj, &theta.gamma, &mut dc);
            for i in 0..pa {
                score[i] -= s * da[i] / t.c * t.g;
            }
            for i in 0..pg {
                score[pa + i] -= dc[i] / t.c * k;
            }
            if !hessian {
                continue;
            }
            m.drift_hess(xj, &theta.alpha, &mut d2a);
            m.scale_hess(xj, &theta.gamma, &mut d2c);
            let c2 = t.c * t.c;
            let mixed = s * (t.g + t.eps * t.dg) / c2;
            let gg = (1.0 + 2.0 * t.eps * t.g + t.eps * t.eps * t.dg) / c2;
            for i in 0..pa {
                for l in 0..pa {
                    hess[(i, l)] += t.dg * s * s * da[i] * da[l] / c2 - t.g * s * d2a[i * pa + l] / t.c;
                }
                for l in 0..pg {
                    let v = mixed * da[i] * dc[l];
                    hess[(i, pa + l)] += v;
                    hess[(pa + l, i)] += v;
                }
            }
            for i in 0..pg {
                for l in 0..pg {
                    hess[(pa + i, pa + l)] += gg * dc[i] * dc[l] - k * d2c[i * pg + l] / t.c;
                }
            }
        }
        Ok((score, hessian.then_some(hess)))
    }

    /// Gradient of `H_n` in `(alpha, gamma)` order.
    pub fn score(&self, theta: &Theta) -> Result<Vec<f64>> {
        Ok(self.derivatives(theta, false)?.0)
    }

    /// Hessian of `H_n`; exactly symmetric.
    pub fn hessian(&self, theta: &Theta) -> Result<DMatrix<f64>> {
        let mut h = self.derivatives(theta, true)?.1.expect("hessian requested");
        // The diagonal blocks accumulate in (i, l) order; mirror to make
        // the symmetry exact.
        for i in 0..h.nrows() {
            for l in 0..i {
                let v = 0.5 * (h[(i, l)] + h[(l, i)]);
                h[(i, l)] = v;
                h[(l, i)] = v;
            }
        }
        Ok(h)
    }

    /// `|D_n^{-1} dH_n|` with `D_n` the rate matrix.
    pub fn score_norm(&self, theta: &Theta) -> Result<f64> {
        let (ra, rg) = rates(self.obs.n(), self.obs.h(), self.beta());
        let pa = theta.alpha.len();
        let score = self.score(theta)?;
        Ok(score
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let r = if i < pa { ra } else { rg };
                (v / r) * (v / r)
            })
            .sum::<f64>()
            .sqrt())
    }
}

fn check_beta(kernel: &StableKernel, beta: f64) -> Result<()> {
    if kernel.beta() == beta {
        Ok(())
    } else {
        Err(Error::usage(format!("kernel is for beta = {}, not {beta}", kernel.beta())))
    }
}

/// Euler residuals `eps_j = (dX_j - h a_{j-1}) / (h^{1/beta} c_{j-1})`.
pub fn residuals(obs: &ObservationSeries, model: &ModelSpec, theta: &Theta, beta: f64) -> Result<Vec<f64>> {
    if !(beta > 0.0 && beta < 2.0) {
        return Err(Error::domain(format!("stability index must lie in (0, 2), got {beta}")));
    }
    model.check_dims(theta)?;
    let m = model.coeffs();
    let (h, x) = (obs.h(), obs.x());
    let h_root = h.powf(1.0 / beta);
    (0..obs.n())
        .map(|j| {
            let c = m.scale(x[j], &theta.gamma);
            if !(c > 0.0) {
                return Err(Error::ModelViolation { index: j, value: c });
            }
            Ok((x[j + 1] - x[j] - h * m.drift(x[j], &theta.alpha)) / (h_root * c))
        })
        .collect()
}

pub fn quasi_loglik(obs: &ObservationSeries, model: &ModelSpec, theta: &Theta, beta: f64, kernel: &StableKernel) -> Result<f64> {
    check_beta(kernel, beta)?;
    QuasiLikelihood::new(obs, model, kernel).value(theta)
}

pub fn quasi_score(obs: &ObservationSeries, model: &ModelSpec, theta: &Theta, beta: f64, kernel: &StableKernel) -> Result<Vec<f64>> {
    check_beta(kernel, beta)?;
    QuasiLikelihood::new(obs, model, kernel).score(theta)
}

pub fn quasi_hessian(obs: &ObservationSeries, model: &ModelSpec, theta: &Theta, beta: f64, kernel: &StableKernel) -> Result<DMatrix<f64>> {
    check_beta(kernel, beta)?;
    QuasiLikelihood::new(obs, model, kernel).hessian(theta)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerMode {
    /// Clamped Nelder–Mead.
    #[default]
    Simplex,
    /// Projected BFGS on the analytic score.
    QuasiNewton,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub mode: OptimizerMode,
    /// Starting points drawn uniformly in the bounds box.
    pub restarts: usize,
    pub max_iter: usize,
    /// Relative simplex diameter (or step length) at convergence.
    pub xtol: f64,
    /// Projected-gradient tolerance of the quasi-Newton mode, relative to `|H_n|`.
    pub gtol: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig { mode: OptimizerMode::Simplex, restarts: 10, max_iter: 2000, xtol: 1e-8, gtol: 1e-10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub theta_hat: Theta,
    pub loglik: f64,
    pub n_evals: usize,
    pub converged: bool,
    /// Restarts that produced a finite optimum.
    pub restarts_used: usize,
    pub score_norm: f64,
}

struct Candidate {
    x: Vec<f64>,
    value: f64,
    converged: bool,
}

/// Maximize `H_n` over the model's bounds box from `opt.restarts` uniform
/// starting points; the best restart by `H_n` wins, ties going to the
/// smaller normalized score.
pub fn fit(
    obs: &ObservationSeries,
    model: &ModelSpec,
    beta: f64,
    kernel: &StableKernel,
    opt: &OptimizerConfig,
    rng: &mut RngStream,
) -> Result<FitResult> {
    check_beta(kernel, beta)?;
    if opt.restarts == 0 {
        return Err(Error::usage("at least one optimizer restart is required"));
    }
    let ql = QuasiLikelihood::new(obs, model, kernel);
    let bounds = model.bounds();
    let pa = model.p_alpha();
    let starts: Vec<Vec<f64>> =
        (0..opt.restarts).map(|_| bounds.iter().map(|&(lo, hi)| lo + (hi - lo) * rng.random::<f64>()).collect()).collect();

    let mut n_evals = 0;
    let mut candidates = Vec::new();
    let mut last_error: Option<Error> = None;
    for start in &starts {
        let objective = |x: &[f64]| match ql.value(&Theta::from_flat(x, pa)) {
            Ok(v) => -v,
            Err(_) => f64::INFINITY,
        };
        let found = match opt.mode {
            OptimizerMode::Simplex => Some(optim::nelder_mead(objective, start, bounds, opt.max_iter, opt.xtol)),
            OptimizerMode::QuasiNewton => {
                let fg = |x: &[f64]| {
                    let theta = Theta::from_flat(x, pa);
                    let v = ql.value(&theta).map_err(|e| last_error = Some(e)).ok()?;
                    let s = ql.score(&theta).ok()?;
                    Some((-v, s.iter().map(|g| -g).collect()))
                };
                optim::projected_bfgs(fg, start, bounds, opt.max_iter, opt.xtol, opt.gtol)
            }
        };
        match found {
            Some(m) if m.value.is_finite() => {
                n_evals += m.evals;
                candidates.push(Candidate { x: m.x, value: -m.value, converged: m.converged });
            }
            Some(m) => n_evals += m.evals,
            None => {}
        }
    }

    if candidates.is_empty() {
        let detail = match last_error.or_else(|| ql.value(&Theta::from_flat(&starts[0], pa)).err()) {
            Some(e) => format!("{e}"),
            None => String::from("no finite objective value reached"),
        };
        return Err(Error::Optimization(format!("all {} restarts failed: {detail}", opt.restarts)));
    }
    let top = candidates.iter().map(|c| c.value).fold(f64::NEG_INFINITY, f64::max);
    let mut best: Option<(&Candidate, f64)> = None;
    for cand in candidates.iter().filter(|c| c.value == top) {
        let norm = ql.score_norm(&Theta::from_flat(&cand.x, pa))?;
        if best.as_ref().is_none_or(|(_, b)| norm < *b) {
            best = Some((cand, norm));
        }
    }
    let (cand, score_norm) = best.expect("at least one candidate attains the maximum");
    Ok(FitResult {
        theta_hat: Theta::from_flat(&cand.x, pa),
        loglik: cand.value,
        n_evals,
        converged: cand.converged,
        restarts_used: candidates.len(),
        score_norm,
    })
}
