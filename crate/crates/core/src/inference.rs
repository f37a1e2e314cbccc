//! Rate normalization, empirical information matrices and Studentized
//! statistics for the SQMLE.

use alloc::format;
use alloc::vec::Vec;
use nalgebra::{DMatrix, SymmetricEigen};
// Float math for no_std builds; std builds see the inherent methods.
#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelSpec, Theta};
use crate::sim::ObservationSeries;
use crate::special::normal_quantile;
use crate::sqlik::{rates, QuasiLikelihood};
use crate::stable::{InfoConstants, StableKernel};

/// Eigenvalues below this fraction of the largest are clipped.
pub const EIGEN_CLIP: f64 = 1e-12;

/// `Sigma_alpha = (1/n) sum (da)(da)^T / c^2` and
/// `Sigma_gamma = (1/n) sum (dc)(dc)^T / c^2`, evaluated at `theta`.
///
/// Fails with [`Error::Singular`] when a non-empty block vanishes.
pub fn sigma_hats(obs: &ObservationSeries, model: &ModelSpec, theta: &Theta) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    model.check_dims(theta)?;
    let m = model.coeffs();
    let (pa, pg) = (model.p_alpha(), model.p_gamma());
    let mut sa = DMatrix::<f64>::zeros(pa, pa);
    let mut sg = DMatrix::<f64>::zeros(pg, pg);
    let (mut da, mut dc) = (alloc::vec![0.0; pa], alloc::vec![0.0; pg]);
    let n = obs.n();
    for (j, &x) in obs.x()[..n].iter().enumerate() {
        let c = m.scale(x, &theta.gamma);
        if !(c > 0.0) {
            return Err(Error::ModelViolation { index: j, value: c });
        }
        m.drift_grad(x, &theta.alpha, &mut da);
        m.scale_grad(x, &theta.gamma, &mut dc);
        let c2 = c * c;
        for i in 0..pa {
            for l in 0..pa {
                sa[(i, l)] += da[i] * da[l] / c2;
            }
        }
        for i in 0..pg {
            for l in 0..pg {
                sg[(i, l)] += dc[i] * dc[l] / c2;
            }
        }
    }
    sa /= n as f64;
    sg /= n as f64;
    for (name, s) in [("alpha", &sa), ("gamma", &sg)] {
        if s.nrows() > 0 {
            let top = s.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
            if !(top > 0.0 && top.is_finite()) {
                return Err(Error::Singular(format!("Sigma_{name} vanishes or is not finite")));
            }
        }
    }
    Ok((sa, sg))
}

/// Symmetric PSD root with eigenvalues clipped at `EIGEN_CLIP` times the
/// largest; the flag reports whether clipping happened.
pub fn sym_sqrt(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, bool)> {
    let (v, vals, clipped) = clipped_eigen(m)?;
    let d = DMatrix::from_diagonal(&vals.map(f64::sqrt));
    Ok((&v * d * v.transpose(), clipped))
}

/// Inverse through the same clipped eigendecomposition.
pub fn sym_inverse(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, bool)> {
    let (v, vals, clipped) = clipped_eigen(m)?;
    let d = DMatrix::from_diagonal(&vals.map(|l| 1.0 / l));
    Ok((&v * d * v.transpose(), clipped))
}

fn clipped_eigen(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, nalgebra::DVector<f64>, bool)> {
    if m.nrows() == 0 {
        return Ok((m.clone(), nalgebra::DVector::zeros(0), false));
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let top = eig.eigenvalues.max();
    if !(top > 0.0 && top.is_finite()) {
        return Err(Error::Singular(format!("largest eigenvalue is {top}")));
    }
    let floor = EIGEN_CLIP * top;
    let clipped = eig.eigenvalues.iter().any(|&l| l < floor);
    Ok((eig.eigenvectors, eig.eigenvalues.map(|l| l.max(floor)), clipped))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn contains(&self, v: f64) -> bool {
        self.lower <= v && v <= self.upper
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudentizedReport {
    /// Empty when no reference value was supplied.
    pub z_alpha: Vec<f64>,
    pub z_gamma: Vec<f64>,
    /// Row-major.
    pub sigma_hat_alpha: Vec<Vec<f64>>,
    pub sigma_hat_gamma: Vec<Vec<f64>>,
    pub rate_alpha: f64,
    pub rate_gamma: f64,
    pub constants: InfoConstants,
    pub level: f64,
    /// Intervals for `(alpha, gamma)` coordinates in order.
    pub ci: Vec<Interval>,
    /// Some eigenvalue of `C Sigma` was clipped.
    pub clipped: bool,
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// Studentized estimates `(C_alpha Sigma_alpha)^{1/2} sqrt(n) h^{1-1/beta} (alpha - alpha_ref)`
/// and `(C_gamma Sigma_gamma)^{1/2} sqrt(n) (gamma - gamma_ref)`, with
/// marginal confidence intervals at `level`.
pub fn studentize_with(
    obs: &ObservationSeries,
    model: &ModelSpec,
    theta_hat: &Theta,
    theta_ref: Option<&Theta>,
    beta: f64,
    constants: &InfoConstants,
    level: f64,
) -> Result<StudentizedReport> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::usage(format!("confidence level must lie in (0, 1), got {level}")));
    }
    if let Some(r) = theta_ref {
        model.check_dims(r)?;
    }
    let (sa, sg) = sigma_hats(obs, model, theta_hat)?;
    let (rate_alpha, rate_gamma) = rates(obs.n(), obs.h(), beta);
    let q = normal_quantile(0.5 + 0.5 * level)?;
    let mut clipped = false;
    let mut z = [Vec::new(), Vec::new()];
    let mut ci = Vec::with_capacity(theta_hat.dim());
    let blocks = [
        (&sa, constants.c_alpha, rate_alpha, &theta_hat.alpha, theta_ref.map(|r| &r.alpha)),
        (&sg, constants.c_gamma, rate_gamma, &theta_hat.gamma, theta_ref.map(|r| &r.gamma)),
    ];
    for (b, (sigma, c, rate, est, reference)) in blocks.into_iter().enumerate() {
        if sigma.nrows() == 0 {
            continue;
        }
        let info = sigma * c;
        let (root, clip_root) = sym_sqrt(&info)?;
        let (inv, clip_inv) = sym_inverse(&info)?;
        clipped |= clip_root || clip_inv;
        if let Some(r) = reference {
            let diff = nalgebra::DVector::from_iterator(est.len(), est.iter().zip(r).map(|(a, b)| rate * (a - b)));
            z[b] = (root * diff).iter().copied().collect();
        }
        for (k, &e) in est.iter().enumerate() {
            let half = q * inv[(k, k)].max(0.0).sqrt() / rate;
            ci.push(Interval { lower: e - half, upper: e + half });
        }
    }
    let [z_alpha, z_gamma] = z;
    Ok(StudentizedReport {
        z_alpha,
        z_gamma,
        sigma_hat_alpha: rows(&sa),
        sigma_hat_gamma: rows(&sg),
        rate_alpha,
        rate_gamma,
        constants: *constants,
        level,
        ci,
        clipped,
    })
}

/// [`studentize_with`] using the kernel's information constants.
pub fn studentize(
    obs: &ObservationSeries,
    model: &ModelSpec,
    theta_hat: &Theta,
    theta_ref: Option<&Theta>,
    kernel: &StableKernel,
    level: f64,
) -> Result<StudentizedReport> {
    let constants = kernel.info_constants()?;
    studentize_with(obs, model, theta_hat, theta_ref, kernel.beta(), &constants, level)
}

/// Observed information `-D_n^{-1} d^2 H_n D_n^{-1}`, an alternative to the
/// `C Sigma` blocks for diagnostics.
pub fn observed_information(obs: &ObservationSeries, model: &ModelSpec, theta: &Theta, kernel: &StableKernel) -> Result<DMatrix<f64>> {
    let hess = QuasiLikelihood::new(obs, model, kernel).hessian(theta)?;
    let (ra, rg) = rates(obs.n(), obs.h(), kernel.beta());
    let pa = model.p_alpha();
    let r = |i: usize| if i < pa { ra } else { rg };
    Ok(DMatrix::from_fn(hess.nrows(), hess.ncols(), |i, j| -hess[(i, j)] / (r(i) * r(j))))
}
