//! Drift and scale coefficients `a(x, alpha)`, `c(x, gamma)` together with
//! their first and second parameter derivatives.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
// Float math for no_std builds; std builds see the inherent methods.
#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{Expr, Param};

/// Coefficient functions of `dX = a(X, alpha) dt + c(X-, gamma) dJ`.
///
/// Gradients are written into slices of length `p_alpha` / `p_gamma`;
/// Hessians are row-major square blocks.
pub trait Coefficients: fmt::Debug + Send + Sync {
    fn p_alpha(&self) -> usize;
    fn p_gamma(&self) -> usize;
    fn drift(&self, x: f64, alpha: &[f64]) -> f64;
    fn drift_grad(&self, x: f64, alpha: &[f64], grad: &mut [f64]);
    fn drift_hess(&self, x: f64, alpha: &[f64], hess: &mut [f64]);
    fn scale(&self, x: f64, gamma: &[f64]) -> f64;
    fn scale_grad(&self, x: f64, gamma: &[f64], grad: &mut [f64]);
    fn scale_hess(&self, x: f64, gamma: &[f64], hess: &mut [f64]);

    /// The basis form, when the coefficients have one; lets likelihood
    /// evaluation cache the parameter-free features.
    fn as_basis(&self) -> Option<&BasisModel> {
        None
    }
}

/// State functions available to [`BasisModel`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Basis {
    One,
    X,
    /// `1 / (1 + x^2)`
    InvOnePlusX2,
    Cos,
    Sin,
}

impl Basis {
    pub fn eval(self, x: f64) -> f64 {
        match self {
            Basis::One => 1.0,
            Basis::X => x,
            Basis::InvOnePlusX2 => 1.0 / (1.0 + x * x),
            Basis::Cos => x.cos(),
            Basis::Sin => x.sin(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScaleForm {
    /// `c = exp(sum gamma_i b_i(x))`
    Exp,
    /// `c = sum gamma_i b_i(x)`
    Linear,
}

/// Drift linear in alpha over a basis; scale exponential-linear or linear
/// in gamma over a second basis.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisModel {
    pub drift: Vec<Basis>,
    pub scale: Vec<Basis>,
    pub form: ScaleForm,
}

impl BasisModel {
    fn scale_index(&self, x: f64, gamma: &[f64]) -> f64 {
        self.scale.iter().zip(gamma).map(|(b, g)| g * b.eval(x)).sum()
    }
}

impl Coefficients for BasisModel {
    fn as_basis(&self) -> Option<&BasisModel> {
        Some(self)
    }

    fn p_alpha(&self) -> usize {
        self.drift.len()
    }

    fn p_gamma(&self) -> usize {
        self.scale.len()
    }

    fn drift(&self, x: f64, alpha: &[f64]) -> f64 {
        self.drift.iter().zip(alpha).map(|(b, a)| a * b.eval(x)).sum()
    }

    fn drift_grad(&self, x: f64, _alpha: &[f64], grad: &mut [f64]) {
        for (g, b) in grad.iter_mut().zip(&self.drift) {
            *g = b.eval(x);
        }
    }

    fn drift_hess(&self, _x: f64, _alpha: &[f64], hess: &mut [f64]) {
        hess.fill(0.0);
    }

    fn scale(&self, x: f64, gamma: &[f64]) -> f64 {
        match self.form {
            ScaleForm::Exp => self.scale_index(x, gamma).exp(),
            ScaleForm::Linear => self.scale_index(x, gamma),
        }
    }

    fn scale_grad(&self, x: f64, gamma: &[f64], grad: &mut [f64]) {
        let c = match self.form {
            ScaleForm::Exp => self.scale(x, gamma),
            ScaleForm::Linear => 1.0,
        };
        for (g, b) in grad.iter_mut().zip(&self.scale) {
            *g = c * b.eval(x);
        }
    }

    fn scale_hess(&self, x: f64, gamma: &[f64], hess: &mut [f64]) {
        match self.form {
            ScaleForm::Linear => hess.fill(0.0),
            ScaleForm::Exp => {
                let c = self.scale(x, gamma);
                let p = self.scale.len();
                for i in 0..p {
                    for j in 0..p {
                        hess[i * p + j] = c * self.scale[i].eval(x) * self.scale[j].eval(x);
                    }
                }
            }
        }
    }
}

/// Names accepted by [`builtin`].
pub const BUILTIN_MODELS: [&str; 5] = ["nonlinear-2d", "nonlinear-1d", "ou-const", "ou-exp", "scale-only"];

/// Built-in coefficient families:
///
/// * `nonlinear-2d`: `a = alpha1 x + alpha2 / (1 + x^2)`, `c = exp(gamma1 cos x + gamma2 sin x)`
/// * `nonlinear-1d`: `a = alpha1 x`, `c = exp(gamma1 cos x)`
/// * `ou-const`: `a = alpha1 + alpha2 x`, `c = gamma1`
/// * `ou-exp`: `a = alpha1 + alpha2 x`, `c = exp(gamma1)`
/// * `scale-only`: `a = 0`, `c = exp(gamma1)`
pub fn builtin(name: &str) -> Option<BasisModel> {
    use Basis::*;
    let (drift, scale, form) = match name {
        "nonlinear-2d" => (vec![X, InvOnePlusX2], vec![Cos, Sin], ScaleForm::Exp),
        "nonlinear-1d" => (vec![X], vec![Cos], ScaleForm::Exp),
        "ou-const" => (vec![One, X], vec![One], ScaleForm::Linear),
        "ou-exp" => (vec![One, X], vec![One], ScaleForm::Exp),
        "scale-only" => (vec![], vec![One], ScaleForm::Exp),
        _ => return None,
    };
    Some(BasisModel { drift, scale, form })
}

/// Coefficients given as expressions, differentiated symbolically.
#[derive(Debug, Clone)]
pub struct ExprModel {
    drift: Expr,
    drift_grad: Vec<Expr>,
    drift_hess: Vec<Expr>,
    scale: Expr,
    scale_grad: Vec<Expr>,
    scale_hess: Vec<Expr>,
}

impl ExprModel {
    /// Parse `drift` (in `x`, `alpha_i`) and `scale` (in `x`, `gamma_i`).
    /// Dimensions are the largest parameter index referenced.
    pub fn parse(drift: &str, scale: &str) -> Result<ExprModel> {
        let drift = Expr::parse(drift)?;
        let scale = Expr::parse(scale)?;
        let p_alpha = param_count(&drift, true)?;
        let p_gamma = param_count(&scale, false)?;
        let (drift_grad, drift_hess) = derivatives(&drift, p_alpha, Param::Alpha);
        let (scale_grad, scale_hess) = derivatives(&scale, p_gamma, Param::Gamma);
        Ok(ExprModel { drift, drift_grad, drift_hess, scale, scale_grad, scale_hess })
    }
}

fn param_count(e: &Expr, drift: bool) -> Result<usize> {
    let mut count = 0;
    let mut bad = None;
    e.params(&mut |p| match (p, drift) {
        (Param::Alpha(i), true) | (Param::Gamma(i), false) => count = count.max(i + 1),
        _ => bad = Some(p),
    });
    match bad {
        Some(p) if drift => Err(Error::Expr(format!("drift may not depend on {p}"))),
        Some(p) => Err(Error::Expr(format!("scale may not depend on {p}"))),
        None => Ok(count),
    }
}

fn derivatives(e: &Expr, p: usize, make: fn(usize) -> Param) -> (Vec<Expr>, Vec<Expr>) {
    let grad: Vec<Expr> = (0..p).map(|i| e.diff(make(i))).collect();
    let mut hess = Vec::with_capacity(p * p);
    for gi in &grad {
        for j in 0..p {
            hess.push(gi.diff(make(j)));
        }
    }
    (grad, hess)
}

impl Coefficients for ExprModel {
    fn p_alpha(&self) -> usize {
        self.drift_grad.len()
    }

    fn p_gamma(&self) -> usize {
        self.scale_grad.len()
    }

    fn drift(&self, x: f64, alpha: &[f64]) -> f64 {
        self.drift.eval(x, alpha, &[])
    }

    fn drift_grad(&self, x: f64, alpha: &[f64], grad: &mut [f64]) {
        for (g, e) in grad.iter_mut().zip(&self.drift_grad) {
            *g = e.eval(x, alpha, &[]);
        }
    }

    fn drift_hess(&self, x: f64, alpha: &[f64], hess: &mut [f64]) {
        for (h, e) in hess.iter_mut().zip(&self.drift_hess) {
            *h = e.eval(x, alpha, &[]);
        }
    }

    fn scale(&self, x: f64, gamma: &[f64]) -> f64 {
        self.scale.eval(x, &[], gamma)
    }

    fn scale_grad(&self, x: f64, gamma: &[f64], grad: &mut [f64]) {
        for (g, e) in grad.iter_mut().zip(&self.scale_grad) {
            *g = e.eval(x, &[], gamma);
        }
    }

    fn scale_hess(&self, x: f64, gamma: &[f64], hess: &mut [f64]) {
        for (h, e) in hess.iter_mut().zip(&self.scale_hess) {
            *h = e.eval(x, &[], gamma);
        }
    }
}

/// A parameter value split into drift and scale parts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theta {
    pub alpha: Vec<f64>,
    pub gamma: Vec<f64>,
}

impl Theta {
    pub fn new(alpha: Vec<f64>, gamma: Vec<f64>) -> Theta {
        Theta { alpha, gamma }
    }

    /// Split a flat `(alpha, gamma)` vector.
    pub fn from_flat(flat: &[f64], p_alpha: usize) -> Theta {
        Theta { alpha: flat[..p_alpha].to_vec(), gamma: flat[p_alpha..].to_vec() }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = self.alpha.clone();
        v.extend_from_slice(&self.gamma);
        v
    }

    pub fn dim(&self) -> usize {
        self.alpha.len() + self.gamma.len()
    }
}

/// Coefficients plus the parameter box and, for simulation, the true value.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    name: String,
    coeffs: Arc<dyn Coefficients>,
    bounds: Vec<(f64, f64)>,
    theta_true: Option<Theta>,
}

impl ModelSpec {
    /// `bounds` lists `(lower, upper)` for alpha then gamma coordinates.
    pub fn new(
        name: impl Into<String>,
        coeffs: Arc<dyn Coefficients>,
        bounds: Vec<(f64, f64)>,
        theta_true: Option<Theta>,
    ) -> Result<ModelSpec> {
        let (pa, pg) = (coeffs.p_alpha(), coeffs.p_gamma());
        if bounds.len() != pa + pg {
            return Err(Error::usage(format!("model has {} parameters but {} bounds were given", pa + pg, bounds.len())));
        }
        for (k, &(lo, hi)) in bounds.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::usage(format!("bounds for coordinate {k} must be finite with lower < upper")));
            }
        }
        let spec = ModelSpec { name: name.into(), coeffs, bounds, theta_true: None };
        match theta_true {
            Some(t) => spec.with_theta_true(t),
            None => Ok(spec),
        }
    }

    /// A built-in family by name (see [`builtin`]).
    pub fn builtin(name: &str, bounds: Vec<(f64, f64)>, theta_true: Option<Theta>) -> Result<ModelSpec> {
        let coeffs = builtin(name).ok_or_else(|| Error::usage(format!("unknown model `{name}`")))?;
        ModelSpec::new(name, Arc::new(coeffs), bounds, theta_true)
    }

    pub fn expression(drift: &str, scale: &str, bounds: Vec<(f64, f64)>, theta_true: Option<Theta>) -> Result<ModelSpec> {
        let coeffs = ExprModel::parse(drift, scale)?;
        ModelSpec::new("expression", Arc::new(coeffs), bounds, theta_true)
    }

    pub fn with_theta_true(mut self, theta: Theta) -> Result<ModelSpec> {
        self.check_dims(&theta)?;
        if !self.contains(&theta.to_flat()) {
            return Err(Error::usage("true parameter lies outside the bounds"));
        }
        self.theta_true = Some(theta);
        Ok(self)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn coeffs(&self) -> &dyn Coefficients {
        &*self.coeffs
    }

    pub fn p_alpha(&self) -> usize {
        self.coeffs.p_alpha()
    }

    pub fn p_gamma(&self) -> usize {
        self.coeffs.p_gamma()
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn theta_true(&self) -> Option<&Theta> {
        self.theta_true.as_ref()
    }

    pub fn check_dims(&self, theta: &Theta) -> Result<()> {
        if theta.alpha.len() != self.p_alpha() || theta.gamma.len() != self.p_gamma() {
            return Err(Error::usage(format!(
                "parameter has dimensions ({}, {}), model expects ({}, {})",
                theta.alpha.len(),
                theta.gamma.len(),
                self.p_alpha(),
                self.p_gamma()
            )));
        }
        Ok(())
    }

    /// Whether a flat parameter lies in the closed box.
    pub fn contains(&self, flat: &[f64]) -> bool {
        flat.len() == self.dim() && flat.iter().zip(&self.bounds).all(|(v, &(lo, hi))| *v >= lo && *v <= hi)
    }

    /// Componentwise projection onto the closed box.
    pub fn clamp(&self, flat: &mut [f64]) {
        for (v, &(lo, hi)) in flat.iter_mut().zip(&self.bounds) {
            *v = v.clamp(lo, hi);
        }
    }
}
