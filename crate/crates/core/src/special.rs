//! Special functions: gamma-derived constants, modified Bessel functions
//! of the third kind, and the standard normal quantile.

// Float math for no_std builds; std builds see the inherent methods.
#[allow(unused_imports)]
use num_traits::Float;
use core::f64::consts::PI;

use crate::error::{Error, Result};
use crate::quad;

pub fn gamma(x: f64) -> f64 {
    libm::tgamma(x)
}

/// Constant of the Lévy density `c_beta / |z|^(1 + beta)` of the standard
/// symmetric beta-stable law.
pub fn stable_levy_constant(beta: f64) -> f64 {
    if (beta - 1.0).abs() < 1e-9 {
        return 1.0 / PI;
    }
    0.5 / (gamma(1.0 - beta) * (0.5 * beta * PI).cos() / beta)
}

/// `K_{nu}(x)` and `K_{nu+1}(x)` for `nu >= 0`, both multiplied by `exp(x)`.
fn bessel_k_scaled_pair(nu: f64, x: f64) -> Result<(f64, f64)> {
    if !(x > 0.0) || !x.is_finite() || !nu.is_finite() {
        return Err(Error::domain(alloc::format!("bessel K needs x > 0, got x={x}, nu={nu}")));
    }
    debug_assert!(nu >= 0.0);
    if x > 30.0 {
        if let Some(pair) = asymptotic_pair(nu, x) {
            return Ok(pair);
        }
    }
    if x >= 2.0 {
        Ok(steed_pair(nu, x))
    } else {
        Ok((integral_scaled(nu, x)?, integral_scaled(nu + 1.0, x)?))
    }
}

/// Large-argument expansion of `exp(x) K_nu(x)`; `None` when the series does
/// not reach double precision before its terms start growing.
fn asymptotic_scaled(nu: f64, x: f64) -> Option<f64> {
    let mu = 4.0 * nu * nu;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut last = f64::INFINITY;
    for k in 1..60 {
        let kf = k as f64;
        term *= (mu - (2.0 * kf - 1.0).powi(2)) / (kf * 8.0 * x);
        if term.abs() > last {
            return None;
        }
        sum += term;
        if term.abs() < 1e-17 * sum.abs() {
            return Some((PI / (2.0 * x)).sqrt() * sum);
        }
        last = term.abs();
    }
    None
}

fn asymptotic_pair(nu: f64, x: f64) -> Option<(f64, f64)> {
    Some((asymptotic_scaled(nu, x)?, asymptotic_scaled(nu + 1.0, x)?))
}

/// Steed's continued fraction for `K_mu, K_{mu+1}` with `|mu| <= 1/2`,
/// followed by upward recurrence to order `nu`. Valid for `x >= 2`.
fn steed_pair(nu: f64, x: f64) -> (f64, f64) {
    let nl = (nu + 0.5).floor();
    let xmu = nu - nl;
    let xmu2 = xmu * xmu;
    let xi = 1.0 / x;
    let mut b = 2.0 * (1.0 + x);
    let mut d = 1.0 / b;
    let mut h = d;
    let mut delh = d;
    let mut q1 = 0.0;
    let mut q2 = 1.0;
    let a1 = 0.25 - xmu2;
    let mut q = a1;
    let mut c = a1;
    let mut a = -a1;
    let mut s = 1.0 + q * delh;
    for i in 1..100_000 {
        let fi = i as f64;
        a -= 2.0 * fi;
        c = -a * c / (fi + 1.0);
        let qnew = (q1 - b * q2) / a;
        q1 = q2;
        q2 = qnew;
        q += c * qnew;
        b += 2.0;
        d = 1.0 / (b + a * d);
        delh = (b * d - 1.0) * delh;
        h += delh;
        let dels = q * delh;
        s += dels;
        if (dels / s).abs() < 1e-17 {
            break;
        }
    }
    h *= a1;
    let mut kmu = (PI / (2.0 * x)).sqrt() / s;
    let mut k1 = kmu * (xmu + x + 0.5 - h) * xi;
    let xi2 = 2.0 * xi;
    for i in 1..=(nl as usize) {
        let next = (xmu + i as f64) * xi2 * k1 + kmu;
        kmu = k1;
        k1 = next;
    }
    (kmu, k1)
}

/// `exp(x) K_nu(x) = int_0^inf exp(-x (cosh t - 1)) cosh(nu t) dt`.
fn integral_scaled(nu: f64, x: f64) -> Result<f64> {
    // Beyond t_max the integrand is below exp(-750).
    let t_max = (1.0 + 750.0 / x).acosh() + 1.0;
    let peak = if nu.abs() > 0.0 { (nu.abs() / x).asinh() } else { 0.0 };
    let integrand = |t: f64| (-x * (t.cosh() - 1.0) + nu.abs() * t).exp() * 0.5 * (1.0 + (-2.0 * nu.abs() * t).exp());
    let scale = integrand(peak).max(1e-300);
    let r = quad::adaptive(integrand, 0.0, t_max.max(peak + 1.0), 1e-15 * scale, 4000)?;
    Ok(r.value)
}

/// `log K_nu(x)` for `x > 0`.
pub fn log_bessel_k(nu: f64, x: f64) -> Result<f64> {
    let (k, _) = bessel_k_scaled_pair(nu.abs(), x)?;
    Ok(k.ln() - x)
}

/// `K_nu(x)` for `x > 0` (underflows to 0 for large `x`).
pub fn bessel_k(nu: f64, x: f64) -> Result<f64> {
    Ok(log_bessel_k(nu, x)?.exp())
}

/// Ratio `K_{nu+1}(x) / K_nu(x)`.
pub fn bessel_k_ratio(nu: f64, x: f64) -> Result<f64> {
    if nu >= 0.0 {
        let (k0, k1) = bessel_k_scaled_pair(nu, x)?;
        return Ok(k1 / k0);
    }
    // K_{nu+1} = K_{|nu+1|}, K_nu = K_{|nu|}.
    let (a, _) = bessel_k_scaled_pair((nu + 1.0).abs(), x)?;
    let (b, _) = bessel_k_scaled_pair(-nu, x)?;
    Ok(a / b)
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / core::f64::consts::SQRT_2)
}

/// Standard normal quantile by Newton iteration on the CDF.
pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::domain(alloc::format!("normal quantile needs p in (0,1), got {p}")));
    }
    // Logistic starting point, then Newton; the density never vanishes here.
    let mut x = (p / (1.0 - p)).ln() * 0.6;
    for _ in 0..100 {
        let pdf = (-0.5 * x * x).exp() / (2.0 * PI).sqrt();
        let step = (normal_cdf(x) - p) / pdf;
        x -= step.clamp(-2.0, 2.0);
        if step.abs() < 1e-15 * (1.0 + x.abs()) {
            break;
        }
    }
    Ok(x)
}
