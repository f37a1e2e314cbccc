//! Increments of the driving Lévy processes: standard symmetric
//! beta-stable and symmetric normal inverse Gaussian.

use alloc::vec::Vec;
use core::f64::consts::PI;
// Float math for no_std builds; std builds see the inherent methods.
#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A reproducible random stream identified by `(seed, stream_id)`.
///
/// Backed by ChaCha8 with the stream id selecting an independent keystream,
/// so replicate streams never share state.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        RngStream { seed, stream_id, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Uniform draw on the open interval `(0, 1)`.
    pub fn open01(&mut self) -> f64 {
        loop {
            let u: f64 = self.rng.random();
            if u > 0.0 {
                return u;
            }
        }
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    pub fn exp1(&mut self) -> f64 {
        self.rng.sample(Exp1)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// Law of the driving noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseSpec {
    /// Standard symmetric beta-stable, `E exp(iuJ_t) = exp(-t|u|^beta)`.
    Stable { beta: f64 },
    /// `J_t ~ NIG(eta, 0, t, 0)`.
    Nig { eta: f64 },
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            NoiseSpec::Stable { beta } if !(beta > 0.0 && beta < 2.0) => {
                Err(Error::domain(alloc::format!("stable noise needs beta in (0, 2), got {beta}")))
            }
            NoiseSpec::Nig { eta } if !(eta > 0.0 && eta.is_finite()) => {
                Err(Error::domain(alloc::format!("NIG noise needs eta > 0, got {eta}")))
            }
            _ => Ok(()),
        }
    }

    /// Index of the small-time stable limit (1 for NIG, which is locally Cauchy).
    pub fn local_index(&self) -> f64 {
        match *self {
            NoiseSpec::Stable { beta } => beta,
            NoiseSpec::Nig { .. } => 1.0,
        }
    }

    /// One increment over a step of length `dt`; parameters must be valid.
    pub fn increment(&self, dt: f64, rng: &mut RngStream) -> f64 {
        match *self {
            NoiseSpec::Stable { beta } => dt.powf(1.0 / beta) * stable_draw(beta, rng),
            NoiseSpec::Nig { eta } => nig_draw(eta, dt, rng),
        }
    }

    pub fn sample(&self, dt: f64, count: usize, rng: &mut RngStream) -> Result<Vec<f64>> {
        match *self {
            NoiseSpec::Stable { beta } => sample_stable(beta, dt, count, rng),
            NoiseSpec::Nig { eta } => sample_nig(eta, dt, count, rng),
        }
    }
}

/// Chambers–Mallows–Stuck transform for the symmetric case: maps an angle
/// `v` in `(-pi/2, pi/2)` and an exponential variate `w` to a standard
/// symmetric beta-stable variate.
pub fn cms_transform(beta: f64, v: f64, w: f64) -> f64 {
    if beta == 1.0 {
        return v.tan();
    }
    let a = (beta * v).sin() / v.cos().powf(1.0 / beta);
    a * ((v - beta * v).cos() / w).powf((1.0 - beta) / beta)
}

fn stable_draw(beta: f64, rng: &mut RngStream) -> f64 {
    let v = PI * (rng.open01() - 0.5);
    if beta == 1.0 {
        return v.tan();
    }
    let w = rng.exp1();
    cms_transform(beta, v, w)
}

/// Michael–Schucany–Haas draw from the inverse Gaussian law.
///
/// The smaller root of the quadratic is written as
/// `mean / (1 + r/2 + sqrt(r^2 + 4r)/2)` with `r = mean * nu^2 / shape`,
/// which stays accurate when `mean / shape` is huge (tiny time steps).
fn inverse_gaussian_draw(mean: f64, shape: f64, rng: &mut RngStream) -> f64 {
    let nu = rng.standard_normal();
    let r = mean * nu * nu / shape;
    let x = mean / (1.0 + 0.5 * r + 0.5 * (r * r + 4.0 * r).sqrt());
    let u = rng.open01();
    if u <= mean / (mean + x) {
        x
    } else {
        mean * mean / x
    }
}

fn nig_draw(eta: f64, dt: f64, rng: &mut RngStream) -> f64 {
    // NIG(eta, 0, dt, 0) = N(0, Z) with Z ~ IG(dt / eta, dt^2).
    let z = inverse_gaussian_draw(dt / eta, dt * dt, rng);
    z.sqrt() * rng.standard_normal()
}

fn check_step(dt: f64) -> Result<()> {
    if dt > 0.0 && dt.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(alloc::format!("time step must be positive, got {dt}")))
    }
}

/// I.i.d. increments with characteristic function `exp(-dt |u|^beta)`.
pub fn sample_stable(beta: f64, dt: f64, count: usize, rng: &mut RngStream) -> Result<Vec<f64>> {
    NoiseSpec::Stable { beta }.validate()?;
    check_step(dt)?;
    let scale = dt.powf(1.0 / beta);
    Ok((0..count).map(|_| scale * stable_draw(beta, rng)).collect())
}

/// I.i.d. `NIG(eta, 0, dt, 0)` increments (variance `dt / eta`).
pub fn sample_nig(eta: f64, dt: f64, count: usize, rng: &mut RngStream) -> Result<Vec<f64>> {
    NoiseSpec::Nig { eta }.validate()?;
    check_step(dt)?;
    Ok((0..count).map(|_| nig_draw(eta, dt, rng)).collect())
}

/// I.i.d. inverse Gaussian draws with the given mean and shape.
pub fn sample_inverse_gaussian(mean: f64, shape: f64, count: usize, rng: &mut RngStream) -> Result<Vec<f64>> {
    if !(mean > 0.0 && shape > 0.0 && mean.is_finite() && shape.is_finite()) {
        return Err(Error::domain(alloc::format!(
            "inverse Gaussian needs positive mean and shape, got ({mean}, {shape})"
        )));
    }
    Ok((0..count).map(|_| inverse_gaussian_draw(mean, shape, rng)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn mean_var(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
        (m, v)
    }

    fn sorted(mut xs: Vec<f64>) -> Vec<f64> {
        xs.sort_by(f64::total_cmp);
        xs
    }

    fn ks_one_sample(xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
        let xs = sorted(xs);
        let n = xs.len() as f64;
        xs.iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = cdf(x);
                (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
            })
            .fold(0.0, f64::max)
    }

    fn ks_two_sample(a: Vec<f64>, b: Vec<f64>) -> f64 {
        let (a, b) = (sorted(a), sorted(b));
        let (na, nb) = (a.len() as f64, b.len() as f64);
        let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
        while i < a.len() && j < b.len() {
            let x = a[i].min(b[j]);
            while i < a.len() && a[i] <= x {
                i += 1;
            }
            while j < b.len() && b[j] <= x {
                j += 1;
            }
            d = d.max((i as f64 / na - j as f64 / nb).abs());
        }
        d
    }

    fn cauchy_cdf(x: f64) -> f64 {
        0.5 + x.atan() / PI
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a = sample_stable(1.5, 0.1, 50, &mut RngStream::new(7, 3)).unwrap();
        let b = sample_stable(1.5, 0.1, 50, &mut RngStream::new(7, 3)).unwrap();
        let c = sample_stable(1.5, 0.1, 50, &mut RngStream::new(7, 4)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn cms_transform_is_zero_at_zero_angle() {
        assert_eq!(cms_transform(1.0, 0.0, 1.0), 0.0);
        assert_eq!(cms_transform(1.5, 0.0, 0.7), 0.0);
    }

    #[test]
    fn cauchy_interquartile_range() {
        let xs = sorted(sample_stable(1.0, 1.0, 100_000, &mut RngStream::new(1, 0)).unwrap());
        let iqr = xs[75_000] - xs[25_000];
        assert!((iqr - 2.0).abs() < 0.05, "iqr {iqr}");
    }

    #[test]
    fn stable_empirical_characteristic_function() {
        let xs = sample_stable(1.5, 1.0, 100_000, &mut RngStream::new(2, 0)).unwrap();
        let cf = xs.iter().map(|x| x.cos()).sum::<f64>() / xs.len() as f64;
        assert!((cf - (-1.0f64).exp()).abs() < 0.01, "cf {cf}");
    }

    #[test]
    fn cauchy_draws_pass_ks_against_cdf() {
        let mean_ks: f64 = (0..5)
            .map(|s| ks_one_sample(sample_stable(1.0, 1.0, 10_000, &mut RngStream::new(100 + s, 0)).unwrap(), cauchy_cdf))
            .sum::<f64>()
            / 5.0;
        assert!(mean_ks < 0.02, "ks {mean_ks}");
    }

    #[test]
    fn stable_self_similarity() {
        let dt = 0.037;
        let mean_ks: f64 = (0..5)
            .map(|s| {
                let a = sample_stable(1.5, dt, 10_000, &mut RngStream::new(200 + s, 0)).unwrap();
                let b: Vec<f64> = sample_stable(1.5, 1.0, 10_000, &mut RngStream::new(200 + s, 1))
                    .unwrap()
                    .into_iter()
                    .map(|x| dt.powf(1.0 / 1.5) * x)
                    .collect();
                ks_two_sample(a, b)
            })
            .sum::<f64>()
            / 5.0;
        assert!(mean_ks < 0.02, "ks {mean_ks}");
    }

    #[test]
    fn nig_moments() {
        let xs = sample_nig(5.0, 1.0, 100_000, &mut RngStream::new(3, 0)).unwrap();
        let (m, v) = mean_var(&xs);
        assert!(m.abs() < 4.0 * v.sqrt() / (xs.len() as f64).sqrt());
        assert!((v / 0.2 - 1.0).abs() < 0.05, "var {v}");
        let xs = sample_nig(10.0, 0.01, 100_000, &mut RngStream::new(4, 0)).unwrap();
        let (_, v) = mean_var(&xs);
        assert!((v / 0.001 - 1.0).abs() < 0.10, "var {v}");
    }

    #[test]
    fn nig_tiny_steps_look_cauchy() {
        // Step of the finest simulation grid; NIG(eta, 0, dt, 0) / dt is
        // close to standard Cauchy here, whose median absolute value is 1.
        let dt = 1.0 / 150_000.0;
        let xs = sample_nig(5.0, dt, 100_000, &mut RngStream::new(5, 0)).unwrap();
        let abs = sorted(xs.iter().map(|x| x.abs() / dt).collect());
        let med = abs[abs.len() / 2];
        assert!((med - 1.0).abs() < 0.03, "median {med}");
    }

    #[test]
    fn nig_infinite_divisibility() {
        let mean_ks: f64 = (0..5)
            .map(|s| {
                let mut rng = RngStream::new(300 + s, 0);
                let sums: Vec<f64> = (0..10_000)
                    .map(|_| sample_nig(5.0, 0.1, 10, &mut rng).unwrap().iter().sum())
                    .collect();
                let ones = sample_nig(5.0, 1.0, 10_000, &mut RngStream::new(300 + s, 1)).unwrap();
                ks_two_sample(sums, ones)
            })
            .sum::<f64>()
            / 5.0;
        assert!(mean_ks < 0.02, "ks {mean_ks}");
    }

    #[test]
    fn inverse_gaussian_moments_and_support() {
        let xs = sample_inverse_gaussian(2.0, 3.0, 100_000, &mut RngStream::new(6, 0)).unwrap();
        assert!(xs.iter().all(|&x| x > 0.0));
        let (m, v) = mean_var(&xs);
        assert!((m / 2.0 - 1.0).abs() < 0.03, "mean {m}");
        assert!((v / (8.0 / 3.0) - 1.0).abs() < 0.10, "var {v}");
    }

    #[test]
    fn invalid_parameters_are_domain_errors() {
        let mut rng = RngStream::new(0, 0);
        assert!(sample_stable(2.0, 1.0, 1, &mut rng).is_err());
        assert!(sample_stable(1.5, 0.0, 1, &mut rng).is_err());
        assert!(sample_nig(0.0, 1.0, 1, &mut rng).is_err());
        assert!(sample_inverse_gaussian(-1.0, 1.0, 1, &mut rng).is_err());
        assert_eq!(sample_nig(1.0, 1.0, 0, &mut rng).unwrap(), vec![]);
    }
}
