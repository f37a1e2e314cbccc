//! Euler simulation on a fine grid and thinning to the observation grid.

use alloc::format;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelSpec, Theta};
use crate::noise::{NoiseSpec, RngStream};

/// Equally spaced observations `X_{t_0}, ..., X_{t_n}` with `t_j = j h`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationSeries {
    x: Vec<f64>,
    h: f64,
}

impl ObservationSeries {
    pub fn new(x: Vec<f64>, h: f64) -> Result<ObservationSeries> {
        if x.len() < 2 {
            return Err(Error::usage("an observation series needs at least two points"));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::usage(format!("step must be positive, got {h}")));
        }
        if let Some(j) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::usage(format!("observation {j} is not finite")));
        }
        Ok(ObservationSeries { x, h })
    }

    /// Observations over `[0, horizon]`; the step is `horizon / n`.
    pub fn over_horizon(x: Vec<f64>, horizon: f64) -> Result<ObservationSeries> {
        let n = x.len().saturating_sub(1).max(1) as f64;
        ObservationSeries::new(x, horizon / n)
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// Number of increments.
    pub fn n(&self) -> usize {
        self.x.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        self.h * self.n() as f64
    }
}

/// A simulated path on the fine Euler grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FinePath {
    pub x: Vec<f64>,
    pub dt: f64,
}

impl FinePath {
    pub fn n_fine(&self) -> usize {
        self.x.len() - 1
    }

    /// Keep every `factor`-th point.
    pub fn thin(&self, factor: usize) -> Result<ObservationSeries> {
        let n_fine = self.n_fine();
        if factor == 0 || n_fine % factor != 0 {
            return Err(Error::usage(format!("thinning factor {factor} does not divide {n_fine}")));
        }
        let x = self.x.iter().step_by(factor).copied().collect();
        ObservationSeries::new(x, self.dt * factor as f64)
    }
}

/// Euler recursion `X_{k+1} = X_k + a(X_k) dt + c(X_k) dJ_k` driven by the
/// given increments, at parameter `theta`.
pub fn euler_path(model: &ModelSpec, theta: &Theta, x0: f64, dt: f64, increments: impl IntoIterator<Item = f64>) -> Result<FinePath> {
    model.check_dims(theta)?;
    let m = model.coeffs();
    let increments = increments.into_iter();
    let mut x = Vec::with_capacity(increments.size_hint().0 + 1);
    x.push(x0);
    let mut state = x0;
    for (k, dj) in increments.enumerate() {
        state += m.drift(state, &theta.alpha) * dt + m.scale(state, &theta.gamma) * dj;
        if !state.is_finite() {
            return Err(Error::Overflow { step: k + 1 });
        }
        x.push(state);
    }
    Ok(FinePath { x, dt })
}

/// Simulate `n_fine` Euler steps over `[0, horizon]` at the model's true
/// parameter, with noise increments drawn from `rng`.
pub fn simulate_fine(
    model: &ModelSpec,
    noise: &NoiseSpec,
    horizon: f64,
    n_fine: usize,
    x0: f64,
    rng: &mut RngStream,
) -> Result<FinePath> {
    let theta = model.theta_true().ok_or_else(|| Error::usage("simulation needs a true parameter value"))?;
    noise.validate()?;
    if n_fine == 0 {
        return Err(Error::usage("need at least one simulation step"));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::usage(format!("horizon must be positive, got {horizon}")));
    }
    let dt = horizon / n_fine as f64;
    euler_path(model, theta, x0, dt, (0..n_fine).map(|_| noise.increment(dt, rng)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn spec(name: &str, bounds: Vec<(f64, f64)>, alpha: Vec<f64>, gamma: Vec<f64>) -> ModelSpec {
        ModelSpec::builtin(name, bounds, Some(Theta::new(alpha, gamma))).unwrap()
    }

    #[test]
    fn zero_noise_gives_euler_ode_iterates() {
        // a = -x through ou-exp with alpha = (0, -1).
        let m = spec("ou-exp", vec![(-5.0, 5.0); 3], vec![0.0, -1.0], vec![0.0]);
        let dt = 0.01;
        let p = euler_path(&m, m.theta_true().unwrap(), 1.0, dt, vec![0.0; 100]).unwrap();
        for (k, v) in p.x.iter().enumerate() {
            assert!((v - (1.0 - dt).powi(k as i32)).abs() < 1e-14);
        }
    }

    #[test]
    fn pure_noise_telescopes() {
        let m = spec("ou-exp", vec![(-5.0, 5.0); 3], vec![0.0, 0.0], vec![0.0]);
        let noise = NoiseSpec::Stable { beta: 1.5 };
        let p = simulate_fine(&m, &noise, 2.0, 1000, 0.5, &mut RngStream::new(9, 0)).unwrap();
        let incs = noise.sample(0.002, 1000, &mut RngStream::new(9, 0)).unwrap();
        let total: f64 = incs.iter().sum();
        assert!((p.x[1000] - 0.5 - total).abs() < 1e-10);
    }

    #[test]
    fn thinning() {
        let p = FinePath { x: (0..=12).map(f64::from).collect(), dt: 0.5 };
        let obs = p.thin(1).unwrap();
        assert_eq!(obs.x(), &p.x[..]);
        let obs = p.thin(4).unwrap();
        assert_eq!(obs.x(), &[0.0, 4.0, 8.0, 12.0]);
        assert_eq!((obs.n(), obs.h()), (3, 2.0));
        assert!((obs.horizon() - 6.0).abs() < 1e-12);
        assert!(matches!(p.thin(5), Err(Error::Usage(_))));
        assert!(matches!(p.thin(0), Err(Error::Usage(_))));
    }

    #[test]
    fn paper_grid_sizes() {
        let p = FinePath { x: vec![0.0; 150_001], dt: 1.0 / 150_000.0 };
        for (factor, n) in [(50, 3000), (150, 1000), (300, 500)] {
            let obs = p.thin(factor).unwrap();
            assert_eq!(obs.n(), n);
            assert!((obs.h() * n as f64 - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn overflow_reports_step() {
        let m = spec("ou-exp", vec![(-5.0, 5.0); 3], vec![0.0, 0.0], vec![0.0]);
        let err = euler_path(&m, m.theta_true().unwrap(), 0.0, 1.0, vec![1.0, f64::INFINITY, 1.0]).unwrap_err();
        assert_eq!(err, Error::Overflow { step: 2 });
    }

    #[test]
    fn simulation_requires_true_parameter() {
        let m = ModelSpec::builtin("scale-only", vec![(-1.0, 1.0)], None).unwrap();
        let r = simulate_fine(&m, &NoiseSpec::Nig { eta: 5.0 }, 1.0, 10, 0.0, &mut RngStream::new(0, 0));
        assert!(matches!(r, Err(Error::Usage(_))));
    }

    #[test]
    fn nonlinear_model_stays_finite_on_the_fine_grid() {
        let m = spec("nonlinear-2d", vec![(-11.0, 9.0), (-9.0, 11.0), (-8.5, 11.5), (-9.5, 10.5)], vec![-1.0, 1.0], vec![1.5, 0.5]);
        for seed in 0..100 {
            let p = simulate_fine(&m, &NoiseSpec::Nig { eta: 5.0 }, 1.0, 150_000, 0.0, &mut RngStream::new(seed, 0)).unwrap();
            assert!(p.x.iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn refinement_differences_shrink() {
        let m = spec("nonlinear-1d", vec![(-11.0, 9.0), (-8.5, 11.5)], vec![-1.0], vec![1.5]);
        let theta = m.theta_true().unwrap();
        let noise = NoiseSpec::Stable { beta: 1.5 };
        let mut medians = Vec::new();
        for n in [100usize, 200, 400, 800] {
            let mut diffs: Vec<f64> = (0..50)
                .map(|seed| {
                    let fine = noise.sample(1.0 / (2 * n) as f64, 2 * n, &mut RngStream::new(seed, 0)).unwrap();
                    let coarse: Vec<f64> = fine.chunks(2).map(|c| c[0] + c[1]).collect();
                    let a = euler_path(&m, theta, 0.0, 1.0 / (2 * n) as f64, fine).unwrap();
                    let b = euler_path(&m, theta, 0.0, 1.0 / n as f64, coarse).unwrap();
                    (a.x[2 * n] - b.x[n]).abs()
                })
                .collect();
            diffs.sort_by(f64::total_cmp);
            medians.push(diffs[25]);
        }
        assert!(medians.windows(2).all(|w| w[1] < w[0]), "{medians:?}");
    }
}
