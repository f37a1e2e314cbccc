//! Box-constrained local minimizers: a clamped Nelder–Mead simplex and a
//! projected BFGS.

use alloc::vec;
use alloc::vec::Vec;
// Float math for no_std builds; std builds see the inherent methods.
#[allow(unused_imports)]
use num_traits::Float;

/// Outcome of one local search.
#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub evals: usize,
    pub iterations: usize,
    pub converged: bool,
}

fn clamp_into(x: &mut [f64], bounds: &[(f64, f64)]) {
    for (v, &(lo, hi)) in x.iter_mut().zip(bounds) {
        *v = v.clamp(lo, hi);
    }
}

fn inf_norm(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Nelder–Mead on the box `bounds`; trial points are clamped into the box
/// and non-finite objective values count as `+inf`.
///
/// Stops when every vertex lies within `xtol * (1 + |best|)` of the best
/// vertex (max-norm) or after `max_iter` iterations.
pub fn nelder_mead(
    mut f: impl FnMut(&[f64]) -> f64,
    x0: &[f64],
    bounds: &[(f64, f64)],
    max_iter: usize,
    xtol: f64,
) -> Minimum {
    let n = x0.len();
    let mut evals = 0;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_nan() { f64::INFINITY } else { v }
    };
    let mut start = x0.to_vec();
    clamp_into(&mut start, bounds);
    if n == 0 {
        let value = eval(&start, &mut evals);
        return Minimum { x: start, value, evals, iterations: 0, converged: value.is_finite() };
    }

    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(start.clone());
    for i in 0..n {
        let (lo, hi) = bounds[i];
        let step = 0.05 * (hi - lo);
        let mut v = start.clone();
        v[i] = if v[i] + step <= hi { v[i] + step } else { v[i] - step };
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| eval(v, &mut evals)).collect();

    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    let mut iterations = 0;
    let mut converged = false;
    let mut order: Vec<usize> = (0..=n).collect();
    let mut centroid = vec![0.0; n];
    let trial = |base: &[f64], dir: &[f64], t: f64| -> Vec<f64> {
        let mut p: Vec<f64> = base.iter().zip(dir).map(|(b, d)| b + t * (d - b)).collect();
        clamp_into(&mut p, bounds);
        p
    };

    while iterations < max_iter {
        // Stable sort keeps ties in vertex order, so runs are reproducible.
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let best = order[0];
        let worst = order[n];
        let scale = xtol * (1.0 + inf_norm(&simplex[best]));
        let diameter = simplex
            .iter()
            .map(|v| v.iter().zip(&simplex[best]).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())))
            .fold(0.0, f64::max);
        if diameter <= scale && values[best].is_finite() {
            converged = true;
            break;
        }
        iterations += 1;

        centroid.fill(0.0);
        for &k in &order[..n] {
            for (c, v) in centroid.iter_mut().zip(&simplex[k]) {
                *c += v / n as f64;
            }
        }
        let second_worst = values[order[n - 1]];

        // x_r = c + alpha (c - x_w), i.e. moving from x_w through c.
        let reflected = trial(&simplex[worst], &centroid, 1.0 + alpha);
        let fr = eval(&reflected, &mut evals);
        if fr < values[best] {
            let expanded = trial(&simplex[worst], &centroid, 1.0 + alpha * gamma);
            let fe = eval(&expanded, &mut evals);
            if fe < fr {
                simplex[worst] = expanded;
                values[worst] = fe;
            } else {
                simplex[worst] = reflected;
                values[worst] = fr;
            }
            continue;
        }
        if fr < second_worst {
            simplex[worst] = reflected;
            values[worst] = fr;
            continue;
        }
        let (contracted, fc) = if fr < values[worst] {
            let p = trial(&simplex[worst], &centroid, 1.0 + alpha * rho);
            let v = eval(&p, &mut evals);
            (p, v)
        } else {
            let p = trial(&simplex[worst], &centroid, 1.0 - rho);
            let v = eval(&p, &mut evals);
            (p, v)
        };
        if fc < fr.min(values[worst]) {
            simplex[worst] = contracted;
            values[worst] = fc;
            continue;
        }
        // Shrink towards the best vertex.
        let anchor = simplex[best].clone();
        for k in 0..=n {
            if k == best {
                continue;
            }
            for (v, a) in simplex[k].iter_mut().zip(&anchor) {
                *v = a + sigma * (*v - a);
            }
            values[k] = eval(&simplex[k], &mut evals);
        }
    }
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let best = order[0];
    Minimum { x: simplex[best].clone(), value: values[best], evals, iterations, converged }
}

/// Gradient with components that would push out of the box removed.
fn projected_gradient(x: &[f64], g: &[f64], bounds: &[(f64, f64)]) -> Vec<f64> {
    x.iter()
        .zip(g)
        .zip(bounds)
        .map(|((&xi, &gi), &(lo, hi))| if (xi <= lo && gi > 0.0) || (xi >= hi && gi < 0.0) { 0.0 } else { gi })
        .collect()
}

/// Projected BFGS with Armijo backtracking along the projected path.
///
/// `fg` returns the objective and its gradient, or `None` where they cannot
/// be evaluated. Stops when the projected gradient is below
/// `gtol * max(1, |f|)` or a step moves less than `xtol * (1 + |x|)`.
pub fn projected_bfgs(
    mut fg: impl FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
    x0: &[f64],
    bounds: &[(f64, f64)],
    max_iter: usize,
    xtol: f64,
    gtol: f64,
) -> Option<Minimum> {
    let n = x0.len();
    let mut x = x0.to_vec();
    clamp_into(&mut x, bounds);
    let mut evals = 1;
    let (mut fx, mut gx) = fg(&x)?;
    if !fx.is_finite() || gx.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let mut hinv = identity(n);
    let mut last_active = vec![false; n];
    let mut iterations = 0;
    let mut converged = false;

    while iterations < max_iter {
        let pg = projected_gradient(&x, &gx, bounds);
        if inf_norm(&pg) <= gtol * fx.abs().max(1.0) {
            converged = true;
            break;
        }
        iterations += 1;
        // Quasi-Newton step on the free coordinates; the inverse Hessian
        // model restarts whenever the active set changes.
        let active: Vec<bool> = pg.iter().zip(&gx).map(|(p, g)| *p == 0.0 && *g != 0.0).collect();
        if active != last_active {
            hinv = identity(n);
            last_active = active.clone();
        }
        let mut d: Vec<f64> = (0..n)
            .map(|i| if active[i] { 0.0 } else { -(0..n).filter(|&j| !active[j]).map(|j| hinv[i * n + j] * pg[j]).sum::<f64>() })
            .collect();
        if d.iter().zip(&pg).map(|(a, b)| a * b).sum::<f64>() >= 0.0 {
            d = pg.iter().map(|v| -v).collect();
            hinv = identity(n);
        }
        // Initial unit step, shortened to stay within a box-sized move.
        let width = bounds.iter().map(|(lo, hi)| hi - lo).fold(0.0, f64::max);
        let mut t = (width / inf_norm(&d).max(1e-300)).min(1.0);
        let mut accepted = None;
        while t > 1e-20 {
            let mut xn: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + t * b).collect();
            clamp_into(&mut xn, bounds);
            let decrease: f64 = gx.iter().zip(xn.iter().zip(&x)).map(|(g, (a, b))| g * (a - b)).sum();
            evals += 1;
            if let Some((fnew, gnew)) = fg(&xn) {
                if fnew.is_finite() && fnew <= fx + 1e-4 * decrease && gnew.iter().all(|v| v.is_finite()) {
                    accepted = Some((xn, fnew, gnew));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((xn, fnew, gnew)) = accepted else {
            break;
        };
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gnew.iter().zip(&gx).map(|(a, b)| a - b).collect();
        let small_step = inf_norm(&s) <= xtol * (1.0 + inf_norm(&x));
        x = xn;
        fx = fnew;
        gx = gnew;
        if small_step {
            converged = true;
            break;
        }
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        if sy > 1e-12 * norm2(&s) * norm2(&y) {
            bfgs_update(&mut hinv, &s, &y, sy);
        }
    }
    Some(Minimum { x, value: fx, evals, iterations, converged })
}

fn identity(n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        m[i * n + i] = 1.0;
    }
    m
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

// H <- (I - rho s y^T) H (I - rho y s^T) + rho s s^T
fn bfgs_update(h: &mut [f64], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..n).map(|i| (0..n).map(|j| h[i * n + j] * y[j]).sum()).collect();
    let yhy: f64 = y.iter().zip(&hy).map(|(a, b)| a * b).sum();
    for i in 0..n {
        for j in 0..n {
            h[i * n + j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
}
