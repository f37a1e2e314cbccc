//! Acceptance checks. Prints one PASS/FAIL line per criterion and a final
//! count. With `SQMLE_ACCEPTANCE_STRICT=1` the process exits nonzero when any
//! criterion fails.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use sqmle::config;
use sqmle::core::model::ModelSpec;
use sqmle::core::noise::{sample_nig, sample_stable};
use sqmle::core::quad;
use sqmle::core::sim::{simulate_fine, ObservationSeries};
use sqmle::core::special::gamma;
use sqmle::core::{NoiseSpec, QuasiLikelihood, RngStream, StableKernel, Theta};
use sqmle::harness::{run_experiment, Experiment, RunSummary};
use sqmle::llt::{run_llt, write_llt, LltReport};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn constants() -> Outcome {
    let c15 = StableKernel::new(1.5).unwrap().info_constants().unwrap();
    let c1 = StableKernel::new(1.0).unwrap().info_constants().unwrap();
    // Cauchy oracle: int (2y/(1+y^2))^2 phi_1 and int ((1-y^2)/(1+y^2))^2 phi_1.
    let cauchy = |f: fn(f64) -> f64| {
        let g = move |y: f64| f(y) / (PI * (1.0 + y * y));
        2.0 * quad::adaptive_to_infinity(g, 0.0, 1e-12, 10_000).unwrap().value
    };
    let oa = cauchy(|y| (2.0 * y / (1.0 + y * y)).powi(2));
    let og = cauchy(|y| ((1.0 - y * y) / (1.0 + y * y)).powi(2));
    let pass = (c15.c_alpha - 0.4281).abs() <= 5e-3
        && (c15.c_gamma - 0.9556).abs() <= 5e-3
        && (c1.c_alpha - oa).abs() <= 1e-6
        && (c1.c_gamma - og).abs() <= 1e-6;
    outcome(
        pass,
        format!(
            "C(1.5) = ({:.6}, {:.6}) vs (0.4281, 0.9556); C(1) = ({}, {}) vs quadrature ({:.9}, {:.9})",
            c15.c_alpha, c15.c_gamma, c1.c_alpha, c1.c_gamma, oa, og
        ),
    )
}

fn density_suite() -> Outcome {
    let mut worst = [0.0f64; 5];
    for beta in [1.0, 1.2, 1.5, 1.8] {
        let k = StableKernel::new(beta).unwrap();
        let at0 = (k.density(0.0).unwrap() - gamma(1.0 + 1.0 / beta) / PI).abs();
        let mut sym = 0.0f64;
        for i in 0..=4000 {
            let y = -20.0 + 0.01 * i as f64;
            sym = sym.max((k.density(y).unwrap() - k.density(-y).unwrap()).abs());
        }
        let (mass, k_mean, neg_dg) = k.moment_checks().unwrap();
        let c = k.info_constants().unwrap();
        // Odd integrands over the whole line.
        let odd = |f: &dyn Fn(f64) -> f64| quad::adaptive(f, -60.0, 60.0, 1e-10, 10_000).unwrap().value;
        let g_mean = odd(&|y| k.g(y).unwrap() * k.density(y).unwrap());
        let gk = odd(&|y| k.g(y).unwrap() * k.k(y).unwrap() * k.density(y).unwrap());
        let norm = [(mass - 1.0).abs(), k_mean.abs(), g_mean.abs(), gk.abs(), (neg_dg - c.c_alpha).abs()]
            .into_iter()
            .fold(0.0, f64::max);
        for (w, v) in worst.iter_mut().zip([at0, sym, norm, gk.abs(), (neg_dg - c.c_alpha).abs()]) {
            *w = w.max(v);
        }
    }
    let pass = worst[0] <= 1e-8 && worst[1] <= 1e-10 && worst[2] <= 1e-6;
    outcome(
        pass,
        format!(
            "max |phi(0) - Gamma(1+1/b)/pi| = {:.2e}, symmetry {:.2e}, moments {:.2e} (orthogonality {:.2e}, information identity {:.2e})",
            worst[0], worst[1], worst[2], worst[3], worst[4]
        ),
    )
}

fn fd_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let h = 1e-6 * (1.0 + x[i].abs());
            let (mut up, mut dn) = (x.to_vec(), x.to_vec());
            up[i] += h;
            dn[i] -= h;
            (f(&up) - f(&dn)) / (2.0 * h)
        })
        .collect()
}

fn derivatives() -> Outcome {
    let truth = [-1.0, 1.0, 1.5, 0.5];
    let bounds = truth.iter().map(|t| (t - 10.0, t + 10.0)).collect();
    let model = ModelSpec::builtin("nonlinear-2d", bounds, Some(Theta::from_flat(&truth, 2))).unwrap();
    let (mut score_err, mut hess_err) = (0.0f64, 0.0f64);
    for (beta, noise) in [(1.0, NoiseSpec::Nig { eta: 5.0 }), (1.5, NoiseSpec::Stable { beta: 1.5 })] {
        let k = StableKernel::new(beta).unwrap();
        let mut rng = RngStream::new(2024, beta.to_bits());
        for rep in 0..20u64 {
            let obs: ObservationSeries = simulate_fine(&model, &noise, 1.0, 200 * 20, 0.0, &mut RngStream::new(rep, 1))
                .unwrap()
                .thin(20)
                .unwrap();
            let ql = QuasiLikelihood::new(&obs, &model, &k);
            let x: Vec<f64> = truth.iter().map(|t| t + rng.open01() - 0.5).collect();
            let theta = Theta::from_flat(&x, 2);
            let score = ql.score(&theta).unwrap();
            let fd = fd_gradient(|p| ql.value(&Theta::from_flat(p, 2)).unwrap(), &x);
            for i in 0..4 {
                score_err = score_err.max((score[i] - fd[i]).abs() / score[i].abs().max(1.0));
            }
            let hess = ql.hessian(&theta).unwrap();
            for i in 0..4 {
                let col = fd_gradient(|p| ql.score(&Theta::from_flat(p, 2)).unwrap()[i], &x);
                for j in 0..4 {
                    hess_err = hess_err.max((hess[(i, j)] - col[j]).abs() / hess[(i, j)].abs().max(1.0));
                }
            }
        }
    }
    outcome(
        score_err < 1e-5 && hess_err < 1e-4,
        format!("40 fixtures: max relative error score {score_err:.2e}, Hessian {hess_err:.2e}"),
    )
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

fn samplers() -> Outcome {
    const SEEDS: u64 = 5;
    let cauchy = (0..SEEDS)
        .map(|s| ks_one_sample(sample_stable(1.0, 1.0, 10_000, &mut RngStream::new(100 + s, 0)).unwrap(), |x| 0.5 + x.atan() / PI))
        .sum::<f64>()
        / SEEDS as f64;
    let dt = 0.037f64;
    let selfsim = (0..SEEDS)
        .map(|s| {
            let a = sample_stable(1.5, dt, 10_000, &mut RngStream::new(200 + s, 0)).unwrap();
            let b = sample_stable(1.5, 1.0, 10_000, &mut RngStream::new(200 + s, 1)).unwrap();
            ks_two_sample(a, b.into_iter().map(|x| dt.powf(1.0 / 1.5) * x).collect())
        })
        .sum::<f64>()
        / SEEDS as f64;
    let xs = sample_nig(5.0, 1.0, 100_000, &mut RngStream::new(3, 0)).unwrap();
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
    let rel = (var / 0.2 - 1.0).abs();
    outcome(
        cauchy < 0.02 && selfsim < 0.02 && rel < 0.05,
        format!("Cauchy KS {cauchy:.4}, self-similarity KS {selfsim:.4} (mean of {SEEDS} seeds); NIG variance {var:.4} vs 0.2"),
    )
}

fn experiment(preset: &str, designs: &str) -> Experiment {
    let o = vec![format!("simulation.designs={designs}"), "experiment.replicates=200".to_string()];
    let c = config::parse(config::preset_text(preset).unwrap(), preset, &o).unwrap();
    Experiment::from_config(&c).unwrap()
}

fn rate_recovery(out: &Path) -> (Outcome, RunSummary) {
    let exp = experiment("stable15-1d", "[{horizon=5.0,n=100,fine_factor=250}]");
    let s = run_experiment(&exp, out).unwrap();
    let d = &s.designs[0];
    let mut pass = true;
    let mut parts = Vec::new();
    for c in &d.coordinates {
        let (m, sd) = (c.z_mean.unwrap(), c.z_sd.unwrap());
        let ok = m.abs() <= 0.2 && (0.8..=1.25).contains(&sd);
        pass &= ok;
        parts.push(format!("{}: mean {m:.3}, sd {sd:.3}{}", c.name, if ok { "" } else { " (out of band)" }));
    }
    let detail = format!("{} of {} replicates used; {}", d.used, d.rows, parts.join("; "));
    (outcome(pass, detail), s)
}

fn nig_accuracy(out: &Path) -> (Outcome, Outcome) {
    let exp = experiment(
        "nig-1d",
        "[{horizon=1.0,n=500,fine_factor=300},{horizon=1.0,n=1000,fine_factor=150},{horizon=1.0,n=3000,fine_factor=50}]",
    );
    let s = run_experiment(&exp, out).unwrap();
    let mut mono = true;
    let mut parts = Vec::new();
    for i in 0..2 {
        let errs: Vec<f64> = s.designs.iter().map(|d| d.coordinates[i].median_abs_error.unwrap()).collect();
        mono &= errs.windows(2).all(|w| w[1] < w[0]);
        parts.push(format!("{}: {}", s.designs[0].coordinates[i].name, errs.iter().map(|e| format!("{e:.4}")).collect::<Vec<_>>().join(" > ")));
    }
    let best = s.designs.last().unwrap();
    let cover: Vec<f64> = best.coordinates.iter().map(|c| c.coverage.unwrap()).collect();
    let covered = cover.iter().all(|c| (0.90..=0.99).contains(c));
    (
        outcome(mono, format!("median absolute error at n = 500, 1000, 3000: {}", parts.join("; "))),
        outcome(
            covered,
            format!("n = 3000, {} replicates used: alpha1 {:.3}, gamma1 {:.3}", best.used, cover[0], cover[1]),
        ),
    )
}

fn llt_rates(out: &Path) -> Outcome {
    let mut parts = Vec::new();
    let mut pass = true;
    let cases = [
        ("tempered", "{ kind = \"tempered_stable\", beta = 1.5, lambda_tempering = 1.0 }", 0.55..=0.80),
        ("nig", "{ kind = \"gh_nig\", gh_lambda = -0.5, gh_eta = 5.0 }", 0.80..=1.10),
    ];
    for (name, cf, band) in cases {
        let c = config::parse(&format!("[llt]\ncf = {cf}\n"), name, &[]).unwrap();
        let r: LltReport = run_llt(&c.llt, c.kernel, 0).unwrap();
        let dir = out.join(name);
        fs::create_dir_all(&dir).unwrap();
        write_llt(&dir, &r).unwrap();
        let slope = r.fit.slope;
        let ok = slope.is_some_and(|s| band.contains(&s));
        pass &= ok;
        parts.push(format!(
            "{name} slope {} in [{:.2}, {:.2}] over {} of {} h values",
            slope.map_or("undefined".into(), |s| format!("{s:.4}")),
            band.start(),
            band.end(),
            r.fit.used.len(),
            r.fit.h_values.len()
        ));
    }
    outcome(pass, parts.join("; "))
}

fn files(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<(PathBuf, Vec<u8>)>) {
        for e in fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                out.push((p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(root, root, &mut out);
    out.sort();
    out
}

fn report(id: usize, name: &str, started: Instant, o: &Outcome) -> bool {
    println!(
        "{} {id} {name} [{:.1} s]: {}",
        if o.pass { "PASS" } else { "FAIL" },
        started.elapsed().as_secs_f64(),
        o.detail
    );
    o.pass
}

/// Criteria 5 to 8 write their result files under `root`.
fn simulation_criteria(root: &Path, print: bool) -> Vec<Outcome> {
    let t = Instant::now();
    let (c5, _) = rate_recovery(&root.join("rate_recovery"));
    let t5 = t.elapsed();
    let (c6, c7) = nig_accuracy(&root.join("nig_accuracy"));
    let t67 = t.elapsed() - t5;
    let t8 = Instant::now();
    let c8 = llt_rates(&root.join("llt"));
    if print {
        eprintln!("timing: rate recovery {:.1} s, NIG designs {:.1} s, local limit {:.1} s", t5.as_secs_f64(), t67.as_secs_f64(), t8.elapsed().as_secs_f64());
    }
    vec![c5, c6, c7, c8]
}

fn main() -> ExitCode {
    let mut passed = 0usize;
    let quick: [(&str, fn() -> Outcome); 4] = [
        ("constants", constants),
        ("stable density", density_suite),
        ("score and Hessian", derivatives),
        ("samplers", samplers),
    ];
    for (i, (name, f)) in quick.iter().enumerate() {
        let t = Instant::now();
        let o = f();
        passed += report(i + 1, name, t, &o) as usize;
    }

    let first = tempfile::tempdir().unwrap();
    let t = Instant::now();
    let outcomes = simulation_criteria(first.path(), true);
    let names = ["rate recovery (S_1.5, T=5, n=100)", "monotone accuracy (NIG, T=1)", "coverage (NIG, n=3000)", "local limit rates"];
    for (i, (name, o)) in names.iter().zip(&outcomes).enumerate() {
        passed += report(i + 5, name, t, o) as usize;
    }

    let t = Instant::now();
    let second = tempfile::tempdir().unwrap();
    simulation_criteria(second.path(), false);
    let (a, b) = (files(first.path()), files(second.path()));
    let differing: Vec<String> = a
        .iter()
        .zip(&b)
        .filter(|(x, y)| x != y)
        .map(|(x, _)| x.0.display().to_string())
        .collect();
    let same = a.len() == b.len() && differing.is_empty();
    let o = outcome(
        same,
        if same {
            format!("{} result files byte-identical across two runs", a.len())
        } else {
            format!("{} vs {} files; differing: {}", a.len(), b.len(), differing.join(", "))
        },
    );
    passed += report(9, "determinism", t, &o) as usize;

    println!("{passed} of 9 criteria passed");
    let strict = std::env::var("SQMLE_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if passed == 9 || !strict {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
