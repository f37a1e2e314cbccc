use proptest::prelude::*;
use sqmle_core::inference::{observed_information, sigma_hats, studentize, studentize_with, sym_sqrt};
use sqmle_core::model::ModelSpec;
use sqmle_core::sim::{simulate_fine, ObservationSeries};
use sqmle_core::sqlik::rates;
use sqmle_core::{Error, InfoConstants, NoiseSpec, RngStream, StableKernel, Theta};

fn nonlinear_2d() -> ModelSpec {
    let theta = Theta::new(vec![-1.0, 1.0], vec![1.5, 0.5]);
    ModelSpec::builtin("nonlinear-2d", vec![(-11.0, 9.0), (-9.0, 11.0), (-8.5, 11.5), (-9.5, 10.5)], Some(theta)).unwrap()
}

fn fixture() -> ObservationSeries {
    simulate_fine(&nonlinear_2d(), &NoiseSpec::Nig { eta: 5.0 }, 1.0, 15_000, 0.0, &mut RngStream::new(21, 0))
        .unwrap()
        .thin(50)
        .unwrap()
}

const HALF: InfoConstants = InfoConstants { c_alpha: 0.5, c_gamma: 0.5 };

#[test]
fn linear_drift_unit_scale() {
    let m = ModelSpec::expression("alpha1*x", "1", vec![(-5.0, 5.0)], None).unwrap();
    let obs = fixture();
    let (sa, sg) = sigma_hats(&obs, &m, &Theta::new(vec![0.3], vec![])).unwrap();
    let n = obs.n();
    let expected = obs.x()[..n].iter().map(|x| x * x).sum::<f64>() / n as f64;
    assert!((sa[(0, 0)] - expected).abs() < 1e-14 * expected);
    assert_eq!(sg.nrows(), 0);
}

#[test]
fn exponential_scale_gives_unit_sigma() {
    let m = ModelSpec::builtin("scale-only", vec![(-5.0, 5.0)], None).unwrap();
    let (_, sg) = sigma_hats(&fixture(), &m, &Theta::new(vec![], vec![0.7])).unwrap();
    assert!((sg[(0, 0)] - 1.0).abs() < 1e-15);
}

#[test]
fn nonlinear_model_matches_two_loop_oracle() {
    let obs = fixture();
    let theta = Theta::new(vec![-0.9, 1.2], vec![1.4, 0.6]);
    let (sa, sg) = sigma_hats(&obs, &nonlinear_2d(), &theta).unwrap();
    let n = obs.n();
    for i in 0..2 {
        for l in 0..2 {
            let (mut a, mut g) = (0.0, 0.0);
            for &x in &obs.x()[..n] {
                let c: f64 = (1.4 * x.cos() + 0.6 * x.sin()).exp();
                let da = [x, 1.0 / (1.0 + x * x)];
                let dc = [c * x.cos(), c * x.sin()];
                a += da[i] * da[l] / (c * c);
                g += dc[i] * dc[l] / (c * c);
            }
            a /= n as f64;
            g /= n as f64;
            assert!((sa[(i, l)] - a).abs() < 1e-12 * a.abs().max(1.0));
            assert!((sg[(i, l)] - g).abs() < 1e-12 * g.abs().max(1.0));
        }
    }
}

#[test]
fn estimate_at_reference_gives_zero_statistics() {
    let m = nonlinear_2d();
    let t = m.theta_true().unwrap();
    let r = studentize_with(&fixture(), &m, t, Some(t), 1.0, &HALF, 0.95).unwrap();
    assert!(r.z_alpha.iter().chain(&r.z_gamma).all(|&z| z == 0.0));
    assert!(!r.clipped);
    for (iv, v) in r.ci.iter().zip(t.to_flat()) {
        assert!(iv.contains(v) && iv.lower < iv.upper);
    }
}

#[test]
fn rate_examples() {
    assert_eq!(rates(100, 0.05, 1.0), (10.0, 10.0));
    let (ra, rg) = rates(3000, 1.0 / 3000.0, 1.5);
    assert!((ra - 3000f64.powf(1.0 / 6.0)).abs() < 1e-12 * ra);
    assert!((rg - 3000f64.sqrt()).abs() < 1e-12);
}

proptest! {
    #[test]
    fn rate_identity(n in 1usize..100_000, horizon in 0.01f64..100.0, beta in 1.0f64..1.99) {
        let h = horizon / n as f64;
        let (ra, _) = rates(n, h, beta);
        let other = horizon.powf(1.0 - 1.0 / beta) * (n as f64).powf((2.0 - beta) / (2.0 * beta));
        prop_assert!((ra - other).abs() <= 1e-12 * other);
    }
}

#[test]
fn rotating_alpha_rotates_the_statistic() {
    let (c, s) = (0.6f64, 0.8f64);
    // alpha = R alpha', R = [[c, -s], [s, c]].
    let rotated = ModelSpec::expression(
        "(0.6*alpha1 - 0.8*alpha2)*x + (0.8*alpha1 + 0.6*alpha2)/(1 + x^2)",
        "exp(gamma1*cos(x) + gamma2*sin(x))",
        vec![(-20.0, 20.0); 4],
        None,
    )
    .unwrap();
    let plain = nonlinear_2d();
    let obs = fixture();
    let est = Theta::new(vec![-0.8, 1.3], vec![1.45, 0.55]);
    let truth = plain.theta_true().unwrap().clone();
    let back = |t: &Theta| Theta::new(vec![c * t.alpha[0] + s * t.alpha[1], -s * t.alpha[0] + c * t.alpha[1]], t.gamma.clone());
    let a = studentize_with(&obs, &plain, &est, Some(&truth), 1.0, &HALF, 0.95).unwrap();
    let b = studentize_with(&obs, &rotated, &back(&est), Some(&back(&truth)), 1.0, &HALF, 0.95).unwrap();
    // z' = R^T z for a rotation.
    let expect = [c * a.z_alpha[0] + s * a.z_alpha[1], -s * a.z_alpha[0] + c * a.z_alpha[1]];
    for k in 0..2 {
        assert!((b.z_alpha[k] - expect[k]).abs() < 1e-10, "{:?} vs {expect:?}", b.z_alpha);
        assert!((b.z_gamma[k] - a.z_gamma[k]).abs() < 1e-12);
    }
}

#[test]
fn vanishing_sigma_is_singular() {
    let m = ModelSpec::expression("alpha1*x", "1", vec![(-5.0, 5.0)], None).unwrap();
    let obs = ObservationSeries::new(vec![0.0; 11], 0.1).unwrap();
    let r = sigma_hats(&obs, &m, &Theta::new(vec![1.0], vec![]));
    assert!(matches!(r, Err(Error::Singular(_))));
    let r = studentize_with(&obs, &m, &Theta::new(vec![1.0], vec![]), None, 1.0, &HALF, 0.95);
    assert!(matches!(r, Err(Error::Singular(_))));
}

#[test]
fn near_singular_roots_are_clipped() {
    let m = nalgebra::DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
    let (root, clipped) = sym_sqrt(&m).unwrap();
    assert!(clipped);
    assert!(((&root * &root) - &m).abs().max() < 1e-6);
    let m = nalgebra::DMatrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 9.0]);
    let (root, clipped) = sym_sqrt(&m).unwrap();
    assert!(!clipped);
    assert!((root[(0, 0)] - 2.0).abs() < 1e-14 && (root[(1, 1)] - 3.0).abs() < 1e-14);
}

#[test]
fn kernel_constants_are_used() {
    let m = nonlinear_2d();
    let t = m.theta_true().unwrap();
    let k = StableKernel::new(1.0).unwrap();
    let r = studentize(&fixture(), &m, t, None, &k, 0.9).unwrap();
    assert_eq!(r.constants, HALF);
    assert!(r.z_alpha.is_empty() && r.z_gamma.is_empty());
    assert_eq!(r.ci.len(), 4);
}

#[test]
fn observed_information_tracks_the_sigma_blocks() {
    // Cauchy-driven data fitted with beta = 1: the normalized Hessian should
    // be close to blockdiag(C_alpha Sigma_alpha, C_gamma Sigma_gamma).
    let m = nonlinear_2d();
    let obs = simulate_fine(&m, &NoiseSpec::Stable { beta: 1.0 }, 1.0, 200_000, 0.0, &mut RngStream::new(4, 0)).unwrap().thin(20).unwrap();
    let t = m.theta_true().unwrap();
    let k = StableKernel::new(1.0).unwrap();
    let info = observed_information(&obs, &m, t, &k).unwrap();
    let (sa, sg) = sigma_hats(&obs, &m, t).unwrap();
    for i in 0..2 {
        assert!((info[(i, i)] / (0.5 * sa[(i, i)]) - 1.0).abs() < 0.2, "{info}");
        assert!((info[(2 + i, 2 + i)] / (0.5 * sg[(i, i)]) - 1.0).abs() < 0.2, "{info}");
    }
    assert_eq!(info, info.transpose());
}
