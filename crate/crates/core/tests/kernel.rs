use ntk_lens::kernel::*;
use ntk_lens::linalg::{sym_eigenvalues, JitterPolicy, Matrix};
use ntk_lens::nn::*;
use ntk_lens::rng;
use proptest::prelude::*;

fn inputs(n: usize, d: usize, seed: u64) -> Matrix {
    let mut g = rng::stream(seed);
    Matrix::from_fn(n, d, |_, _| rng::standard_normal(&mut g))
}

fn problem16() -> (Matrix, Vec<f64>) {
    let x = inputs(16, 3, 11);
    let y = (0..16).map(|i| (2.0 * x.get(i, 0)).sin() + 0.3 * x.get(i, 1)).collect();
    (x, y)
}

#[test]
fn entk_is_jacobian_gram() {
    let spec = NetworkSpec::mlp(&[3, 7, 5, 2], Parametrization::Ntp, true).unwrap();
    let theta = init_params(&spec, &InitConfig::gaussian(2)).unwrap();
    let x = inputs(4, 3, 3);
    let j = jacobian(&spec, &theta, &x, DEFAULT_JACOBIAN_BUDGET).unwrap();
    let oracle = j.matmul(&j.transpose()).unwrap();
    for strategy in [EntkStrategy::Auto, EntkStrategy::Dense, EntkStrategy::Factored] {
        let k = entk(&spec, &theta, &x, None, strategy).unwrap();
        for (a, b) in k.matrix.data().iter().zip(oracle.data()) {
            assert!((a - b).abs() < 1e-10 * (1.0 + b.abs()), "{strategy:?}");
        }
    }
}

#[test]
fn kernel_features_cross_matches_entk() {
    let spec = NetworkSpec::mlp(&[3, 6, 1], Parametrization::Sp, true).unwrap();
    let theta = init_params(&spec, &InitConfig::gaussian(5)).unwrap();
    let (a, b) = (inputs(3, 3, 1), inputs(2, 3, 2));
    let fa = KernelFeatures::new(&spec, &theta, &a).unwrap();
    let fb = KernelFeatures::new(&spec, &theta, &b).unwrap();
    let cross = fa.cross(&fb);
    let oracle = entk(&spec, &theta, &a, Some(&b), EntkStrategy::Dense).unwrap();
    for (x, y) in cross.data().iter().zip(oracle.matrix.data()) {
        assert!((x - y).abs() < 1e-10 * (1.0 + y.abs()));
    }
    let diag = fa.diag();
    let full = fa.cross(&fa);
    for (i, d) in diag.iter().enumerate() {
        assert!((d - full.get(i, i)).abs() < 1e-10 * (1.0 + d));
    }
}

// One hidden ReLU layer without bias: the readout term E[relu(u)^2] and the
// first-layer term E[relu'(u)^2] <x, x> / d each contribute ||x||^2 / (2d).
#[test]
fn analytic_depth_two_diagonal() {
    let x = [1.0, -2.0, 0.5];
    let (_, theta) = ntk_relu_analytic(2, &x, &x, 0.0).unwrap();
    let sq = 1.0 + 4.0 + 0.25;
    assert!((theta - sq / 3.0).abs() < 1e-12);
}

#[test]
fn wide_entk_approaches_analytic_kernel() {
    let x = inputs(2, 4, 8);
    let analytic = AnalyticNtk::new(3, 0.0).gram(&x, &x).unwrap();
    let mut errs = Vec::new();
    for &m in &[64usize, 4096] {
        let spec = NetworkSpec::mlp(&[4, m, m, 1], Parametrization::Ntp, false).unwrap();
        let mut e = 0.0;
        for seed in 0..4 {
            let theta = init_params(&spec, &InitConfig::gaussian(seed)).unwrap();
            let k = entk(&spec, &theta, &x, None, EntkStrategy::Auto).unwrap();
            e += (k.matrix.get(0, 1) - analytic.get(0, 1)).abs();
        }
        errs.push(e / 4.0);
    }
    assert!(errs[1] < 0.5 * errs[0], "{errs:?}");
}

#[test]
fn gp_interpolates_without_noise() {
    let (x, y) = problem16();
    let k = AnalyticNtk::new(3, 0.1).gram(&x, &x).unwrap();
    let gp = gp_posterior(&k, &y, &[0.0; 16], 0.0, &JitterPolicy::default()).unwrap();
    let mean = gp.mean(&k, &[0.0; 16]).unwrap();
    let var = gp.variance(&k, &k.diag()).unwrap();
    for i in 0..16 {
        assert!((mean[i] - y[i]).abs() < 1e-6);
        assert!(var[i] < 1e-6);
    }
}

#[test]
fn gp_mean_is_quadratic_solution() {
    let (x, y) = problem16();
    let k = AnalyticNtk::new(2, 0.5).gram(&x, &x).unwrap();
    let f0: Vec<f64> = (0..16).map(|i| 0.1 * i as f64).collect();
    let gp = gp_posterior(&k, &y, &f0, 0.0, &JitterPolicy::default()).unwrap();
    let r: Vec<f64> = y.iter().zip(&f0).map(|(a, b)| a - b).collect();
    let v = solve_quadratic(&k, &r).unwrap();
    let xs = inputs(5, 3, 99);
    let ks = AnalyticNtk::new(2, 0.5).gram(&xs, &x).unwrap();
    let f0s = [0.3, -0.1, 0.0, 0.2, 1.0];
    let mean = gp.mean(&ks, &f0s).unwrap();
    for i in 0..5 {
        let composed = f0s[i] + ks.row(i).iter().zip(&v).map(|(a, b)| a * b).sum::<f64>();
        assert!((mean[i] - composed).abs() < 1e-10 * (1.0 + composed.abs()));
    }
}

#[test]
fn gradient_flow_reaches_targets() {
    let (x, y) = problem16();
    let k = AnalyticNtk::new(2, 1.0).gram(&x, &x).unwrap();
    let ev = sym_eigenvalues(&k).unwrap();
    let eta = 1.9 / ev[15];
    let steps = (16.0 / 1.9 * ev[15] / ev[0] * 1e8f64.ln()).ceil() as usize;
    let traj = kernel_gradient_descent(&k, &y, &[0.0; 16], eta, steps).unwrap();
    let last = traj.row(steps);
    for i in 0..16 {
        assert!((last[i] - y[i]).abs() < 1e-6);
    }
    assert!(matches!(
        kernel_gradient_descent(&k, &y, &[0.0; 16], 2.5 / ev[15], 1),
        Err(ntk_lens::Error::Unstable { .. })
    ));
}

#[test]
fn linearization_is_exact_at_expansion_point() {
    let spec = NetworkSpec::mlp(&[2, 9, 1], Parametrization::Ntp, true).unwrap();
    let theta = init_params(&spec, &InitConfig::gaussian(0)).unwrap();
    let x = inputs(5, 2, 1);
    let lin = linearize(&spec, &theta);
    let a = lin.predict(theta.values(), &x).unwrap();
    let b = forward(&spec, &theta, &x).unwrap();
    assert_eq!(a.data(), b.data());
}

#[test]
fn quadratic_minimizer_is_not_improved_by_perturbation() {
    let (x, y) = problem16();
    let k = AnalyticNtk::new(3, 0.1).gram(&x, &x).unwrap();
    let v = solve_quadratic(&k, &y).unwrap();
    let best = quadratic_objective(&k, &y, &v);
    let mut g = rng::stream(4);
    for _ in 0..20 {
        let w: Vec<f64> = v.iter().map(|vi| vi + 1e-3 * rng::standard_normal(&mut g)).collect();
        assert!(quadratic_objective(&k, &y, &w) >= best);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn analytic_gram_is_symmetric_psd(seed in 0u64..10_000, depth in 1usize..5, beta2 in 0.0f64..2.0) {
        let x = inputs(6, 3, seed);
        let k = AnalyticNtk::new(depth, beta2).gram(&x, &x).unwrap();
        prop_assert!(k.asymmetry() < 1e-12);
        let ev = sym_eigenvalues(&k).unwrap();
        prop_assert!(ev[0] > -1e-9 * ev[5].abs().max(1.0));
    }

    #[test]
    fn gp_variance_is_nonnegative_and_bounded(seed in 0u64..10_000, noise in 0.0f64..1.0) {
        let x = inputs(8, 2, seed);
        let xs = inputs(4, 2, seed + 1);
        let kern = AnalyticNtk::new(2, 0.2);
        let k = kern.gram(&x, &x).unwrap();
        let ks = kern.gram(&xs, &x).unwrap();
        let prior: Vec<f64> = (0..4).map(|i| kern.eval(xs.row(i), xs.row(i)).unwrap().1).collect();
        let gp = gp_posterior(&k, &[0.0; 8], &[0.0; 8], noise, &JitterPolicy::default()).unwrap();
        for (v, p) in gp.variance(&ks, &prior).unwrap().iter().zip(&prior) {
            prop_assert!(*v >= 0.0 && *v <= p + 1e-10);
        }
    }
}
