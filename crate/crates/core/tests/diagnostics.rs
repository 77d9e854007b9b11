use ntk_lens::diagnostics::*;
use ntk_lens::linalg::{norm2, sym_eigenvalues, Matrix};
use ntk_lens::kernel::{entk, EntkStrategy};
use ntk_lens::nn::forward;
use proptest::prelude::*;

#[test]
fn problem_inputs_are_unit_norm_and_seeded() {
    let a = synthetic_problem(16, 0).unwrap();
    let b = synthetic_problem(16, 0).unwrap();
    assert_eq!(a, b);
    for i in 0..16 {
        assert!((norm2(a.x.row(i)) - 1.0).abs() < 1e-12);
    }
    assert_ne!(a.y, synthetic_problem(16, 1).unwrap().y);
}

#[test]
fn report_fields_are_consistent() {
    let problem = synthetic_problem(8, 3).unwrap();
    let (spec, theta) = shallow_relu_net(2048, 5).unwrap();
    let r = stability_proxy(&spec, &theta, &problem.x, &problem.y, &ProxyOptions::default(), 5, 6).unwrap();
    let g = entk(&spec, &theta, &problem.x, None, EntkStrategy::Dense).unwrap();
    let lmin = sym_eigenvalues(&g.matrix).unwrap()[0];
    assert!((r.lambda_min - lmin).abs() < 1e-10 * lmin.abs().max(1.0));
    let f0 = forward(&spec, &theta, &problem.x).unwrap().into_vec();
    let res: Vec<f64> = problem.y.iter().zip(&f0).map(|(a, b)| a - b).collect();
    assert!((r.residual_norm - norm2(&res)).abs() < 1e-12);
    assert!((r.rho - r.recompute_rho()).abs() < 1e-12 * r.rho);
    for (c, d) in r.c_prime.iter().zip(&r.deviation_norms) {
        assert!((c - 3.0 * d / r.lambda_min.sqrt()).abs() < 1e-12 * c.abs().max(1.0));
    }
    assert_eq!(r.verdict == Verdict::StableViolated, r.max_c_prime() > 0.5);
}

#[test]
fn deviation_methods_agree() {
    let problem = synthetic_problem(6, 0).unwrap();
    let (spec, theta0) = deep_relu_net(3, 32, true, 1).unwrap();
    let theta = theta0.with_values(sphere_point(theta0.values(), 0.5, 2, 0).unwrap()).unwrap();
    let dense = jacobian_deviation(&spec, &theta, &theta0, &problem.x, DeviationMethod::Dense).unwrap();
    for m in [DeviationMethod::Gram, DeviationMethod::Power] {
        let v = jacobian_deviation(&spec, &theta, &theta0, &problem.x, m).unwrap();
        assert!((v - dense).abs() < 1e-6 * dense, "{m:?}: {v} vs {dense}");
    }
}

#[test]
fn singular_gram_is_a_condition_violation() {
    assert!(matches!(stability_radius(0.0, &[1.0], &[0.0]), Err(ntk_lens::Error::ConditionViolated(_))));
    let k = Matrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
    assert!(gram_min_eigenvalue(&k, GramMethod::Dense).unwrap().abs() < 1e-12);
}

#[test]
fn sweep_records_every_cell() {
    let problem = synthetic_problem(16, 0).unwrap();
    let mut cfg = SweepConfig::new(vec![64, 1024], vec![2], vec![0, 1]);
    cfg.k = 2;
    let cells = width_sweep(&cfg, &problem).unwrap();
    assert_eq!(cells.len(), 4);
    for c in &cells {
        assert!(c.lambda_min.is_some());
        assert_eq!(c.report.is_some(), c.error.is_none());
    }
    let again = width_sweep(&cfg, &problem).unwrap();
    assert_eq!(cells, again);
    let rows = long_format(&cells).unwrap();
    assert!(rows.iter().any(|r| r.statistic == "c_prime_0"));
}

#[test]
fn deep_width_cap_is_reported() {
    let problem = synthetic_problem(4, 0).unwrap();
    let mut cfg = SweepConfig::new(vec![128], vec![3], vec![0]);
    cfg.max_deep_width = 64;
    let cells = width_sweep(&cfg, &problem).unwrap();
    assert!(cells[0].error.as_deref().unwrap().contains("capacity"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sphere_points_lie_on_the_sphere(seed in any::<u64>(), rho in 1e-3f64..1e3, i in 0usize..100) {
        let theta0: Vec<f64> = (0..17).map(|j| j as f64 * 0.1).collect();
        let p = sphere_point(&theta0, rho, seed, i).unwrap();
        let d: Vec<f64> = p.iter().zip(&theta0).map(|(a, b)| a - b).collect();
        prop_assert!((norm2(&d) - rho).abs() < 1e-10 * rho);
        prop_assert_eq!(p, sphere_point(&theta0, rho, seed, i).unwrap());
    }
}
