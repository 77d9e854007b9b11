use ntk_lens::bandit::*;
use ntk_lens::linalg::Matrix;
use ntk_lens::nn::*;
use ntk_lens::rng;
use ntk_lens::Result;
use proptest::prelude::*;

/// Gauss-Jordan inverse with partial pivoting, plus `log |det|`.
fn inverse_logdet(a: &[Vec<f64>]) -> (Vec<Vec<f64>>, f64) {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut row = r.clone();
            row.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            row
        })
        .collect();
    let mut logdet = 0.0;
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs())).unwrap();
        m.swap(c, p);
        let piv = m[c][c];
        logdet += piv.abs().ln();
        m[c].iter_mut().for_each(|v| *v /= piv);
        for r in 0..n {
            if r != c {
                let f = m[r][c];
                let pivot_row = m[c].clone();
                m[r].iter_mut().zip(&pivot_row).for_each(|(v, p)| *v -= f * p);
            }
        }
    }
    (m.into_iter().map(|r| r[n..].to_vec()).collect(), logdet)
}

fn matvec(a: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    a.iter().map(|r| r.iter().zip(v).map(|(x, y)| x * y).sum()).collect()
}

struct Conjugate {
    x: Matrix,
    y: Vec<f64>,
    noise: f64,
}

impl Conjugate {
    fn new(n: usize, d: usize, seed: u64) -> Self {
        let mut g = rng::stream(seed);
        let x = Matrix::from_fn(n, d, |_, _| rng::standard_normal(&mut g));
        let w: Vec<f64> = (0..d).map(|_| 0.8 * rng::standard_normal(&mut g)).collect();
        let y = (0..n)
            .map(|i| (0..d).map(|j| x.get(i, j) * w[j]).sum::<f64>() + 0.3 * rng::standard_normal(&mut g))
            .collect();
        Conjugate { x, y, noise: 0.09 }
    }

    fn precision(&self, lambda: f64) -> Vec<Vec<f64>> {
        let d = self.x.cols();
        (0..d)
            .map(|a| {
                (0..d)
                    .map(|b| {
                        let xtx: f64 = (0..self.x.rows()).map(|i| self.x.get(i, a) * self.x.get(i, b)).sum();
                        xtx / self.noise + if a == b { lambda } else { 0.0 }
                    })
                    .collect()
            })
            .collect()
    }

    fn map_estimate(&self, lambda: f64) -> Vec<f64> {
        let (inv, _) = inverse_logdet(&self.precision(lambda));
        let xty: Vec<f64> = (0..self.x.cols())
            .map(|j| (0..self.x.rows()).map(|i| self.x.get(i, j) * self.y[i]).sum::<f64>() / self.noise)
            .collect();
        matvec(&inv, &xty)
    }

    /// `log N(y; 0, s2 I + X X^T / lambda)`.
    fn log_evidence(&self, lambda: f64) -> f64 {
        let n = self.x.rows();
        let c: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|k| {
                        let xx: f64 = (0..self.x.cols()).map(|j| self.x.get(i, j) * self.x.get(k, j)).sum();
                        xx / lambda + if i == k { self.noise } else { 0.0 }
                    })
                    .collect()
            })
            .collect();
        let (inv, logdet) = inverse_logdet(&c);
        let q: f64 = self.y.iter().zip(matvec(&inv, &self.y)).map(|(a, b)| a * b).sum();
        -0.5 * q - 0.5 * logdet - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln()
    }

    fn posterior(&self, lambda: f64, form: LaplaceForm) -> LaplacePosterior {
        let spec = NetworkSpec::linear(self.x.cols(), 1).unwrap();
        let theta = ParameterVector::new(&spec, self.map_estimate(lambda), vec![]).unwrap();
        fit_laplace(&spec, &theta, &self.x, &self.y, lambda, self.noise, form).unwrap()
    }
}

#[test]
fn laplace_matches_conjugate_linear_gaussian() {
    let c = Conjugate::new(30, 4, 5);
    let z = Matrix::from_rows(&[vec![0.3, -1.0, 0.5, 2.0], vec![-1.2, 0.1, 0.0, 0.7]]).unwrap();
    for lambda in [0.1, 1.0, 7.5] {
        let (cov, _) = inverse_logdet(&c.precision(lambda));
        for form in [LaplaceForm::Weight, LaplaceForm::Kernel] {
            let post = c.posterior(lambda, form);
            for (i, v) in post.predictive_variance(&z).unwrap().into_iter().enumerate() {
                let oracle: f64 = z.row(i).iter().zip(matvec(&cov, z.row(i))).map(|(a, b)| a * b).sum();
                assert!((v - oracle).abs() < 1e-8 * oracle.max(1.0), "{form:?} variance {v} vs {oracle}");
            }
            let ev = post.log_marginal_likelihood().unwrap();
            let oracle = c.log_evidence(lambda);
            assert!((ev - oracle).abs() < 1e-8 * oracle.abs().max(1.0), "{form:?} evidence {ev} vs {oracle}");
        }
    }
}

fn exact_evidence_maximizer(c: &Conjugate) -> f64 {
    let grid: Vec<f64> = (0..=400).map(|i| -4.0 + 0.02 * i as f64).collect();
    let best = grid.iter().copied().max_by(|a, b| c.log_evidence(10f64.powf(*a)).total_cmp(&c.log_evidence(10f64.powf(*b)))).unwrap();
    let (mut lo, mut hi) = (best - 0.02, best + 0.02);
    for _ in 0..100 {
        let (m1, m2) = (lo + (hi - lo) / 3.0, hi - (hi - lo) / 3.0);
        if c.log_evidence(10f64.powf(m1)) < c.log_evidence(10f64.powf(m2)) {
            lo = m1;
        } else {
            hi = m2;
        }
    }
    10f64.powf(0.5 * (lo + hi))
}

#[test]
fn evidence_tuning_recovers_the_optimal_precision() {
    let c = Conjugate::new(40, 3, 9);
    let target = exact_evidence_maximizer(&c);
    let post = c.posterior(target, LaplaceForm::Auto);
    let posthoc = tune_prior_precision(&post, &TuneMode::posthoc(), 1).unwrap();
    assert!((posthoc / target - 1.0).abs() < 0.1, "posthoc {posthoc} vs {target}");
    let online = tune_prior_precision(&post, &TuneMode::Online, 1).unwrap();
    assert!((online / target - 1.0).abs() < 1e-4, "online {online} vs {target}");
}

#[test]
fn online_update_is_idle_without_new_data() {
    let c = Conjugate::new(10, 2, 1);
    let post = c.posterior(2.5, LaplaceForm::Weight);
    assert_eq!(tune_prior_precision(&post, &TuneMode::Online, 0).unwrap(), 2.5);
}

#[test]
fn weight_and_kernel_forms_agree_on_an_mlp() {
    let spec = NetworkSpec::mlp(&[3, 6, 1], Parametrization::Sp, true).unwrap();
    let theta = init_params(&spec, &InitConfig::gaussian(4)).unwrap();
    let mut g = rng::stream(8);
    let x = Matrix::from_fn(12, 3, |_, _| rng::standard_normal(&mut g));
    let y: Vec<f64> = (0..12).map(|i| x.get(i, 0).tanh()).collect();
    let z = Matrix::from_fn(5, 3, |_, _| rng::standard_normal(&mut g));
    let w = fit_laplace(&spec, &theta, &x, &y, 0.4, 0.2, LaplaceForm::Weight).unwrap();
    let k = fit_laplace(&spec, &theta, &x, &y, 0.4, 0.2, LaplaceForm::Kernel).unwrap();
    for (a, b) in w.predictive_variance(&z).unwrap().iter().zip(k.predictive_variance(&z).unwrap()) {
        assert!((a - b).abs() < 1e-9 * b.max(1.0));
    }
    let (ea, eb) = (w.log_marginal_likelihood().unwrap(), k.log_marginal_likelihood().unwrap());
    assert!((ea - eb).abs() < 1e-8 * eb.abs().max(1.0));
    let (ma, mb) = (w.mean(&z).unwrap(), k.mean(&z).unwrap());
    assert_eq!(ma, mb);
}

struct Unused;

impl RewardModel for Unused {
    fn refit(&mut self, _: &Matrix, _: &[f64], _: usize) -> Result<()> {
        panic!("random play never refits")
    }
    fn predict(&self, _: &Matrix) -> Result<(Vec<f64>, Vec<f64>)> {
        panic!("random play never predicts")
    }
}

#[test]
fn random_policy_regret_matches_chance() {
    for (data, k) in [(magic_like(3000, 0).unwrap(), 2.0f64), (letter_like(3000, 0).unwrap(), 26.0f64)] {
        let env = make_bandit_env(&data, 2000, 3).unwrap();
        let trace = run_bandit(&env, &mut Unused, &Schedule::Random, &BanditConfig::new(2000, 3)).unwrap();
        let p = 1.0 - 1.0 / k;
        let per_step = trace.final_regret() / 2000.0;
        let sd = (p * (1.0 - p) / 2000.0).sqrt();
        assert!((per_step - p).abs() < 3.0 * sd, "K={k}: {per_step} vs {p}");
    }
}

#[test]
fn cumulative_regret_starts_at_zero_and_never_decreases() {
    let data = magic_like(500, 1).unwrap();
    let env = make_bandit_env(&data, 200, 0).unwrap();
    let trace = run_bandit(&env, &mut Unused, &Schedule::Random, &BanditConfig::new(200, 0)).unwrap();
    let r = cumulative_regret(&trace);
    assert_eq!(r.len(), 201);
    assert_eq!(r[0], 0.0);
    assert!(r.windows(2).all(|w| w[1] >= w[0]));
}

#[test]
fn schedules_parse_their_display_form() {
    for s in ["random", "ml-posthoc", "ml-online", "constant:0.1", "ntk-theory:m=100,L=3"] {
        let parsed: Schedule = s.parse().unwrap();
        assert_eq!(parsed.to_string(), s);
    }
    for bad in ["constant", "constant:-1", "constant:x", "greedy", "ntk-theory:m"] {
        assert!(bad.parse::<Schedule>().is_err(), "{bad}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ucb_picks_a_maximal_utility(
        arms in prop::collection::vec((-5.0f64..5.0, 0.0f64..4.0), 1..12),
        gamma in 0.0f64..10.0,
    ) {
        let (means, vars): (Vec<f64>, Vec<f64>) = arms.into_iter().unzip();
        let a = ucb_select(&means, &vars, gamma).unwrap();
        let u = |i: usize| means[i] + gamma * vars[i].sqrt();
        let best = (0..means.len()).map(u).fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(u(a) >= best - 1e-9 * best.abs().max(1.0));
        prop_assert!((0..a).all(|i| u(i) < best - 1e-12 * best.abs().max(1.0)));
    }

    #[test]
    fn constant_schedules_round_trip(g in 0.0f64..1e6) {
        let s = Schedule::Constant(g);
        prop_assert_eq!(s.to_string().parse::<Schedule>().unwrap(), s);
    }
}
