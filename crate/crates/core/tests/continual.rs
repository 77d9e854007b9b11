use ntk_lens::continual::*;
use ntk_lens::nn::*;
use ntk_lens::rng;
use ntk_lens::Error;
use proptest::prelude::*;
use rand::Rng;

#[test]
fn three_task_fixture_is_exact() {
    let a = AccuracyMatrix::from_rows(&[vec![0.9], vec![0.6, 0.8], vec![0.5, 0.7, 0.95]]).unwrap();
    assert_eq!(average_forgetting(&a).unwrap(), ((0.9 - 0.5) + (0.8 - 0.7)) / 2.0);
    assert_eq!(average_forgetting_inclusive(&a).unwrap(), ((0.9 - 0.5) + (0.8 - 0.7)) / 2.0);
    assert_eq!(average_accuracy(&a).unwrap(), (0.5 + 0.7 + 0.95) / 3.0);
    assert_eq!(learning_accuracy(&a).unwrap(), (0.9 + 0.8 + 0.95) / 3.0);
}

#[test]
fn improvement_gives_negative_forgetting() {
    let a = AccuracyMatrix::from_rows(&[vec![0.4], vec![0.9, 0.8]]).unwrap();
    assert_eq!(average_forgetting(&a).unwrap(), 0.4 - 0.9);
    assert_eq!(average_forgetting_inclusive(&a).unwrap(), 0.0);
}

#[test]
fn two_task_fixture() {
    let a = AccuracyMatrix::from_rows(&[vec![0.9], vec![0.7, 0.8]]).unwrap();
    assert_eq!(average_forgetting(&a).unwrap(), 0.9 - 0.7);
    assert_eq!(average_accuracy(&a).unwrap(), (0.7 + 0.8) / 2.0);
    assert_eq!(learning_accuracy(&a).unwrap(), (0.9 + 0.8) / 2.0);
    let m = ContinualMetrics::compute(&a, &[3.0, 4.0], &[3.0, 4.0]).unwrap();
    assert_eq!(m.param_distance, 0.0);
}

#[test]
fn malformed_matrices_are_rejected() {
    assert!(matches!(AccuracyMatrix::from_rows(&[vec![0.5, 0.5]]), Err(Error::Shape(_))));
    assert!(matches!(AccuracyMatrix::from_rows(&[vec![1.5]]), Err(Error::Input(_))));
    let mut a = AccuracyMatrix::new(3);
    assert!(a.set(0, 1, 0.5).is_err());
    a.set(0, 0, 0.5).unwrap();
    assert_eq!(a.missing(), vec![(2, 1), (2, 2), (3, 1), (3, 2), (3, 3)]);
}

fn random_matrix(t: usize, g: &mut impl Rng) -> AccuracyMatrix {
    let rows: Vec<Vec<f64>> = (0..t).map(|r| (0..=r).map(|_| g.random::<f64>()).collect()).collect();
    AccuracyMatrix::from_rows(&rows).unwrap()
}

#[test]
fn metrics_stay_in_range_over_random_matrices() {
    let mut g = rng::stream(2024);
    for case in 0..1000 {
        let t = 2 + case % 9;
        let a = random_matrix(t, &mut g);
        let phi = average_forgetting(&a).unwrap();
        let phi_incl = average_forgetting_inclusive(&a).unwrap();
        let acc = average_accuracy(&a).unwrap();
        let learn = learning_accuracy(&a).unwrap();
        assert!((-1.0..=1.0).contains(&phi), "{phi}");
        assert!((0.0..=1.0).contains(&phi_incl) && phi_incl >= phi);
        assert!((0.0..=1.0).contains(&acc) && (0.0..=1.0).contains(&learn));
        let tf = t as f64;
        assert!(learn - acc <= (tf - 1.0) / tf * phi + 1e-12);
    }
}

#[test]
fn learning_gap_equals_half_the_forgetting_for_two_tasks() {
    let mut g = rng::stream(5);
    for _ in 0..200 {
        let a = random_matrix(2, &mut g);
        let gap = learning_accuracy(&a).unwrap() - average_accuracy(&a).unwrap();
        assert!((gap - 0.5 * average_forgetting(&a).unwrap()).abs() < 1e-15);
    }
}

#[test]
fn csv_round_trip_recomputes_metrics() {
    let mut g = rng::stream(1);
    let a = random_matrix(6, &mut g);
    let mut buf = Vec::new();
    a.write_csv(&mut buf).unwrap();
    let b = AccuracyMatrix::read_csv(6, buf.as_slice()).unwrap();
    assert_eq!(a, b);
    assert_eq!(average_forgetting(&a).unwrap(), average_forgetting(&b).unwrap());
    assert!(AccuracyMatrix::read_csv(2, "stage,task,accuracy\n0,1,0.5\n".as_bytes()).is_err());
    assert!(AccuracyMatrix::read_csv(2, "stage,task,accuracy\n1,1,x\n".as_bytes()).is_err());
}

#[test]
fn rotation_edge_cases() {
    let img: Vec<f64> = (0..25).map(|v| v as f64 / 24.0).collect();
    assert_eq!(rotate_image(&img, 5, 0.0).unwrap(), img);
    assert!(matches!(rotate_image(&img, 4, 10.0), Err(Error::Shape(_))));
    assert!(rotate_image(&img, 5, 360.0).is_err());
    let mut r = img.clone();
    for _ in 0..4 {
        r = rotate_image(&r, 5, 90.0).unwrap();
    }
    assert_eq!(r, img);
    let q = rotate_image(&img, 5, 90.0).unwrap();
    assert_eq!(q[12], img[12]);
    assert_ne!(q, img);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rotation_preserves_pixel_range(
        pixels in prop::collection::vec(0.0f64..1.0, 64),
        angle in 0.0f64..359.0,
    ) {
        let out = rotate_image(&pixels, 8, angle).unwrap();
        let hi = pixels.iter().copied().fold(0.0, f64::max);
        prop_assert!(out.iter().all(|&v| (0.0..=hi + 1e-12).contains(&v)));
    }
}

#[test]
fn rotated_sequence_shares_labels_and_starts_with_the_base() {
    let base = synthetic_digit_splits(60, 20, 10, 3).unwrap();
    let seq = rotated_task_sequence(&base, &default_angles()).unwrap();
    assert_eq!(seq.len(), 9);
    assert_eq!(seq.tasks[0].train.x, base.train.x);
    assert_eq!(seq.tasks[0].test.x, base.test.x);
    for t in &seq.tasks {
        assert_eq!(t.train.labels, base.train.labels);
        assert!(t.classes.is_none());
    }
    assert!(rotated_task_sequence(&base, &[]).is_err());
}

#[test]
fn split_sequence_has_disjoint_classes() {
    let base = synthetic_digit_splits(100, 40, 10, 4).unwrap();
    let seq = split_task_sequence(&base, 2).unwrap();
    assert_eq!(seq.len(), 5);
    for (t, task) in seq.tasks.iter().enumerate() {
        let classes = task.classes.clone().unwrap();
        assert_eq!(classes, vec![2 * t, 2 * t + 1]);
        assert!(task.train.labels.iter().chain(&task.test.labels).all(|l| classes.contains(l)));
    }
    assert!(split_task_sequence(&base, 3).is_err());
}

fn small_run(width: usize, angles: &[f64]) -> SequentialRun {
    let base = synthetic_digit_splits(300, 100, 10, 0).unwrap();
    let seq = rotated_task_sequence(&base, angles).unwrap();
    let spec = NetworkSpec::mlp(&[100, width, 10], Parametrization::Sp, true).unwrap();
    let theta0 = init_params(&spec, &InitConfig::gaussian(9)).unwrap();
    let cfg = TrainConfig::sgd(0.01, 0.9, 1e-4, 32, 2, Loss::CrossEntropy, 4);
    train_sequential(&spec, &theta0, &seq, &cfg).unwrap()
}

#[test]
fn repeated_tasks_cannot_be_forgotten() {
    let run = small_run(32, &[0.0, 0.0, 0.0]);
    for t in 0..3 {
        for i in 0..=t {
            assert_eq!(run.accuracy.get(t, i), run.accuracy.get(t, t));
        }
    }
}

#[test]
fn wider_networks_move_less() {
    let angles = [0.0, 45.0, 90.0];
    let d: Vec<f64> = [16, 128, 1024]
        .iter()
        .map(|&w| {
            let run = small_run(w, &angles);
            param_distance(run.w_t.values(), run.w_0.values()).unwrap()
        })
        .collect();
    assert!(d[0] > d[1] && d[1] > d[2], "{d:?}");
}
