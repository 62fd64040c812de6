use super::*;
use crate::diagnostics::brute_force_assignment;
use proptest::prelude::*;
use rand::Rng;

fn probs(rows: &[Vec<f64>]) -> Mat {
    Mat::from_rows(rows).unwrap()
}

#[test]
fn ac_cases() {
    let one_hot = probs(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
    assert!((ac(&one_hot) - 100.0).abs() < 1e-12);

    let uniform = probs(&[vec![0.1; 10]]);
    assert!((ac(&uniform) - 10.0).abs() < 1e-12);

    let two = probs(&[vec![0.9, 0.1], vec![0.5, 0.5]]);
    assert!((ac(&two) - 70.0).abs() < 1e-12);
}

#[test]
fn doc_cases() {
    let val = probs(&[vec![0.8, 0.2]]);
    let same = probs(&[vec![0.2, 0.8]]);
    assert!((doc(&same, &val, 76.0) - 76.0).abs() < 1e-12);

    let test = probs(&[vec![0.6, 0.4]]);
    // acc_val=76, AC(val)=80, AC(test)=60 -> 56
    assert!((doc(&test, &val, 76.0) - 56.0).abs() < 1e-12);

    let confident = probs(&[vec![1.0, 0.0]]);
    let shy_val = probs(&[vec![0.5, 0.5]]);
    assert!((doc(&confident, &shy_val, 90.0) - 100.0).abs() < 1e-12); // clamped
}

#[test]
fn atc_cases() {
    // all correct: threshold below the minimum, fraction 1
    let t = atc_fit(&[0.3, 0.5, 0.9], &[true, true, true]).unwrap();
    assert!(t < 0.3);
    assert!((atc_predict(&[0.3, 0.5, 0.9], t) - 100.0).abs() < 1e-12);

    // accuracy 0.5 with scores (0.1, 0.2, 0.8, 0.9): t between 0.2 and 0.8
    let t = atc_fit(&[0.1, 0.2, 0.8, 0.9], &[false, true, false, true]).unwrap();
    assert!(t > 0.2 && t < 0.8);
    assert!((atc_predict(&[0.1, 0.2, 0.8, 0.9], t) - 50.0).abs() < 1e-12);

    // all wrong: threshold above the maximum, fraction 0
    let t = atc_fit(&[0.3, 0.5, 0.9], &[false, false, false]).unwrap();
    assert!(t > 0.9);
    assert!(atc_predict(&[0.3, 0.5, 0.9], t).abs() < 1e-12);
}

#[test]
fn atc_threshold_property_on_random_sets() {
    let mut rng = Seed(11).rng();
    for _ in 0..100 {
        let n = rng.random_range(5usize..200);
        let conf: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let correct: Vec<bool> = (0..n).map(|_| rng.random_range(0.0..1.0) < 0.7).collect();
        let acc = correct.iter().filter(|&&c| c).count() as f64 / n as f64;
        let t = atc_fit(&conf, &correct).unwrap();
        let frac = conf.iter().filter(|&&c| c > t).count() as f64 / n as f64;
        assert!((frac - acc).abs() <= 1.0 / n as f64 + 1e-12);
    }
}

#[test]
fn allocate_marginal_largest_remainder() {
    let counts = allocate_marginal(10, &[0.55, 0.25, 0.2]).unwrap();
    assert_eq!(counts, vec![6, 2, 2]); // remainders .5, .5, 0 -> tie to lower index
    assert_eq!(counts.iter().sum::<usize>(), 10);
    assert!(allocate_marginal(10, &[0.5, 0.2]).is_err());
}

#[test]
fn cot_perfect_outputs_score_100() {
    // one-hot rows whose class counts match the marginal exactly
    let p = probs(&[
        vec![1.0, 0.0],
        vec![1.0, 0.0],
        vec![0.0, 1.0],
        vec![0.0, 1.0],
    ]);
    let est = cot(&p, &[0.5, 0.5]).unwrap();
    assert!((est - 100.0).abs() < 1e-12);
}

#[test]
fn cot_uniform_outputs_score_1_over_c() {
    let p = probs(&[vec![0.1; 10], vec![0.1; 10]]);
    let est = cot(&p, &[0.1; 10]).unwrap();
    // per-pair cost (C-1)/C = 0.9 -> estimate 10
    assert!((est - 10.0).abs() < 1e-9);
}

#[test]
fn cot_matches_brute_force_assignment() {
    let mut rng = Seed(12).rng();
    for _ in 0..100 {
        let n = rng.random_range(2usize..=6);
        let c = rng.random_range(2usize..=4);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let raw: Vec<f64> = (0..c).map(|_| rng.random_range(0.01..1.0)).collect();
                let s: f64 = raw.iter().sum();
                raw.into_iter().map(|v| v / s).collect()
            })
            .collect();
        let p = probs(&rows);
        let marginal = vec![1.0 / c as f64; c];
        let cost = cot_cost_matrix(&p, &marginal).unwrap();
        let (_, exact) = brute_force_assignment(&cost).unwrap();
        let est = cot(&p, &marginal).unwrap();
        let expected = (100.0 * (1.0 - exact / n as f64)).clamp(0.0, 100.0);
        assert!((est - expected).abs() < 1e-9);
    }
}

/// Minimal hand-built tracker helper.
fn tracker_from(conf: &[f64], init: &[usize], finals: &[usize]) -> FlipTracker {
    FlipTracker::for_tests(init.to_vec(), conf.to_vec(), finals.to_vec())
}

#[test]
fn weighted_flips_cases() {
    // zero flips
    let t = tracker_from(&[0.2, 0.5, 0.9], &[0, 1, 2], &[0, 1, 2]);
    assert_eq!(weighted_flips(&t).unwrap(), 0.0);

    // all flip with distinct confidences: sum of ranks / n = (n+1)/2
    let n = 8;
    let conf: Vec<f64> = (0..n).map(|i| 0.1 + i as f64 * 0.05).collect();
    let init: Vec<usize> = vec![0; n];
    let finals: Vec<usize> = vec![1; n];
    let t = tracker_from(&conf, &init, &finals);
    let wf = weighted_flips(&t).unwrap();
    assert!((wf - (n as f64 + 1.0) / 2.0).abs() < 1e-12);

    // 3 images, percentiles (1/3, 2/3, 1), flips (no, yes, yes) -> 5/3
    let t = tracker_from(&[0.1, 0.2, 0.3], &[0, 0, 0], &[0, 1, 2]);
    let wf = weighted_flips(&t).unwrap();
    assert!((wf - 5.0 / 3.0).abs() < 1e-12);
}

#[test]
fn weighted_flips_invariant_under_monotone_confidence_rescale() {
    let conf = [0.11, 0.37, 0.52, 0.74, 0.93];
    let init = [0, 1, 2, 3, 4];
    let finals = [0, 2, 2, 4, 4];
    let a = tracker_from(&conf, &init, &finals);
    let squashed: Vec<f64> = conf.iter().map(|&c| (5.0 * c).tanh()).collect();
    let b = tracker_from(&squashed, &init, &finals);
    assert_eq!(
        weighted_flips(&a).unwrap().to_bits(),
        weighted_flips(&b).unwrap().to_bits()
    );
}

#[test]
fn curve_recovers_published_coefficients() {
    let truth = [0.00036, -0.32, 75.66];
    let pairs: Vec<(f64, f64)> = (0..=20)
        .map(|i| {
            let x = i as f64 * 25.0;
            (x, truth[0] * x * x + truth[1] * x + truth[2])
        })
        .collect();
    let curve = fit_curve(&pairs, 2, true).unwrap();
    for (c, t) in curve.coefficients.iter().zip(truth) {
        assert!((c - t).abs() < 1e-8, "{c} vs {t}");
    }
    // evaluation at the fitted x-values reproduces the quadratic
    for &(x, y) in &pairs {
        assert!((curve.evaluate(x) - y).abs() < 1e-8);
    }
}

#[test]
fn published_curve_evaluation() {
    let f = CalibrationCurve::new(2, true, vec![0.00036, -0.32, 75.66]).unwrap();
    assert_eq!(predict_accuracy(&f, 0.0), 75.66);
    assert!((predict_accuracy(&f, 100.0) - 47.26).abs() < 1e-9);

    // a descending line clamps to zero once the polynomial goes negative
    let line = CalibrationCurve::new(1, false, vec![-1.0, 10.0]).unwrap();
    assert_eq!(predict_accuracy(&line, 20.0), 0.0);
}

#[test]
fn curve_fit_edge_cases() {
    // two points, degree 1: exact interpolation
    let curve = fit_curve(&[(0.0, 10.0), (2.0, 20.0)], 1, true).unwrap();
    assert!((curve.evaluate(1.0) - 15.0).abs() < 1e-10);

    // collinear points, degree 2: leading coefficient ~ 0
    let pairs: Vec<(f64, f64)> = (0..6).map(|i| (i as f64, 3.0 + 2.0 * i as f64)).collect();
    let curve = fit_curve(&pairs, 2, true).unwrap();
    assert!(curve.coefficients[0].abs() < 1e-8);

    // all-equal x: rank deficient
    assert!(matches!(
        fit_curve(&[(1.0, 1.0), (1.0, 2.0), (1.0, 3.0)], 1, true),
        Err(Error::FitFailed(_))
    ));

    // not enough pairs
    assert!(matches!(fit_curve(&[(0.0, 1.0), (1.0, 2.0)], 2, true), Err(Error::FitFailed(_))));
}

#[test]
fn limited_scale_cases() {
    assert_eq!(limited_scale(4.2, 100, 1000).unwrap(), 42.0);
    assert_eq!(limited_scale(7.0, 1000, 1000).unwrap(), 7.0);
    assert_eq!(limited_scale(3.2, 250, 1000).unwrap(), 12.8);
    assert!(limited_scale(1.0, 0, 1000).is_err());
}

#[test]
fn summary_arithmetic() {
    let reports = vec![
        EstimateReport {
            dataset: "a".into(),
            method: Method::Ac,
            estimate: 50.0,
            truth: Some(55.0),
            abs_error: Some(5.0),
        },
        EstimateReport {
            dataset: "b".into(),
            method: Method::Ac,
            estimate: 60.0,
            truth: Some(70.0),
            abs_error: Some(10.0),
        },
    ];
    let s = summarize(&reports, &[Method::Ac]);
    assert_eq!(s.len(), 1);
    assert!((s[0].average - 7.5).abs() < 1e-12);
    assert!((s[0].worst_case - 10.0).abs() < 1e-12);
    assert!((s[0].average_excl_worst - 5.0).abs() < 1e-12);
}

#[test]
fn perfect_estimator_has_zero_mae() {
    let reports = vec![EstimateReport {
        dataset: "only".into(),
        method: Method::Cot,
        estimate: 42.0,
        truth: Some(42.0),
        abs_error: Some(0.0),
    }];
    let s = summarize(&reports, &[Method::Cot]);
    assert_eq!(s[0].average, 0.0);
    assert_eq!(s[0].worst_case, 0.0);
}

#[test]
fn reports_csv_round_trip() {
    let reports = vec![
        EstimateReport {
            dataset: "gauss_s1".into(),
            method: Method::Wf,
            estimate: 61.25,
            truth: Some(60.0),
            abs_error: Some(1.25),
        },
        EstimateReport {
            dataset: "ext".into(),
            method: Method::Ac,
            estimate: 80.0,
            truth: None,
            abs_error: None,
        },
    ];
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("reports.csv");
    write_reports_csv(&reports, &path).unwrap();
    let back = read_reports_csv(&path).unwrap();
    assert_eq!(back.len(), 2);
    assert_eq!(back[0].dataset, "gauss_s1");
    assert_eq!(back[0].method, Method::Wf);
    assert_eq!(back[0].estimate.to_bits(), 61.25f64.to_bits());
    assert_eq!(back[1].truth, None);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]
    #[test]
    fn curve_output_always_in_range(seed in 0u64..5000) {
        let mut rng = Seed(seed).rng();
        let coeffs: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
        let curve = CalibrationCurve::new(2, true, coeffs).unwrap();
        for _ in 0..32 {
            let x = rng.random_range(-1e6..1e6);
            let y = curve.evaluate(x);
            prop_assert!((0.0..=100.0).contains(&y));
        }
    }
}
