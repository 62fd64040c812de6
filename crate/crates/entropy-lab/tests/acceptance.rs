//! Acceptance suite.
//!
//! Part 1 (this file, `c01`..`c09`): exact and oracle checks, each fast.
//! Part 2 (`c10`..`c17`): phenomenon reproductions on the default synthetic
//! benchmark. Every check prints one `ACCEPT ...: PASS/FAIL` line (run with
//! `cargo test --test acceptance -- --nocapture` to see them all).

mod common;

use common::{accept, pretrained_default};

use entropy_lab::datagen::*;
use entropy_lab::diagnostics::*;
use entropy_lab::emgmm::{run_toy, toy_blobs, GmmToyConfig, ToyInit};
use entropy_lab::estimators::*;
use entropy_lab::mat::Mat;
use entropy_lab::nnet::*;
use entropy_lab::stats::finite_diff_grad;
use entropy_lab::tta::*;
use entropy_lab::Seed;
use rand::Rng;

fn small_arch(input: usize, hidden: &[usize], classes: usize) -> Vec<LayerSpec> {
    let mut specs = Vec::new();
    let mut width = input;
    for &h in hidden {
        specs.push(LayerSpec::Linear { input: width, output: h });
        specs.push(LayerSpec::BatchNorm { dim: h });
        specs.push(LayerSpec::Relu);
        width = h;
    }
    specs.push(LayerSpec::Linear { input: width, output: classes });
    specs
}

#[test]
fn c01_entropy_gradients_match_finite_differences() {
    let mut worst: f64 = 0.0;
    for seed in 0..12u64 {
        let mut rng = Seed(4000 + seed).rng();
        let depth = 1 + (seed as usize) % 3;
        let hidden: Vec<usize> = (0..depth).map(|_| rng.random_range(3usize..=16)).collect();
        let input = rng.random_range(2usize..=8);
        let classes = rng.random_range(2usize..=6);
        let mut net =
            Classifier::new(input, small_arch(input, &hidden, classes), Seed(seed)).unwrap();
        let n = rng.random_range(4usize..=8);
        let x = Mat::from_vec(
            n,
            input,
            (0..n * input).map(|_| rng.random_range(-2.0..2.0)).collect(),
        )
        .unwrap();
        let weights: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..2.0)).collect();

        let partition = net.bn_affine_partition();
        let pass = net.forward(&x, BnMode::BatchStats).unwrap();
        let (_, dlogits) = entropy_loss(&pass.logits, &weights).unwrap();
        let analytic = net.backward(&pass.cache, &dlogits, &partition).unwrap();

        let base = net.params().to_vec();
        let bn_idx = partition.adaptable.clone();
        let bn_vals: Vec<f64> = bn_idx.iter().map(|&i| base[i]).collect();
        let numeric = finite_diff_grad(
            |v: &[f64]| {
                let mut probe = base.clone();
                for (&i, &val) in bn_idx.iter().zip(v) {
                    probe[i] = val;
                }
                net.set_params(&probe).unwrap();
                let pass = net.forward(&x, BnMode::BatchStats).unwrap();
                entropy_loss(&pass.logits, &weights).unwrap().0
            },
            &bn_vals,
            1e-5,
        );
        net.set_params(&base).unwrap();
        for (k, &i) in bn_idx.iter().enumerate() {
            let (a, b) = (analytic[i], numeric[k]);
            let rel = (a - b).abs() / a.abs().max(b.abs()).max(1e-6);
            worst = worst.max(rel);
        }
    }
    accept(
        "01 BN-affine entropy gradients vs central differences (rel < 1e-4)",
        worst < 1e-4,
        &format!("worst relative error {worst:.2e}"),
    );
}

#[test]
fn c02_hungarian_matches_brute_force() {
    let mut rng = Seed(4100).rng();
    let mut all_equal = true;
    for _ in 0..200 {
        let n = rng.random_range(1usize..=7);
        let cost =
            Mat::from_vec(n, n, (0..n * n).map(|_| rng.random_range(0.0..10.0)).collect()).unwrap();
        let (_, fast) = hungarian(&cost).unwrap();
        let (_, slow) = brute_force_assignment(&cost).unwrap();
        all_equal &= fast == slow;
    }
    accept("02 Hungarian equals brute-force minimum on 200 instances (n <= 7)", all_equal, "");
}

#[test]
fn c03_silhouette_matches_naive_definition() {
    // The textbook O(n^2) definition, written independently of the library.
    fn oracle(points: &Mat, assignment: &[usize]) -> f64 {
        let n = points.rows();
        let k = assignment.iter().max().unwrap() + 1;
        let mut total = 0.0;
        for i in 0..n {
            let own = assignment[i];
            let mates: Vec<usize> = (0..n).filter(|&j| j != i && assignment[j] == own).collect();
            if mates.is_empty() {
                continue;
            }
            let a = mates
                .iter()
                .map(|&j| Mat::dist2(points.row(i), points.row(j)).sqrt())
                .sum::<f64>()
                / mates.len() as f64;
            let mut b = f64::INFINITY;
            for c in (0..k).filter(|&c| c != own) {
                let members: Vec<usize> = (0..n).filter(|&j| assignment[j] == c).collect();
                if !members.is_empty() {
                    b = b.min(
                        members
                            .iter()
                            .map(|&j| Mat::dist2(points.row(i), points.row(j)).sqrt())
                            .sum::<f64>()
                            / members.len() as f64,
                    );
                }
            }
            total += (b - a) / a.max(b);
        }
        total / n as f64
    }

    let mut rng = Seed(4200).rng();
    let mut worst: f64 = 0.0;
    for _ in 0..30 {
        let n = rng.random_range(5usize..=200);
        let k = rng.random_range(2usize..5);
        let points =
            Mat::from_vec(n, 3, (0..n * 3).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap();
        let assignment: Vec<usize> = (0..n).map(|i| i % k).collect();
        let fast = silhouette(&points, &assignment).unwrap();
        worst = worst.max((fast - oracle(&points, &assignment)).abs());
    }
    accept(
        "03 Silhouette matches direct O(n^2) definition within 1e-12 (n <= 200)",
        worst < 1e-12,
        &format!("worst abs difference {worst:.2e}"),
    );
}

#[test]
fn c04_cot_matches_brute_force_matching() {
    let mut rng = Seed(4300).rng();
    let mut ok = true;
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
        let probs = Mat::from_rows(&rows).unwrap();
        let marginal = vec![1.0 / c as f64; c];
        let cost = cot_cost_matrix(&probs, &marginal).unwrap();
        let (_, exact) = brute_force_assignment(&cost).unwrap();
        let expected = (100.0 * (1.0 - exact / n as f64)).clamp(0.0, 100.0);
        ok &= (cot(&probs, &marginal).unwrap() - expected).abs() < 1e-9;
    }
    accept("04 COT equals brute-force minimal matching on 100 instances (n <= 6)", ok, "");
}

#[test]
fn c05_atc_threshold_property() {
    let mut rng = Seed(4400).rng();
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.random_range(5usize..300);
        let conf: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let correct: Vec<bool> = (0..n).map(|_| rng.random_range(0.0..1.0) < 0.6).collect();
        let acc = correct.iter().filter(|&&c| c).count() as f64 / n as f64;
        let t = atc_fit(&conf, &correct).unwrap();
        let frac = conf.iter().filter(|&&c| c > t).count() as f64 / n as f64;
        worst = worst.max((frac - acc).abs() - 1.0 / n as f64);
    }
    accept(
        "05 ATC: |fraction above threshold - val accuracy| <= 1/n on 100 sets",
        worst <= 1e-12,
        &format!("worst excess {worst:.2e}"),
    );
}

#[test]
fn c06_curve_fit_recovers_published_coefficients() {
    let truth = [0.00036, -0.32, 75.66];
    let pairs: Vec<(f64, f64)> = (0..=20)
        .map(|i| {
            let x = i as f64 * 25.0;
            (x, truth[0] * x * x + truth[1] * x + truth[2])
        })
        .collect();
    let fitted = fit_curve(&pairs, 2, true).unwrap();
    let worst = fitted
        .coefficients
        .iter()
        .zip(truth)
        .map(|(c, t)| (c - t).abs())
        .fold(0.0, f64::max);
    let published = CalibrationCurve::new(2, true, truth.to_vec()).unwrap();
    let at_zero = predict_accuracy(&published, 0.0);
    accept(
        "06 fit_curve recovers published quadratic within 1e-8; f(0) = 75.66 exactly",
        worst < 1e-8 && at_zero == 75.66,
        &format!("worst coefficient error {worst:.2e}, f(0) = {at_zero}"),
    );
}

#[test]
fn c07_rdumb_reset_and_tent_equivalence() {
    let (net, src, spec, root) = pretrained_default(3377);
    let c = Corruption::new(CorruptionKind::AdditiveGaussian, 3).unwrap();
    let stream = apply_corruption(&src.test_clean, &c, &spec, root.substream("c7")).unwrap();
    let snap_bits: Vec<u64> = net.params().iter().map(|v| v.to_bits()).collect();

    // reset: parameters bit-equal the snapshot at t = reset_period
    let cfg = TtaConfig { reset_period: 5, batch: 16, ..TtaConfig::default() };
    let mut state = AdaptState::new(net.clone(), cfg).unwrap();
    for t in 0..5usize {
        let idx: Vec<usize> = (t * 16..(t + 1) * 16).collect();
        state.tta_step(&stream.features.select_rows(&idx)).unwrap();
    }
    let reset_fired = state.maybe_reset().unwrap();
    let after: Vec<u64> = state.net().params().iter().map(|v| v.to_bits()).collect();
    let reset_ok = reset_fired && after == snap_bits;

    // unit-weight RDumb step is bit-identical to a Tent step
    let idx: Vec<usize> = (0..16).collect();
    let batch = stream.features.select_rows(&idx);
    let mut tent =
        AdaptState::new(net.clone(), TtaConfig { method: TtaMethod::Tent, batch: 16, ..TtaConfig::default() })
            .unwrap();
    let mut rdumb =
        AdaptState::new(net, TtaConfig { method: TtaMethod::Rdumb, batch: 16, ..TtaConfig::default() })
            .unwrap();
    tent.tta_step(&batch).unwrap();
    rdumb.tta_step_weighted(&batch, Some(&vec![1.0; 16])).unwrap();
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    let equiv_ok = bits(tent.net().params()) == bits(rdumb.net().params());

    accept(
        "07 RDumb reset restores snapshot bit-exactly; unit-weight RDumb step == Tent step",
        reset_ok && equiv_ok,
        &format!("reset {reset_ok}, equivalence {equiv_ok}"),
    );
}

#[test]
fn c08_kmeans_inertia_non_increasing() {
    let mut rng = Seed(4600).rng();
    let mut ok = true;
    for trial in 0..50u64 {
        let n = rng.random_range(10usize..80);
        let d = rng.random_range(2usize..6);
        let k = rng.random_range(2usize..6.min(n));
        let points = Mat::from_vec(
            n,
            d,
            (0..n * d).map(|_| rng.random_range(-4.0..4.0)).collect(),
        )
        .unwrap();
        let clustering = kmeans(&points, k, Seed(4700 + trial), 300, 0.0).unwrap();
        ok &= clustering.inertia_history.windows(2).all(|w| w[1] <= w[0] + 1e-9);
    }
    accept("08 k-means inertia non-increasing across Lloyd iterations (50 instances)", ok, "");
}

#[test]
fn c09_em_toy_log_likelihood_monotone() {
    let mut ok = true;
    for s in 0..20u64 {
        let (points, labels) = toy_blobs(4, 50, 8.0, 1.0, Seed(4800 + s));
        let traj = run_toy(&GmmToyConfig {
            k: 4,
            points,
            labels,
            init: ToyInit::Smart,
            eta: 0.0,
            iterations: 30,
            seed: Seed(4900 + s),
        })
        .unwrap();
        ok &= traj.log_likelihood.windows(2).all(|w| w[1] >= w[0] - 1e-9);
    }
    accept("09 EM toy with eta = 0: log-likelihood non-decreasing (20 seeds)", ok, "");
}
