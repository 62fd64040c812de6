use super::*;
use crate::datagen::{gen_source, SplitSizes, SynthSpec};
use crate::stats::finite_diff_grad;
use proptest::prelude::*;
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

fn random_batch(rng: &mut impl Rng, n: usize, d: usize) -> Mat {
    Mat::from_vec(n, d, (0..n * d).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap()
}

#[test]
fn gradient_check_bn_affine_through_entropy() {
    // The oracle: central finite differences of the entropy loss with respect
    // to every BatchNorm gamma/beta, across architectures up to 3 hidden
    // layers and widths <= 16.
    for seed in 0..12u64 {
        let mut rng = Seed(900 + seed).rng();
        let depth = 1 + (seed as usize) % 3;
        let hidden: Vec<usize> = (0..depth).map(|_| rng.random_range(3usize..=16)).collect();
        let input = rng.random_range(2usize..=8);
        let classes = rng.random_range(2usize..=6);
        let mut net = Classifier::new(input, small_arch(input, &hidden, classes), Seed(seed)).unwrap();
        let batch = rng.random_range(4usize..=9);
        let x = random_batch(&mut rng, batch, input);
        let weights: Vec<f64> = (0..x.rows()).map(|_| rng.random_range(0.0..2.0)).collect();

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
                let (loss, _) = entropy_loss(&pass.logits, &weights).unwrap();
                loss
            },
            &bn_vals,
            1e-5,
        );
        net.set_params(&base).unwrap();

        for (k, &i) in bn_idx.iter().enumerate() {
            let (a, b) = (analytic[i], numeric[k]);
            let rel = (a - b).abs() / a.abs().max(b.abs()).max(1e-8);
            assert!(rel < 1e-4, "seed {seed} param {i}: analytic {a} vs numeric {b}");
        }
        // Frozen parameters receive no gradient.
        for &i in &partition.frozen {
            assert_eq!(analytic[i], 0.0);
        }
    }
}

#[test]
fn gradient_check_all_params_through_cross_entropy() {
    // Same oracle, full partition: exercises the Linear weight/bias gradients
    // the pretraining loop relies on.
    for seed in 0..4u64 {
        let mut rng = Seed(700 + seed).rng();
        let input = 3;
        let classes = 3;
        let mut net = Classifier::new(input, small_arch(input, &[5], classes), Seed(seed)).unwrap();
        let x = random_batch(&mut rng, 6, input);
        let labels: Vec<i64> = (0..6).map(|_| rng.random_range(0..classes as i64)).collect();

        let partition = net.full_partition();
        let pass = net.forward(&x, BnMode::BatchStats).unwrap();
        let (_, dlogits) = cross_entropy_loss(&pass.logits, &labels, 0.1).unwrap();
        let analytic = net.backward(&pass.cache, &dlogits, &partition).unwrap();

        let base = net.params().to_vec();
        let numeric = finite_diff_grad(
            |v: &[f64]| {
                net.set_params(v).unwrap();
                let pass = net.forward(&x, BnMode::BatchStats).unwrap();
                cross_entropy_loss(&pass.logits, &labels, 0.1).unwrap().0
            },
            &base,
            1e-5,
        );
        net.set_params(&base).unwrap();
        for (i, (&a, &b)) in analytic.iter().zip(&numeric).enumerate() {
            // central differences at h=1e-5 carry ~1e-11 absolute noise, so
            // near-zero gradients are compared against that floor instead
            let rel = (a - b).abs() / a.abs().max(b.abs()).max(1e-6);
            assert!(rel < 1e-4, "seed {seed} param {i}: analytic {a} vs numeric {b}");
        }
    }
}

#[test]
fn zero_final_linear_gives_zero_logits() {
    let mut net = Classifier::new(4, small_arch(4, &[6], 3), Seed(1)).unwrap();
    let mut params = net.params().to_vec();
    let n = params.len();
    // Final Linear holds the last 6*3 + 3 parameters.
    for p in params.iter_mut().skip(n - (6 * 3 + 3)) {
        *p = 0.0;
    }
    net.set_params(&params).unwrap();
    let mut rng = Seed(2).rng();
    let x = random_batch(&mut rng, 5, 4);
    let logits = net.logits(&x, BnMode::BatchStats).unwrap();
    assert!(logits.data().iter().all(|&v| v == 0.0));
}

#[test]
fn batch_stats_normalize_to_zero_mean_unit_variance() {
    // Use a large-variance input so the eps in the denominator is negligible
    // relative to the 1e-8 variance tolerance.
    let net = Classifier::new(
        3,
        vec![LayerSpec::BatchNorm { dim: 3 }, LayerSpec::Linear { input: 3, output: 2 }],
        Seed(3),
    )
    .unwrap();
    let mut rng = Seed(4).rng();
    let x = Mat::from_vec(64, 3, (0..192).map(|_| rng.random_range(-200.0..200.0)).collect())
        .unwrap();
    // gamma=1, beta=0 at init, so the BN output equals the normalized input.
    let pass = net.forward(&x, BnMode::BatchStats).unwrap();
    let normalized = &pass.embedding; // input to the final Linear
    for j in 0..3 {
        let col: Vec<f64> = (0..normalized.rows()).map(|r| normalized.get(r, j)).collect();
        let mean = col.iter().sum::<f64>() / col.len() as f64;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / col.len() as f64;
        assert!(mean.abs() < 1e-10, "mean {mean}");
        assert!((var - 1.0).abs() < 1e-8, "var {var}");
    }
}

#[test]
fn forward_is_deterministic() {
    let net = Classifier::new(4, small_arch(4, &[8], 3), Seed(5)).unwrap();
    let mut rng = Seed(6).rng();
    let x = random_batch(&mut rng, 6, 4);
    let a = net.logits(&x, BnMode::BatchStats).unwrap();
    let b = net.logits(&x, BnMode::BatchStats).unwrap();
    assert_eq!(a.data(), b.data());
}

#[test]
fn singleton_batch_and_dim_mismatch_rejected() {
    let net = Classifier::new(4, small_arch(4, &[8], 3), Seed(7)).unwrap();
    let one = Mat::zeros(1, 4);
    assert!(matches!(net.forward(&one, BnMode::BatchStats), Err(Error::SingletonBatch)));
    assert!(net.forward(&one, BnMode::FrozenStats).is_ok());
    let bad = Mat::zeros(3, 5);
    assert!(matches!(net.forward(&bad, BnMode::BatchStats), Err(Error::DimMismatch(_))));
}

#[test]
fn entropy_loss_saturated_is_zero() {
    let logits = Mat::from_vec(2, 3, vec![50.0, 0.0, 0.0, 0.0, 55.0, 0.0]).unwrap();
    let (loss, _) = entropy_loss(&logits, &[1.0, 1.0]).unwrap();
    assert!(loss.abs() < 1e-10);
}

#[test]
fn entropy_loss_uniform_is_ln_c() {
    let logits = Mat::zeros(3, 4);
    let (loss, _) = entropy_loss(&logits, &[1.0; 3]).unwrap();
    assert!((loss - 4.0_f64.ln()).abs() < 1e-12);
    assert!((loss - 1.386294).abs() < 1e-6);
}

#[test]
fn entropy_loss_hand_value() {
    // softmax(ln 3, 0) = (0.75, 0.25)
    let logits = Mat::from_vec(1, 2, vec![3.0_f64.ln(), 0.0]).unwrap();
    let (loss, _) = entropy_loss(&logits, &[1.0]).unwrap();
    assert!((loss - 0.562335).abs() < 1e-6);
}

#[test]
fn entropy_gradient_scales_linearly_in_weights() {
    let mut rng = Seed(8).rng();
    let logits = random_batch(&mut rng, 4, 5);
    let w: Vec<f64> = (0..4).map(|_| rng.random_range(0.1..1.5)).collect();
    let w2: Vec<f64> = w.iter().map(|v| 2.0 * v).collect();
    let (l1, g1) = entropy_loss(&logits, &w).unwrap();
    let (l2, g2) = entropy_loss(&logits, &w2).unwrap();
    assert_eq!(l2, 2.0 * l1);
    for (a, b) in g1.data().iter().zip(g2.data()) {
        assert_eq!(*b, 2.0 * *a);
    }
}

#[test]
fn zero_upstream_gradient_gives_zero_parameter_gradients() {
    let net = Classifier::new(4, small_arch(4, &[8], 3), Seed(9)).unwrap();
    let mut rng = Seed(10).rng();
    let x = random_batch(&mut rng, 5, 4);
    let pass = net.forward(&x, BnMode::BatchStats).unwrap();
    let zero = Mat::zeros(5, 3);
    let grads = net.backward(&pass.cache, &zero, &net.bn_affine_partition()).unwrap();
    assert!(grads.iter().all(|&g| g == 0.0));
}

#[test]
fn sgd_arithmetic() {
    let mut net = Classifier::new(2, small_arch(2, &[3], 2), Seed(11)).unwrap();
    let before = net.params().to_vec();
    let zero = vec![0.0; net.param_count()];
    net.sgd_step(&zero, 0.1).unwrap();
    assert_eq!(net.params(), &before[..]);

    // theta=1, g=2, lr=0.25 -> 0.5 on a single coordinate.
    let mut probe = before.clone();
    probe[0] = 1.0;
    net.set_params(&probe).unwrap();
    let mut g = zero.clone();
    g[0] = 2.0;
    net.sgd_step(&g, 0.25).unwrap();
    assert_eq!(net.params()[0], 0.5);

    // Two fixed-gradient steps match one summed step.
    let mut a = Classifier::new(2, small_arch(2, &[3], 2), Seed(12)).unwrap();
    let mut b = a.clone();
    let g1: Vec<f64> = (0..a.param_count()).map(|i| (i % 5) as f64 * 0.125).collect();
    let g2: Vec<f64> = (0..a.param_count()).map(|i| (i % 3) as f64 * 0.25).collect();
    let sum: Vec<f64> = g1.iter().zip(&g2).map(|(x, y)| x + y).collect();
    a.sgd_step(&g1, 0.5).unwrap();
    a.sgd_step(&g2, 0.5).unwrap();
    b.sgd_step(&sum, 0.5).unwrap();
    for (x, y) in a.params().iter().zip(b.params()) {
        assert!((x - y).abs() < 1e-15);
    }
}

#[test]
fn snapshot_restore_round_trip() {
    let mut net = Classifier::new(4, small_arch(4, &[8], 3), Seed(13)).unwrap();
    let snap = net.snapshot();
    let mut rng = Seed(14).rng();
    let x = random_batch(&mut rng, 6, 4);
    let before = net.logits(&x, BnMode::BatchStats).unwrap();

    let bumped: Vec<f64> = net.params().iter().map(|v| v + 0.25).collect();
    net.set_params(&bumped).unwrap();
    assert_ne!(net.params(), snap.params());

    net.restore(&snap).unwrap();
    let bits_now: Vec<u64> = net.params().iter().map(|v| v.to_bits()).collect();
    let bits_snap: Vec<u64> = snap.params().iter().map(|v| v.to_bits()).collect();
    assert_eq!(bits_now, bits_snap);

    net.restore(&snap).unwrap(); // idempotent
    let bits_again: Vec<u64> = net.params().iter().map(|v| v.to_bits()).collect();
    assert_eq!(bits_again, bits_snap);

    let after = net.logits(&x, BnMode::BatchStats).unwrap();
    assert_eq!(before.data(), after.data());
}

#[test]
fn restore_rejects_mismatched_shape() {
    let mut net = Classifier::new(4, small_arch(4, &[8], 3), Seed(15)).unwrap();
    let other = Classifier::new(4, small_arch(4, &[6], 3), Seed(15)).unwrap();
    assert!(matches!(net.restore(&other.snapshot()), Err(Error::SnapshotMismatch(_))));
}

#[test]
fn stale_cache_is_rejected() {
    let mut net = Classifier::new(4, small_arch(4, &[8], 3), Seed(16)).unwrap();
    let mut rng = Seed(17).rng();
    let x = random_batch(&mut rng, 5, 4);
    let pass = net.forward(&x, BnMode::BatchStats).unwrap();
    net.sgd_step(&vec![0.0; net.param_count()], 0.1).unwrap();
    let d = Mat::zeros(5, 3);
    assert!(matches!(
        net.backward(&pass.cache, &d, &net.bn_affine_partition()),
        Err(Error::StaleCache)
    ));
}

#[test]
fn arch_validation() {
    assert!(Classifier::new(4, vec![LayerSpec::Linear { input: 3, output: 2 }], Seed(0)).is_err());
    // no BatchNorm
    assert!(Classifier::new(4, vec![LayerSpec::Linear { input: 4, output: 2 }], Seed(0)).is_err());
    // must end with Linear
    assert!(Classifier::new(
        4,
        vec![LayerSpec::Linear { input: 4, output: 2 }, LayerSpec::BatchNorm { dim: 2 }],
        Seed(0)
    )
    .is_err());
}

fn separable_two_class() -> (LabeledSet, LabeledSet) {
    let spec = SynthSpec {
        classes: 2,
        dim: 4,
        mean_scale: 20.0,
        std: 0.3,
        per_class: SplitSizes { train: 40, val: 20, holdout_fit: 2, test: 2 },
        seed: Seed(18),
    };
    let src = gen_source(&spec).unwrap();
    (src.train, src.val)
}

#[test]
fn pretrain_reaches_high_accuracy_on_separable_data() {
    let (train, val) = separable_two_class();
    let mut net = Classifier::new(4, small_arch(4, &[16], 2), Seed(19)).unwrap();
    let cfg = PretrainCfg { epochs: 30, lr: 0.05, batch: 16, accuracy_floor: 0.99, ..PretrainCfg::default() };
    pretrain(&mut net, &train, &val, &cfg, Seed(20)).unwrap();
    let preds = net.predict(&val.features, BnMode::FrozenStats).unwrap();
    assert!(accuracy(&preds, &val.labels) >= 0.99);
}

#[test]
fn pretrain_zero_epochs_leaves_net_unchanged() {
    let (train, val) = separable_two_class();
    let mut net = Classifier::new(4, small_arch(4, &[16], 2), Seed(21)).unwrap();
    let before = net.params().to_vec();
    let cfg = PretrainCfg { epochs: 0, accuracy_floor: 0.0, ..PretrainCfg::default() };
    pretrain(&mut net, &train, &val, &cfg, Seed(22)).unwrap();
    assert_eq!(net.params(), &before[..]);
}

#[test]
fn pretrain_is_seed_deterministic() {
    let (train, val) = separable_two_class();
    let cfg = PretrainCfg { epochs: 8, accuracy_floor: 0.0, ..PretrainCfg::default() };
    let run = |seed| {
        let mut net = Classifier::new(4, small_arch(4, &[16], 2), Seed(23)).unwrap();
        pretrain(&mut net, &train, &val, &cfg, Seed(seed)).unwrap()
    };
    let (a, b) = (run(24), run(24));
    let bits = |s: &Snapshot| s.params().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a), bits(&b));
    let c = run(25);
    assert_ne!(bits(&a), bits(&c));
}

#[test]
fn pretrain_reports_floor_failure() {
    let (train, val) = separable_two_class();
    let mut net = Classifier::new(4, small_arch(4, &[16], 2), Seed(26)).unwrap();
    let cfg = PretrainCfg { epochs: 0, accuracy_floor: 0.95, ..PretrainCfg::default() };
    match pretrain(&mut net, &train, &val, &cfg, Seed(27)) {
        Err(Error::PretrainingFailed { accuracy, floor }) => {
            assert!(accuracy < floor);
        }
        other => panic!("expected PretrainingFailed, got {other:?}"),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn entropy_loss_bounds(seed in 0u64..10_000) {
        let mut rng = Seed(seed).rng();
        let (n, c) = (rng.random_range(1usize..6), rng.random_range(2usize..8));
        let logits = Mat::from_vec(
            n,
            c,
            (0..n * c).map(|_| rng.random_range(-30.0..30.0)).collect(),
        )
        .unwrap();
        let (loss, _) = entropy_loss(&logits, &vec![1.0; n]).unwrap();
        prop_assert!(loss >= 0.0);
        prop_assert!(loss <= (c as f64).ln() + 1e-12);
    }
}
