use super::*;
use crate::datagen::{
    apply_corruption, gen_source, Corruption, CorruptionKind, SplitSizes, SynthSpec,
};
use crate::nnet::{default_arch, pretrain, PretrainCfg};

#[test]
fn entropy_weights_cases() {
    let e0 = DEFAULT_E0;
    let w = entropy_weights(&[e0, e0 + 0.5, e0 - 1.0, 0.0], e0);
    assert_eq!(w[0], 0.0); // strict inequality at the threshold
    assert_eq!(w[1], 0.0);
    assert!((w[2] - std::f64::consts::E).abs() < 1e-12);
    assert!((w[2] - 2.718282).abs() < 1e-6);
    assert!((w[3] - e0.exp()).abs() < 1e-9);
}

#[test]
fn diversity_mask_cases() {
    let logits = Mat::from_rows(&[vec![2.0, 0.0], vec![0.0, 3.0], vec![1.0, 1.0]]).unwrap();
    // no EMA yet: everything passes
    assert_eq!(diversity_mask(&logits, None, 0.05), vec![1.0; 3]);

    let m = vec![1.0, 0.0];
    let mask = diversity_mask(&logits, Some(&m), 0.05);
    assert_eq!(mask[0], 0.0); // parallel to m
    assert_eq!(mask[1], 1.0); // orthogonal
    assert_eq!(mask[2], 0.0); // cos = 0.707

    // zero-norm row is masked out when an EMA exists
    let z = Mat::from_rows(&[vec![0.0, 0.0]]).unwrap();
    assert_eq!(diversity_mask(&z, Some(&m), 0.05), vec![0.0]);
}

#[test]
fn ema_update_cases() {
    // first batch: m' = y
    assert_eq!(ema_update(None, &[1.0, 2.0], 0.9), vec![1.0, 2.0]);
    // fixed point
    let m = vec![0.5, -0.5];
    assert_eq!(ema_update(Some(&m), &m, 0.9), m);
    // alpha=0.9, m=0, y=1 -> 0.9
    let out = ema_update(Some(&[0.0]), &[1.0], 0.9);
    assert!((out[0] - 0.9).abs() < 1e-15);
}

fn bench_setup(seed: u64) -> (Classifier, crate::datagen::SourceData, SynthSpec) {
    let spec = SynthSpec {
        classes: 4,
        dim: 8,
        mean_scale: 6.0,
        std: 1.0,
        per_class: SplitSizes { train: 40, val: 20, holdout_fit: 20, test: 60 },
        seed: Seed(seed),
    };
    let src = gen_source(&spec).unwrap();
    let mut net = Classifier::new(8, default_arch(8, 4), Seed(seed + 1)).unwrap();
    let cfg = PretrainCfg { epochs: 20, accuracy_floor: 0.8, ..PretrainCfg::default() };
    pretrain(&mut net, &src.train, &src.val, &cfg, Seed(seed + 2)).unwrap();
    (net, src, spec)
}

fn shifted_stream(src: &crate::datagen::SourceData, spec: &SynthSpec, seed: u64) -> LabeledSet {
    let c = Corruption::new(CorruptionKind::AdditiveGaussian, 3).unwrap();
    apply_corruption(&src.test_clean, &c, spec, Seed(seed)).unwrap()
}

fn small_cfg(method: TtaMethod) -> TtaConfig {
    TtaConfig {
        method,
        batch: 16,
        track_n: 60,
        stop_iter: 30,
        eval_interval: 10,
        lr: 1e-2,
        ..TtaConfig::default()
    }
}

#[test]
fn all_filtered_batch_leaves_parameters_unchanged() {
    let (net, src, _) = bench_setup(100);
    let mut state = AdaptState::new(net, small_cfg(TtaMethod::Rdumb)).unwrap();
    let x = src.test_clean.features.select_rows(&[0, 1, 2, 3]);
    let before = state.net().params().to_vec();
    state.tta_step_weighted(&x, Some(&[0.0, 0.0, 0.0, 0.0])).unwrap();
    let after = state.net().params().to_vec();
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&before), bits(&after));
    assert_eq!(state.iteration(), 1);
}

#[test]
fn tent_step_lowers_batch_loss_for_small_lr() {
    // DERIVED check across seeds; tolerate a small failure rate.
    let mut failures = 0;
    let trials: usize = 20;
    for s in 0..trials as u64 {
        let (net, src, spec) = bench_setup(200 + s);
        let stream = shifted_stream(&src, &spec, 300 + s);
        let cfg = TtaConfig { method: TtaMethod::Tent, lr: 1e-3, ..small_cfg(TtaMethod::Tent) };
        let mut state = AdaptState::new(net, cfg).unwrap();
        let idx: Vec<usize> = (0..16).collect();
        let batch = stream.features.select_rows(&idx);

        let loss_of = |net: &Classifier| {
            let pass = net.forward(&batch, BnMode::BatchStats).unwrap();
            entropy_loss(&pass.logits, &vec![1.0; 16]).unwrap().0
        };
        let before = loss_of(state.net());
        state.tta_step(&batch).unwrap();
        let after = loss_of(state.net());
        if after >= before {
            failures += 1;
        }
    }
    assert!(failures_ok(failures, trials), "{failures}/{trials} failed to descend");
}

fn failures_ok(failures: usize, trials: usize) -> bool {
    (failures as f64) <= 0.05 * trials as f64
}

#[test]
fn adaptation_is_seed_deterministic() {
    let (net, src, spec) = bench_setup(400);
    let stream = shifted_stream(&src, &spec, 401);
    let holdout = src.holdout_fit.clone();
    let cfg = small_cfg(TtaMethod::Rdumb);
    let run = || adapt(&net, &stream, &holdout, &cfg, Seed(7), None).unwrap();
    let (ta, fa) = run();
    let (tb, fb) = run();
    assert_eq!(ta.records.len(), tb.records.len());
    for (a, b) in ta.records.iter().zip(&tb.records) {
        assert_eq!(a.holdout_acc.to_bits(), b.holdout_acc.to_bits());
        assert_eq!(a.mean_entropy.to_bits(), b.mean_entropy.to_bits());
    }
    assert_eq!(fa.final_preds(), fb.final_preds());
}

#[test]
fn rdumb_with_unit_weights_matches_tent_bitwise() {
    let (net, src, spec) = bench_setup(500);
    let stream = shifted_stream(&src, &spec, 501);
    let idx: Vec<usize> = (0..16).collect();
    let batch = stream.features.select_rows(&idx);

    let mut tent = AdaptState::new(net.clone(), small_cfg(TtaMethod::Tent)).unwrap();
    let mut rdumb = AdaptState::new(net, small_cfg(TtaMethod::Rdumb)).unwrap();
    tent.tta_step(&batch).unwrap();
    rdumb.tta_step_weighted(&batch, Some(&vec![1.0; 16])).unwrap();
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(tent.net().params()), bits(rdumb.net().params()));
}

#[test]
fn frozen_parameters_never_move() {
    let (net, src, spec) = bench_setup(600);
    let stream = shifted_stream(&src, &spec, 601);
    let partition = net.bn_affine_partition();
    let before: Vec<u64> = partition.frozen.iter().map(|&i| net.params()[i].to_bits()).collect();
    let mut state = AdaptState::new(net, small_cfg(TtaMethod::Tent)).unwrap();
    for t in 0..25 {
        let idx: Vec<usize> = (t..t + 16).collect();
        state.tta_step(&stream.features.select_rows(&idx)).unwrap();
    }
    let after: Vec<u64> =
        partition.frozen.iter().map(|&i| state.net().params()[i].to_bits()).collect();
    assert_eq!(before, after);
}

#[test]
fn reset_restores_snapshot_bit_exactly() {
    let (net, src, spec) = bench_setup(700);
    let stream = shifted_stream(&src, &spec, 701);
    let snap_bits: Vec<u64> = net.params().iter().map(|v| v.to_bits()).collect();
    let cfg = TtaConfig { reset_period: 10, ..small_cfg(TtaMethod::Rdumb) };
    let mut state = AdaptState::new(net, cfg).unwrap();
    for t in 0..10 {
        let idx: Vec<usize> = (t * 16..(t + 1) * 16).collect();
        state.tta_step(&stream.features.select_rows(&idx)).unwrap();
        if t == 8 {
            // t = 9 after the step: no reset yet
            assert!(!state.maybe_reset().unwrap());
            let now: Vec<u64> = state.net().params().iter().map(|v| v.to_bits()).collect();
            assert_ne!(now, snap_bits);
        }
    }
    assert_eq!(state.iteration(), 10);
    assert!(state.maybe_reset().unwrap());
    let now: Vec<u64> = state.net().params().iter().map(|v| v.to_bits()).collect();
    assert_eq!(now, snap_bits);
    assert!(state.ema().is_none());
}

#[test]
fn reset_count_matches_expected_schedule() {
    let (net, src, spec) = bench_setup(800);
    let stream = shifted_stream(&src, &spec, 801);
    let cfg = TtaConfig {
        reset_period: 10,
        stop_iter: 25,
        eval_interval: 5,
        batch: 16,
        track_n: 30,
        ..TtaConfig::default()
    };
    let (trace, _) = adapt(&net, &stream, &src.holdout_fit, &cfg, Seed(9), None).unwrap();
    assert_eq!(trace.reset_count, 2); // at t = 10 and t = 20
}

#[test]
fn stop_iter_zero_gives_single_record_and_no_flips() {
    let (net, src, spec) = bench_setup(900);
    let stream = shifted_stream(&src, &spec, 901);
    let cfg = TtaConfig { stop_iter: 0, batch: 16, track_n: 40, ..TtaConfig::default() };
    let (trace, tracker) = adapt(&net, &stream, &src.holdout_fit, &cfg, Seed(3), None).unwrap();
    assert_eq!(trace.records.len(), 1);
    assert_eq!(trace.records[0].iter, 0);
    assert_eq!(tracker.flip_count().unwrap(), 0);
}

#[test]
fn trace_records_land_on_eval_grid() {
    let (net, src, spec) = bench_setup(1000);
    let stream = shifted_stream(&src, &spec, 1001);
    let cfg = small_cfg(TtaMethod::Tent);
    let (trace, _) = adapt(&net, &stream, &src.holdout_fit, &cfg, Seed(4), None).unwrap();
    let iters: Vec<u64> = trace.records.iter().map(|r| r.iter).collect();
    assert_eq!(iters, vec![0, 10, 20, 30]);
}

#[test]
fn track_n_larger_than_stream_tracks_full_stream() {
    let (net, src, spec) = bench_setup(1100);
    let stream = shifted_stream(&src, &spec, 1101);
    let cfg = TtaConfig { track_n: 10_000, ..small_cfg(TtaMethod::Rdumb) };
    let (_, tracker) = adapt(&net, &stream, &src.holdout_fit, &cfg, Seed(5), None).unwrap();
    assert_eq!(tracker.len(), stream.len());
}

#[test]
fn empty_stream_is_rejected() {
    let (net, src, _) = bench_setup(1200);
    let empty = LabeledSet::new(Mat::zeros(0, 8), vec![], "empty").unwrap();
    let cfg = small_cfg(TtaMethod::Tent);
    assert!(adapt(&net, &empty, &src.holdout_fit, &cfg, Seed(6), None).is_err());
}

#[test]
fn percentiles_are_rank_scaled_and_top_is_one() {
    let (net, src, spec) = bench_setup(1300);
    let stream = shifted_stream(&src, &spec, 1301);
    let tracker = FlipTracker::init(&net, &stream, 50).unwrap();
    let mut by_conf: Vec<(f64, f64)> = tracker
        .init_conf()
        .iter()
        .copied()
        .zip(tracker.percentiles().iter().copied())
        .collect();
    by_conf.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    for w in by_conf.windows(2) {
        assert!(w[1].1 >= w[0].1);
    }
    let max_p = by_conf.last().unwrap().1;
    assert!((max_p - 1.0).abs() < 1e-12); // continuous confidences: no ties
    assert!(by_conf.first().unwrap().1 > 0.0);
}

#[test]
fn flip_count_is_recomputable_from_predictions() {
    let (net, src, spec) = bench_setup(1400);
    let stream = shifted_stream(&src, &spec, 1401);
    let cfg = small_cfg(TtaMethod::Rdumb);
    let (_, tracker) = adapt(&net, &stream, &src.holdout_fit, &cfg, Seed(8), None).unwrap();
    let finals = tracker.final_preds().unwrap();
    let manual = tracker
        .init_preds()
        .iter()
        .zip(finals)
        .filter(|(a, b)| a != b)
        .count();
    assert_eq!(manual, tracker.flip_count().unwrap());
}

#[test]
fn unfinalized_tracker_refuses_flips() {
    let (net, src, spec) = bench_setup(1500);
    let stream = shifted_stream(&src, &spec, 1501);
    let tracker = FlipTracker::init(&net, &stream, 20).unwrap();
    assert!(matches!(tracker.flips(), Err(Error::MissingPrerequisite(_))));
}

#[test]
fn trace_csv_round_trip() {
    let trace = Trace {
        records: vec![
            TraceRecord {
                iter: 0,
                holdout_acc: 61.25,
                mean_entropy: 1.75,
                silhouette: Some(0.41),
                shift_distance: Some(2.5),
            },
            TraceRecord {
                iter: 10,
                holdout_acc: 63.5,
                mean_entropy: 1.5,
                silhouette: None,
                shift_distance: None,
            },
        ],
        reset_count: 0,
        projections: Vec::new(),
    };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trace.csv");
    write_trace_csv(&trace, &path).unwrap();
    let back = read_trace_csv(&path).unwrap();
    assert_eq!(back.records.len(), 2);
    assert_eq!(back.records[0].holdout_acc.to_bits(), 61.25f64.to_bits());
    assert_eq!(back.records[0].silhouette, Some(0.41));
    assert_eq!(back.records[1].silhouette, None);
}

#[test]
fn batched_eval_merges_trailing_singleton() {
    let (net, src, _) = bench_setup(1600);
    // 17 rows with batch 16 would leave a singleton; the final chunk must
    // absorb it.
    let idx: Vec<usize> = (0..17).collect();
    let x = src.test_clean.features.select_rows(&idx);
    let out = eval_batched(&net, &x, 16).unwrap();
    assert_eq!(out.preds.len(), 17);
    assert_eq!(out.embeddings.rows(), 17);
}
