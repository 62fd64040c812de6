use entropy_lab::datagen::*;
use entropy_lab::nnet::*;
use entropy_lab::tta::*;
use entropy_lab::Seed;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let kind = CorruptionKind::parse(args.get(1).map(|s| s.as_str()).unwrap_or("scale")).unwrap();
    let sev: u8 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(3);
    let lr: f64 = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(1e-2);
    let batch: usize = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(64);
    let stop: u64 = args.get(5).map(|s| s.parse().unwrap()).unwrap_or(10000);
    let epochs: usize = args.get(6).map(|s| s.parse().unwrap()).unwrap_or(20);
    let mut pass = 0;
    for seed in 0..10u64 {
        let root = Seed(seed);
        let spec = SynthSpec { seed: root.substream("datagen"), ..SynthSpec::default() };
        let src = gen_source(&spec).unwrap();
        let mut net = Classifier::new(spec.dim, default_arch(spec.dim, spec.classes), root.substream("init")).unwrap();
        let pcfg = PretrainCfg { epochs, ..PretrainCfg::default() };
        if pretrain(&mut net, &src.train, &src.val, &pcfg, root.substream("pretrain")).is_err() {
            println!("seed {seed}: FLOOR FAILURE");
            continue;
        }
        let suite = make_shift_suite(&spec, &[kind], &[sev], root.substream("suite")).unwrap();
        let stream = &suite[0].1;
        let c = Corruption::new(kind, sev).unwrap();
        let holdout = apply_corruption(&src.holdout_fit, &c, &spec, root.substream("holdout-corrupt")).unwrap();
        let cfg = TtaConfig {
            method: TtaMethod::Tent, lr, batch, eval_batch: 64, stop_iter: stop, eval_interval: 250,
            reset_period: u64::MAX, ..TtaConfig::default()
        };
        let (trace, _) = adapt(&net, stream, &holdout, &cfg, root.substream("adapt"), None).unwrap();
        let (i0, peak, fin) = (trace.initial_acc(), trace.peak_acc(), trace.final_acc());
        let peak_iter = trace.records.iter().max_by(|a, b| a.holdout_acc.partial_cmp(&b.holdout_acc).unwrap()).unwrap().iter;
        let ok = peak - i0 >= 2.0 && peak - fin >= 5.0;
        pass += ok as i32;
        println!("seed {seed}: {i0:.1} +{:.1}@{peak_iter} -{:.1} {}", peak - i0, peak - fin, if ok {"OK"} else {"MISS"});
    }
    println!("=> {pass}/10 {}_s{sev} lr {lr:.0e} batch {batch} stop {stop} epochs {epochs}", kind.name());
}
