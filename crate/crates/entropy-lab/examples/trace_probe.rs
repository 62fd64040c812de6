use entropy_lab::datagen::*;
use entropy_lab::nnet::*;
use entropy_lab::tta::*;
use entropy_lab::Seed;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let seed: u64 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(3);
    let lr: f64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(2e-2);
    let stop: u64 = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(60000);
    let batch: usize = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(64);
    let root = Seed(seed);
    let spec = SynthSpec { seed: root.substream("datagen"), ..SynthSpec::default() };
    let src = gen_source(&spec).unwrap();
    let mut net = Classifier::new(spec.dim, default_arch(spec.dim, spec.classes), root.substream("init")).unwrap();
    let pcfg = PretrainCfg { epochs: 12, ..PretrainCfg::default() };
    pretrain(&mut net, &src.train, &src.val, &pcfg, root.substream("pretrain")).unwrap();
    let suite = make_shift_suite(&spec, &[CorruptionKind::AdditiveGaussian], &[3], root.substream("suite")).unwrap();
    let stream = &suite[0].1;
    let c = Corruption::new(CorruptionKind::AdditiveGaussian, 3).unwrap();
    let holdout = apply_corruption(&src.holdout_fit, &c, &spec, root.substream("holdout-corrupt")).unwrap();
    let cfg = TtaConfig {
        method: TtaMethod::Tent, lr, batch, eval_batch: 64, stop_iter: stop, eval_interval: 500,
        reset_period: u64::MAX, ..TtaConfig::default()
    };
    let (trace, _) = adapt(&net, stream, &holdout, &cfg, root.substream("adapt"), None).unwrap();
    for r in trace.records.iter() {
        if r.iter % 2000 == 0 {
            print!("{}:{:.0} ", r.iter / 1000, r.holdout_acc);
        }
    }
    println!();
}
