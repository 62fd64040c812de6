use entropy_lab::datagen::*;
use entropy_lab::estimators::*;
use entropy_lab::nnet::*;
use entropy_lab::Seed;
use std::time::Instant;

fn main() {
    let root = Seed(0);
    let spec = SynthSpec { seed: root.substream("datagen"), ..SynthSpec::default() };
    let src = gen_source(&spec).unwrap();
    let mut net = Classifier::new(spec.dim, default_arch(spec.dim, spec.classes), root.substream("init")).unwrap();
    pretrain(&mut net, &src.train, &src.val, &PretrainCfg::default(), root.substream("pretrain")).unwrap();
    for (kind, sev) in [(CorruptionKind::AdditiveGaussian, 3u8), (CorruptionKind::OodInject, 5)] {
        let c = Corruption::new(kind, sev).unwrap();
        let set = apply_corruption(&src.test_clean, &c, &spec, Seed(9)).unwrap();
        let (probs, _, truth) = frozen_probs(&net, &set).unwrap();
        let marginal = vec![1.0 / 16.0; 16];
        let t = Instant::now();
        let est = cot(&probs, &marginal).unwrap();
        println!("{} n={}: cot {est:.1} (truth {truth:.1}) in {:?}", c.name(), set.len(), t.elapsed());
    }
}
