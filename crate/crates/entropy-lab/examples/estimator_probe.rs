use entropy_lab::datagen::*;
use entropy_lab::estimators::*;
use entropy_lab::nnet::*;
use entropy_lab::tta::TtaConfig;
use entropy_lab::Seed;

fn main() {
    let root = Seed(0);
    let spec = SynthSpec { seed: root.substream("datagen"), ..SynthSpec::default() };
    let src = gen_source(&spec).unwrap();
    let mut net = Classifier::new(spec.dim, default_arch(spec.dim, spec.classes), root.substream("init")).unwrap();
    pretrain(&mut net, &src.train, &src.val, &PretrainCfg::default(), root.substream("pretrain")).unwrap();
    let suite = make_shift_suite(&spec, &DEFAULT_SUITE_KINDS, &DEFAULT_SUITE_SEVERITIES, root.substream("suite")).unwrap();

    // split suite into fit half / eval half by index parity
    let fit_half: Vec<(String, LabeledSet)> = suite.iter().enumerate().filter(|(i, _)| i % 2 == 0).map(|(_, x)| x.clone()).collect();
    let eval_half: Vec<(String, LabeledSet)> = suite.iter().enumerate().filter(|(i, _)| i % 2 == 1).map(|(_, x)| x.clone()).collect();

    let tta = TtaConfig { eval_interval: 1000, ..TtaConfig::default() };
    let mut pairs = Vec::new();
    for (i, (name, set)) in fit_half.iter().enumerate() {
        let tracker = run_flip_tracking(&net, set, &src.val, &tta, root.substream("fit").index(i as u64)).unwrap();
        let wf = weighted_flips(&tracker).unwrap();
        let (_, _, truth) = frozen_probs(&net, set).unwrap();
        pairs.push((wf, truth));
        eprintln!("fit {name}: wf {wf:.1} truth {truth:.1}");
    }
    // clean val anchor
    {
        let tracker = run_flip_tracking(&net, &src.test_clean, &src.val, &tta, root.substream("fit-clean")).unwrap();
        let wf = weighted_flips(&tracker).unwrap();
        let (_, _, truth) = frozen_probs(&net, &src.test_clean).unwrap();
        pairs.push((wf, truth));
    }
    let curve = fit_curve(&pairs, 2, true).unwrap();
    println!("curve: {:?}", curve.coefficients);

    let ctx = SuiteEvalCtx {
        net: &net, val: &src.val, curve: Some(&curve),
        tta: tta.clone(), seed: root.substream("estimate"),
        marginal: vec![1.0 / 16.0; 16],
    };
    let (reports, summaries) = evaluate_suite(&eval_half, &ctx, &ALL_METHODS).unwrap();
    for r in &reports {
        if r.method == Method::Wf {
            println!("{}: wf-est {:.1} truth {:.1} err {:.1}", r.dataset, r.estimate, r.truth.unwrap(), r.abs_error.unwrap());
        }
    }
    for s in &summaries {
        println!("{:>4}: MAE {:6.2} worst {:6.2} excl {:6.2}", s.method.name(), s.average, s.worst_case, s.average_excl_worst);
    }
}
