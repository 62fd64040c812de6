//! Shared fixtures for the integration suites.

use entropy_lab::datagen::{gen_source, SourceData, SynthSpec};
use entropy_lab::nnet::{default_arch, pretrain, Classifier, PretrainCfg};
use entropy_lab::Seed;

/// Print the acceptance verdict line and assert it.
pub fn accept(name: &str, ok: bool, detail: &str) {
    let verdict = if ok { "PASS" } else { "FAIL" };
    if detail.is_empty() {
        println!("ACCEPT {name}: {verdict}");
    } else {
        println!("ACCEPT {name}: {verdict} ({detail})");
    }
    assert!(ok, "acceptance criterion failed: {name} ({detail})");
}

/// The default synthetic benchmark for one global seed: generated source
/// splits and a pretrained classifier.
pub fn pretrained_default(seed: u64) -> (Classifier, SourceData, SynthSpec, Seed) {
    let root = Seed(seed);
    let spec = SynthSpec { seed: root.substream("datagen"), ..SynthSpec::default() };
    let src = gen_source(&spec).expect("valid default spec");
    let mut net = Classifier::new(
        spec.dim,
        default_arch(spec.dim, spec.classes),
        root.substream("init"),
    )
    .expect("valid default arch");
    pretrain(&mut net, &src.train, &src.val, &PretrainCfg::default(), root.substream("pretrain"))
        .expect("default pretraining reaches the accuracy floor");
    (net, src, spec, root)
}
