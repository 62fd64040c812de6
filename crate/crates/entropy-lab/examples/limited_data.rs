//! Weighted Flips under memory constraints: flips measured on only the
//! first 100 tracked inputs, scaled by 10, track the full-set value closely.
//!
//! ```bash
//! cargo run --release --example limited_data
//! ```

use entropy_lab::datagen::*;
use entropy_lab::estimators::*;
use entropy_lab::nnet::*;
use entropy_lab::stats::pearson;
use entropy_lab::tta::TtaConfig;
use entropy_lab::{Result, Seed};

fn main() -> Result<()> {
    let root = Seed(0);
    let spec = SynthSpec { seed: root.substream("datagen"), ..SynthSpec::default() };
    let src = gen_source(&spec)?;
    let mut net =
        Classifier::new(spec.dim, default_arch(spec.dim, spec.classes), root.substream("init"))?;
    pretrain(&mut net, &src.train, &src.val, &PretrainCfg::default(), root.substream("pretrain"))?;

    let suite = make_shift_suite(
        &spec,
        &DEFAULT_SUITE_KINDS,
        &DEFAULT_SUITE_SEVERITIES,
        root.substream("suite"),
    )?;
    let tta = TtaConfig { eval_interval: 1000, ..TtaConfig::default() };

    println!("{:<10} {:>10} {:>14}", "dataset", "WF (1000)", "WF(100) x 10");
    let mut full = Vec::new();
    let mut scaled = Vec::new();
    for (i, (name, set)) in suite.iter().enumerate() {
        let tracker = run_flip_tracking(&net, set, &src.val, &tta, root.substream("run").index(i as u64))?;
        let wf = weighted_flips(&tracker)?;
        let small = tracker.subset(100);
        let wf_scaled = limited_scale(weighted_flips(&small)?, small.len(), tracker.len())?;
        println!("{name:<10} {wf:10.2} {wf_scaled:14.2}");
        full.push(wf);
        scaled.push(wf_scaled);
    }
    let r = pearson(&scaled, &full).expect("non-degenerate");
    println!("\ncorrelation between the scaled 100-sample WF and the full WF: {r:.3}");
    Ok(())
}
