//! Fit the flips-to-accuracy curve on the holdout pool, then estimate the
//! pretrained model's accuracy on every suite dataset with all five
//! methods, printing the per-method MAE summary.
//!
//! ```bash
//! cargo run --release --example estimate_accuracy
//! ```

use entropy_lab::datagen::*;
use entropy_lab::estimators::*;
use entropy_lab::nnet::*;
use entropy_lab::tta::TtaConfig;
use entropy_lab::{Result, Seed};

fn main() -> Result<()> {
    let root = Seed(0);
    let spec = SynthSpec { seed: root.substream("datagen"), ..SynthSpec::default() };
    println!("generating source data and pretraining ({} classes, {} dims)...", spec.classes, spec.dim);
    let src = gen_source(&spec)?;
    let mut net =
        Classifier::new(spec.dim, default_arch(spec.dim, spec.classes), root.substream("init"))?;
    pretrain(&mut net, &src.train, &src.val, &PretrainCfg::default(), root.substream("pretrain"))?;
    let (_, _, clean_acc) = frozen_probs(&net, &src.test_clean)?;
    println!("clean test accuracy: {clean_acc:.2}%");

    // Calibration pairs: every corruption applied to the holdout-fit split,
    // plus the clean pool as the low-flips anchor.
    let tta = TtaConfig { eval_interval: 1000, ..TtaConfig::default() };
    let mut fit_sets: Vec<(String, LabeledSet)> = Vec::new();
    for kind in DEFAULT_SUITE_KINDS {
        for sev in DEFAULT_SUITE_SEVERITIES {
            let c = Corruption::new(kind, sev)?;
            fit_sets.push((
                c.name(),
                apply_corruption(&src.holdout_fit, &c, &spec, root.substream("fit").index(sev as u64))?,
            ));
        }
    }
    fit_sets.push(("clean".into(), src.test_clean.clone()));
    println!("running RDumb on {} fitting sets (1000 iterations each)...", fit_sets.len());
    let mut pairs = Vec::new();
    for (i, (name, set)) in fit_sets.iter().enumerate() {
        let tracker = run_flip_tracking(&net, set, &src.val, &tta, root.substream("fit-run").index(i as u64))?;
        let wf = weighted_flips(&tracker)?;
        let (_, _, truth) = frozen_probs(&net, set)?;
        println!("  {name:>10}: WF {wf:7.2}  true accuracy {truth:6.2}%");
        pairs.push((wf, truth));
    }
    let curve = fit_curve(&pairs, 2, true)?;
    println!(
        "fitted weighted quadratic: f(x) = {:.5} x^2 + {:.4} x + {:.2}",
        curve.coefficients[0], curve.coefficients[1], curve.coefficients[2]
    );

    let suite = make_shift_suite(
        &spec,
        &DEFAULT_SUITE_KINDS,
        &DEFAULT_SUITE_SEVERITIES,
        root.substream("suite"),
    )?;
    println!("estimating accuracy on {} suite datasets...", suite.len());
    let ctx = SuiteEvalCtx {
        net: &net,
        val: &src.val,
        curve: Some(&curve),
        tta,
        seed: root.substream("estimate"),
        marginal: vec![1.0 / spec.classes as f64; spec.classes],
    };
    let (reports, summaries) = evaluate_suite(&suite, &ctx, &ALL_METHODS)?;

    println!("\n{:<10} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}", "dataset", "truth", "ac", "doc", "atc", "cot", "wf");
    for (name, _) in &suite {
        let row: Vec<f64> = ALL_METHODS
            .iter()
            .map(|m| {
                reports
                    .iter()
                    .find(|r| &r.dataset == name && r.method == *m)
                    .map(|r| r.estimate)
                    .unwrap_or(f64::NAN)
            })
            .collect();
        let truth = reports.iter().find(|r| &r.dataset == name).and_then(|r| r.truth).unwrap();
        println!(
            "{name:<10} {truth:8.2} {:8.2} {:8.2} {:8.2} {:8.2} {:8.2}",
            row[0], row[1], row[2], row[3], row[4]
        );
    }
    println!("\nmean absolute error (best column wins):");
    for s in &summaries {
        println!(
            "  {:>4}: average {:6.2}   worst {:6.2}   average excl. worst {:6.2}",
            s.method.name(),
            s.average,
            s.worst_case,
            s.average_excl_worst
        );
    }
    Ok(())
}
