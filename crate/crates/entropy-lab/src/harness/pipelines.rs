//! Experiment pipelines behind the CLI commands.
//!
//! Every pipeline is a pure function of (config, seed): datasets are
//! regenerated deterministically rather than read back, so re-running any
//! command with the same inputs reproduces its outputs byte for byte. The
//! only cross-command file dependencies are the pretrained model
//! (`model.bin`) and the fitted calibration curve (`curve.csv`).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::datagen::{
    apply_corruption, gen_source, write_set_csv, Corruption, CorruptionKind, LabeledSet,
    SourceData, SynthSpec,
};
use crate::diagnostics::{
    entropy_exclusion, phase_report, topk_exclusion, PhasePoint, PhaseReport,
};
use crate::emgmm::{run_toy, toy_blobs, GmmToyConfig, ToyInit, ToyTrajectory};
use crate::error::{Error, Result};
use crate::estimators::{
    evaluate_suite, fit_curve, frozen_probs, limited_scale, predict_accuracy, raw_flips,
    run_flip_tracking, summarize, weighted_flips, write_reports_csv, write_summary_csv,
    CalibrationCurve, EstimateReport, Method, SuiteEvalCtx,
};
use crate::mat::{softmax_rows, Mat};
use crate::nnet::{default_arch, load_classifier, pretrain, save_classifier, Classifier};
use crate::rng::Seed;
use crate::stats::spearman;
use crate::tta::{adapt, write_flips_csv, write_trace_csv, DiagnosticsCtx, FlipTracker, Trace};

use super::config::RunConfig;
use super::svg::{write_chart, Series};

/// A configured run: config, output directory, and the global seed.
pub struct Lab {
    pub cfg: RunConfig,
    pub out: PathBuf,
    pub seed: Seed,
}

impl Lab {
    pub fn new(cfg: RunConfig, out: Option<String>, seed: Option<u64>) -> Result<Lab> {
        let mut cfg = cfg;
        if let Some(o) = out {
            cfg.set("run", "out", o);
        }
        if let Some(s) = seed {
            cfg.set("run", "seed", s.to_string());
        }
        let seed = cfg.seed()?;
        let out = PathBuf::from(cfg.out_dir());
        Ok(Lab { cfg, out, seed })
    }

    /// Create the output directory and record the resolved config.
    pub fn prepare_out(&self) -> Result<()> {
        std::fs::create_dir_all(&self.out)
            .map_err(|e| Error::io(self.out.display().to_string(), e))?;
        self.cfg.write_resolved(&self.out.join("resolved.cfg"))
    }

    pub fn synth_spec(&self) -> Result<SynthSpec> {
        self.cfg.synth_spec(self.seed)
    }

    pub fn source(&self) -> Result<SourceData> {
        gen_source(&self.synth_spec()?)
    }

    pub fn suite(&self) -> Result<Vec<(String, LabeledSet)>> {
        crate::datagen::make_shift_suite(
            &self.synth_spec()?,
            &self.cfg.suite_kinds()?,
            &self.cfg.suite_severities()?,
            self.seed.substream("suite"),
        )
    }

    pub fn model_path(&self) -> PathBuf {
        self.out.join("model.bin")
    }

    pub fn load_model(&self) -> Result<Classifier> {
        let path = self.model_path();
        if !path.exists() {
            return Err(Error::MissingPrerequisite(format!(
                "pretrained model {} not found; run `pretrain` first",
                path.display()
            )));
        }
        load_classifier(&path)
    }

    pub fn curve_path(&self) -> PathBuf {
        self.out.join("curve.csv")
    }

    pub fn load_curve(&self) -> Result<CalibrationCurve> {
        let path = self.curve_path();
        if !path.exists() {
            return Err(Error::MissingPrerequisite(format!(
                "calibration curve {} not found; run `fit-curve` first",
                path.display()
            )));
        }
        read_curve_csv(&path)
    }

    /// The corrupted stream and its same-distribution holdout for a named
    /// dataset; `clean` maps to the untouched test pool.
    pub fn dataset(&self, name: &str) -> Result<(LabeledSet, LabeledSet)> {
        let src = self.source()?;
        if name == "clean" {
            return Ok((src.test_clean, src.holdout_fit));
        }
        let c = parse_dataset_name(name)?;
        let spec = self.synth_spec()?;
        let suite = self.suite()?;
        let stream = suite
            .into_iter()
            .find(|(n, _)| n == name)
            .map(|(_, s)| s)
            .ok_or_else(|| {
                Error::Config(format!("dataset `{name}` is not part of the configured suite"))
            })?;
        let holdout =
            apply_corruption(&src.holdout_fit, &c, &spec, self.seed.substream("holdout-corrupt"))?;
        Ok((stream, holdout))
    }
}

/// Parse `kind_sN` dataset names.
pub fn parse_dataset_name(name: &str) -> Result<Corruption> {
    let (kind, sev) = name
        .rsplit_once("_s")
        .ok_or_else(|| Error::InvalidArgument(format!("dataset name `{name}` is not kind_sN")))?;
    let severity: u8 = sev
        .parse()
        .map_err(|_| Error::InvalidArgument(format!("bad severity in dataset name `{name}`")))?;
    Corruption::new(CorruptionKind::parse(kind)?, severity)
}

// ── gen-data ───────────────────────────────────────────────────────

pub fn cmd_gen_data(lab: &Lab) -> Result<()> {
    lab.prepare_out()?;
    let src = lab.source()?;
    for (name, set) in [
        ("train", &src.train),
        ("val", &src.val),
        ("holdout_fit", &src.holdout_fit),
        ("test_clean", &src.test_clean),
    ] {
        write_set_csv(set, &lab.out.join(format!("{name}.csv")))?;
    }
    let suite_dir = lab.out.join("suite");
    std::fs::create_dir_all(&suite_dir).map_err(|e| Error::io(suite_dir.display().to_string(), e))?;
    let suite = lab.suite()?;
    for (name, set) in &suite {
        write_set_csv(set, &suite_dir.join(format!("{name}.csv")))?;
    }
    println!("wrote 4 source splits and {} suite sets to {}", suite.len(), lab.out.display());
    Ok(())
}

// ── pretrain ───────────────────────────────────────────────────────

pub fn cmd_pretrain(lab: &Lab) -> Result<()> {
    lab.prepare_out()?;
    let src = lab.source()?;
    let spec = lab.synth_spec()?;
    let mut net = Classifier::new(
        spec.dim,
        default_arch(spec.dim, spec.classes),
        lab.seed.substream("init"),
    )?;
    pretrain(&mut net, &src.train, &src.val, &lab.cfg.pretrain_cfg()?, lab.seed.substream("pretrain"))?;
    let (_, _, val_acc) = frozen_probs(&net, &src.val)?;
    let (_, _, test_acc) = frozen_probs(&net, &src.test_clean)?;
    save_classifier(&net, &lab.model_path())?;
    println!(
        "pretrained: clean val accuracy {val_acc:.2}%, clean test accuracy {test_acc:.2}% -> {}",
        lab.model_path().display()
    );
    Ok(())
}

// ── adapt ──────────────────────────────────────────────────────────

pub fn cmd_adapt(lab: &Lab) -> Result<()> {
    lab.prepare_out()?;
    let net = lab.load_model()?;
    let name = lab.cfg.str_of("adapt", "dataset", "gauss_s3");
    let (mut stream, holdout) = lab.dataset(&name)?;

    let topk = lab.cfg.usize_of("adapt", "topk_exclusion", 0)?;
    if topk > 0 {
        let before = stream.len();
        stream = topk_exclusion(&stream, &net, topk)?;
        println!("top-{topk} exclusion: {before} -> {} rows", stream.len());
    }
    let ent_threshold = lab.cfg.f64_of("adapt", "entropy_exclusion", -1.0)?;
    if ent_threshold > 0.0 {
        let before = stream.len();
        stream = entropy_exclusion(&stream, &net, ent_threshold)?;
        println!("entropy exclusion at {ent_threshold}: {before} -> {} rows", stream.len());
    }

    let src = lab.source()?;
    let spec = lab.synth_spec()?;
    let diag_enabled = lab.cfg.bool_of("adapt", "diagnostics", false)?;
    let diag = DiagnosticsCtx {
        reference: &src.val,
        subset: lab.cfg.usize_of("adapt", "diag_subset", 384)?,
        k: spec.classes,
        seed: lab.seed.substream("kmeans"),
        project_2d: lab.cfg.bool_of("adapt", "project_2d", false)?,
    };
    let tta = lab.cfg.tta_cfg()?;
    let (trace, tracker) = adapt(
        &net,
        &stream,
        &holdout,
        &tta,
        lab.seed.substream("adapt"),
        diag_enabled.then_some(&diag),
    )?;

    write_trace_csv(&trace, &lab.out.join("trace.csv"))?;
    write_flips_csv(&tracker, &lab.out.join("flips.csv"))?;
    if diag_enabled {
        write_diagnostics_csv(&trace, &lab.out.join("diagnostics.csv"))?;
    }
    if !trace.projections.is_empty() {
        write_projection_csv(&trace, &lab.out.join("projection.csv"))?;
    }
    let acc_points: Vec<(f64, f64)> =
        trace.records.iter().map(|r| (r.iter as f64, r.holdout_acc)).collect();
    write_chart(
        &lab.out.join("accuracy_vs_iteration.svg"),
        &format!("{} on {name}", tta.method.name()),
        "iteration",
        "holdout accuracy (%)",
        &[Series { label: "holdout accuracy".into(), points: &acc_points, line: true }],
    )?;
    println!(
        "{} on {name}: iter0 {:.2}%, peak {:.2}%, final {:.2}%, flips {} / {}",
        tta.method.name(),
        trace.initial_acc(),
        trace.peak_acc(),
        trace.final_acc(),
        tracker.flip_count()?,
        tracker.len()
    );
    Ok(())
}

/// Appendix-style per-run diagnostics file.
fn write_diagnostics_csv(trace: &Trace, path: &Path) -> Result<()> {
    let mut out = String::from("iter,silhouette,shift_distance,accuracy\n");
    for r in &trace.records {
        let sil = r.silhouette.map_or(String::new(), |v| format!("{v}"));
        let shift = r.shift_distance.map_or(String::new(), |v| format!("{v}"));
        out.push_str(&format!("{},{sil},{shift},{}\n", r.iter, r.holdout_acc));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

fn write_projection_csv(trace: &Trace, path: &Path) -> Result<()> {
    let mut out = String::from("iter,id,x,y,label\n");
    for frame in &trace.projections {
        for (i, &(x, y)) in frame.points.iter().enumerate() {
            out.push_str(&format!("{},{i},{x},{y},{}\n", frame.iter, frame.labels[i]));
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

// ── fit-curve ──────────────────────────────────────────────────────

/// The fitting pool: every configured corruption applied to the holdout-fit
/// split, plus the clean test pool as the rightmost anchor point.
pub fn fitting_pool(lab: &Lab) -> Result<Vec<(String, LabeledSet)>> {
    let src = lab.source()?;
    let spec = lab.synth_spec()?;
    let mut pool = Vec::new();
    let mut cell = 0u64;
    for kind in lab.cfg.suite_kinds()? {
        for sev in lab.cfg.suite_severities()? {
            let c = Corruption::new(kind, sev)?;
            let set = apply_corruption(
                &src.holdout_fit,
                &c,
                &spec,
                lab.seed.substream("fit-corrupt").index(cell),
            )?;
            pool.push((format!("fitpool_{}", c.name()), set));
            cell += 1;
        }
    }
    pool.push(("fitpool_clean".to_string(), src.test_clean));
    Ok(pool)
}

/// (flips, truth) pairs over a list of datasets. `weighted` selects WF vs
/// raw flip counts.
pub fn collect_pairs(
    net: &Classifier,
    sets: &[(String, LabeledSet)],
    holdout: &LabeledSet,
    tta: &crate::tta::TtaConfig,
    seed: Seed,
    weighted: bool,
) -> Result<Vec<(f64, f64)>> {
    let mut pairs = Vec::with_capacity(sets.len());
    for (i, (name, set)) in sets.iter().enumerate() {
        let tracker = run_flip_tracking(net, set, holdout, tta, seed.index(i as u64))?;
        let x = if weighted { weighted_flips(&tracker)? } else { raw_flips(&tracker)? };
        let (_, _, truth) = frozen_probs(net, set)?;
        eprintln!("  {name}: flips x = {x:.3}, truth = {truth:.2}%");
        pairs.push((x, truth));
    }
    Ok(pairs)
}

pub fn cmd_fit_curve(lab: &Lab) -> Result<()> {
    lab.prepare_out()?;
    let net = lab.load_model()?;
    let src = lab.source()?;
    let tta = lab.cfg.tta_cfg()?;
    let weighted = lab.cfg.fit_weighted()?;
    let degree = lab.cfg.fit_degree()?;
    let pool = fitting_pool(lab)?;
    let pairs = collect_pairs(&net, &pool, &src.val, &tta, lab.seed.substream("fit"), weighted)?;
    let curve = fit_curve(&pairs, degree, weighted)?;
    write_curve_csv(&curve, &lab.curve_path())?;
    write_pairs_csv(&pairs, &pool, &lab.out.join("fit_pairs.csv"))?;

    // scatter + fitted curve
    let xmax = pairs.iter().map(|p| p.0).fold(1.0, f64::max);
    let curve_pts: Vec<(f64, f64)> =
        (0..=100).map(|i| xmax * i as f64 / 100.0).map(|x| (x, curve.evaluate(x))).collect();
    write_chart(
        &lab.out.join("fit_curve.svg"),
        &format!("degree-{degree} {} calibration", if weighted { "weighted" } else { "unweighted" }),
        if weighted { "weighted flips" } else { "flip count" },
        "accuracy (%)",
        &[
            Series { label: "fitting pairs".into(), points: &pairs, line: false },
            Series { label: "fitted curve".into(), points: &curve_pts, line: true },
        ],
    )?;
    println!(
        "fitted {} curve on {} pairs: {:?} -> {}",
        if weighted { "weighted" } else { "unweighted" },
        pairs.len(),
        curve.coefficients,
        lab.curve_path().display()
    );
    Ok(())
}

/// Curve file: `degree,weighted,c3,c2,c1,c0` (unused high powers zero).
pub fn write_curve_csv(curve: &CalibrationCurve, path: &Path) -> Result<()> {
    let mut cs = [0.0f64; 4];
    for (i, &c) in curve.coefficients.iter().enumerate() {
        cs[4 - curve.coefficients.len() + i] = c;
    }
    let out = format!(
        "degree,weighted,c3,c2,c1,c0\n{},{},{},{},{},{}\n",
        curve.degree, curve.weighted, cs[0], cs[1], cs[2], cs[3]
    );
    std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn read_curve_csv(path: &Path) -> Result<CalibrationCurve> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let pathstr = path.display().to_string();
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::parse(&pathstr, "empty file"))?;
    if header != "degree,weighted,c3,c2,c1,c0" {
        return Err(Error::parse(&pathstr, "unexpected curve header"));
    }
    let row = lines.next().ok_or_else(|| Error::parse(&pathstr, "missing curve row"))?;
    let f: Vec<&str> = row.split(',').collect();
    if f.len() != 6 {
        return Err(Error::parse(&pathstr, "bad field count"));
    }
    let degree: usize =
        f[0].parse().map_err(|_| Error::parse(&pathstr, "bad degree"))?;
    let weighted: bool =
        f[1].parse().map_err(|_| Error::parse(&pathstr, "bad weighted flag"))?;
    let mut cs = Vec::with_capacity(4);
    for s in &f[2..] {
        cs.push(s.parse::<f64>().map_err(|_| Error::parse(&pathstr, format!("bad value `{s}`")))?);
    }
    CalibrationCurve::new(degree, weighted, cs[4 - degree - 1..].to_vec())
}

fn write_pairs_csv(
    pairs: &[(f64, f64)],
    sets: &[(String, LabeledSet)],
    path: &Path,
) -> Result<()> {
    let mut out = String::from("dataset,flips,truth\n");
    for ((x, y), (name, _)) in pairs.iter().zip(sets) {
        out.push_str(&format!("{name},{x},{y}\n"));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

// ── estimate ───────────────────────────────────────────────────────

pub fn cmd_estimate(lab: &Lab) -> Result<()> {
    lab.prepare_out()?;
    let net = lab.load_model()?;
    let src = lab.source()?;
    let methods = lab.cfg.estimate_methods()?;
    let curve = if methods.contains(&Method::Wf) { Some(lab.load_curve()?) } else { None };
    let suite = lab.suite()?;
    let spec = lab.synth_spec()?;
    let ctx = SuiteEvalCtx {
        net: &net,
        val: &src.val,
        curve: curve.as_ref(),
        tta: lab.cfg.tta_cfg()?,
        seed: lab.seed.substream("estimate"),
        marginal: vec![1.0 / spec.classes as f64; spec.classes],
    };
    let (mut reports, _) = evaluate_suite(&suite, &ctx, &methods)?;

    let ingest = lab.cfg.str_of("estimate", "ingest_logits", "");
    if !ingest.is_empty() {
        let path = PathBuf::from(&ingest);
        let (probs, labels) = cmd_ingest_logits(&path)?;
        reports.extend(estimate_ingested(&path, &probs, &labels, &ctx, &methods)?);
    }

    let summaries = summarize(&reports, &methods);
    write_reports_csv(&reports, &lab.out.join("reports.csv"))?;
    write_summary_csv(&summaries, &lab.out.join("summary.csv"))?;
    for s in &summaries {
        println!(
            "{:>4}: MAE {:6.2}  worst {:6.2}  excl-worst {:6.2}",
            s.method.name(),
            s.average,
            s.worst_case,
            s.average_excl_worst
        );
    }
    Ok(())
}

/// Parse an external logits dump (`id,label,l0..l{C-1}`); logits are
/// softmaxed on load. Labels of -1 mark unlabeled rows.
pub fn cmd_ingest_logits(path: &Path) -> Result<(Mat, Vec<i64>)> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let pathstr = path.display().to_string();
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::parse(&pathstr, "empty file"))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 3 || cols[0] != "id" || cols[1] != "label" {
        return Err(Error::parse(&pathstr, "header must start with id,label,l0..."));
    }
    for (j, c) in cols[2..].iter().enumerate() {
        if *c != format!("l{j}") {
            return Err(Error::parse(&pathstr, format!("expected column l{j}, found {c}")));
        }
    }
    let classes = cols.len() - 2;
    let mut seen = std::collections::BTreeSet::new();
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != cols.len() {
            return Err(Error::parse(
                &pathstr,
                format!("row {}: {} fields, expected {}", lineno + 2, f.len(), cols.len()),
            ));
        }
        let id: u64 = f[0]
            .parse()
            .map_err(|_| Error::parse(&pathstr, format!("row {}: bad id `{}`", lineno + 2, f[0])))?;
        if !seen.insert(id) {
            return Err(Error::parse(&pathstr, format!("row {}: duplicated id {id}", lineno + 2)));
        }
        labels.push(f[1].parse::<i64>().map_err(|_| {
            Error::parse(&pathstr, format!("row {}: bad label `{}`", lineno + 2, f[1]))
        })?);
        let mut row = Vec::with_capacity(classes);
        for s in &f[2..] {
            row.push(s.parse::<f64>().map_err(|_| {
                Error::parse(&pathstr, format!("row {}: bad logit `{s}`", lineno + 2))
            })?);
        }
        rows.push(row);
    }
    let logits = Mat::from_rows(&rows)?;
    Ok((softmax_rows(&logits), labels))
}

/// Estimate on ingested probabilities. WF needs the raw inputs to adapt on,
/// so it is skipped for external dumps.
fn estimate_ingested(
    path: &Path,
    probs: &Mat,
    labels: &[i64],
    ctx: &SuiteEvalCtx<'_>,
    methods: &[Method],
) -> Result<Vec<EstimateReport>> {
    let name = path.file_stem().map_or_else(|| "ingested".to_string(), |s| s.to_string_lossy().into_owned());
    let labeled = labels.iter().any(|&l| l >= 0);
    let truth = if labeled {
        let preds: Vec<usize> = probs.iter_rows().map(crate::mat::argmax).collect();
        Some(100.0 * crate::datagen::accuracy(&preds, labels))
    } else {
        None
    };
    let (val_probs, val_preds, val_acc) = frozen_probs(ctx.net, ctx.val)?;
    let mut out = Vec::new();
    for &method in methods {
        let estimate = match method {
            Method::Ac => crate::estimators::ac(probs),
            Method::Doc => crate::estimators::doc(probs, &val_probs, val_acc),
            Method::Atc => {
                let val_conf: Vec<f64> =
                    val_probs.iter_rows().map(|r| r[crate::mat::argmax(r)]).collect();
                let val_correct: Vec<bool> = val_preds
                    .iter()
                    .zip(&ctx.val.labels)
                    .map(|(&p, &l)| l >= 0 && p as i64 == l)
                    .collect();
                let t = crate::estimators::atc_fit(&val_conf, &val_correct)?;
                let conf: Vec<f64> = probs.iter_rows().map(|r| r[crate::mat::argmax(r)]).collect();
                crate::estimators::atc_predict(&conf, t)
            }
            Method::Cot => {
                if probs.cols() != ctx.marginal.len() {
                    return Err(Error::DimMismatch(format!(
                        "{} ingested classes vs {}-class marginal",
                        probs.cols(),
                        ctx.marginal.len()
                    )));
                }
                crate::estimators::cot(probs, &ctx.marginal)?
            }
            Method::Wf => continue,
        };
        out.push(EstimateReport {
            dataset: name.clone(),
            method,
            estimate,
            truth,
            abs_error: truth.map(|t| (estimate - t).abs()),
        });
    }
    Ok(out)
}

// ── ablate ─────────────────────────────────────────────────────────

pub fn cmd_ablate(lab: &Lab) -> Result<()> {
    lab.prepare_out()?;
    let net = lab.load_model()?;
    let src = lab.source()?;
    let base_tta = lab.cfg.tta_cfg()?;
    let degree = lab.cfg.fit_degree()?;
    let weighted = lab.cfg.fit_weighted()?;
    let stops: Vec<u64> =
        lab.cfg.list_of("ablate", "stop_iters", &[1000u64, 500, 250, 100, 50])?;
    let track_sizes: Vec<usize> =
        lab.cfg.list_of("ablate", "track_sizes", &[1000usize, 500, 250, 100, 50])?;
    let subset_sizes: Vec<usize> =
        lab.cfg.list_of("ablate", "subset_sizes", &[2usize, 4, 6, 8, 10, 12, 14, 16, 18])?;
    let resamples = lab.cfg.usize_of("ablate", "subset_resamples", 50)?;
    if stops.is_empty() || track_sizes.is_empty() || subset_sizes.is_empty() {
        return Err(Error::MissingPrerequisite("empty ablation grid".into()));
    }

    let pool = fitting_pool(lab)?;
    let suite = lab.suite()?;
    // (dataset, stop) -> (tracker, truth); reused across arms
    let mut cache: BTreeMap<(String, u64), (FlipTracker, f64)> = BTreeMap::new();
    let mut run_cell = |name: &str, set: &LabeledSet, stop: u64| -> Result<(FlipTracker, f64)> {
        if let Some(hit) = cache.get(&(name.to_string(), stop)) {
            return Ok(hit.clone());
        }
        let mut tta = base_tta.clone();
        tta.stop_iter = stop;
        tta.eval_interval = stop.max(1);
        let tracker = run_flip_tracking(
            &net,
            set,
            &src.val,
            &tta,
            lab.seed.substream(&format!("ablate-{name}")).index(stop),
        )?;
        let (_, _, truth) = frozen_probs(&net, set)?;
        cache.insert((name.to_string(), stop), (tracker.clone(), truth));
        Ok((tracker, truth))
    };

    // (a) stopping-iteration grid: refit on the pool and score the suite.
    let mut stop_rows = Vec::new();
    for &stop in &stops {
        eprintln!("ablate: stopping iteration {stop}");
        let mut pairs = Vec::new();
        for (name, set) in &pool {
            let (tracker, truth) = run_cell(name, set, stop)?;
            let x = if weighted { weighted_flips(&tracker)? } else { raw_flips(&tracker)? };
            pairs.push((x, truth));
        }
        let curve = fit_curve(&pairs, degree, weighted)?;
        write_curve_csv(&curve, &lab.out.join(format!("curve_stop{stop}.csv")))?;
        let mut errors = Vec::new();
        for (name, set) in &suite {
            let (tracker, truth) = run_cell(name, set, stop)?;
            let x = if weighted { weighted_flips(&tracker)? } else { raw_flips(&tracker)? };
            errors.push((predict_accuracy(&curve, x) - truth).abs());
        }
        let mae = errors.iter().sum::<f64>() / errors.len().max(1) as f64;
        stop_rows.push((stop, mae));
    }
    let mut out = String::from("stop_iter,mae\n");
    for &(stop, mae) in &stop_rows {
        out.push_str(&format!("{stop},{mae}\n"));
    }
    let p = lab.out.join("ablate_stop.csv");
    std::fs::write(&p, out).map_err(|e| Error::io(p.display().to_string(), e))?;

    // (b) tracked-set sizes: original full curve, scaled-subset flips.
    let full_stop = base_tta.stop_iter;
    let mut full_pairs = Vec::new();
    for (name, set) in &pool {
        let (tracker, truth) = run_cell(name, set, full_stop)?;
        let x = if weighted { weighted_flips(&tracker)? } else { raw_flips(&tracker)? };
        full_pairs.push((x, truth));
    }
    let full_curve = fit_curve(&full_pairs, degree, weighted)?;
    let mut track_rows = Vec::new();
    for &size in &track_sizes {
        let mut errors = Vec::new();
        for (name, set) in &suite {
            let (tracker, truth) = run_cell(name, set, full_stop)?;
            let sub = tracker.subset(size);
            let x = if weighted { weighted_flips(&sub)? } else { raw_flips(&sub)? };
            let scaled = limited_scale(x, sub.len(), tracker.len())?;
            errors.push((predict_accuracy(&full_curve, scaled) - truth).abs());
        }
        let mae = errors.iter().sum::<f64>() / errors.len().max(1) as f64;
        track_rows.push((size, mae));
    }
    let mut out = String::from("track_n,mae\n");
    for &(size, mae) in &track_rows {
        out.push_str(&format!("{size},{mae}\n"));
    }
    let p = lab.out.join("ablate_track.csv");
    std::fs::write(&p, out).map_err(|e| Error::io(p.display().to_string(), e))?;

    // (c) fitting-subset robustness over the suite's own pairs.
    let mut suite_pairs = Vec::new();
    for (name, set) in &suite {
        let (tracker, truth) = run_cell(name, set, full_stop)?;
        let x = if weighted { weighted_flips(&tracker)? } else { raw_flips(&tracker)? };
        suite_pairs.push((x, truth));
    }
    let mut rng = lab.seed.substream("resampling").rng();
    let mut subset_rows = Vec::new();
    for &size in &subset_sizes {
        if size + 1 > suite_pairs.len() || size < degree + 1 {
            continue; // cannot fit or nothing left to evaluate
        }
        let mut maes = Vec::with_capacity(resamples);
        for _ in 0..resamples {
            use rand::seq::SliceRandom;
            let mut idx: Vec<usize> = (0..suite_pairs.len()).collect();
            idx.shuffle(&mut rng);
            let (fit_idx, eval_idx) = idx.split_at(size);
            let fit_pairs: Vec<(f64, f64)> = fit_idx.iter().map(|&i| suite_pairs[i]).collect();
            let Ok(curve) = fit_curve(&fit_pairs, degree, weighted) else {
                continue; // degenerate draw (all-equal x)
            };
            let errors: Vec<f64> = eval_idx
                .iter()
                .map(|&i| (predict_accuracy(&curve, suite_pairs[i].0) - suite_pairs[i].1).abs())
                .collect();
            maes.push(errors.iter().sum::<f64>() / errors.len() as f64);
        }
        if maes.is_empty() {
            continue;
        }
        let mean = maes.iter().sum::<f64>() / maes.len() as f64;
        let var = maes.iter().map(|m| (m - mean) * (m - mean)).sum::<f64>() / maes.len() as f64;
        subset_rows.push((size, mean, var.sqrt(), maes.len()));
    }
    let mut out = String::from("subset_size,mae_mean,mae_std,resamples\n");
    for &(size, mean, std, n) in &subset_rows {
        out.push_str(&format!("{size},{mean},{std},{n}\n"));
    }
    let p = lab.out.join("ablate_subset.csv");
    std::fs::write(&p, out).map_err(|e| Error::io(p.display().to_string(), e))?;

    let stop_pts: Vec<(f64, f64)> = stop_rows.iter().map(|&(s, m)| (s as f64, m)).collect();
    let track_pts: Vec<(f64, f64)> = track_rows.iter().map(|&(s, m)| (s as f64, m)).collect();
    write_chart(
        &lab.out.join("ablate_stop.svg"),
        "MAE vs stopping iteration",
        "stopping iteration",
        "MAE (accuracy points)",
        &[Series { label: "wf".into(), points: &stop_pts, line: true }],
    )?;
    write_chart(
        &lab.out.join("ablate_track.svg"),
        "MAE vs tracked-set size (scaled flips, original curve)",
        "tracked inputs",
        "MAE (accuracy points)",
        &[Series { label: "wf".into(), points: &track_pts, line: true }],
    )?;
    let subset_pts: Vec<(f64, f64)> =
        subset_rows.iter().map(|&(s, m, _, _)| (s as f64, m)).collect();
    let subset_hi: Vec<(f64, f64)> =
        subset_rows.iter().map(|&(s, m, sd, _)| (s as f64, m + sd)).collect();
    let subset_lo: Vec<(f64, f64)> =
        subset_rows.iter().map(|&(s, m, sd, _)| (s as f64, (m - sd).max(0.0))).collect();
    write_chart(
        &lab.out.join("ablate_subset.svg"),
        "MAE vs fitting-subset size (50 resamples)",
        "fitting datasets",
        "MAE (accuracy points)",
        &[
            Series { label: "mean".into(), points: &subset_pts, line: true },
            Series { label: "mean+std".into(), points: &subset_hi, line: true },
            Series { label: "mean-std".into(), points: &subset_lo, line: true },
        ],
    )?;
    println!(
        "ablations done: {} stop cells, {} track sizes, {} subset sizes",
        stop_rows.len(),
        track_rows.len(),
        subset_rows.len()
    );
    Ok(())
}

// ── emgmm ──────────────────────────────────────────────────────────

pub fn cmd_emgmm(lab: &Lab) -> Result<()> {
    lab.prepare_out()?;
    let k = lab.cfg.usize_of("emgmm", "clusters", 4)?;
    let per_cluster = lab.cfg.usize_of("emgmm", "per_cluster", 50)?;
    let radius = lab.cfg.f64_of("emgmm", "radius", 8.0)?;
    let std = lab.cfg.f64_of("emgmm", "std", 1.0)?;
    let eta = lab.cfg.f64_of("emgmm", "eta", 0.1)?;
    let iterations = lab.cfg.usize_of("emgmm", "iterations", 50)?;
    let offset_scale = lab.cfg.f64_of("emgmm", "offset_scale", 2.0)?;
    let seeds = lab.cfg.u64_of("emgmm", "seeds", 20)?;

    let separation = 2.0 * radius * (std::f64::consts::PI / k as f64).sin();
    let off = offset_scale * separation / 2.0_f64.sqrt();
    let offset = vec![off, off];
    let arms: [(&str, ToyInit); 3] = [
        ("smart", ToyInit::Smart),
        ("shifted", ToyInit::Shifted { offset: offset.clone() }),
        ("em_only", ToyInit::EmOnly { offset }),
    ];

    let mut summary = String::from("arm,seed,final_ari,ll_monotone\n");
    let mut means = Vec::new();
    for (name, init) in &arms {
        let mut sum = 0.0;
        for s in 0..seeds {
            let data_seed = lab.seed.substream("emgmm-data").index(s);
            let (points, labels) = toy_blobs(k, per_cluster, radius, std, data_seed);
            let cfg = GmmToyConfig {
                k,
                points,
                labels,
                init: init.clone(),
                eta,
                iterations,
                seed: lab.seed.substream("emgmm").index(s),
            };
            let traj = run_toy(&cfg)?;
            let monotone = traj
                .log_likelihood
                .windows(2)
                .all(|w| w[1] >= w[0] - 1e-9);
            summary.push_str(&format!(
                "{name},{s},{},{}\n",
                traj.final_agreement(),
                u8::from(monotone)
            ));
            sum += traj.final_agreement();
            if s == 0 {
                write_trajectory_csvs(lab, name, &traj, &cfg.labels)?;
                write_toy_svg(lab, name, &traj)?;
            }
        }
        means.push((name.to_string(), sum / seeds.max(1) as f64));
    }
    let p = lab.out.join("ari_summary.csv");
    std::fs::write(&p, summary).map_err(|e| Error::io(p.display().to_string(), e))?;
    for (name, mean) in &means {
        println!("{name}: mean final ARI {mean:.3} over {seeds} seeds");
    }
    Ok(())
}

fn write_trajectory_csvs(lab: &Lab, arm: &str, traj: &ToyTrajectory, labels: &[i64]) -> Result<()> {
    let mut pts = String::from("iter,id,x,y,label,resp_argmax\n");
    let mut cents = String::from("iter,centroid,x,y\n");
    for (it, (points, centroids)) in traj.points.iter().zip(&traj.centroids).enumerate() {
        let resp = &traj.responsibilities[it];
        for r in 0..points.rows() {
            pts.push_str(&format!(
                "{it},{r},{},{},{},{}\n",
                points.get(r, 0),
                points.get(r, 1),
                labels[r],
                crate::mat::argmax(resp.row(r)),
            ));
        }
        for c in 0..centroids.rows() {
            cents.push_str(&format!("{it},{c},{},{}\n", centroids.get(c, 0), centroids.get(c, 1)));
        }
    }
    let p = lab.out.join(format!("toy_{arm}_points.csv"));
    std::fs::write(&p, pts).map_err(|e| Error::io(p.display().to_string(), e))?;
    let p = lab.out.join(format!("toy_{arm}_centroids.csv"));
    std::fs::write(&p, cents).map_err(|e| Error::io(p.display().to_string(), e))?;
    Ok(())
}

fn write_toy_svg(lab: &Lab, arm: &str, traj: &ToyTrajectory) -> Result<()> {
    let finals = traj.points.last().expect("non-empty");
    let k = traj.centroids[0].rows();
    // final point positions grouped by hard assignment, centroid paths on top
    let resp = traj.responsibilities.last().expect("non-empty");
    let mut groups: Vec<Vec<(f64, f64)>> = vec![Vec::new(); k];
    for r in 0..finals.rows() {
        groups[crate::mat::argmax(resp.row(r))].push((finals.get(r, 0), finals.get(r, 1)));
    }
    let paths: Vec<Vec<(f64, f64)>> = (0..k)
        .map(|c| traj.centroids.iter().map(|m| (m.get(c, 0), m.get(c, 1))).collect())
        .collect();
    let mut series = Vec::new();
    for (c, g) in groups.iter().enumerate() {
        series.push(Series { label: format!("cluster {c}"), points: g, line: false });
    }
    for (c, p) in paths.iter().enumerate() {
        series.push(Series { label: format!("centroid {c} path"), points: p, line: true });
    }
    write_chart(
        &lab.out.join(format!("toy_{arm}.svg")),
        &format!("EM toy: {arm}"),
        "x",
        "y",
        &series,
    )
}

// ── report (suite-level phase analysis) ────────────────────────────

pub struct SuitePhase {
    pub reports: Vec<(String, PhaseReport)>,
    /// (metric, phase, spearman rho vs accuracy delta, n)
    pub correlations: Vec<(String, u8, f64, usize)>,
}

/// Adapt (with diagnostics) on every suite dataset and decompose each trace
/// into phases; correlate per-dataset metric deltas with accuracy deltas.
pub fn suite_phase_analysis(lab: &Lab) -> Result<SuitePhase> {
    let net = lab.load_model()?;
    let src = lab.source()?;
    let spec = lab.synth_spec()?;
    let tta = lab.cfg.tta_cfg()?;
    let suite = lab.suite()?;
    let diag = DiagnosticsCtx {
        reference: &src.val,
        subset: lab.cfg.usize_of("adapt", "diag_subset", 384)?,
        k: spec.classes,
        seed: lab.seed.substream("kmeans"),
        project_2d: false,
    };
    let traces_dir = lab.out.join("traces");
    std::fs::create_dir_all(&traces_dir)
        .map_err(|e| Error::io(traces_dir.display().to_string(), e))?;
    let mut reports = Vec::new();
    for (i, (name, set)) in suite.iter().enumerate() {
        eprintln!("phase analysis: {name}");
        let c = parse_dataset_name(name)?;
        let holdout = apply_corruption(
            &src.holdout_fit,
            &c,
            &spec,
            lab.seed.substream("holdout-corrupt").index(i as u64),
        )?;
        let (trace, _) =
            adapt(&net, set, &holdout, &tta, lab.seed.substream("adapt").index(i as u64), Some(&diag))?;
        write_trace_csv(&trace, &traces_dir.join(format!("{name}.csv")))?;
        let points: Vec<PhasePoint> = trace.phase_points();
        reports.push((name.clone(), phase_report(&points)?));
    }

    let mut correlations = Vec::new();
    for (metric, pick) in [
        ("silhouette", 0usize),
        ("shift_distance", 1usize),
    ] {
        for phase in [1u8, 2] {
            let mut xs = Vec::new();
            let mut ys = Vec::new();
            for (_, r) in &reports {
                let deltas = match phase {
                    1 => Some(&r.phase1),
                    _ => r.phase2.as_ref(),
                };
                if let Some(d) = deltas {
                    let metric_delta = if pick == 0 { d.silhouette } else { d.shift_distance };
                    if let Some(m) = metric_delta {
                        xs.push(m);
                        ys.push(d.accuracy);
                    }
                }
            }
            if xs.len() >= 3 {
                if let Ok(rho) = spearman(&xs, &ys) {
                    correlations.push((metric.to_string(), phase, rho, xs.len()));
                }
            }
        }
    }
    Ok(SuitePhase { reports, correlations })
}

pub fn cmd_report(lab: &Lab) -> Result<()> {
    lab.prepare_out()?;
    let analysis = suite_phase_analysis(lab)?;
    let mut out = String::from(
        "dataset,peak_iter,acc_delta_p1,acc_delta_p2,sil_delta_p1,sil_delta_p2,shift_delta_p1,shift_delta_p2\n",
    );
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x}"));
    for (name, r) in &analysis.reports {
        let p2 = r.phase2.as_ref();
        out.push_str(&format!(
            "{name},{},{},{},{},{},{},{}\n",
            r.peak_iter,
            r.phase1.accuracy,
            opt(p2.map(|d| d.accuracy)),
            opt(r.phase1.silhouette),
            opt(p2.and_then(|d| d.silhouette)),
            opt(r.phase1.shift_distance),
            opt(p2.and_then(|d| d.shift_distance)),
        ));
    }
    let p = lab.out.join("phase_report.csv");
    std::fs::write(&p, out).map_err(|e| Error::io(p.display().to_string(), e))?;

    let mut out = String::from("metric,phase,spearman_rho,n\n");
    for (metric, phase, rho, n) in &analysis.correlations {
        out.push_str(&format!("{metric},{phase},{rho},{n}\n"));
        println!("phase {phase}: spearman(delta {metric}, delta accuracy) = {rho:.3} over {n} datasets");
    }
    let p = lab.out.join("phase_summary.csv");
    std::fs::write(&p, out).map_err(|e| Error::io(p.display().to_string(), e))?;

    // Fig.-style scatter: metric deltas vs accuracy deltas per phase.
    let mut sil: [Vec<(f64, f64)>; 2] = [Vec::new(), Vec::new()];
    let mut shift: [Vec<(f64, f64)>; 2] = [Vec::new(), Vec::new()];
    for (_, r) in &analysis.reports {
        if let Some(s) = r.phase1.silhouette {
            sil[0].push((s, r.phase1.accuracy));
        }
        if let Some(s) = r.phase1.shift_distance {
            shift[0].push((s, r.phase1.accuracy));
        }
        if let Some(p2) = &r.phase2 {
            if let Some(s) = p2.silhouette {
                sil[1].push((s, p2.accuracy));
            }
            if let Some(s) = p2.shift_distance {
                shift[1].push((s, p2.accuracy));
            }
        }
    }
    write_chart(
        &lab.out.join("phase_silhouette.svg"),
        "accuracy delta vs silhouette delta",
        "silhouette delta",
        "accuracy delta (points)",
        &[
            Series { label: "phase 1".into(), points: &sil[0], line: false },
            Series { label: "phase 2".into(), points: &sil[1], line: false },
        ],
    )?;
    write_chart(
        &lab.out.join("phase_shift.svg"),
        "accuracy delta vs shift-distance delta",
        "shift distance delta",
        "accuracy delta (points)",
        &[
            Series { label: "phase 1".into(), points: &shift[0], line: false },
            Series { label: "phase 2".into(), points: &shift[1], line: false },
        ],
    )?;
    Ok(())
}

// ── shared helpers for tests and examples ──────────────────────────

/// Read any of this crate's CSV artifacts back as raw rows (header + data),
/// for byte-level determinism checks.
pub fn read_csv_rows(path: &Path) -> Result<Vec<String>> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(text.lines().map(str::to_string).collect())
}
