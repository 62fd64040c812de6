//! Unlabeled accuracy estimation.
//!
//! Four confidence-based baselines (AC, DoC, ATC, COT) and Weighted Flips,
//! which converts the adaptation-time label flips of a tracked input set
//! into an accuracy estimate through a fitted polynomial calibration curve.
//! All estimates are percentages in [0, 100].

use std::path::Path;

use crate::datagen::{accuracy, LabeledSet};
use crate::diagnostics::hungarian;
use crate::error::{Error, Result};
use crate::mat::{argmax, softmax_rows, Mat};
use crate::nnet::{BnMode, Classifier};
use crate::rng::Seed;
use crate::tta::{adapt, FlipTracker, TtaConfig};

/// Estimation methods.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Ac,
    Doc,
    Atc,
    Cot,
    Wf,
}

pub const ALL_METHODS: [Method; 5] = [Method::Ac, Method::Doc, Method::Atc, Method::Cot, Method::Wf];

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Ac => "ac",
            Method::Doc => "doc",
            Method::Atc => "atc",
            Method::Cot => "cot",
            Method::Wf => "wf",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "ac" => Ok(Method::Ac),
            "doc" => Ok(Method::Doc),
            "atc" => Ok(Method::Atc),
            "cot" => Ok(Method::Cot),
            "wf" => Ok(Method::Wf),
            other => Err(Error::InvalidArgument(format!("unknown method `{other}`"))),
        }
    }
}

/// Average confidence: 100 times the mean top-class probability.
pub fn ac(probs: &Mat) -> f64 {
    if probs.rows() == 0 {
        return 0.0;
    }
    let sum: f64 = probs.iter_rows().map(|r| r[argmax(r)]).sum();
    100.0 * sum / probs.rows() as f64
}

/// Difference of confidences: validation accuracy shifted by the confidence
/// gap between test and validation, clamped to [0, 100].
pub fn doc(probs_test: &Mat, probs_val: &Mat, acc_val: f64) -> f64 {
    (acc_val + (ac(probs_test) - ac(probs_val))).clamp(0.0, 100.0)
}

/// Learn the ATC threshold: the fraction of validation confidences above it
/// matches validation accuracy as closely as possible. The threshold sits at
/// a midpoint between adjacent distinct scores (or just outside the range).
pub fn atc_fit(val_conf: &[f64], val_correct: &[bool]) -> Result<f64> {
    if val_conf.is_empty() || val_conf.len() != val_correct.len() {
        return Err(Error::InvalidArgument(format!(
            "{} confidences vs {} flags",
            val_conf.len(),
            val_correct.len()
        )));
    }
    let n = val_conf.len();
    let acc = val_correct.iter().filter(|&&c| c).count() as f64 / n as f64;
    let mut sorted = val_conf.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    // Candidate thresholds with the fraction of scores strictly above each.
    let mut candidates: Vec<(f64, f64)> = vec![(sorted[0] - 1.0, 1.0), (sorted[n - 1] + 1.0, 0.0)];
    for i in 0..n - 1 {
        if sorted[i] < sorted[i + 1] {
            let above = (n - 1 - i) as f64 / n as f64;
            candidates.push(((sorted[i] + sorted[i + 1]) / 2.0, above));
        }
    }
    let (mut best_t, mut best_err) = (candidates[0].0, (candidates[0].1 - acc).abs());
    for &(t, frac) in &candidates[1..] {
        let err = (frac - acc).abs();
        if err < best_err {
            best_err = err;
            best_t = t;
        }
    }
    Ok(best_t)
}

/// ATC estimate: 100 times the fraction of test confidences above the
/// learned threshold.
pub fn atc_predict(test_conf: &[f64], threshold: f64) -> f64 {
    if test_conf.is_empty() {
        return 0.0;
    }
    let above = test_conf.iter().filter(|&&c| c > threshold).count();
    100.0 * above as f64 / test_conf.len() as f64
}

/// Deterministic proportional allocation of `n` one-hot targets to classes
/// (largest-remainder rounding; ties resolved toward lower class indices).
pub fn allocate_marginal(n: usize, marginal: &[f64]) -> Result<Vec<usize>> {
    let total: f64 = marginal.iter().sum();
    if marginal.is_empty() || (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!("marginal sums to {total}, expected 1")));
    }
    if let Some(&bad) = marginal.iter().find(|&&p| !(0.0..=1.0).contains(&p)) {
        return Err(Error::InvalidArgument(format!("marginal entry {bad} outside [0, 1]")));
    }
    let mut counts: Vec<usize> = marginal.iter().map(|&p| (p * n as f64).floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut remainders: Vec<(usize, f64)> = marginal
        .iter()
        .enumerate()
        .map(|(c, &p)| (c, p * n as f64 - (p * n as f64).floor()))
        .collect();
    remainders.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    for i in 0..n - assigned {
        counts[remainders[i % remainders.len()].0] += 1;
    }
    Ok(counts)
}

/// The expanded COT cost matrix: rows are test softmax outputs, columns are
/// one-hot targets allocated from the marginal, ground cost 0.5*L1.
pub fn cot_cost_matrix(probs_test: &Mat, marginal: &[f64]) -> Result<Mat> {
    let n = probs_test.rows();
    if n == 0 {
        return Err(Error::InvalidArgument("no test rows".into()));
    }
    let counts = allocate_marginal(n, marginal)?;
    let mut target_class = Vec::with_capacity(n);
    for (c, &count) in counts.iter().enumerate() {
        target_class.extend(std::iter::repeat_n(c, count));
    }
    let mut cost = Mat::zeros(n, n);
    for (i, p) in probs_test.iter_rows().enumerate() {
        let row = cost.row_mut(i);
        for (j, &y) in target_class.iter().enumerate() {
            let mut l1 = 0.0;
            for (c, &pc) in p.iter().enumerate() {
                let t = if c == y { 1.0 } else { 0.0 };
                l1 += (pc - t).abs();
            }
            row[j] = 0.5 * l1;
        }
    }
    Ok(cost)
}

/// Confidence optimal transport: the exact assignment cost between test
/// softmax rows and one-hot targets drawn from the source marginal is the
/// predicted error; the estimate is 100*(1 - error).
pub fn cot(probs_test: &Mat, marginal: &[f64]) -> Result<f64> {
    let cost = cot_cost_matrix(probs_test, marginal)?;
    let (_, total) = hungarian(&cost)?;
    let err = total / probs_test.rows() as f64;
    Ok((100.0 * (1.0 - err)).clamp(0.0, 100.0))
}

/// Weighted Flips: the sum of confidence percentiles over flipped inputs.
pub fn weighted_flips(tracker: &FlipTracker) -> Result<f64> {
    let flips = tracker.flips()?;
    Ok(flips
        .iter()
        .zip(tracker.percentiles())
        .filter(|(&f, _)| f)
        .map(|(_, &p)| p)
        .sum())
}

/// Raw flip count as a float (the unweighted calibration variant's x-axis).
pub fn raw_flips(tracker: &FlipTracker) -> Result<f64> {
    Ok(tracker.flip_count()? as f64)
}

/// Appendix-style limited-data scaling: flips measured on a small tracked
/// set are scaled up to the reference size.
pub fn limited_scale(wf_small: f64, n_small: usize, n_ref: usize) -> Result<f64> {
    if n_small == 0 {
        return Err(Error::InvalidArgument("n_small must be > 0".into()));
    }
    Ok(wf_small * n_ref as f64 / n_small as f64)
}

/// Polynomial mapping flips to accuracy percent, output clamped to [0, 100].
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationCurve {
    /// 1 = linear, 2 = quadratic, 3 = cubic.
    pub degree: usize,
    /// Whether the x-axis is weighted flips (vs raw flip counts).
    pub weighted: bool,
    /// Highest power first, length degree + 1.
    pub coefficients: Vec<f64>,
}

impl CalibrationCurve {
    pub fn new(degree: usize, weighted: bool, coefficients: Vec<f64>) -> Result<Self> {
        if !(1..=3).contains(&degree) || coefficients.len() != degree + 1 {
            return Err(Error::InvalidArgument(format!(
                "degree {degree} with {} coefficients",
                coefficients.len()
            )));
        }
        Ok(CalibrationCurve { degree, weighted, coefficients })
    }

    /// Horner evaluation, clamped to [0, 100].
    pub fn evaluate(&self, x: f64) -> f64 {
        let mut acc = 0.0;
        for &c in &self.coefficients {
            acc = acc * x + c;
        }
        acc.clamp(0.0, 100.0)
    }
}

/// Estimate accuracy percent from a flips value.
pub fn predict_accuracy(curve: &CalibrationCurve, wf: f64) -> f64 {
    curve.evaluate(wf)
}

/// Least-squares polynomial fit of (flips, accuracy percent) pairs.
pub fn fit_curve(pairs: &[(f64, f64)], degree: usize, weighted: bool) -> Result<CalibrationCurve> {
    if !(1..=3).contains(&degree) {
        return Err(Error::InvalidArgument(format!("degree {degree} outside 1..=3")));
    }
    if pairs.len() < degree + 1 {
        return Err(Error::FitFailed(format!(
            "{} pairs cannot determine a degree-{degree} polynomial",
            pairs.len()
        )));
    }
    let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let coefficients = polyfit_qr(&xs, &ys, degree)?;
    CalibrationCurve::new(degree, weighted, coefficients)
}

/// Householder-QR least squares on the Vandermonde matrix
/// (columns x^degree .. x^0). Returns coefficients highest power first.
fn polyfit_qr(xs: &[f64], ys: &[f64], degree: usize) -> Result<Vec<f64>> {
    let m = xs.len();
    let k = degree + 1;
    let mut a = vec![0.0; m * k];
    for (i, &x) in xs.iter().enumerate() {
        let mut pw = 1.0;
        for j in (0..k).rev() {
            a[i * k + j] = pw;
            pw *= x;
        }
    }
    let mut y = ys.to_vec();
    // Householder QR, transforming y alongside.
    for col in 0..k {
        let mut norm = 0.0;
        for i in col..m {
            norm += a[i * k + col] * a[i * k + col];
        }
        let norm = norm.sqrt();
        if norm == 0.0 {
            return Err(Error::FitFailed("rank-deficient design (degenerate x values)".into()));
        }
        let pivot = a[col * k + col];
        let alpha = if pivot >= 0.0 { -norm } else { norm };
        // v = (pivot - alpha, a[col+1..m, col])
        let mut v = Vec::with_capacity(m - col);
        v.push(pivot - alpha);
        for i in col + 1..m {
            v.push(a[i * k + col]);
        }
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 == 0.0 {
            // column already reduced
            a[col * k + col] = alpha;
            continue;
        }
        // H = I - 2 v v^T / (v^T v) applied to remaining columns and to y.
        for j in col + 1..k {
            let mut dot = 0.0;
            for (o, &vi) in v.iter().enumerate() {
                dot += vi * a[(col + o) * k + j];
            }
            let scale = 2.0 * dot / vnorm2;
            for (o, &vi) in v.iter().enumerate() {
                a[(col + o) * k + j] -= scale * vi;
            }
        }
        {
            let mut dot = 0.0;
            for (o, &vi) in v.iter().enumerate() {
                dot += vi * y[col + o];
            }
            let scale = 2.0 * dot / vnorm2;
            for (o, &vi) in v.iter().enumerate() {
                y[col + o] -= scale * vi;
            }
        }
        a[col * k + col] = alpha;
        for i in col + 1..m {
            a[i * k + col] = 0.0;
        }
    }
    // Back-substitution on the k x k upper triangle.
    let scale = (0..k).map(|j| a[j * k + j].abs()).fold(0.0, f64::max);
    let mut coef = vec![0.0; k];
    for j in (0..k).rev() {
        let diag = a[j * k + j];
        if diag.abs() <= 1e-12 * scale.max(1.0) {
            return Err(Error::FitFailed("rank-deficient design (degenerate x values)".into()));
        }
        let mut rhs = y[j];
        for jj in j + 1..k {
            rhs -= a[j * k + jj] * coef[jj];
        }
        coef[j] = rhs / diag;
    }
    Ok(coef)
}

/// One estimate for one dataset.
#[derive(Debug, Clone)]
pub struct EstimateReport {
    pub dataset: String,
    pub method: Method,
    pub estimate: f64,
    pub truth: Option<f64>,
    pub abs_error: Option<f64>,
}

/// Table-level MAE summary for one method: mean over datasets, the single
/// worst dataset, and the mean with that worst dataset excluded.
#[derive(Debug, Clone)]
pub struct MethodSummary {
    pub method: Method,
    pub average: f64,
    pub worst_case: f64,
    pub average_excl_worst: f64,
}

/// Shared context for suite evaluation.
pub struct SuiteEvalCtx<'a> {
    /// Pretrained classifier whose accuracy is being estimated.
    pub net: &'a Classifier,
    /// Clean validation split (DoC/ATC reference, WF adaptation holdout).
    pub val: &'a LabeledSet,
    /// Calibration curve for WF; required iff WF is among the methods.
    pub curve: Option<&'a CalibrationCurve>,
    /// Adaptation config for WF runs.
    pub tta: TtaConfig,
    pub seed: Seed,
    /// Source class marginal for COT.
    pub marginal: Vec<f64>,
}

/// Frozen-statistics softmax outputs, predictions, and accuracy percent.
pub fn frozen_probs(net: &Classifier, set: &LabeledSet) -> Result<(Mat, Vec<usize>, f64)> {
    let logits = net.logits(&set.features, BnMode::FrozenStats)?;
    let probs = softmax_rows(&logits);
    let preds: Vec<usize> = probs.iter_rows().map(argmax).collect();
    let acc = 100.0 * accuracy(&preds, &set.labels);
    Ok((probs, preds, acc))
}

/// Run the WF adaptation on one dataset and return its flip tracker.
pub fn run_flip_tracking(
    net: &Classifier,
    stream: &LabeledSet,
    holdout: &LabeledSet,
    tta: &TtaConfig,
    seed: Seed,
) -> Result<FlipTracker> {
    let (_, tracker) = adapt(net, stream, holdout, tta, seed, None)?;
    Ok(tracker)
}

/// Evaluate the selected estimators on every suite dataset and summarize
/// absolute errors per method.
pub fn evaluate_suite(
    suite: &[(String, LabeledSet)],
    ctx: &SuiteEvalCtx<'_>,
    methods: &[Method],
) -> Result<(Vec<EstimateReport>, Vec<MethodSummary>)> {
    if methods.contains(&Method::Wf) && ctx.curve.is_none() {
        return Err(Error::MissingPrerequisite("WF needs a fitted calibration curve".into()));
    }
    let (val_probs, val_preds, val_acc) = frozen_probs(ctx.net, ctx.val)?;
    let val_conf: Vec<f64> = val_probs.iter_rows().map(|r| r[argmax(r)]).collect();
    let val_correct: Vec<bool> =
        val_preds.iter().zip(&ctx.val.labels).map(|(&p, &l)| l >= 0 && p as i64 == l).collect();
    let atc_threshold =
        if methods.contains(&Method::Atc) { Some(atc_fit(&val_conf, &val_correct)?) } else { None };

    let mut reports = Vec::new();
    for (di, (name, set)) in suite.iter().enumerate() {
        let (probs, _, truth) = frozen_probs(ctx.net, set)?;
        let wf_estimate = if methods.contains(&Method::Wf) {
            let tracker =
                run_flip_tracking(ctx.net, set, ctx.val, &ctx.tta, ctx.seed.index(di as u64))?;
            let wf = weighted_flips(&tracker)?;
            Some(predict_accuracy(ctx.curve.expect("checked"), wf))
        } else {
            None
        };
        for &method in methods {
            let estimate = match method {
                Method::Ac => ac(&probs),
                Method::Doc => doc(&probs, &val_probs, val_acc),
                Method::Atc => {
                    let conf: Vec<f64> = probs.iter_rows().map(|r| r[argmax(r)]).collect();
                    atc_predict(&conf, atc_threshold.expect("fitted"))
                }
                Method::Cot => cot(&probs, &ctx.marginal)?,
                Method::Wf => wf_estimate.expect("computed"),
            };
            reports.push(EstimateReport {
                dataset: name.clone(),
                method,
                estimate,
                truth: Some(truth),
                abs_error: Some((estimate - truth).abs()),
            });
        }
    }
    let summaries = summarize(&reports, methods);
    Ok((reports, summaries))
}

/// Per-method MAE rows (Average / Worst Case / Average-excluding-worst).
pub fn summarize(reports: &[EstimateReport], methods: &[Method]) -> Vec<MethodSummary> {
    let mut out = Vec::new();
    for &method in methods {
        let errors: Vec<f64> = reports
            .iter()
            .filter(|r| r.method == method)
            .filter_map(|r| r.abs_error)
            .collect();
        if errors.is_empty() {
            continue;
        }
        let average = errors.iter().sum::<f64>() / errors.len() as f64;
        let worst = errors.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let excl = if errors.len() > 1 {
            (errors.iter().sum::<f64>() - worst) / (errors.len() - 1) as f64
        } else {
            average
        };
        out.push(MethodSummary { method, average, worst_case: worst, average_excl_worst: excl });
    }
    out
}

// ── CSV ────────────────────────────────────────────────────────────

/// Write per-dataset reports as `dataset,method,estimate,truth,abs_error`.
pub fn write_reports_csv(reports: &[EstimateReport], path: &Path) -> Result<()> {
    let mut out = String::from("dataset,method,estimate,truth,abs_error\n");
    for r in reports {
        let truth = r.truth.map_or(String::new(), |v| format!("{v}"));
        let err = r.abs_error.map_or(String::new(), |v| format!("{v}"));
        out.push_str(&format!("{},{},{},{truth},{err}\n", r.dataset, r.method.name(), r.estimate));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Read reports written by [`write_reports_csv`].
pub fn read_reports_csv(path: &Path) -> Result<Vec<EstimateReport>> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let pathstr = path.display().to_string();
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::parse(&pathstr, "empty file"))?;
    if header != "dataset,method,estimate,truth,abs_error" {
        return Err(Error::parse(&pathstr, "unexpected report header"));
    }
    let mut out = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 5 {
            return Err(Error::parse(&pathstr, format!("row {}: bad field count", lineno + 2)));
        }
        let parse_opt = |s: &str| -> Result<Option<f64>> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|_| Error::parse(&pathstr, format!("bad value `{s}`")))
            }
        };
        out.push(EstimateReport {
            dataset: f[0].to_string(),
            method: Method::parse(f[1]).map_err(|_| Error::parse(&pathstr, format!("bad method `{}`", f[1])))?,
            estimate: f[2]
                .parse()
                .map_err(|_| Error::parse(&pathstr, format!("bad estimate `{}`", f[2])))?,
            truth: parse_opt(f[3])?,
            abs_error: parse_opt(f[4])?,
        });
    }
    Ok(out)
}

/// Write the summary rows, methods as columns.
pub fn write_summary_csv(summaries: &[MethodSummary], path: &Path) -> Result<()> {
    let mut out = String::from("summary");
    for s in summaries {
        out.push_str(&format!(",{}", s.method.name()));
    }
    out.push('\n');
    for (label, field) in [
        ("average", 0),
        ("worst_case", 1),
        ("average_excl_worst", 2),
    ] {
        out.push_str(label);
        for s in summaries {
            let v = match field {
                0 => s.average,
                1 => s.worst_case,
                _ => s.average_excl_worst,
            };
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

#[cfg(test)]
mod tests;
