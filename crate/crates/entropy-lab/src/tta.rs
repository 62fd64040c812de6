//! Test-time adaptation: Tent and RDumb.
//!
//! Both methods minimize prediction entropy over the BatchNorm affine
//! parameters with test-batch statistics. RDumb additionally filters samples
//! by entropy (`S_ent`) and by logit similarity to an EMA of past batch
//! logits (`S_div`), and resets the model to its pretrained state every
//! `reset_period` iterations.
//!
//! [`adapt`] drives the loop: it records a holdout trace every
//! `eval_interval` iterations and tracks label flips on the first `track_n`
//! stream rows between iteration 0 (frozen statistics, pretrained model) and
//! the stopping iteration (batch statistics, current model).

use rand::seq::SliceRandom;

use std::path::Path;

use crate::datagen::{accuracy, LabeledSet};
use crate::diagnostics::{class_means, kmeans, silhouette, shift_distance, PhasePoint};
use crate::error::{Error, Result};
use crate::mat::{argmax, cosine, row_entropy, softmax_rows, Mat};
use crate::nnet::{entropy_loss, BnMode, Classifier, Snapshot};
use crate::rng::Seed;
use crate::stats::average_ranks;

/// Adaptation method.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TtaMethod {
    Tent,
    Rdumb,
}

impl TtaMethod {
    pub fn name(self) -> &'static str {
        match self {
            TtaMethod::Tent => "tent",
            TtaMethod::Rdumb => "rdumb",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "tent" => Ok(TtaMethod::Tent),
            "rdumb" => Ok(TtaMethod::Rdumb),
            other => Err(Error::InvalidArgument(format!("unknown TTA method `{other}`"))),
        }
    }
}

/// Entropy cutoff: 0.4 * ln(1000).
pub const DEFAULT_E0: f64 = 2.763_102_111_592_855;

/// Adaptation hyperparameters.
#[derive(Debug, Clone)]
pub struct TtaConfig {
    pub method: TtaMethod,
    pub lr: f64,
    pub batch: usize,
    pub reset_period: u64,
    /// Entropy filter threshold E0.
    pub e0: f64,
    /// EMA weight on the current batch mean.
    pub alpha: f64,
    /// Diversity filter cosine threshold.
    pub eps_div: f64,
    pub stop_iter: u64,
    pub eval_interval: u64,
    /// Number of stream rows tracked for label flips.
    pub track_n: usize,
    /// Clear the EMA on reset, so a reset returns the full pretrained state.
    pub clear_ema_on_reset: bool,
    /// Chunk size for batch-stats evaluation passes; 0 means `batch`.
    pub eval_batch: usize,
}

impl Default for TtaConfig {
    fn default() -> Self {
        TtaConfig {
            method: TtaMethod::Rdumb,
            lr: 2.5e-4,
            batch: 64,
            reset_period: 1000,
            e0: DEFAULT_E0,
            alpha: 0.9,
            eps_div: 0.05,
            stop_iter: 1000,
            eval_interval: 10,
            track_n: 1000,
            clear_ema_on_reset: true,
            eval_batch: 0,
        }
    }
}

impl TtaConfig {
    /// Effective evaluation chunk size.
    pub fn eval_chunk(&self) -> usize {
        if self.eval_batch == 0 {
            self.batch
        } else {
            self.eval_batch
        }
    }
}

impl TtaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(Error::InvalidArgument("lr must be > 0".into()));
        }
        if self.reset_period == 0 {
            return Err(Error::InvalidArgument("reset_period must be > 0".into()));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::InvalidArgument("alpha must be in (0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.eps_div) {
            return Err(Error::InvalidArgument("eps_div must be in [0, 1]".into()));
        }
        if self.batch < 2 {
            return Err(Error::InvalidArgument("batch must be >= 2".into()));
        }
        if self.eval_interval == 0 {
            return Err(Error::InvalidArgument("eval_interval must be > 0".into()));
        }
        Ok(())
    }
}

/// Entropy filter: w = exp(E0 - E) for E < E0, else 0.
pub fn entropy_weights(entropies: &[f64], e0: f64) -> Vec<f64> {
    entropies.iter().map(|&e| if e < e0 { (e0 - e).exp() } else { 0.0 }).collect()
}

/// Diversity filter: keep a row iff its logits' cosine similarity to the EMA
/// is below `eps_div`. With no EMA yet, every row is kept. Zero-norm rows
/// are masked out.
pub fn diversity_mask(batch_logits: &Mat, ema: Option<&[f64]>, eps_div: f64) -> Vec<f64> {
    let Some(m) = ema else {
        return vec![1.0; batch_logits.rows()];
    };
    batch_logits
        .iter_rows()
        .map(|row| match cosine(row, m) {
            Some(c) if c < eps_div => 1.0,
            Some(_) => 0.0,
            None => {
                eprintln!("warning: zero-norm logits row masked out of diversity filter");
                0.0
            }
        })
        .collect()
}

/// EMA recurrence: m' = alpha * y_mean + (1 - alpha) * m; m' = y_mean when
/// no EMA exists yet.
pub fn ema_update(ema: Option<&[f64]>, y_mean: &[f64], alpha: f64) -> Vec<f64> {
    match ema {
        None => y_mean.to_vec(),
        Some(m) => {
            y_mean.iter().zip(m).map(|(&y, &p)| alpha * y + (1.0 - alpha) * p).collect()
        }
    }
}

/// Tracked inputs with their initial and final predictions.
///
/// Percentiles are average ranks of the initial max-softmax confidences,
/// scaled to (0, 1].
#[derive(Debug, Clone)]
pub struct FlipTracker {
    init_preds: Vec<usize>,
    init_conf: Vec<f64>,
    percentiles: Vec<f64>,
    final_preds: Option<Vec<usize>>,
}

impl FlipTracker {
    /// Classify the first `track_n` stream rows with the unadapted model
    /// (frozen statistics).
    pub fn init(net: &Classifier, stream: &LabeledSet, track_n: usize) -> Result<FlipTracker> {
        let n = track_n.min(stream.len());
        if track_n > stream.len() {
            eprintln!(
                "warning: track_n {} exceeds stream size {}; tracking the full stream",
                track_n,
                stream.len()
            );
        }
        if n == 0 {
            return Err(Error::InvalidArgument("empty stream".into()));
        }
        let keep: Vec<usize> = (0..n).collect();
        let x = stream.features.select_rows(&keep);
        let probs = softmax_rows(&net.logits(&x, BnMode::FrozenStats)?);
        let init_preds: Vec<usize> = probs.iter_rows().map(argmax).collect();
        let init_conf: Vec<f64> = probs.iter_rows().map(|r| r[argmax(r)]).collect();
        let percentiles = confidence_percentiles(&init_conf);
        Ok(FlipTracker { init_preds, init_conf, percentiles, final_preds: None })
    }

    pub fn len(&self) -> usize {
        self.init_preds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.init_preds.is_empty()
    }

    pub fn is_finalized(&self) -> bool {
        self.final_preds.is_some()
    }

    pub fn init_preds(&self) -> &[usize] {
        &self.init_preds
    }

    pub fn init_conf(&self) -> &[f64] {
        &self.init_conf
    }

    pub fn percentiles(&self) -> &[f64] {
        &self.percentiles
    }

    pub fn final_preds(&self) -> Option<&[usize]> {
        self.final_preds.as_deref()
    }

    /// Record the stopping-iteration predictions.
    pub fn finalize(&mut self, final_preds: Vec<usize>) -> Result<()> {
        if final_preds.len() != self.init_preds.len() {
            return Err(Error::DimMismatch(format!(
                "{} final predictions for {} tracked inputs",
                final_preds.len(),
                self.init_preds.len()
            )));
        }
        self.final_preds = Some(final_preds);
        Ok(())
    }

    /// Per-input flip flags: initial prediction differs from final.
    pub fn flips(&self) -> Result<Vec<bool>> {
        let finals = self
            .final_preds
            .as_ref()
            .ok_or_else(|| Error::MissingPrerequisite("flip tracker not finalized".into()))?;
        Ok(self.init_preds.iter().zip(finals).map(|(a, b)| a != b).collect())
    }

    pub fn flip_count(&self) -> Result<usize> {
        Ok(self.flips()?.iter().filter(|&&f| f).count())
    }

    /// Build a finalized tracker from raw parts (unit-test helper).
    #[cfg(test)]
    pub(crate) fn for_tests(
        init_preds: Vec<usize>,
        init_conf: Vec<f64>,
        final_preds: Vec<usize>,
    ) -> FlipTracker {
        let percentiles = confidence_percentiles(&init_conf);
        FlipTracker { init_preds, init_conf, percentiles, final_preds: Some(final_preds) }
    }

    /// Restrict to the first `n` tracked inputs, recomputing percentiles over
    /// the subset (the limited-memory arm).
    pub fn subset(&self, n: usize) -> FlipTracker {
        let n = n.min(self.len());
        FlipTracker {
            init_preds: self.init_preds[..n].to_vec(),
            init_conf: self.init_conf[..n].to_vec(),
            percentiles: confidence_percentiles(&self.init_conf[..n]),
            final_preds: self.final_preds.as_ref().map(|f| f[..n].to_vec()),
        }
    }
}

/// Average-rank percentiles in (0, 1]; distinct maxima map to exactly 1.
fn confidence_percentiles(conf: &[f64]) -> Vec<f64> {
    let n = conf.len() as f64;
    average_ranks(conf).into_iter().map(|r| r / n).collect()
}

/// One per-interval trace record. Accuracy is in percent.
#[derive(Debug, Clone, Copy)]
pub struct TraceRecord {
    pub iter: u64,
    pub holdout_acc: f64,
    pub mean_entropy: f64,
    pub silhouette: Option<f64>,
    pub shift_distance: Option<f64>,
}

/// A 2-D projection of the diagnostic embeddings at one interval.
#[derive(Debug, Clone)]
pub struct ProjectionFrame {
    pub iter: u64,
    pub points: Vec<(f64, f64)>,
    pub labels: Vec<i64>,
}

/// Per-interval measurement log of one adaptation run.
#[derive(Debug, Clone, Default)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
    pub reset_count: u64,
    pub projections: Vec<ProjectionFrame>,
}

impl Trace {
    pub fn phase_points(&self) -> Vec<PhasePoint> {
        self.records
            .iter()
            .map(|r| PhasePoint {
                iter: r.iter,
                accuracy: r.holdout_acc,
                silhouette: r.silhouette,
                shift_distance: r.shift_distance,
            })
            .collect()
    }

    pub fn peak_acc(&self) -> f64 {
        self.records.iter().map(|r| r.holdout_acc).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn final_acc(&self) -> f64 {
        self.records.last().map_or(f64::NAN, |r| r.holdout_acc)
    }

    pub fn initial_acc(&self) -> f64 {
        self.records.first().map_or(f64::NAN, |r| r.holdout_acc)
    }
}

/// Clustering diagnostics computed at every eval interval.
#[derive(Debug, Clone)]
pub struct DiagnosticsCtx<'a> {
    /// Clean labeled reference whose per-class mean embeddings anchor the
    /// Shift distance.
    pub reference: &'a LabeledSet,
    /// How many stream rows are embedded and clustered.
    pub subset: usize,
    /// k for k-means (class count of the analysis).
    pub k: usize,
    pub seed: Seed,
    /// Also record top-2 principal-component projections.
    pub project_2d: bool,
}

/// Evolving adaptation state.
#[derive(Debug, Clone)]
pub struct AdaptState {
    net: Classifier,
    pretrained: Snapshot,
    cfg: TtaConfig,
    t: u64,
    ema: Option<Vec<f64>>,
    reset_count: u64,
}

impl AdaptState {
    pub fn new(net: Classifier, cfg: TtaConfig) -> Result<AdaptState> {
        cfg.validate()?;
        let pretrained = net.snapshot();
        Ok(AdaptState { net, pretrained, cfg, t: 0, ema: None, reset_count: 0 })
    }

    pub fn iteration(&self) -> u64 {
        self.t
    }

    pub fn net(&self) -> &Classifier {
        &self.net
    }

    pub fn ema(&self) -> Option<&[f64]> {
        self.ema.as_deref()
    }

    pub fn reset_count(&self) -> u64 {
        self.reset_count
    }

    /// One adaptation step: forward (batch stats), per-sample weights
    /// (all ones for Tent; `S_ent * S_div` for RDumb), weighted entropy
    /// backward on the BatchNorm affine parameters, one SGD step, EMA update
    /// (RDumb), and the iteration counter increment.
    pub fn tta_step(&mut self, batch: &Mat) -> Result<()> {
        self.tta_step_weighted(batch, None)
    }

    /// [`AdaptState::tta_step`] with the per-sample weights overridden
    /// (testing hook for the Tent/RDumb equivalence check).
    pub fn tta_step_weighted(&mut self, batch: &Mat, override_weights: Option<&[f64]>) -> Result<()> {
        let pass = self.net.forward(batch, BnMode::BatchStats)?;
        let probs = softmax_rows(&pass.logits);
        let weights = match override_weights {
            Some(w) => w.to_vec(),
            None => match self.cfg.method {
                TtaMethod::Tent => vec![1.0; batch.rows()],
                TtaMethod::Rdumb => {
                    let entropies: Vec<f64> = probs.iter_rows().map(row_entropy).collect();
                    let s_ent = entropy_weights(&entropies, self.cfg.e0);
                    let s_div = diversity_mask(&pass.logits, self.ema.as_deref(), self.cfg.eps_div);
                    s_ent.iter().zip(&s_div).map(|(a, b)| a * b).collect()
                }
            },
        };
        let (_, dlogits) = entropy_loss(&pass.logits, &weights)?;
        let partition = self.net.bn_affine_partition();
        let grads = self.net.backward(&pass.cache, &dlogits, &partition)?;
        self.net.sgd_step(&grads, self.cfg.lr)?;
        if self.cfg.method == TtaMethod::Rdumb {
            let mut y_mean = vec![0.0; pass.logits.cols()];
            for row in pass.logits.iter_rows() {
                for (m, &v) in y_mean.iter_mut().zip(row) {
                    *m += v;
                }
            }
            let inv = 1.0 / pass.logits.rows() as f64;
            for m in &mut y_mean {
                *m *= inv;
            }
            self.ema = Some(ema_update(self.ema.as_deref(), &y_mean, self.cfg.alpha));
        }
        self.t += 1;
        Ok(())
    }

    /// Restore the pretrained snapshot when the iteration counter hits a
    /// multiple of `reset_period` (RDumb's periodic reset).
    pub fn maybe_reset(&mut self) -> Result<bool> {
        if self.t > 0 && self.t % self.cfg.reset_period == 0 {
            self.net.restore(&self.pretrained)?;
            if self.cfg.clear_ema_on_reset {
                self.ema = None;
            }
            self.reset_count += 1;
            return Ok(true);
        }
        Ok(false)
    }
}

/// Batched batch-stats evaluation. Rows are processed in `batch`-sized
/// chunks; a trailing single row is merged into the previous chunk so batch
/// statistics stay defined.
pub struct BatchedEval {
    pub preds: Vec<usize>,
    pub entropies: Vec<f64>,
    pub embeddings: Mat,
}

pub fn eval_batched(net: &Classifier, x: &Mat, batch: usize) -> Result<BatchedEval> {
    let n = x.rows();
    if n < 2 {
        return Err(Error::SingletonBatch);
    }
    let mut preds = Vec::with_capacity(n);
    let mut entropies = Vec::with_capacity(n);
    let mut embeddings: Option<Mat> = None;
    let mut start = 0;
    while start < n {
        let mut end = (start + batch).min(n);
        if n - end == 1 {
            end = n; // absorb the would-be singleton
        }
        let idx: Vec<usize> = (start..end).collect();
        let chunk = x.select_rows(&idx);
        let pass = net.forward(&chunk, BnMode::BatchStats)?;
        let probs = softmax_rows(&pass.logits);
        for row in probs.iter_rows() {
            preds.push(argmax(row));
            entropies.push(row_entropy(row));
        }
        let emb = embeddings.get_or_insert_with(|| Mat::zeros(n, pass.embedding.cols()));
        for (local, global) in (start..end).enumerate() {
            emb.row_mut(global).copy_from_slice(pass.embedding.row(local));
        }
        start = end;
    }
    Ok(BatchedEval { preds, entropies, embeddings: embeddings.expect("n >= 2") })
}

/// Run the adaptation loop.
///
/// The stream is consumed in order, reshuffled at every epoch boundary after
/// the first pass. The trace records iteration 0 and every `eval_interval`
/// iterations (plus the stopping iteration); flips are measured between
/// iteration 0 (frozen stats, pretrained) and `stop_iter` (batch stats,
/// current model, captured before any reset due at that iteration).
pub fn adapt(
    net: &Classifier,
    stream: &LabeledSet,
    holdout: &LabeledSet,
    cfg: &TtaConfig,
    seed: Seed,
    diag: Option<&DiagnosticsCtx<'_>>,
) -> Result<(Trace, FlipTracker)> {
    cfg.validate()?;
    if stream.is_empty() {
        return Err(Error::InvalidArgument("empty stream".into()));
    }
    if stream.len() < cfg.batch {
        return Err(Error::InvalidArgument(format!(
            "stream has {} rows, fewer than one batch of {}",
            stream.len(),
            cfg.batch
        )));
    }
    if holdout.is_empty() {
        return Err(Error::InvalidArgument("empty holdout".into()));
    }

    let mut tracker = FlipTracker::init(net, stream, cfg.track_n)?;
    let tracked: Vec<usize> = (0..tracker.len()).collect();
    let tracked_x = stream.features.select_rows(&tracked);

    let mut state = AdaptState::new(net.clone(), cfg.clone())?;
    let mut trace = Trace::default();
    record(&mut trace, &state, 0, holdout, stream, cfg, diag)?;

    if cfg.stop_iter == 0 {
        let init = tracker.init_preds().to_vec();
        tracker.finalize(init)?;
        return Ok((trace, tracker));
    }

    let mut rng = seed.substream("adapt-shuffle").rng();
    let mut order: Vec<usize> = (0..stream.len()).collect();
    let mut cursor = 0usize;
    let mut batch_idx = Vec::with_capacity(cfg.batch);
    for t in 1..=cfg.stop_iter {
        batch_idx.clear();
        while batch_idx.len() < cfg.batch {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            batch_idx.push(order[cursor]);
            cursor += 1;
        }
        let batch = stream.features.select_rows(&batch_idx);
        state.tta_step(&batch)?;
        if t == cfg.stop_iter {
            let finals = eval_batched(state.net(), &tracked_x, cfg.eval_chunk())?.preds;
            tracker.finalize(finals)?;
        }
        state.maybe_reset()?;
        if t % cfg.eval_interval == 0 || t == cfg.stop_iter {
            record(&mut trace, &state, t, holdout, stream, cfg, diag)?;
        }
    }
    trace.reset_count = state.reset_count();
    Ok((trace, tracker))
}

fn record(
    trace: &mut Trace,
    state: &AdaptState,
    iter: u64,
    holdout: &LabeledSet,
    stream: &LabeledSet,
    cfg: &TtaConfig,
    diag: Option<&DiagnosticsCtx<'_>>,
) -> Result<()> {
    let eval = eval_batched(state.net(), &holdout.features, cfg.eval_chunk())?;
    let acc = 100.0 * accuracy(&eval.preds, &holdout.labels);
    let mean_entropy = eval.entropies.iter().sum::<f64>() / eval.entropies.len().max(1) as f64;
    let (mut sil, mut shift) = (None, None);
    if let Some(d) = diag {
        let n = d.subset.min(stream.len());
        let idx: Vec<usize> = (0..n).collect();
        let sub = stream.features.select_rows(&idx);
        let sub_eval = eval_batched(state.net(), &sub, cfg.eval_chunk())?;
        let clustering = kmeans(&sub_eval.embeddings, d.k, d.seed.index(iter), 300, 1e-6)?;
        sil = Some(silhouette(&sub_eval.embeddings, &clustering.assignment)?);
        let ref_eval = eval_batched(state.net(), &d.reference.features, cfg.eval_chunk())?;
        let means = class_means(&ref_eval.embeddings, &d.reference.labels)?;
        if means.rows() == clustering.centroids.rows() {
            let (dist, _) = shift_distance(&means, &clustering.centroids)?;
            shift = Some(dist);
        }
        if d.project_2d {
            let proj = crate::diagnostics::pca2(&sub_eval.embeddings);
            trace.projections.push(ProjectionFrame {
                iter,
                points: (0..proj.rows()).map(|r| (proj.get(r, 0), proj.get(r, 1))).collect(),
                labels: stream.labels[..n].to_vec(),
            });
        }
    }
    trace.records.push(TraceRecord {
        iter,
        holdout_acc: acc,
        mean_entropy,
        silhouette: sil,
        shift_distance: shift,
    });
    Ok(())
}

// ── CSV ────────────────────────────────────────────────────────────

/// Write a trace as `iter,holdout_acc,mean_entropy,silhouette,shift_distance`
/// with empty diagnostic fields when disabled.
pub fn write_trace_csv(trace: &Trace, path: &Path) -> Result<()> {
    let mut out = String::from("iter,holdout_acc,mean_entropy,silhouette,shift_distance\n");
    for r in &trace.records {
        let sil = r.silhouette.map_or(String::new(), |v| format!("{v}"));
        let shift = r.shift_distance.map_or(String::new(), |v| format!("{v}"));
        out.push_str(&format!("{},{},{},{sil},{shift}\n", r.iter, r.holdout_acc, r.mean_entropy));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Read a trace CSV written by [`write_trace_csv`].
pub fn read_trace_csv(path: &Path) -> Result<Trace> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let pathstr = path.display().to_string();
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::parse(&pathstr, "empty file"))?;
    if header != "iter,holdout_acc,mean_entropy,silhouette,shift_distance" {
        return Err(Error::parse(&pathstr, "unexpected trace header"));
    }
    let mut records = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 5 {
            return Err(Error::parse(&pathstr, format!("row {}: bad field count", lineno + 2)));
        }
        let opt = |s: &str| -> Result<Option<f64>> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse()
                    .map(Some)
                    .map_err(|_| Error::parse(&pathstr, format!("bad value `{s}`")))
            }
        };
        records.push(TraceRecord {
            iter: f[0]
                .parse()
                .map_err(|_| Error::parse(&pathstr, format!("row {}: bad iter", lineno + 2)))?,
            holdout_acc: f[1]
                .parse()
                .map_err(|_| Error::parse(&pathstr, format!("row {}: bad accuracy", lineno + 2)))?,
            mean_entropy: f[2]
                .parse()
                .map_err(|_| Error::parse(&pathstr, format!("row {}: bad entropy", lineno + 2)))?,
            silhouette: opt(f[3])?,
            shift_distance: opt(f[4])?,
        });
    }
    Ok(Trace { records, reset_count: 0, projections: Vec::new() })
}

/// Write a flip tracker as `id,init_pred,init_conf,percentile,final_pred,flipped`.
pub fn write_flips_csv(tracker: &FlipTracker, path: &Path) -> Result<()> {
    let flips = tracker.flips()?;
    let finals = tracker.final_preds().expect("finalized");
    let mut out = String::from("id,init_pred,init_conf,percentile,final_pred,flipped\n");
    for i in 0..tracker.len() {
        out.push_str(&format!(
            "{i},{},{},{},{},{}\n",
            tracker.init_preds()[i],
            tracker.init_conf()[i],
            tracker.percentiles()[i],
            finals[i],
            u8::from(flips[i]),
        ));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

#[cfg(test)]
mod tests;
