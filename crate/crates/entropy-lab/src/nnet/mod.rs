//! Feedforward classifier with batch normalization.
//!
//! The model adapted at test time: a stack of Linear / BatchNorm / ReLU
//! layers ending in a Linear head. Gradients are hand-derived and checked
//! against the central-difference oracle in `stats::finite_diff_grad`.
//!
//! Two forward modes exist. `BatchStats` normalizes every BatchNorm by the
//! current batch's mean/variance (the Tent convention, used throughout
//! adaptation). `FrozenStats` uses the running statistics accumulated during
//! pretraining and exists for the unadapted iteration-0 baseline.

mod serialize;

pub use serialize::{load_classifier, save_classifier};

use rand::Rng;
use rand_distr::StandardNormal;

use crate::datagen::{accuracy, LabeledSet};
use crate::error::{Error, Result};
use crate::mat::{argmax, row_entropy, softmax_rows, Mat};
use crate::rng::Seed;

/// One layer of the stack.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LayerSpec {
    Linear { input: usize, output: usize },
    BatchNorm { dim: usize },
    Relu,
}

/// Which statistics BatchNorm normalizes by.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BnMode {
    /// Current batch mean/variance (adaptation-time convention).
    BatchStats,
    /// Running statistics frozen at pretraining (iteration-0 baseline).
    FrozenStats,
}

/// Exhaustive, disjoint split of parameter indices into the adaptable set
/// and the frozen remainder.
#[derive(Debug, Clone)]
pub struct ParamPartition {
    pub adaptable: Vec<usize>,
    pub frozen: Vec<usize>,
}

/// Full copy of all parameter and running-statistic values.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    specs: Vec<LayerSpec>,
    params: Vec<f64>,
    buffers: Vec<f64>,
}

impl Snapshot {
    pub fn params(&self) -> &[f64] {
        &self.params
    }
}

/// The classifier. `params` holds, in layer order: Linear weights
/// (input x output, row-major) then bias; BatchNorm gamma then beta.
/// `buffers` holds per BatchNorm: running mean then running variance.
#[derive(Debug, Clone)]
pub struct Classifier {
    specs: Vec<LayerSpec>,
    input_dim: usize,
    classes: usize,
    bn_eps: f64,
    params: Vec<f64>,
    buffers: Vec<f64>,
    param_offsets: Vec<usize>,
    buffer_offsets: Vec<usize>,
    version: u64,
}

/// Default batch-norm epsilon.
pub const BN_EPS: f64 = 1e-5;

/// The default stack: d -> 64 -> 64 -> C with BatchNorm+ReLU after each
/// hidden Linear. The embedding is the 64-dim activation feeding the head.
pub fn default_arch(input_dim: usize, classes: usize) -> Vec<LayerSpec> {
    vec![
        LayerSpec::Linear { input: input_dim, output: 64 },
        LayerSpec::BatchNorm { dim: 64 },
        LayerSpec::Relu,
        LayerSpec::Linear { input: 64, output: 64 },
        LayerSpec::BatchNorm { dim: 64 },
        LayerSpec::Relu,
        LayerSpec::Linear { input: 64, output: classes },
    ]
}

fn layer_param_len(spec: &LayerSpec) -> usize {
    match *spec {
        LayerSpec::Linear { input, output } => input * output + output,
        LayerSpec::BatchNorm { dim } => 2 * dim,
        LayerSpec::Relu => 0,
    }
}

fn layer_buffer_len(spec: &LayerSpec) -> usize {
    match *spec {
        LayerSpec::BatchNorm { dim } => 2 * dim,
        _ => 0,
    }
}

impl Classifier {
    /// Build a classifier with He-initialized weights, gamma=1, beta=0,
    /// running mean 0 and running variance 1.
    pub fn new(input_dim: usize, specs: Vec<LayerSpec>, seed: Seed) -> Result<Self> {
        // Validate the chain and find the class count.
        let mut width = input_dim;
        let mut bn_count = 0;
        for spec in &specs {
            match *spec {
                LayerSpec::Linear { input, output } => {
                    if input != width {
                        return Err(Error::DimMismatch(format!(
                            "Linear expects input {width}, spec says {input}"
                        )));
                    }
                    width = output;
                }
                LayerSpec::BatchNorm { dim } => {
                    if dim != width {
                        return Err(Error::DimMismatch(format!(
                            "BatchNorm dim {dim} does not match width {width}"
                        )));
                    }
                    bn_count += 1;
                }
                LayerSpec::Relu => {}
            }
        }
        let classes = match specs.last() {
            Some(&LayerSpec::Linear { output, .. }) => output,
            _ => {
                return Err(Error::InvalidArgument(
                    "network must end with a Linear layer".into(),
                ))
            }
        };
        if bn_count == 0 {
            return Err(Error::InvalidArgument(
                "network must contain at least one BatchNorm layer".into(),
            ));
        }

        let mut param_offsets = Vec::with_capacity(specs.len());
        let mut buffer_offsets = Vec::with_capacity(specs.len());
        let (mut p, mut b) = (0, 0);
        for spec in &specs {
            param_offsets.push(p);
            buffer_offsets.push(b);
            p += layer_param_len(spec);
            b += layer_buffer_len(spec);
        }

        let mut rng = seed.rng();
        let mut params = vec![0.0; p];
        let mut buffers = vec![0.0; b];
        for (i, spec) in specs.iter().enumerate() {
            match *spec {
                LayerSpec::Linear { input, output } => {
                    let sd = (2.0 / input as f64).sqrt();
                    let w = &mut params[param_offsets[i]..param_offsets[i] + input * output];
                    for v in w {
                        *v = sd * rng.sample::<f64, _>(StandardNormal);
                    }
                    // bias stays 0
                }
                LayerSpec::BatchNorm { dim } => {
                    for j in 0..dim {
                        params[param_offsets[i] + j] = 1.0; // gamma
                    }
                    for j in 0..dim {
                        buffers[buffer_offsets[i] + dim + j] = 1.0; // running var
                    }
                }
                LayerSpec::Relu => {}
            }
        }
        Ok(Classifier {
            specs,
            input_dim,
            classes,
            bn_eps: BN_EPS,
            params,
            buffers,
            param_offsets,
            buffer_offsets,
            version: 0,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    pub fn bn_eps(&self) -> f64 {
        self.bn_eps
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn buffers(&self) -> &[f64] {
        &self.buffers
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// Overwrite parameter values (used by the gradient-check oracle).
    pub fn set_params(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.params.len() {
            return Err(Error::DimMismatch(format!(
                "{} parameter values, expected {}",
                values.len(),
                self.params.len()
            )));
        }
        self.params.copy_from_slice(values);
        self.version += 1;
        Ok(())
    }

    /// The adaptable set: gamma/beta of every BatchNorm. Everything else is
    /// frozen.
    pub fn bn_affine_partition(&self) -> ParamPartition {
        let mut adaptable = Vec::new();
        let mut frozen = Vec::new();
        for (i, spec) in self.specs.iter().enumerate() {
            let range = self.param_offsets[i]..self.param_offsets[i] + layer_param_len(spec);
            match spec {
                LayerSpec::BatchNorm { .. } => adaptable.extend(range),
                _ => frozen.extend(range),
            }
        }
        ParamPartition { adaptable, frozen }
    }

    /// Partition with every parameter adaptable (supervised pretraining).
    pub fn full_partition(&self) -> ParamPartition {
        ParamPartition { adaptable: (0..self.params.len()).collect(), frozen: Vec::new() }
    }

    /// Forward pass. Returns logits, the embedding (input to the final
    /// Linear head), and the cache needed by [`Classifier::backward`].
    pub fn forward(&self, x: &Mat, mode: BnMode) -> Result<ForwardPass> {
        if x.cols() != self.input_dim {
            return Err(Error::DimMismatch(format!(
                "input has {} columns, network expects {}",
                x.cols(),
                self.input_dim
            )));
        }
        if mode == BnMode::BatchStats && x.rows() < 2 {
            return Err(Error::SingletonBatch);
        }
        let n = x.rows();
        let mut cur = x.clone();
        let mut inputs = Vec::with_capacity(self.specs.len());
        let mut bn_caches: Vec<Option<BnCache>> = Vec::with_capacity(self.specs.len());
        for (i, spec) in self.specs.iter().enumerate() {
            inputs.push(cur.clone());
            let mut bn_cache = None;
            cur = match *spec {
                LayerSpec::Linear { input, output } => {
                    let p = self.param_offsets[i];
                    let w = &self.params[p..p + input * output];
                    let bias = &self.params[p + input * output..p + input * output + output];
                    linear_forward(&cur, w, bias, output)
                }
                LayerSpec::BatchNorm { dim } => {
                    let p = self.param_offsets[i];
                    let gamma = &self.params[p..p + dim];
                    let beta = &self.params[p + dim..p + 2 * dim];
                    let (mean, var) = match mode {
                        BnMode::BatchStats => batch_moments(&cur),
                        BnMode::FrozenStats => {
                            let b = self.buffer_offsets[i];
                            (
                                self.buffers[b..b + dim].to_vec(),
                                self.buffers[b + dim..b + 2 * dim].to_vec(),
                            )
                        }
                    };
                    let invstd: Vec<f64> =
                        var.iter().map(|&v| 1.0 / (v + self.bn_eps).sqrt()).collect();
                    let mut xhat = Mat::zeros(n, dim);
                    let mut out = Mat::zeros(n, dim);
                    for r in 0..n {
                        let src = cur.row(r);
                        let xh = xhat.row_mut(r);
                        for j in 0..dim {
                            xh[j] = (src[j] - mean[j]) * invstd[j];
                        }
                        let dst = out.row_mut(r);
                        for j in 0..dim {
                            dst[j] = gamma[j] * xhat.get(r, j) + beta[j];
                        }
                    }
                    bn_cache = Some(BnCache { xhat, invstd, mean, var });
                    out
                }
                LayerSpec::Relu => {
                    let mut out = cur.clone();
                    for v in out.data_mut() {
                        if *v < 0.0 {
                            *v = 0.0;
                        }
                    }
                    out
                }
            };
            bn_caches.push(bn_cache);
        }
        let embedding = inputs.last().expect("non-empty network").clone();
        Ok(ForwardPass {
            logits: cur,
            embedding,
            cache: Cache { inputs, bn: bn_caches, mode, version: self.version },
        })
    }

    /// Convenience: logits only.
    pub fn logits(&self, x: &Mat, mode: BnMode) -> Result<Mat> {
        Ok(self.forward(x, mode)?.logits)
    }

    /// Convenience: argmax predictions.
    pub fn predict(&self, x: &Mat, mode: BnMode) -> Result<Vec<usize>> {
        let logits = self.logits(x, mode)?;
        Ok(logits.iter_rows().map(argmax).collect())
    }

    /// Backpropagate `dlogits` through the cached forward pass, producing a
    /// full-length gradient vector with nonzero entries only for parameters
    /// in `partition.adaptable`.
    pub fn backward(
        &self,
        cache: &Cache,
        dlogits: &Mat,
        partition: &ParamPartition,
    ) -> Result<Vec<f64>> {
        if cache.version != self.version {
            return Err(Error::StaleCache);
        }
        let mut active = vec![false; self.params.len()];
        for &i in &partition.adaptable {
            active[i] = true;
        }
        let mut grads = vec![0.0; self.params.len()];
        let mut dy = dlogits.clone();
        let n = dy.rows();
        for (i, spec) in self.specs.iter().enumerate().rev() {
            let p = self.param_offsets[i];
            let wants = (p..p + layer_param_len(spec)).any(|k| active[k]);
            match *spec {
                LayerSpec::Linear { input, output } => {
                    let x = &cache.inputs[i];
                    let w = &self.params[p..p + input * output];
                    if wants {
                        // dW[k][j] = sum_i x[i][k] * dy[i][j]; db[j] = sum_i dy[i][j]
                        for r in 0..n {
                            let xr = x.row(r);
                            let dr = dy.row(r);
                            for (k, &xv) in xr.iter().enumerate() {
                                let gw = &mut grads[p + k * output..p + (k + 1) * output];
                                for (g, &d) in gw.iter_mut().zip(dr) {
                                    *g += xv * d;
                                }
                            }
                            let gb = &mut grads[p + input * output..p + input * output + output];
                            for (g, &d) in gb.iter_mut().zip(dr) {
                                *g += d;
                            }
                        }
                    }
                    // dx[i][k] = sum_j dy[i][j] * W[k][j]
                    let mut dx = Mat::zeros(n, input);
                    for r in 0..n {
                        let dr = dy.row(r);
                        let dst = dx.row_mut(r);
                        for (k, d) in dst.iter_mut().enumerate() {
                            let wrow = &w[k * output..(k + 1) * output];
                            *d = dr.iter().zip(wrow).map(|(a, b)| a * b).sum();
                        }
                    }
                    dy = dx;
                }
                LayerSpec::BatchNorm { dim } => {
                    let bc = cache.bn[i].as_ref().expect("BN cache present");
                    let gamma = &self.params[p..p + dim];
                    if wants {
                        for r in 0..n {
                            let dr = dy.row(r);
                            let xh = bc.xhat.row(r);
                            for j in 0..dim {
                                grads[p + j] += dr[j] * xh[j]; // dgamma
                                grads[p + dim + j] += dr[j]; // dbeta
                            }
                        }
                        for k in p..p + 2 * dim {
                            if !active[k] {
                                grads[k] = 0.0;
                            }
                        }
                    }
                    let mut dx = Mat::zeros(n, dim);
                    match cache.mode {
                        BnMode::BatchStats => {
                            // dxhat = dy * gamma; dx = invstd/n * (n*dxhat
                            //   - sum(dxhat) - xhat * sum(dxhat .* xhat))
                            let mut sum_dxh = vec![0.0; dim];
                            let mut sum_dxh_xh = vec![0.0; dim];
                            for r in 0..n {
                                let dr = dy.row(r);
                                let xh = bc.xhat.row(r);
                                for j in 0..dim {
                                    let dxh = dr[j] * gamma[j];
                                    sum_dxh[j] += dxh;
                                    sum_dxh_xh[j] += dxh * xh[j];
                                }
                            }
                            let nf = n as f64;
                            for r in 0..n {
                                let dr = dy.row(r);
                                let xh = bc.xhat.row(r);
                                let dst = dx.row_mut(r);
                                for j in 0..dim {
                                    let dxh = dr[j] * gamma[j];
                                    dst[j] = bc.invstd[j] / nf
                                        * (nf * dxh - sum_dxh[j] - xh[j] * sum_dxh_xh[j]);
                                }
                            }
                        }
                        BnMode::FrozenStats => {
                            // mean/var are constants here
                            for r in 0..n {
                                let dr = dy.row(r);
                                let dst = dx.row_mut(r);
                                for j in 0..dim {
                                    dst[j] = dr[j] * gamma[j] * bc.invstd[j];
                                }
                            }
                        }
                    }
                    dy = dx;
                }
                LayerSpec::Relu => {
                    let x = &cache.inputs[i];
                    for (d, &v) in dy.data_mut().iter_mut().zip(x.data()) {
                        if v <= 0.0 {
                            *d = 0.0;
                        }
                    }
                }
            }
        }
        Ok(grads)
    }

    /// One SGD step: theta <- theta - lr * g. Frozen entries carry zero
    /// gradient and therefore stay bit-identical.
    pub fn sgd_step(&mut self, grads: &[f64], lr: f64) -> Result<()> {
        if grads.len() != self.params.len() {
            return Err(Error::DimMismatch(format!(
                "{} gradient entries for {} parameters",
                grads.len(),
                self.params.len()
            )));
        }
        for (p, &g) in self.params.iter_mut().zip(grads) {
            *p -= lr * g;
        }
        self.version += 1;
        Ok(())
    }

    /// Fold a batch-stats forward's BN moments into the running statistics.
    pub fn update_running_stats(&mut self, cache: &Cache, momentum: f64) {
        for (i, spec) in self.specs.iter().enumerate() {
            if let LayerSpec::BatchNorm { dim } = *spec {
                let bc = cache.bn[i].as_ref().expect("BN cache present");
                let n = cache.inputs[i].rows() as f64;
                let unbias = if n > 1.0 { n / (n - 1.0) } else { 1.0 };
                let b = self.buffer_offsets[i];
                for j in 0..dim {
                    self.buffers[b + j] =
                        (1.0 - momentum) * self.buffers[b + j] + momentum * bc.mean[j];
                    self.buffers[b + dim + j] = (1.0 - momentum) * self.buffers[b + dim + j]
                        + momentum * bc.var[j] * unbias;
                }
            }
        }
        self.version += 1;
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            specs: self.specs.clone(),
            params: self.params.clone(),
            buffers: self.buffers.clone(),
        }
    }

    /// Restore all parameters and running statistics bit-exactly.
    pub fn restore(&mut self, snap: &Snapshot) -> Result<()> {
        if snap.specs != self.specs {
            return Err(Error::SnapshotMismatch(
                "layer specs differ from the snapshot's".into(),
            ));
        }
        self.params.copy_from_slice(&snap.params);
        self.buffers.copy_from_slice(&snap.buffers);
        self.version += 1;
        Ok(())
    }
}

fn linear_forward(x: &Mat, w: &[f64], bias: &[f64], output: usize) -> Mat {
    let n = x.rows();
    let input = x.cols();
    let mut out = Mat::zeros(n, output);
    for r in 0..n {
        let xr = x.row(r);
        let orow = out.row_mut(r);
        orow.copy_from_slice(bias);
        for (k, &xv) in xr.iter().enumerate() {
            let wrow = &w[k * output..(k + 1) * output];
            for (o, &wv) in orow.iter_mut().zip(wrow) {
                *o += xv * wv;
            }
        }
    }
    debug_assert_eq!(w.len(), input * output);
    out
}

fn batch_moments(x: &Mat) -> (Vec<f64>, Vec<f64>) {
    let (n, d) = (x.rows() as f64, x.cols());
    let mut mean = vec![0.0; d];
    for row in x.iter_rows() {
        for (m, &v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut var = vec![0.0; d];
    for row in x.iter_rows() {
        for ((va, &v), &m) in var.iter_mut().zip(row).zip(&mean) {
            *va += (v - m) * (v - m);
        }
    }
    for v in &mut var {
        *v /= n;
    }
    (mean, var)
}

/// Per-BN intermediates captured during forward.
#[derive(Debug, Clone)]
struct BnCache {
    xhat: Mat,
    invstd: Vec<f64>,
    mean: Vec<f64>,
    var: Vec<f64>,
}

/// Intermediates for one forward pass. Valid for backward only while the
/// classifier's parameters are unchanged.
#[derive(Debug, Clone)]
pub struct Cache {
    inputs: Vec<Mat>,
    bn: Vec<Option<BnCache>>,
    mode: BnMode,
    version: u64,
}

/// Result of a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub logits: Mat,
    pub embedding: Mat,
    pub cache: Cache,
}

/// Weighted mean entropy of softmaxed logits and its gradient.
///
/// loss = sum_i w_i * H(softmax(z_i)) / n, with
/// dH/dz_j = -p_j (ln p_j + H).
pub fn entropy_loss(logits: &Mat, sample_weights: &[f64]) -> Result<(f64, Mat)> {
    if sample_weights.len() != logits.rows() {
        return Err(Error::DimMismatch(format!(
            "{} weights for {} rows",
            sample_weights.len(),
            logits.rows()
        )));
    }
    if let Some(w) = sample_weights.iter().find(|&&w| !(w >= 0.0)) {
        return Err(Error::InvalidArgument(format!("negative sample weight {w}")));
    }
    let probs = softmax_rows(logits);
    let n = logits.rows() as f64;
    let mut loss = 0.0;
    let mut grad = Mat::zeros(logits.rows(), logits.cols());
    for (r, &w) in sample_weights.iter().enumerate() {
        let p = probs.row(r);
        let h = row_entropy(p);
        loss += w * h / n;
        let g = grad.row_mut(r);
        for (gj, &pj) in g.iter_mut().zip(p) {
            *gj = if pj > 0.0 { -(w / n) * pj * (pj.ln() + h) } else { 0.0 };
        }
    }
    Ok((loss, grad))
}

/// Mean cross-entropy against label-smoothed targets and its logits
/// gradient. With `smoothing` = 0 the targets are plain one-hot.
pub fn cross_entropy_loss(logits: &Mat, labels: &[i64], smoothing: f64) -> Result<(f64, Mat)> {
    if labels.len() != logits.rows() {
        return Err(Error::DimMismatch(format!(
            "{} labels for {} rows",
            labels.len(),
            logits.rows()
        )));
    }
    if !(0.0..1.0).contains(&smoothing) {
        return Err(Error::InvalidArgument(format!("smoothing {smoothing} outside [0, 1)")));
    }
    let classes = logits.cols();
    let probs = softmax_rows(logits);
    let n = logits.rows() as f64;
    let off = smoothing / classes as f64;
    let on = 1.0 - smoothing + off;
    let mut loss = 0.0;
    let mut grad = probs.clone();
    for (r, &label) in labels.iter().enumerate() {
        let y = usize::try_from(label).map_err(|_| {
            Error::InvalidArgument(format!("cross-entropy label {label} is not a class index"))
        })?;
        if y >= classes {
            return Err(Error::InvalidArgument(format!("label {y} >= {classes} classes")));
        }
        let g = grad.row_mut(r);
        for (c, v) in g.iter_mut().enumerate() {
            let target = if c == y { on } else { off };
            loss += -target * (probs.get(r, c).max(1e-300)).ln() / n;
            *v = (*v - target) / n;
        }
    }
    Ok((loss, grad))
}

/// Pretraining hyperparameters.
#[derive(Debug, Clone)]
pub struct PretrainCfg {
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
    /// Required clean-validation accuracy.
    pub accuracy_floor: f64,
    pub bn_momentum: f64,
    /// Label smoothing keeps the head from saturating its softmax.
    pub label_smoothing: f64,
}

impl Default for PretrainCfg {
    fn default() -> Self {
        // Stop once clean validation is comfortably above the floor; an
        // overtrained head saturates its softmax and starves the entropy
        // gradients the adaptation stage works with.
        PretrainCfg {
            epochs: 12,
            lr: 0.05,
            batch: 64,
            accuracy_floor: 0.90,
            bn_momentum: 0.1,
            label_smoothing: 0.1,
        }
    }
}

/// Supervised cross-entropy SGD on all parameters. Returns the pretrained
/// snapshot; fails if clean-validation accuracy ends below the floor.
pub fn pretrain(
    net: &mut Classifier,
    train: &LabeledSet,
    val: &LabeledSet,
    cfg: &PretrainCfg,
    seed: Seed,
) -> Result<Snapshot> {
    if train.is_empty() {
        return Err(Error::InvalidArgument("empty training set".into()));
    }
    let full = net.full_partition();
    let mut rng = seed.rng();
    let mut order: Vec<usize> = (0..train.len()).collect();
    for _ in 0..cfg.epochs {
        use rand::seq::SliceRandom;
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch) {
            if chunk.len() < 2 {
                continue; // batch statistics undefined
            }
            let x = train.features.select_rows(chunk);
            let labels: Vec<i64> = chunk.iter().map(|&i| train.labels[i]).collect();
            let pass = net.forward(&x, BnMode::BatchStats)?;
            let (_, dlogits) = cross_entropy_loss(&pass.logits, &labels, cfg.label_smoothing)?;
            let grads = net.backward(&pass.cache, &dlogits, &full)?;
            net.update_running_stats(&pass.cache, cfg.bn_momentum);
            net.sgd_step(&grads, cfg.lr)?;
        }
    }
    let preds = net.predict(&val.features, BnMode::FrozenStats)?;
    let acc = accuracy(&preds, &val.labels);
    if acc < cfg.accuracy_floor {
        return Err(Error::PretrainingFailed { accuracy: acc, floor: cfg.accuracy_floor });
    }
    Ok(net.snapshot())
}

#[cfg(test)]
mod tests;
