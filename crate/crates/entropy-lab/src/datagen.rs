//! Synthetic source/shift benchmark generator.
//!
//! Stands in for ImageNet-scale data: Gaussian class clusters on a sphere,
//! four disjoint splits, severity-graded corruptions, and OOD injection.
//! Everything is a pure function of `(spec, seed)`.

use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::mat::Mat;
use crate::rng::Seed;

/// A feature matrix with labels and a provenance tag. Label `-1` marks an
/// unlabeled / out-of-distribution row, which counts as always-wrong in
/// accuracy.
#[derive(Debug, Clone)]
pub struct LabeledSet {
    pub features: Mat,
    pub labels: Vec<i64>,
    pub provenance: String,
}

impl LabeledSet {
    pub fn new(features: Mat, labels: Vec<i64>, provenance: impl Into<String>) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::DimMismatch(format!(
                "{} feature rows vs {} labels",
                features.rows(),
                labels.len()
            )));
        }
        if let Some(&l) = labels.iter().find(|&&l| l < -1) {
            return Err(Error::InvalidArgument(format!("label {l} out of range")));
        }
        Ok(LabeledSet { features, labels, provenance: provenance.into() })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    /// Subset by row indices, keeping order.
    pub fn select(&self, keep: &[usize], provenance: impl Into<String>) -> LabeledSet {
        LabeledSet {
            features: self.features.select_rows(keep),
            labels: keep.iter().map(|&i| self.labels[i]).collect(),
            provenance: provenance.into(),
        }
    }
}

/// Accuracy with OOD rows (`label == -1`) counted as always wrong.
pub fn accuracy(predictions: &[usize], labels: &[i64]) -> f64 {
    assert_eq!(predictions.len(), labels.len());
    if labels.is_empty() {
        return 0.0;
    }
    let correct = predictions
        .iter()
        .zip(labels)
        .filter(|&(&p, &l)| l >= 0 && p as i64 == l)
        .count();
    correct as f64 / labels.len() as f64
}

/// Samples per class in each of the four source splits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitSizes {
    pub train: usize,
    pub val: usize,
    pub holdout_fit: usize,
    pub test: usize,
}

impl Default for SplitSizes {
    fn default() -> Self {
        SplitSizes { train: 40, val: 16, holdout_fit: 16, test: 64 }
    }
}

/// Generator spec for the synthetic benchmark.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub classes: usize,
    pub dim: usize,
    /// Class means live on a sphere of radius `mean_scale * std`.
    pub mean_scale: f64,
    /// Isotropic within-class standard deviation.
    pub std: f64,
    pub per_class: SplitSizes,
    pub seed: Seed,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            classes: 16,
            dim: 32,
            mean_scale: 6.0,
            std: 1.0,
            per_class: SplitSizes::default(),
            seed: Seed(0),
        }
    }
}

impl SynthSpec {
    fn validate(&self) -> Result<()> {
        if self.classes < 2 || self.dim < 2 {
            return Err(Error::InvalidArgument(format!(
                "need classes >= 2 and dim >= 2, got {} / {}",
                self.classes, self.dim
            )));
        }
        if !(self.std > 0.0) {
            return Err(Error::InvalidArgument("within-class std must be > 0".into()));
        }
        Ok(())
    }

    /// The class means, a pure function of the spec's own seed.
    pub fn class_mean_matrix(&self) -> Mat {
        let mut rng = self.seed.substream("class-means").rng();
        let radius = self.mean_scale * self.std;
        let mut means = Mat::zeros(self.classes, self.dim);
        for c in 0..self.classes {
            let v: Vec<f64> = (0..self.dim).map(|_| rng.sample(StandardNormal)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
            for (j, x) in v.iter().enumerate() {
                means.set(c, j, x / norm * radius);
            }
        }
        means
    }
}

/// The four disjoint source splits.
#[derive(Debug, Clone)]
pub struct SourceData {
    pub train: LabeledSet,
    pub val: LabeledSet,
    pub holdout_fit: LabeledSet,
    pub test_clean: LabeledSet,
}

/// Draw `per_class` samples for every class, interleaved round-robin so any
/// prefix of the set is class-balanced.
fn sample_pool(spec: &SynthSpec, per_class: usize, seed: Seed, provenance: &str) -> LabeledSet {
    let means = spec.class_mean_matrix();
    let mut rng = seed.rng();
    // Draw in class-major order so the stream of random numbers is stable,
    // then interleave rows sample-major.
    let mut per_class_rows: Vec<Vec<Vec<f64>>> = Vec::with_capacity(spec.classes);
    for c in 0..spec.classes {
        let mean = means.row(c).to_vec();
        let rows: Vec<Vec<f64>> = (0..per_class)
            .map(|_| {
                mean.iter()
                    .map(|&m| m + spec.std * rng.sample::<f64, _>(StandardNormal))
                    .collect()
            })
            .collect();
        per_class_rows.push(rows);
    }
    let mut rows = Vec::with_capacity(per_class * spec.classes);
    let mut labels = Vec::with_capacity(per_class * spec.classes);
    for s in 0..per_class {
        for (c, class_rows) in per_class_rows.iter().enumerate() {
            rows.push(class_rows[s].clone());
            labels.push(c as i64);
        }
    }
    LabeledSet::new(Mat::from_rows(&rows).expect("finite draws"), labels, provenance)
        .expect("consistent shapes")
}

/// Generate train / val / holdout-fit / test-clean splits.
///
/// The splits are an index partition of one pooled draw per class, so they
/// are pairwise disjoint by construction.
pub fn gen_source(spec: &SynthSpec) -> Result<SourceData> {
    spec.validate()?;
    let sz = spec.per_class;
    let total = sz.train + sz.val + sz.holdout_fit + sz.test;
    let pool = sample_pool(spec, total, spec.seed.substream("source-pool"), "source-pool");

    // Row i of the pool belongs to sample index i / classes (round-robin layout).
    let split_of = |row: usize| {
        let s = row / spec.classes;
        if s < sz.train {
            0
        } else if s < sz.train + sz.val {
            1
        } else if s < sz.train + sz.val + sz.holdout_fit {
            2
        } else {
            3
        }
    };
    let mut idx: Vec<Vec<usize>> = vec![Vec::new(); 4];
    for r in 0..pool.len() {
        idx[split_of(r)].push(r);
    }
    Ok(SourceData {
        train: pool.select(&idx[0], "train"),
        val: pool.select(&idx[1], "val"),
        holdout_fit: pool.select(&idx[2], "holdout-fit"),
        test_clean: pool.select(&idx[3], "test-clean"),
    })
}

/// Corruption families, each graded by a 1..=5 severity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorruptionKind {
    AdditiveGaussian,
    MeanShift,
    FeatureScale,
    OodInject,
}

impl CorruptionKind {
    pub fn name(self) -> &'static str {
        match self {
            CorruptionKind::AdditiveGaussian => "gauss",
            CorruptionKind::MeanShift => "shift",
            CorruptionKind::FeatureScale => "scale",
            CorruptionKind::OodInject => "ood",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "gauss" => Ok(CorruptionKind::AdditiveGaussian),
            "shift" => Ok(CorruptionKind::MeanShift),
            "scale" => Ok(CorruptionKind::FeatureScale),
            "ood" => Ok(CorruptionKind::OodInject),
            other => Err(Error::InvalidArgument(format!("unknown corruption kind `{other}`"))),
        }
    }
}

/// A corruption with its severity level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Corruption {
    pub kind: CorruptionKind,
    pub severity: u8,
}

/// Noise std multipliers per severity (times the spec's within-class std).
const GAUSS_SIGMA: [f64; 5] = [1.4, 2.2, 3.2, 4.6, 6.5];
/// Mean-shift magnitudes per severity (times std).
const SHIFT_DELTA: [f64; 5] = [1.0, 2.0, 3.0, 4.0, 6.0];
/// Per-feature scale spreads per severity (|ln s| strictly increasing).
const SCALE_FACTOR: [f64; 5] = [1.6, 3.0, 6.0, 9.0, 14.0];
/// OOD injection fractions per severity.
const OOD_FRACTION: [f64; 5] = [0.1, 0.2, 0.3, 0.4, 0.5];

impl Corruption {
    pub fn new(kind: CorruptionKind, severity: u8) -> Result<Self> {
        if !(1..=5).contains(&severity) {
            return Err(Error::InvalidArgument(format!(
                "severity must be in 1..=5, got {severity}"
            )));
        }
        Ok(Corruption { kind, severity })
    }

    pub fn name(&self) -> String {
        format!("{}_s{}", self.kind.name(), self.severity)
    }

    /// The severity-graded parameter magnitude (σ, |δ|, |ln s|, or fraction),
    /// strictly increasing in severity within each kind.
    pub fn magnitude(&self) -> f64 {
        let i = (self.severity - 1) as usize;
        match self.kind {
            CorruptionKind::AdditiveGaussian => GAUSS_SIGMA[i],
            CorruptionKind::MeanShift => SHIFT_DELTA[i],
            CorruptionKind::FeatureScale => SCALE_FACTOR[i].ln().abs(),
            CorruptionKind::OodInject => OOD_FRACTION[i],
        }
    }
}

/// Apply a corruption to a set. Labels are preserved, except OOD injection,
/// which appends novel-cluster rows labeled `-1`.
///
/// The corruption's own parameters (shift direction, per-feature scales,
/// novel cluster means) are derived from `(spec, kind, severity)`, so the
/// same named corruption is the same distribution shift wherever it is
/// applied; the caller seed only drives per-sample noise. The spec is also
/// needed so OOD cluster means stay away from every source class mean
/// (min distance > 3x within-class std).
pub fn apply_corruption(
    set: &LabeledSet,
    c: &Corruption,
    spec: &SynthSpec,
    seed: Seed,
) -> Result<LabeledSet> {
    if !(1..=5).contains(&c.severity) {
        return Err(Error::InvalidArgument(format!("severity {} out of 1..=5", c.severity)));
    }
    let mut param_rng = spec
        .seed
        .substream("corruption-params")
        .substream(c.kind.name())
        .index(u64::from(c.severity))
        .rng();
    let mut rng = seed.rng();
    let i = (c.severity - 1) as usize;
    let name = c.name();
    match c.kind {
        CorruptionKind::AdditiveGaussian => {
            // Anisotropic noise: per-feature levels sigma * u_j with
            // u_j ~ U(0, 1). Lightly-hit features keep class structure the
            // adaptation can lean on while heavily-hit ones stay ambiguous.
            let sigma = GAUSS_SIGMA[i] * spec.std;
            let levels: Vec<f64> = (0..set.dim())
                .map(|_| {
                    let u: f64 = param_rng.random_range(0.0..1.0);
                    sigma * u * u * u
                })
                .collect();
            let mut f = set.features.clone();
            for r in 0..f.rows() {
                for (v, &lv) in f.row_mut(r).iter_mut().zip(&levels) {
                    *v += lv * rng.sample::<f64, _>(StandardNormal);
                }
            }
            LabeledSet::new(f, set.labels.clone(), name)
        }
        CorruptionKind::MeanShift => {
            let delta = SHIFT_DELTA[i] * spec.std;
            let dir: Vec<f64> = (0..set.dim()).map(|_| param_rng.sample(StandardNormal)).collect();
            let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
            let mut f = set.features.clone();
            for r in 0..f.rows() {
                let row = f.row_mut(r);
                for (v, d) in row.iter_mut().zip(&dir) {
                    *v += d / norm * delta;
                }
            }
            LabeledSet::new(f, set.labels.clone(), name)
        }
        CorruptionKind::FeatureScale => {
            // Each feature gets its own scale, log-uniform in [1/s, s]. The
            // unevenness is the point: lightly-touched features keep class
            // structure an affine re-weighting can still recover, while one
            // global scale would be undone by the first normalization layer.
            let s = SCALE_FACTOR[i];
            let scales: Vec<f64> = (0..set.dim())
                .map(|_| s.powf(param_rng.random_range(-1.0..1.0)))
                .collect();
            let mut f = set.features.clone();
            for r in 0..f.rows() {
                for (v, &sc) in f.row_mut(r).iter_mut().zip(&scales) {
                    *v *= sc;
                }
            }
            LabeledSet::new(f, set.labels.clone(), name)
        }
        CorruptionKind::OodInject => {
            let fraction = OOD_FRACTION[i];
            let n_novel = (set.len() as f64 * fraction).round() as usize;
            let means = spec.class_mean_matrix();
            let radius = spec.mean_scale * spec.std;
            let min_gap = 3.0 * spec.std;
            // A couple of novel clusters, rejection-sampled off the source means.
            let n_clusters = 2.max(n_novel / 256);
            let mut novel_means: Vec<Vec<f64>> = Vec::new();
            while novel_means.len() < n_clusters {
                let v: Vec<f64> = (0..spec.dim).map(|_| param_rng.sample(StandardNormal)).collect();
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
                let cand: Vec<f64> = v.iter().map(|x| x / norm * radius).collect();
                let ok = (0..means.rows())
                    .all(|c| Mat::dist2(&cand, means.row(c)).sqrt() > min_gap);
                if ok {
                    novel_means.push(cand);
                }
            }
            let novel_rows: Vec<Vec<f64>> = (0..n_novel)
                .map(|k| {
                    novel_means[k % novel_means.len()]
                        .iter()
                        .map(|&m| m + spec.std * rng.sample::<f64, _>(StandardNormal))
                        .collect()
                })
                .collect();
            // Interleave the appended rows evenly so any prefix of the set
            // (in particular the flip-tracked head) carries its share.
            let total = set.len() + n_novel;
            let mut rows = Vec::with_capacity(total);
            let mut labels = Vec::with_capacity(total);
            let (mut orig, mut novel) = (0usize, 0usize);
            for pos in 0..total {
                let want_novel = (pos + 1) * n_novel / total;
                if novel < want_novel {
                    rows.push(novel_rows[novel].clone());
                    labels.push(-1);
                    novel += 1;
                } else {
                    rows.push(set.features.row(orig).to_vec());
                    labels.push(set.labels[orig]);
                    orig += 1;
                }
            }
            LabeledSet::new(Mat::from_rows(&rows)?, labels, name)
        }
    }
}

/// Build the shift suite: every (kind, severity) corruption applied to one
/// fresh test pool.
pub fn make_shift_suite(
    spec: &SynthSpec,
    kinds: &[CorruptionKind],
    severities: &[u8],
    seed: Seed,
) -> Result<Vec<(String, LabeledSet)>> {
    if kinds.is_empty() || severities.is_empty() {
        return Err(Error::InvalidArgument("suite needs at least one kind and severity".into()));
    }
    let pool = sample_pool(
        spec,
        spec.per_class.test,
        seed.substream("suite-pool"),
        "suite-pool",
    );
    let mut out = Vec::with_capacity(kinds.len() * severities.len());
    let mut cell = 0u64;
    for &kind in kinds {
        for &sev in severities {
            let c = Corruption::new(kind, sev)?;
            let set = apply_corruption(&pool, &c, spec, seed.substream("suite-corrupt").index(cell))?;
            out.push((c.name(), set));
            cell += 1;
        }
    }
    Ok(out)
}

pub const DEFAULT_SUITE_KINDS: [CorruptionKind; 4] = [
    CorruptionKind::AdditiveGaussian,
    CorruptionKind::MeanShift,
    CorruptionKind::FeatureScale,
    CorruptionKind::OodInject,
];

pub const DEFAULT_SUITE_SEVERITIES: [u8; 5] = [1, 2, 3, 4, 5];

// ── CSV ────────────────────────────────────────────────────────────

/// Write a set as `id,label,f0..f{d-1}`, one row per sample.
pub fn write_set_csv(set: &LabeledSet, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str("id,label");
    for j in 0..set.dim() {
        out.push_str(&format!(",f{j}"));
    }
    out.push('\n');
    for (i, row) in set.features.iter_rows().enumerate() {
        out.push_str(&format!("{i},{}", set.labels[i]));
        for v in row {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Read a set written by [`write_set_csv`]. Provenance is the file stem.
pub fn read_set_csv(path: &Path) -> Result<LabeledSet> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let pathstr = path.display().to_string();
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::parse(&pathstr, "empty file"))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 3 || cols[0] != "id" || cols[1] != "label" {
        return Err(Error::parse(&pathstr, "header must start with id,label,f0..."));
    }
    for (j, c) in cols[2..].iter().enumerate() {
        if *c != format!("f{j}") {
            return Err(Error::parse(&pathstr, format!("expected column f{j}, found {c}")));
        }
    }
    let dim = cols.len() - 2;
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols.len() {
            return Err(Error::parse(
                &pathstr,
                format!("row {}: {} fields, expected {}", lineno + 2, fields.len(), cols.len()),
            ));
        }
        let label: i64 = fields[1]
            .parse()
            .map_err(|_| Error::parse(&pathstr, format!("row {}: bad label", lineno + 2)))?;
        let mut row = Vec::with_capacity(dim);
        for f in &fields[2..] {
            let v: f64 = f
                .parse()
                .map_err(|_| Error::parse(&pathstr, format!("row {}: bad value `{f}`", lineno + 2)))?;
            row.push(v);
        }
        rows.push(row);
        labels.push(label);
    }
    let stem = path.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned());
    LabeledSet::new(Mat::from_rows(&rows)?, labels, stem)
}
