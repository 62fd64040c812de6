//! Embedding-space analysis: k-means, Silhouette score, Shift distance,
//! exclusion-set builders, and phase decomposition of adaptation traces.

mod assignment;

pub use assignment::{brute_force_assignment, hungarian};

use rand::Rng;

use crate::datagen::LabeledSet;
use crate::error::{Error, Result};
use crate::mat::{row_entropy, softmax_rows, Mat};
use crate::nnet::{BnMode, Classifier};
use crate::rng::Seed;

/// k-means result. `inertia_history` records the objective after every
/// Lloyd assignment step; it is non-increasing.
#[derive(Debug, Clone)]
pub struct Clustering {
    pub k: usize,
    pub centroids: Mat,
    pub assignment: Vec<usize>,
    pub inertia: f64,
    pub inertia_history: Vec<f64>,
}

/// Greedy k-means++ seeding: candidate data points drawn with probability
/// proportional to squared distance from the chosen centers; each step keeps
/// the candidate that shrinks the potential the most.
pub fn kmeanspp_init(points: &Mat, k: usize, seed: Seed) -> Result<Mat> {
    let n = points.rows();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("k = {k} with {n} points")));
    }
    let mut rng = seed.rng();
    let n_candidates = 2 + (k as f64).ln().floor() as usize;
    let mut centroids = Mat::zeros(k, points.cols());
    let first = rng.random_range(0..n);
    centroids.row_mut(0).copy_from_slice(points.row(first));
    let mut d2: Vec<f64> =
        (0..n).map(|i| Mat::dist2(points.row(i), centroids.row(0))).collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let draw = |rng: &mut rand_chacha::ChaCha8Rng, d2: &[f64]| -> usize {
            if total <= 0.0 {
                return rng.random_range(0..n);
            }
            let mut target = rng.random_range(0.0..total);
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    return i;
                }
                target -= w;
            }
            n - 1
        };
        let mut best_idx = draw(&mut rng, &d2);
        let mut best_d2 = updated_potential(points, &d2, best_idx);
        let mut best_total: f64 = best_d2.iter().sum();
        for _ in 1..n_candidates {
            let idx = draw(&mut rng, &d2);
            let cand = updated_potential(points, &d2, idx);
            let cand_total: f64 = cand.iter().sum();
            if cand_total < best_total {
                best_idx = idx;
                best_d2 = cand;
                best_total = cand_total;
            }
        }
        centroids.row_mut(c).copy_from_slice(points.row(best_idx));
        d2 = best_d2;
    }
    Ok(centroids)
}

fn updated_potential(points: &Mat, d2: &[f64], new_center: usize) -> Vec<f64> {
    let center = points.row(new_center);
    d2.iter()
        .enumerate()
        .map(|(i, &v)| v.min(Mat::dist2(points.row(i), center)))
        .collect()
}

/// Lloyd iterations from k-means++ seeding.
///
/// Deterministic per seed; empty clusters are re-seeded to the point
/// farthest from its current centroid.
pub fn kmeans(points: &Mat, k: usize, seed: Seed, max_iter: usize, tol: f64) -> Result<Clustering> {
    let n = points.rows();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("k = {k} with {n} points")));
    }
    let d = points.cols();
    let mut centroids = kmeanspp_init(points, k, seed)?;
    let mut assignment = vec![0usize; n];
    let mut inertia_history = Vec::new();
    let mut prev_inertia = f64::INFINITY;
    for _ in 0..max_iter {
        // Assignment step.
        let mut inertia = 0.0;
        for i in 0..n {
            let row = points.row(i);
            let mut best = 0;
            let mut best_d = Mat::dist2(row, centroids.row(0));
            for c in 1..k {
                let dist = Mat::dist2(row, centroids.row(c));
                if dist < best_d {
                    best_d = dist;
                    best = c;
                }
            }
            assignment[i] = best;
            inertia += best_d;
        }
        // Re-seed empty clusters to the farthest point.
        let mut counts = vec![0usize; k];
        for &a in &assignment {
            counts[a] += 1;
        }
        for c in 0..k {
            if counts[c] == 0 {
                let far = (0..n)
                    .max_by(|&a, &b| {
                        let da = Mat::dist2(points.row(a), centroids.row(assignment[a]));
                        let db = Mat::dist2(points.row(b), centroids.row(assignment[b]));
                        da.partial_cmp(&db).unwrap()
                    })
                    .expect("n > 0");
                let old = assignment[far];
                counts[old] -= 1;
                counts[c] += 1;
                assignment[far] = c;
                centroids.row_mut(c).copy_from_slice(points.row(far));
                // moving a centroid onto a data point cannot grow the objective
                inertia = (0..n)
                    .map(|i| Mat::dist2(points.row(i), centroids.row(assignment[i])))
                    .sum();
            }
        }
        inertia_history.push(inertia);
        // Update step.
        let mut sums = Mat::zeros(k, d);
        for (i, &a) in assignment.iter().enumerate() {
            let row = points.row(i);
            let s = sums.row_mut(a);
            for (sv, &pv) in s.iter_mut().zip(row) {
                *sv += pv;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                let inv = 1.0 / counts[c] as f64;
                for v in sums.row_mut(c) {
                    *v *= inv;
                }
                centroids.row_mut(c).copy_from_slice(sums.row(c));
            }
        }
        if prev_inertia - inertia < tol {
            break;
        }
        prev_inertia = inertia;
    }
    // Final assignment against the last centroid update.
    let mut inertia = 0.0;
    for i in 0..n {
        let row = points.row(i);
        let mut best = 0;
        let mut best_d = Mat::dist2(row, centroids.row(0));
        for c in 1..k {
            let dist = Mat::dist2(row, centroids.row(c));
            if dist < best_d {
                best_d = dist;
                best = c;
            }
        }
        assignment[i] = best;
        inertia += best_d;
    }
    inertia_history.push(inertia);
    Ok(Clustering { k, centroids, assignment, inertia, inertia_history })
}

/// Mean Silhouette score over all points, Euclidean metric. Singleton
/// clusters contribute 0 for their point.
pub fn silhouette(points: &Mat, assignment: &[usize]) -> Result<f64> {
    let n = points.rows();
    if assignment.len() != n {
        return Err(Error::DimMismatch(format!("{} assignments for {n} points", assignment.len())));
    }
    let k = assignment.iter().copied().max().map_or(0, |m| m + 1);
    let mut counts = vec![0usize; k];
    for &a in assignment {
        counts[a] += 1;
    }
    if counts.iter().filter(|&&c| c > 0).count() < 2 {
        return Err(Error::UndefinedScore(
            "silhouette needs at least two non-empty clusters".into(),
        ));
    }
    let mut total = 0.0;
    let mut sums = vec![0.0; k];
    for i in 0..n {
        sums.iter_mut().for_each(|s| *s = 0.0);
        let ri = points.row(i);
        for j in 0..n {
            if j != i {
                sums[assignment[j]] += Mat::dist2(ri, points.row(j)).sqrt();
            }
        }
        let own = assignment[i];
        let s_i = if counts[own] <= 1 {
            0.0
        } else {
            let a = sums[own] / (counts[own] - 1) as f64;
            let b = (0..k)
                .filter(|&c| c != own && counts[c] > 0)
                .map(|c| sums[c] / counts[c] as f64)
                .fold(f64::INFINITY, f64::min);
            if a.max(b) == 0.0 {
                0.0
            } else {
                (b - a) / a.max(b)
            }
        };
        total += s_i;
    }
    Ok(total / n as f64)
}

/// Per-class coordinate-wise means. Rows labeled `-1` are skipped; every
/// class `0..=max_label` must have at least one sample.
pub fn class_means(embeddings: &Mat, labels: &[i64]) -> Result<Mat> {
    if labels.len() != embeddings.rows() {
        return Err(Error::DimMismatch(format!(
            "{} labels for {} rows",
            labels.len(),
            embeddings.rows()
        )));
    }
    let classes = labels.iter().copied().max().filter(|&m| m >= 0).map_or(0, |m| m as usize + 1);
    if classes == 0 {
        return Err(Error::InvalidArgument("no labeled rows".into()));
    }
    let mut sums = Mat::zeros(classes, embeddings.cols());
    let mut counts = vec![0usize; classes];
    for (row, &label) in embeddings.iter_rows().zip(labels) {
        if label < 0 {
            continue;
        }
        let c = label as usize;
        counts[c] += 1;
        for (s, &v) in sums.row_mut(c).iter_mut().zip(row) {
            *s += v;
        }
    }
    if let Some(missing) = counts.iter().position(|&c| c == 0) {
        return Err(Error::InvalidArgument(format!("class {missing} has no samples")));
    }
    for c in 0..classes {
        let inv = 1.0 / counts[c] as f64;
        for v in sums.row_mut(c) {
            *v *= inv;
        }
    }
    Ok(sums)
}

/// Mean Euclidean distance between class means and centroids under the
/// optimal bijection, plus the matching itself (class -> centroid).
pub fn shift_distance(class_means: &Mat, centroids: &Mat) -> Result<(f64, Vec<usize>)> {
    if class_means.rows() != centroids.rows() || class_means.cols() != centroids.cols() {
        return Err(Error::DimMismatch(format!(
            "{}x{} class means vs {}x{} centroids",
            class_means.rows(),
            class_means.cols(),
            centroids.rows(),
            centroids.cols()
        )));
    }
    let k = class_means.rows();
    let mut cost = Mat::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            cost.set(i, j, Mat::dist2(class_means.row(i), centroids.row(j)).sqrt());
        }
    }
    let (assignment, total) = hungarian(&cost)?;
    let matching: Vec<usize> = assignment.into_iter().map(|a| a.expect("square")).collect();
    Ok((total / k as f64, matching))
}

/// Drop samples whose true label lies within the pretrained model's top-k
/// predictions (frozen statistics). `k = 0` drops nothing.
pub fn topk_exclusion(set: &LabeledSet, net: &Classifier, k: usize) -> Result<LabeledSet> {
    if k == 0 {
        return Ok(set.clone());
    }
    let logits = net.logits(&set.features, BnMode::FrozenStats)?;
    let keep: Vec<usize> = (0..set.len())
        .filter(|&i| {
            let label = set.labels[i];
            if label < 0 {
                return true; // no logit corresponds to an OOD label
            }
            let row = logits.row(i);
            let own = row[label as usize];
            let better = row.iter().filter(|&&v| v > own).count();
            better >= k // label outside top-k: keep
        })
        .collect();
    Ok(set.select(&keep, format!("{}-topk{}", set.provenance, k)))
}

/// Drop samples whose initial prediction entropy is at most `threshold`
/// (frozen statistics). A non-positive threshold drops nothing.
pub fn entropy_exclusion(set: &LabeledSet, net: &Classifier, threshold: f64) -> Result<LabeledSet> {
    if threshold <= 0.0 {
        return Ok(set.clone());
    }
    let probs = softmax_rows(&net.logits(&set.features, BnMode::FrozenStats)?);
    let keep: Vec<usize> =
        (0..set.len()).filter(|&i| row_entropy(probs.row(i)) > threshold).collect();
    Ok(set.select(&keep, format!("{}-ent{threshold}", set.provenance)))
}

/// Project rows onto their top-2 principal components (deterministic power
/// iteration, no randomness). Stand-in for t-SNE when plotting embeddings.
pub fn pca2(points: &Mat) -> Mat {
    let (n, d) = (points.rows(), points.cols());
    let mut centered = points.clone();
    let mut mean = vec![0.0; d];
    for row in points.iter_rows() {
        for (m, &v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n.max(1) as f64;
    }
    for r in 0..n {
        for (v, &m) in centered.row_mut(r).iter_mut().zip(&mean) {
            *v -= m;
        }
    }
    // covariance (unnormalized) once, then iterate on d x d
    let mut cov = vec![0.0; d * d];
    for row in centered.iter_rows() {
        for i in 0..d {
            let ri = row[i];
            if ri != 0.0 {
                let dst = &mut cov[i * d..(i + 1) * d];
                for (c, &rj) in dst.iter_mut().zip(row) {
                    *c += ri * rj;
                }
            }
        }
    }
    let orthonormalize = |mut v: Vec<f64>, ortho: Option<&[f64]>| -> Option<Vec<f64>> {
        let before = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if let Some(o) = ortho {
            let dot: f64 = v.iter().zip(o).map(|(a, b)| a * b).sum();
            for (x, &ov) in v.iter_mut().zip(o) {
                *x -= dot * ov;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        // a residual this small is orthogonalization round-off, not signal
        if norm <= 1e-10 * before {
            return None;
        }
        for x in &mut v {
            *x /= norm;
        }
        Some(v)
    };
    let power = |cov: &[f64], ortho: Option<&[f64]>| -> Vec<f64> {
        // deterministic start: the ones vector, else a coordinate axis
        let mut v = orthonormalize(vec![1.0; d], ortho)
            .or_else(|| {
                (0..d).find_map(|j| {
                    let mut e = vec![0.0; d];
                    e[j] = 1.0;
                    orthonormalize(e, ortho)
                })
            })
            .expect("d >= 2");
        for _ in 0..300 {
            let mut next = vec![0.0; d];
            for i in 0..d {
                next[i] = cov[i * d..(i + 1) * d].iter().zip(&v).map(|(a, b)| a * b).sum();
            }
            // a vanishing image means no variance is left in this subspace;
            // the current (already orthonormal) direction is as good as any
            let Some(next) = orthonormalize(next, ortho) else { break };
            let drift = v.iter().zip(&next).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            v = next;
            if drift < 1e-13 {
                break;
            }
        }
        v
    };
    let v1 = power(&cov, None);
    let v2 = power(&cov, Some(&v1));
    let mut out = Mat::zeros(n, 2);
    for r in 0..n {
        let row = centered.row(r);
        out.set(r, 0, row.iter().zip(&v1).map(|(a, b)| a * b).sum());
        out.set(r, 1, row.iter().zip(&v2).map(|(a, b)| a * b).sum());
    }
    out
}

/// Per-interval measurements entering phase decomposition.
#[derive(Debug, Clone, Copy)]
pub struct PhasePoint {
    pub iter: u64,
    pub accuracy: f64,
    pub silhouette: Option<f64>,
    pub shift_distance: Option<f64>,
}

/// End-minus-start metric deltas within one phase.
#[derive(Debug, Clone, Copy)]
pub struct PhaseDeltas {
    pub accuracy: f64,
    pub silhouette: Option<f64>,
    pub shift_distance: Option<f64>,
}

/// Phase decomposition of one adaptation trace: phase 1 is `[0, peak_iter]`,
/// phase 2 is `(peak_iter, end]` and is absent when accuracy peaks at the
/// final record.
#[derive(Debug, Clone)]
pub struct PhaseReport {
    pub peak_iter: u64,
    pub phase1: PhaseDeltas,
    pub phase2: Option<PhaseDeltas>,
}

/// Split a trace at its (earliest) accuracy peak and report per-phase deltas.
pub fn phase_report(points: &[PhasePoint]) -> Result<PhaseReport> {
    if points.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "phase report needs >= 3 records, got {}",
            points.len()
        )));
    }
    let mut peak = 0;
    for (i, p) in points.iter().enumerate() {
        if p.accuracy > points[peak].accuracy {
            peak = i;
        }
    }
    let delta = |a: &PhasePoint, b: &PhasePoint| PhaseDeltas {
        accuracy: b.accuracy - a.accuracy,
        silhouette: match (a.silhouette, b.silhouette) {
            (Some(x), Some(y)) => Some(y - x),
            _ => None,
        },
        shift_distance: match (a.shift_distance, b.shift_distance) {
            (Some(x), Some(y)) => Some(y - x),
            _ => None,
        },
    };
    let phase1 = delta(&points[0], &points[peak]);
    let phase2 =
        if peak + 1 < points.len() { Some(delta(&points[peak], &points[points.len() - 1])) } else { None };
    Ok(PhaseReport { peak_iter: points[peak].iter, phase1, phase2 })
}
