//! EM on a Gaussian mixture with trainable sample locations.
//!
//! The toy that mirrors adaptation dynamics: identity covariance, equal
//! mixture weights, and after every E/M round the input samples themselves
//! take one gradient step toward their responsibility-weighted centroids.
//! With step size 0 the loop reduces to regular EM, whose data
//! log-likelihood is non-decreasing.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::diagnostics::kmeanspp_init;
use crate::error::{Error, Result};
use crate::mat::Mat;
use crate::rng::Seed;

/// Centroid initialization arm.
#[derive(Debug, Clone, PartialEq)]
pub enum ToyInit {
    /// Centers picked from the data (k-means++ sampling).
    Smart,
    /// Smart centers translated by an offset vector.
    Shifted { offset: Vec<f64> },
    /// Shifted centers with the samples held fixed (regular EM reference).
    EmOnly { offset: Vec<f64> },
}

/// Toy configuration.
#[derive(Debug, Clone)]
pub struct GmmToyConfig {
    pub k: usize,
    pub points: Mat,
    /// True cluster labels, used only for the agreement score.
    pub labels: Vec<i64>,
    pub init: ToyInit,
    /// Point step size; ignored (treated as 0) for `ToyInit::EmOnly`.
    pub eta: f64,
    pub iterations: usize,
    pub seed: Seed,
}

/// Per-iteration log of the toy run. Index 0 is the initial state.
#[derive(Debug, Clone)]
pub struct ToyTrajectory {
    pub centroids: Vec<Mat>,
    pub points: Vec<Mat>,
    pub responsibilities: Vec<Mat>,
    /// Data log-likelihood of the recorded (points, centroids) state.
    pub log_likelihood: Vec<f64>,
    /// Adjusted Rand index of the hard assignment against true labels.
    pub agreement: Vec<f64>,
}

impl ToyTrajectory {
    pub fn final_agreement(&self) -> f64 {
        *self.agreement.last().expect("non-empty trajectory")
    }
}

/// E-step: r_ik proportional to exp(-0.5 ||x_i - mu_k||^2), rows normalized
/// (identity covariance, equal mixture weights).
pub fn responsibilities(points: &Mat, centroids: &Mat) -> Mat {
    let (n, k) = (points.rows(), centroids.rows());
    let mut resp = Mat::zeros(n, k);
    for i in 0..n {
        let x = points.row(i);
        let row = resp.row_mut(i);
        let mut max = f64::NEG_INFINITY;
        for (c, r) in row.iter_mut().enumerate() {
            *r = -0.5 * Mat::dist2(x, centroids.row(c));
            max = max.max(*r);
        }
        let mut sum = 0.0;
        for r in row.iter_mut() {
            *r = (*r - max).exp();
            sum += *r;
        }
        for r in row.iter_mut() {
            *r /= sum;
        }
    }
    resp
}

/// M-step for the means: responsibility-weighted averages. A cluster with
/// (numerically) zero total responsibility is re-seeded to the point
/// farthest from the surviving centroids.
pub fn mstep_centroids(points: &Mat, resp: &Mat) -> Result<Mat> {
    let (n, k, d) = (points.rows(), resp.cols(), points.cols());
    if resp.rows() != n {
        return Err(Error::DimMismatch(format!("{} resp rows for {n} points", resp.rows())));
    }
    let mut centroids = Mat::zeros(k, d);
    let mut mass = vec![0.0; k];
    for i in 0..n {
        let x = points.row(i);
        let r = resp.row(i);
        for c in 0..k {
            mass[c] += r[c];
            let dst = centroids.row_mut(c);
            for (m, &v) in dst.iter_mut().zip(x) {
                *m += r[c] * v;
            }
        }
    }
    let mut starved = Vec::new();
    for c in 0..k {
        if mass[c] > 1e-12 {
            let inv = 1.0 / mass[c];
            for v in centroids.row_mut(c) {
                *v *= inv;
            }
        } else {
            starved.push(c);
        }
    }
    for c in starved {
        eprintln!("warning: cluster {c} starved; re-seeding to the farthest point");
        let far = (0..n)
            .max_by(|&a, &b| {
                let near = |i: usize| {
                    (0..k)
                        .filter(|&cc| mass[cc] > 1e-12)
                        .map(|cc| Mat::dist2(points.row(i), centroids.row(cc)))
                        .fold(f64::INFINITY, f64::min)
                };
                near(a).partial_cmp(&near(b)).unwrap()
            })
            .ok_or_else(|| Error::InvalidArgument("no points".into()))?;
        centroids.row_mut(c).copy_from_slice(points.row(far));
    }
    Ok(centroids)
}

/// Trainable-sample update: one gradient-ascent step on each point's
/// log-likelihood, x' = x + eta * sum_k r_ik (mu_k - x).
pub fn point_update(points: &Mat, resp: &Mat, centroids: &Mat, eta: f64) -> Mat {
    if eta == 0.0 {
        return points.clone();
    }
    let (n, k, d) = (points.rows(), centroids.rows(), points.cols());
    let mut out = points.clone();
    for i in 0..n {
        let r = resp.row(i);
        let x = points.row(i);
        let mut pull = vec![0.0; d];
        for c in 0..k {
            let mu = centroids.row(c);
            for (p, (&m, &xv)) in pull.iter_mut().zip(mu.iter().zip(x)) {
                *p += r[c] * (m - xv);
            }
        }
        for (o, p) in out.row_mut(i).iter_mut().zip(&pull) {
            *o += eta * p;
        }
    }
    out
}

/// Data log-likelihood under the identity-covariance, equal-weight mixture.
pub fn log_likelihood(points: &Mat, centroids: &Mat) -> f64 {
    let k = centroids.rows();
    let d = points.cols() as f64;
    let const_term = -(k as f64).ln() - 0.5 * d * (2.0 * std::f64::consts::PI).ln();
    points
        .iter_rows()
        .map(|x| {
            let logs: Vec<f64> =
                (0..k).map(|c| -0.5 * Mat::dist2(x, centroids.row(c))).collect();
            let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = logs.iter().map(|&l| (l - max).exp()).sum();
            max + sum.ln() + const_term
        })
        .sum()
}

/// Adjusted Rand index between a hard assignment and true labels.
pub fn adjusted_rand_index(assignment: &[usize], labels: &[i64]) -> f64 {
    assert_eq!(assignment.len(), labels.len());
    let n = assignment.len();
    if n < 2 {
        return 1.0;
    }
    let ka = assignment.iter().copied().max().unwrap_or(0) + 1;
    let mut classes: Vec<i64> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let class_of = |l: i64| classes.binary_search(&l).expect("present");
    let kb = classes.len();
    let mut table = vec![0u64; ka * kb];
    for (&a, &l) in assignment.iter().zip(labels) {
        table[a * kb + class_of(l)] += 1;
    }
    let choose2 = |x: u64| (x * x.saturating_sub(1)) as f64 / 2.0;
    let index: f64 = table.iter().map(|&v| choose2(v)).sum();
    let rows: f64 = (0..ka)
        .map(|i| choose2((0..kb).map(|j| table[i * kb + j]).sum()))
        .sum();
    let cols: f64 = (0..kb)
        .map(|j| choose2((0..ka).map(|i| table[i * kb + j]).sum()))
        .sum();
    let total = choose2(n as u64);
    let expected = rows * cols / total;
    let max = 0.5 * (rows + cols);
    if (max - expected).abs() < 1e-12 {
        if (index - max).abs() < 1e-12 {
            1.0
        } else {
            0.0
        }
    } else {
        (index - expected) / (max - expected)
    }
}

/// Run the toy: E-step, centroid M-step, and point update, for `iterations`
/// rounds, recording the full trajectory.
pub fn run_toy(cfg: &GmmToyConfig) -> Result<ToyTrajectory> {
    if cfg.k < 2 {
        return Err(Error::InvalidArgument("k must be >= 2".into()));
    }
    if !(cfg.eta >= 0.0) {
        return Err(Error::InvalidArgument("eta must be >= 0".into()));
    }
    if cfg.labels.len() != cfg.points.rows() {
        return Err(Error::DimMismatch(format!(
            "{} labels for {} points",
            cfg.labels.len(),
            cfg.points.rows()
        )));
    }
    let mut centroids = kmeanspp_init(&cfg.points, cfg.k, cfg.seed.substream("toy-init"))?;
    let eta = match &cfg.init {
        ToyInit::Smart => cfg.eta,
        ToyInit::Shifted { offset } => {
            add_offset(&mut centroids, offset)?;
            cfg.eta
        }
        ToyInit::EmOnly { offset } => {
            add_offset(&mut centroids, offset)?;
            0.0
        }
    };

    let mut points = cfg.points.clone();
    let mut traj = ToyTrajectory {
        centroids: Vec::with_capacity(cfg.iterations + 1),
        points: Vec::with_capacity(cfg.iterations + 1),
        responsibilities: Vec::with_capacity(cfg.iterations + 1),
        log_likelihood: Vec::with_capacity(cfg.iterations + 1),
        agreement: Vec::with_capacity(cfg.iterations + 1),
    };
    let mut record = |points: &Mat, centroids: &Mat, traj: &mut ToyTrajectory| {
        let resp = responsibilities(points, centroids);
        let hard: Vec<usize> = resp.iter_rows().map(crate::mat::argmax).collect();
        traj.agreement.push(adjusted_rand_index(&hard, &cfg.labels));
        traj.log_likelihood.push(log_likelihood(points, centroids));
        traj.centroids.push(centroids.clone());
        traj.points.push(points.clone());
        traj.responsibilities.push(resp);
    };
    record(&points, &centroids, &mut traj);
    for _ in 0..cfg.iterations {
        let resp = traj.responsibilities.last().expect("recorded");
        let new_centroids = mstep_centroids(&points, resp)?;
        let new_points = point_update(&points, resp, &new_centroids, eta);
        centroids = new_centroids;
        points = new_points;
        record(&points, &centroids, &mut traj);
    }
    Ok(traj)
}

fn add_offset(centroids: &mut Mat, offset: &[f64]) -> Result<()> {
    if offset.len() != centroids.cols() {
        return Err(Error::DimMismatch(format!(
            "offset has {} components for {}-dim centroids",
            offset.len(),
            centroids.cols()
        )));
    }
    for r in 0..centroids.rows() {
        for (v, &o) in centroids.row_mut(r).iter_mut().zip(offset) {
            *v += o;
        }
    }
    Ok(())
}

/// 2-D Gaussian blobs on a circle: the toy's input data.
pub fn toy_blobs(k: usize, per_cluster: usize, radius: f64, std: f64, seed: Seed) -> (Mat, Vec<i64>) {
    let mut rng = seed.rng();
    let mut rows = Vec::with_capacity(k * per_cluster);
    let mut labels = Vec::with_capacity(k * per_cluster);
    for c in 0..k {
        let angle = 2.0 * std::f64::consts::PI * c as f64 / k as f64;
        let (cx, cy) = (radius * angle.cos(), radius * angle.sin());
        for _ in 0..per_cluster {
            rows.push(vec![
                cx + std * rng.sample::<f64, _>(StandardNormal),
                cy + std * rng.sample::<f64, _>(StandardNormal),
            ]);
            labels.push(c as i64);
        }
    }
    (Mat::from_rows(&rows).expect("finite"), labels)
}
