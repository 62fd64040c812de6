//! Desk-scale laboratory for entropy-minimization test-time adaptation.
//!
//! The crate builds a small, fully deterministic pipeline around a batch-norm
//! classifier adapted on unlabeled, synthetically shifted data:
//!
//! - [`mat`], [`rng`], [`stats`] — dense `f64` matrices, seeded substreams,
//!   and a finite-difference gradient oracle.
//! - [`nnet`] — a feedforward classifier with batch normalization,
//!   hand-derived gradients, SGD, and snapshot/restore.
//! - [`datagen`] — synthetic source/shift benchmarks with severity-graded
//!   corruptions and OOD injection.
//! - [`tta`] — Tent and RDumb adaptation loops with flip tracking and
//!   per-interval traces.
//! - [`diagnostics`] — k-means, Silhouette score, Hungarian matching, Shift
//!   distance, exclusion-set builders, and phase decomposition.
//! - [`estimators`] — unlabeled accuracy estimation: AC, DoC, ATC, COT, and
//!   Weighted Flips with polynomial calibration.
//! - [`emgmm`] — an EM-on-Gaussian-mixture toy where the samples themselves
//!   are trainable.
//! - [`harness`] — configuration, experiment pipelines, CSV/SVG artifacts,
//!   and the `entropy-lab` CLI.
//!
//! Examples under `examples/` run each capability end to end; the thin
//! `entropy-lab` binary drives the same pipelines from config files.

pub mod datagen;
pub mod diagnostics;
pub mod emgmm;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod mat;
pub mod nnet;
pub mod rng;
pub mod stats;
pub mod tta;

pub use error::{Error, Result};
pub use mat::Mat;
pub use rng::Seed;
