//! Label-noise-robust training with a bootstrapping loss under Mixup, plus
//! the uncertainty and calibration evaluation around it.
//!
//! The pipeline, bottom up:
//!
//! - [`metrics`]: entropy, ECE with reliability bins, binary NLL, Brier
//!   score, ROC-AUC and accuracy over a [`PredictionBatch`].
//! - [`noise_model`]: a two-component Beta mixture fitted by EM to
//!   normalized per-sample losses; its high-loss posterior is the
//!   per-sample bootstrap weight.
//! - [`losses`]: cross-entropy, hard bootstrapping, Mixup cross-entropy and
//!   the fused bootstrapping-with-Mixup loss, each with its logit gradient.
//! - [`augment`]: Mixup pairs and a feature-space perturbation policy.
//! - [`model`] and [`trainer`]: a small ReLU MLP with dropout, trained by
//!   manual backprop and Adam under any of the four method regimes.
//! - [`estimators`]: single pass, deep ensemble, MC dropout and test-time
//!   perturbation predictors.
//! - [`analysis`]: referral and threshold curves, min cosine distance to the
//!   training features, Spearman correlation.
//! - [`experiment`]: config-driven runs and sweeps that write reproducible
//!   reports.
//!
//! Everything is `f64` and deterministic under a seed.

pub mod analysis;
pub mod augment;
pub mod data;
pub mod error;
pub mod estimators;
pub mod experiment;
pub mod losses;
pub mod matrix;
pub mod metrics;
pub mod model;
pub mod noise_model;
pub mod rng;
pub mod trainer;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use metrics::PredictionBatch;
