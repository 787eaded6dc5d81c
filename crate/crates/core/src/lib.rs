//! Piecewise-continuous neural networks.
//!
//! A PCNN combines `N` independent feedforward *subpatterns* with a deep
//! classifier whose thresholded sigmoid outputs carve the input space into
//! *deep zero-sets*; a discontinuous routing unit sends each input to the
//! subpattern(s) owning it. Training is decoupled: the data is partitioned
//! ([`partition`]), one network is fit per part, every sample is relabelled
//! with the subpattern that predicts it best, and the classifier is fit to
//! those labels ([`pcnn`]). No gradient ever passes through the routing unit.
//!
//! - [`numerics`]: matrices, seeded streams, samplers, ridge solver
//! - [`ffnn`]: networks, Adam and random-feature training, gradient checks
//! - [`partition`]: randomized ball-growing partitions
//! - [`geometry`]: Hausdorff and sup-norm distances between representations
//! - [`pcnn`]: the model, its routing and its trainer
//! - [`datagen`]: datasets, synthetic targets, CSV
//! - [`bench`]: baselines, metrics, timing and ablation sweeps

// `!(x > 0.0)` checks reject NaN along with non-positive values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod cli;
pub mod datagen;
pub mod error;
pub mod ffnn;
pub mod geometry;
pub mod numerics;
pub mod partition;
pub mod pcnn;

pub use error::{PcnnError, Result};
