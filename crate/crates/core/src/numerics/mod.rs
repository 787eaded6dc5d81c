//! Dense matrices, seeded random streams, samplers and the ridge solver.

mod linalg;
mod matrix;
mod rng;

pub use linalg::{ridge_solve, sigmoid, softplus};
pub use matrix::{euclidean, squared_euclidean, Matrix};
pub use rng::{derive_seed, sample_gaussian, sample_student_t, sample_uniform, streams, Rng};
