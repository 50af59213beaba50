//! Tensor storage, seeded randomness, dropout masks, similarity and rank
//! correlation primitives, and finite-difference gradient checking.

mod dropout;
mod gradcheck;
mod rank;
mod rng;
mod similarity;
mod tensor;

pub use dropout::{sample_dropout_mask, DropoutMask, DropoutSpec};
pub use gradcheck::{central_difference, grad_check, GradCheckReport, DEFAULT_EPS, GRAD_TOLERANCE};
pub use rank::{average_ranks, pearson, spearman_rho};
pub use rng::RngStream;
pub use similarity::{cosine_similarity, dot, l2_norm};
pub use tensor::Tensor;
