//! Equivariant self-contrastive learning of sentence embeddings.
//!
//! A compact encoder (token embeddings, inverted dropout, mean pooling and a
//! tanh projection) is trained with three dropout views per sentence: two
//! low-rate views form the positive pair for InfoNCE and one high-rate view
//! feeds the relative-difference term. Embeddings are scored on STS-style
//! pair files with Spearman's rank correlation.
//!
//! Data-parallel loops (per-sentence encoding, seed sweeps, ablation cells)
//! run on rayon when the `parallel` feature is enabled and fall back to plain
//! iteration otherwise; results are bit-identical either way.

pub mod checkpoint;
pub mod encoder;
pub mod error;
pub mod evaluation;
pub mod gradsuite;
pub mod losses;
pub mod numerics;
pub mod parallel;
pub mod training;

pub use error::{EsclError, Result};
