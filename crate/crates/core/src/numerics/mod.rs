//! Dense tensors, matrices and the spectral kernels built on them.
//!
//! Everything is computed in `f64`. `f32` only appears as an on-disk storage
//! format for model weights.

mod matrix;
mod svd;
mod tensor;

pub use matrix::{gemm, Matrix};
pub use svd::{frobenius_norm, l1_operator_norm, svd, top_singular_value, Svd};
pub use tensor::Tensor;
