//! Structure-preserving representations: vector-valued models with
//! matrix-valued kernels, and SPD / rotation fields handled through their
//! Lie-algebra log-coordinates so that linear reduction never leaves the
//! manifold.

mod field;
mod kernels;
pub mod lie;

pub use field::{
    decode_field, encode_field, field_from_rows, field_to_rows, sample_distances, LieAlgebra, Manifold,
    MatrixFieldEnsemble, ALGEBRA_TOL,
};
pub use kernels::{
    frame_contracted_correlation, tensor_correlation, tensor_kernel, vector_correlation, vector_kernel,
    MatrixKernelBlock, VectorFieldEnsemble,
};
pub use lie::{rotation_log, skew_exp, sym_exp, sym_log};
