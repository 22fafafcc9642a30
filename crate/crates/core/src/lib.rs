//! Snapshot-based analysis of parametric models.
//!
//! A parametric model `r: M -> U` is represented by a finite set of sampled
//! responses (snapshots) together with quadrature weights on the parameter
//! samples. From these the crate builds the associated linear map `R`, the
//! correlation `C = R*R`, the reproducing kernel (Gram matrix), and the
//! Karhunen-Loeve / POD expansion with best n-term truncation.
//!
//! Structure-preserving variants live in their own modules:
//!
//! * [`structured`] - vector-valued fields with matrix-valued kernels and
//!   SPD / rotation fields encoded through their Lie-algebra logarithms,
//! * [`coupled`] - two-subsystem models with block correlation and kernel,
//! * [`tensor`] - product parameter sets, binary splits and TT-SVD,
//! * [`piston`] - a mass-spring system coupled to a gas-filled piston, used
//!   as a built-in snapshot generator.

pub mod coupled;
pub mod ensemble;
pub mod error;
pub mod io;
pub mod kernel;
pub mod linalg;
pub mod piston;
pub mod spectral;
pub mod structured;
pub mod tensor;

pub use error::{Error, Result};

pub use ensemble::{CorrelationMatrix, ParameterPoint, SampledMeasure, SnapshotEnsemble};
pub use kernel::{GramKernel, RkhsFunction};
pub use spectral::{
    Factorization, KlExpansion, SnapshotSpectrum, SpectralDecomposition, Truncation,
};

pub use structured::{LieAlgebra, Manifold, MatrixFieldEnsemble, MatrixKernelBlock, VectorFieldEnsemble};
pub use coupled::{CoupledEnsemble, CoupledKernel, CoupledPod, GridPartition};
pub use tensor::{SnapshotTensor, Split, TtDecomposition};
