//! Complex dense linear algebra used throughout the simulator.

mod matrix;
pub mod random;
mod spectral;
mod typed;

pub use matrix::{sum_matrices, ComplexMatrix, MAX_KRON_DIM};
pub(crate) use spectral::raw_hermitian_eigen;
pub use spectral::{
    hermitian_eigendecompose, unitary_exp, SpectralDecomposition, DEFAULT_CLUSTER_TOLERANCE, HERMITICITY_TOLERANCE,
};
pub use typed::{unitarity_residual, DensityMatrix, OrthogonalProjection, Tolerances, UnitaryMatrix};

pub use num_complex::Complex64;
