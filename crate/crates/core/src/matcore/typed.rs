//! Validated matrix newtypes: unitaries, density matrices and orthogonal projections.

use num_complex::Complex64;

use super::matrix::ComplexMatrix;
use super::spectral::{raw_hermitian_eigen, DEFAULT_CLUSTER_TOLERANCE};
use crate::error::{EthError, Result};

/// Numerical tolerances shared by validation and collapse.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerances {
    /// Bound on `||U*U - 1||_op`.
    pub unitarity: f64,
    /// Bound on `||A - A*||_op`.
    pub hermiticity: f64,
    /// Bound on `|tr(rho) - 1|` and on negative eigenvalues.
    pub trace: f64,
    /// Eigenvalue gap below which spectral values are merged.
    pub cluster: f64,
    /// Born weights below this are dropped before sampling.
    pub zero_probability: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            unitarity: 1e-10,
            hermiticity: 1e-10,
            trace: 1e-10,
            cluster: DEFAULT_CLUSTER_TOLERANCE,
            zero_probability: 1e-14,
        }
    }
}

/// A square matrix with `||U*U - 1||_op` within tolerance.
#[derive(Clone, Debug, PartialEq)]
pub struct UnitaryMatrix {
    matrix: ComplexMatrix,
}

impl UnitaryMatrix {
    pub fn new(matrix: ComplexMatrix, tolerance: f64) -> Result<Self> {
        if !matrix.is_square() {
            return Err(EthError::DimensionMismatch(format!(
                "unitary must be square, got {}x{}",
                matrix.rows(),
                matrix.cols()
            )));
        }
        let residual = unitarity_residual(&matrix);
        if residual > tolerance {
            return Err(EthError::NotUnitary { residual, tolerance });
        }
        Ok(Self { matrix })
    }

    pub(crate) fn trusted(matrix: ComplexMatrix) -> Self {
        debug_assert!(unitarity_residual(&matrix) < 1e-8);
        Self { matrix }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            matrix: ComplexMatrix::identity(n),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.matrix
    }

    /// The inverse, `U*`.
    pub fn dagger(&self) -> Self {
        Self {
            matrix: self.matrix.dagger(),
        }
    }

    pub fn compose(&self, other: &Self) -> Self {
        Self {
            matrix: self.matrix.matmul(&other.matrix),
        }
    }

    /// `U^n` for `n >= 0`.
    pub fn power(&self, n: usize) -> Self {
        let mut acc = Self::identity(self.dim());
        for _ in 0..n {
            acc = acc.compose(self);
        }
        acc
    }

    pub fn kron(&self, other: &Self) -> Result<Self> {
        Ok(Self {
            matrix: self.matrix.kron(&other.matrix)?,
        })
    }
}

/// `||U*U - 1||_op`.
pub fn unitarity_residual(m: &ComplexMatrix) -> f64 {
    let gram = m.dagger().matmul(m);
    (&gram - &ComplexMatrix::identity(m.cols())).operator_norm()
}

/// Positive semidefinite, Hermitian, unit-trace matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    matrix: ComplexMatrix,
}

impl DensityMatrix {
    /// Validates Hermiticity, unit trace and positivity (smallest eigenvalue
    /// at least `-tol.trace`). The stored matrix is the Hermitian part.
    pub fn new(matrix: ComplexMatrix, tol: &Tolerances) -> Result<Self> {
        let rho = Self::checked_hermitian_unit_trace(matrix, tol)?;
        let (values, _) = raw_hermitian_eigen(&rho.matrix)?;
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        if min < -tol.trace {
            return Err(EthError::NotDensity(format!(
                "smallest eigenvalue {min:.3e} is below -{:.1e}",
                tol.trace
            )));
        }
        Ok(rho)
    }

    /// Checks Hermiticity and trace only. Used on outputs of maps that are
    /// completely positive by construction; positivity is re-checked by the
    /// collapse step's spectral decomposition.
    pub fn checked_hermitian_unit_trace(matrix: ComplexMatrix, tol: &Tolerances) -> Result<Self> {
        if !matrix.is_square() {
            return Err(EthError::DimensionMismatch(format!(
                "density matrix must be square, got {}x{}",
                matrix.rows(),
                matrix.cols()
            )));
        }
        let residual = matrix.hermiticity_residual();
        if residual > tol.hermiticity {
            return Err(EthError::NotHermitian {
                residual,
                tolerance: tol.hermiticity,
            });
        }
        let tr = matrix.trace();
        if (tr - Complex64::new(1.0, 0.0)).norm() > tol.trace {
            return Err(EthError::NotDensity(format!(
                "trace {:.15} + {:.3e}i differs from 1",
                tr.re, tr.im
            )));
        }
        Ok(Self {
            matrix: matrix.hermitian_part(),
        })
    }

    pub(crate) fn trusted(matrix: ComplexMatrix) -> Self {
        Self { matrix }
    }

    /// `1/n`.
    pub fn maximally_mixed(n: usize) -> Self {
        Self {
            matrix: ComplexMatrix::identity(n).scale_real(1.0 / n as f64),
        }
    }

    /// `|e_i><e_i|`.
    pub fn basis_state(n: usize, i: usize) -> Result<Self> {
        if i >= n {
            return Err(EthError::IndexOutOfRange {
                what: "basis state",
                index: i,
                bound: n,
            });
        }
        Ok(Self {
            matrix: ComplexMatrix::basis_projector(n, i),
        })
    }

    /// `|psi><psi| / <psi, psi>`.
    pub fn pure(psi: &[Complex64]) -> Result<Self> {
        let norm2: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
        if !norm2.is_finite() || norm2 <= 0.0 {
            return Err(EthError::NotDensity("zero or non-finite state vector".into()));
        }
        Ok(Self {
            matrix: ComplexMatrix::outer(psi, psi).scale_real(1.0 / norm2),
        })
    }

    /// `P / tr(P)`.
    pub fn normalized_projection(p: &OrthogonalProjection) -> Self {
        Self {
            matrix: p.matrix().scale_real(1.0 / p.rank() as f64),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    /// `U rho U*`.
    pub fn conjugate_by(&self, u: &UnitaryMatrix) -> Self {
        Self {
            matrix: self.matrix.conjugate_by(u.matrix()),
        }
    }

    /// `tr(rho C)`.
    pub fn expectation(&self, c: &ComplexMatrix) -> Complex64 {
        let n = self.dim();
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..n {
            for k in 0..n {
                acc += self.matrix.get(i, k) * c.get(k, i);
            }
        }
        acc
    }

    /// `tr(rho^2)`.
    pub fn purity(&self) -> f64 {
        self.expectation(&self.matrix).re
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        let (values, _) = raw_hermitian_eigen(&self.matrix)?;
        Ok(values.iter().copied().fold(f64::INFINITY, f64::min))
    }

    /// Uhlmann fidelity `(tr sqrt(sqrt(ρ) σ sqrt(ρ)))^2`.
    pub fn fidelity(&self, other: &DensityMatrix) -> Result<f64> {
        let (values, vectors) = raw_hermitian_eigen(&self.matrix)?;
        let n = self.dim();
        let root = values
            .iter()
            .zip(&vectors)
            .fold(ComplexMatrix::zeros(n, n), |acc, (q, v)| {
                &acc + &ComplexMatrix::outer(v, v).scale_real(q.max(0.0).sqrt())
            });
        let inner = root.matmul(other.matrix()).matmul(&root).hermitian_part();
        let (lambdas, _) = raw_hermitian_eigen(&inner)?;
        let s: f64 = lambdas.iter().map(|l| l.max(0.0).sqrt()).sum();
        Ok(s * s)
    }
}

/// `P = P* = P^2` with integer trace.
#[derive(Clone, Debug, PartialEq)]
pub struct OrthogonalProjection {
    matrix: ComplexMatrix,
    rank: usize,
}

impl OrthogonalProjection {
    pub fn new(matrix: ComplexMatrix, tolerance: f64) -> Result<Self> {
        if !matrix.is_square() {
            return Err(EthError::DimensionMismatch(format!(
                "projection must be square, got {}x{}",
                matrix.rows(),
                matrix.cols()
            )));
        }
        let herm = matrix.hermiticity_residual();
        let idem = (&matrix.matmul(&matrix) - &matrix).operator_norm();
        let tr = matrix.trace();
        let rank = tr.re.round().max(0.0) as usize;
        let trace_residual = (tr - Complex64::new(rank as f64, 0.0)).norm();
        let residual = herm.max(idem).max(trace_residual);
        if residual > tolerance {
            return Err(EthError::NotProjection { residual, tolerance });
        }
        Ok(Self { matrix, rank })
    }

    pub(crate) fn trusted(matrix: ComplexMatrix, rank: usize) -> Self {
        Self { matrix, rank }
    }

    /// Projection onto the span of orthonormal vectors.
    pub fn from_orthonormal(dim: usize, vectors: &[Vec<Complex64>]) -> Self {
        let mut m = ComplexMatrix::zeros(dim, dim);
        for v in vectors {
            m = &m + &ComplexMatrix::outer(v, v);
        }
        Self {
            matrix: m,
            rank: vectors.len(),
        }
    }

    /// Projection onto standard basis vectors `indices`.
    pub fn coordinate(dim: usize, indices: &[usize]) -> Self {
        let mut diag = vec![0.0; dim];
        for &i in indices {
            diag[i] = 1.0;
        }
        Self {
            matrix: ComplexMatrix::from_real_diagonal(&diag),
            rank: indices.len(),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }
}
