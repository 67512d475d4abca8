//! Dense row-major complex matrices.

use std::ops::{Add, Index, Mul, Sub};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{EthError, Result};

/// Largest row or column count a Kronecker product may produce.
pub const MAX_KRON_DIM: usize = 1 << 16;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Immutable dense complex matrix stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl ComplexMatrix {
    /// Builds a matrix from row-major entries, rejecting empty shapes,
    /// wrong entry counts and non-finite values.
    pub fn new(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(EthError::DimensionMismatch(format!(
                "matrix shape {rows}x{cols} must be positive"
            )));
        }
        if data.len() != rows * cols {
            return Err(EthError::DimensionMismatch(format!(
                "{} entries supplied for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(EthError::NonFinite {
                row: pos / cols,
                col: pos % cols,
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Internal constructor for data produced by arithmetic on finite inputs.
    pub(crate) fn from_raw(rows: usize, cols: usize, data: Vec<Complex64>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        assert!(rows > 0 && cols > 0, "matrix shape must be positive");
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds a matrix from nested rows.
    pub fn from_rows(rows: &[Vec<Complex64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(EthError::DimensionMismatch("ragged rows".into()));
        }
        Self::new(r, c, rows.concat())
    }

    /// Real-valued convenience constructor from nested rows.
    pub fn from_real_rows(rows: &[&[f64]]) -> Result<Self> {
        let converted: Vec<Vec<Complex64>> = rows
            .iter()
            .map(|row| row.iter().map(|&x| Complex64::new(x, 0.0)).collect())
            .collect();
        Self::from_rows(&converted)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::from_fn(rows, cols, |_, _| ZERO)
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { ONE } else { ZERO })
    }

    pub fn from_diagonal(diag: &[Complex64]) -> Self {
        Self::from_fn(diag.len(), diag.len(), |i, j| if i == j { diag[i] } else { ZERO })
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        Self::from_fn(diag.len(), diag.len(), |i, j| {
            if i == j {
                Complex64::new(diag[i], 0.0)
            } else {
                ZERO
            }
        })
    }

    /// `|u><v|`.
    pub fn outer(u: &[Complex64], v: &[Complex64]) -> Self {
        Self::from_fn(u.len(), v.len(), |i, j| u[i] * v[j].conj())
    }

    /// `|e_i><e_i|` on `C^n`.
    pub fn basis_projector(n: usize, i: usize) -> Self {
        Self::from_fn(n, n, |a, b| if a == i && b == i { ONE } else { ZERO })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    /// Row-major entries.
    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[Complex64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<Complex64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn diagonal(&self) -> Vec<Complex64> {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).collect()
    }

    pub fn dagger(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i).conj())
    }

    pub fn trace(&self) -> Complex64 {
        self.diagonal().into_iter().sum()
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self::from_raw(self.rows, self.cols, self.data.iter().map(|z| z * s).collect())
    }

    pub fn scale_real(&self, s: f64) -> Self {
        Self::from_raw(self.rows, self.cols, self.data.iter().map(|z| z * s).collect())
    }

    /// Matrix product; panics on incompatible shapes.
    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(
            self.cols, other.rows,
            "matmul shape mismatch: {}x{} * {}x{}",
            self.rows, self.cols, other.rows, other.cols
        );
        let mut out = vec![ZERO; self.rows * other.cols];
        for i in 0..self.rows {
            let out_row = &mut out[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == ZERO {
                    continue;
                }
                let b_row = &other.data[k * other.cols..(k + 1) * other.cols];
                for (o, b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Self::from_raw(self.rows, other.cols, out)
    }

    /// Matrix-vector product.
    pub fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(self.cols, v.len(), "apply shape mismatch");
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `U A U*`.
    pub fn conjugate_by(&self, u: &Self) -> Self {
        u.matmul(self).matmul(&u.dagger())
    }

    pub fn commutator(&self, other: &Self) -> Self {
        &self.matmul(other) - &other.matmul(self)
    }

    /// Kronecker product `(A ⊗ B)[(i,k),(j,l)] = A[i,j] B[k,l]`.
    pub fn kron(&self, other: &Self) -> Result<Self> {
        let rows = self.rows.checked_mul(other.rows);
        let cols = self.cols.checked_mul(other.cols);
        let (rows, cols) = match (rows, cols) {
            (Some(r), Some(c)) if r <= MAX_KRON_DIM && c <= MAX_KRON_DIM => (r, c),
            _ => {
                return Err(EthError::CapExceeded {
                    dim: self
                        .rows
                        .saturating_mul(other.rows)
                        .max(self.cols.saturating_mul(other.cols)),
                    cap: MAX_KRON_DIM,
                })
            }
        };
        let mut data = vec![ZERO; rows * cols];
        for i in 0..self.rows {
            for j in 0..self.cols {
                let a = self.get(i, j);
                if a == ZERO {
                    continue;
                }
                for k in 0..other.rows {
                    let base = (i * other.rows + k) * cols + j * other.cols;
                    for l in 0..other.cols {
                        data[base + l] = a * other.get(k, l);
                    }
                }
            }
        }
        Ok(Self::from_raw(rows, cols, data))
    }

    /// Largest entrywise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn singular_values(&self) -> Vec<f64> {
        let svd = self.to_nalgebra().svd(false, false);
        let mut s: Vec<f64> = svd.singular_values.iter().copied().collect();
        s.sort_by(|a, b| b.total_cmp(a));
        s
    }

    /// Largest singular value.
    pub fn operator_norm(&self) -> f64 {
        self.singular_values().first().copied().unwrap_or(0.0)
    }

    /// Sum of singular values.
    pub fn trace_norm(&self) -> f64 {
        self.singular_values().iter().sum()
    }

    /// `||A - A*||_op`.
    pub fn hermiticity_residual(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        (self - &self.dagger()).operator_norm()
    }

    /// `(A + A*) / 2`.
    pub fn hermitian_part(&self) -> Self {
        (self + &self.dagger()).scale_real(0.5)
    }

    pub(crate) fn to_nalgebra(&self) -> DMatrix<Complex64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    pub(crate) fn from_nalgebra(m: &DMatrix<Complex64>) -> Self {
        Self::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = Complex64;

    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.data[i * self.cols + j]
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        self.matmul(rhs)
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "add shape mismatch");
        ComplexMatrix::from_raw(
            self.rows,
            self.cols,
            self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        )
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "sub shape mismatch");
        ComplexMatrix::from_raw(
            self.rows,
            self.cols,
            self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        )
    }
}

/// Sum of a non-empty sequence of equally shaped matrices.
pub fn sum_matrices<'a>(mut it: impl Iterator<Item = &'a ComplexMatrix>) -> Option<ComplexMatrix> {
    let first = it.next()?.clone();
    Some(it.fold(first, |acc, m| &acc + m))
}
